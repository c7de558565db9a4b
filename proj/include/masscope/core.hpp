#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace masscope {

/// One agent: an LLM instantiated with a role prompt.
struct AgentSpec {
  std::string id;
  std::string name;
  std::string role_prompt;

  bool operator==(const AgentSpec&) const = default;
};

struct Edge {
  std::string src;
  std::string dst;

  bool operator==(const Edge&) const = default;
  auto operator<=>(const Edge&) const = default;
};

/// Agents plus directed communication edges feeding a single answer sink.
/// The order of `edges` is the canonical edge order: an agent receives its
/// incoming messages in that order.
struct Topology {
  std::string id;
  std::string domain_label;
  std::vector<AgentSpec> agents;
  std::vector<Edge> edges;
  std::string sink_id;

  /// Position of `agent_id` in `agents`, or nullopt.
  std::optional<std::size_t> index_of(std::string_view agent_id) const;
  const AgentSpec* find(std::string_view agent_id) const;

  bool operator==(const Topology&) const = default;
};

enum class AnswerFormat { Boolean, Multichoice, Numeric, Freeform };

std::string_view to_string(AnswerFormat format) noexcept;
AnswerFormat answer_format_from_string(std::string_view text);

struct TaskInstance {
  std::string id;
  std::string domain;
  std::string query;
  std::string gold_answer;
  AnswerFormat answer_format = AnswerFormat::Freeform;

  bool operator==(const TaskInstance&) const = default;
};

struct Message {
  std::string source_id;
  std::string text;

  bool operator==(const Message&) const = default;
};

struct AgentStep {
  std::string agent_id;
  std::vector<Message> inputs;
  std::string output;

  bool operator==(const AgentStep&) const = default;
};

enum class Verdict { Correct, Incorrect, Unverifiable };

std::string_view to_string(Verdict verdict) noexcept;
Verdict verdict_from_string(std::string_view text);

struct ExecutionTrace {
  std::string topology_id;
  std::string instance_id;
  std::vector<AgentStep> steps;
  std::string final_answer;
  Verdict verdict = Verdict::Unverifiable;
  /// False when a backend failure aborted the instance part-way.
  bool complete = true;

  bool operator==(const ExecutionTrace&) const = default;
};

// ---------------------------------------------------------------------------
// Structural validation

struct Violation {
  enum class Kind {
    EmptyAgentId,
    DuplicateAgentId,
    EmptyRolePrompt,
    UnknownEndpoint,
    DuplicateEdge,
    Cycle,
    MissingSink,
    SinkHasOutEdges,
    Unreachable,  // warning: agent has no path to the sink
  };
  Kind kind;
  std::string message;
};

struct ValidationResult {
  std::vector<Violation> errors;
  std::vector<Violation> warnings;

  bool ok() const noexcept { return errors.empty(); }
};

ValidationResult validate_topology(const Topology& topology);

/// Agents that lie on a path to the sink (the sink included), in agent order.
/// These are the agents the executor runs.
std::vector<std::string> sink_ancestors(const Topology& topology);

/// Longest-path layering of the agents that reach the sink. Level k holds
/// agents whose longest path from a source has length k; within a level,
/// agents keep their order in `topology.agents`.
/// Throws Errc::CyclicTopology when the graph has a cycle.
std::vector<std::vector<std::string>> topological_levels(const Topology& topology);

/// True iff every agent without incoming edges can reach the sink.
bool sources_reach_sink(const Topology& topology);

// ---------------------------------------------------------------------------
// Answers

/// Canonical form of an answer. Throws Errc::Unparseable when no token of the
/// required format is present.
///   boolean     -> "true" / "false" from the last yes/no/true/false token
///   multichoice -> last standalone uppercase letter A-E
///   numeric     -> last number, as a plain decimal string
///   freeform    -> trimmed text with whitespace runs collapsed
std::string normalize_answer(std::string_view text, AnswerFormat format);

/// Checks the gold answer against its declared format. Returns a description
/// of the problem, or nullopt when valid.
std::optional<std::string> check_instance(const TaskInstance& instance);

}  // namespace masscope

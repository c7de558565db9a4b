#pragma once
// Shared scenario builders for the unit tests and the acceptance binary.

#include <cctype>
#include <filesystem>
#include <string>
#include <vector>

#include "masscope/backend.hpp"
#include "masscope/core.hpp"
#include "masscope/hash.hpp"

namespace fixtures {

using namespace masscope;

inline std::filesystem::path data_path(const std::string& name) {
  return std::filesystem::path(MASSCOPE_TEST_DATA) / name;
}

/// Random DAG over n agents: edges only go forward in agent order, and every
/// non-sink agent gets at least one out-edge, so all agents reach the sink
/// (the last agent).
inline Topology random_dag(SplitMix64& rng, std::size_t n, double density) {
  Topology t;
  t.id = "dag";
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = "a" + std::to_string(i);
    t.agents.push_back({id, "Agent " + std::to_string(i),
                        "Role " + std::to_string(i) + ": specialist " + hex64(rng.next())});
  }
  t.sink_id = t.agents.back().id;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    bool has_out = false;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (rng.next_unit() < density) {
        t.edges.push_back({t.agents[i].id, t.agents[j].id});
        has_out = true;
      }
    }
    if (!has_out) {
      const std::size_t j = i + 1 + static_cast<std::size_t>(rng.next_below(n - i - 1));
      t.edges.push_back({t.agents[i].id, t.agents[j].id});
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Routed-gold scenario. Queries carry the gold option as "[gold:X]". Agents
// are scripted by the first word of their role prompt:
//   Retriever  states the gold option
//   Relay      forwards whatever it received
//   Noise*     emits unrelated text
//   Answerer   answers with the option found in a retrieved message

inline std::string gold_of(std::string_view query) {
  const auto pos = query.find("[gold:");
  return pos == std::string_view::npos ? "" : std::string(query.substr(pos + 6, 1));
}

inline std::optional<std::string> routed_completion(std::string_view role, std::string_view query,
                                                    std::span<const Message> inputs) {
  if (role.starts_with("Retriever")) return "Retrieved evidence supports option " + gold_of(query);
  if (role.starts_with("Relay")) {
    if (inputs.empty()) return std::string("relay idle");
    std::string out = "relay:";
    for (const auto& m : inputs) out += " " + m.text;
    return out;
  }
  if (role.starts_with("Noise")) {
    return "noise " + hex64(fnv1a64(std::string(role) + "|" + std::string(query)));
  }
  if (role.starts_with("Echo")) return std::string("the answer is unknown");
  if (role.starts_with("Answerer")) {
    constexpr std::string_view marker = "evidence supports option ";
    for (const auto& m : inputs) {
      if (const auto p = m.text.find(marker); p != std::string::npos) {
        return "the answer is " + m.text.substr(p + marker.size(), 1);
      }
    }
    return std::string("no evidence received");
  }
  return std::nullopt;
}

/// Signed bag-of-words embedding: texts sharing words have positive cosine.
inline std::optional<Embedding> word_embedding(std::string_view text) {
  constexpr Eigen::Index kDim = 256;
  Embedding v = Embedding::Zero(kDim);
  std::string word;
  auto flush = [&] {
    if (word.empty()) return;
    const std::uint64_t h = fnv1a64(word);
    v(static_cast<Eigen::Index>(h % kDim)) += (h >> 63) ? -1.0 : 1.0;
    word.clear();
  };
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      word += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else {
      flush();
    }
  }
  flush();
  if (v.norm() == 0.0) return std::nullopt;
  return Embedding(v.normalized());
}

inline MockBackend routed_backend(std::uint64_t seed = 42) {
  MockBackend::Hooks hooks;
  hooks.complete = routed_completion;
  hooks.embed = word_embedding;
  hooks.usefulness = [](std::string_view, std::string_view,
                        std::string_view message) -> std::optional<Usefulness> {
    if (message.starts_with("noise")) return Usefulness::not_useful();
    return Usefulness::useful();
  };
  return MockBackend(seed, 256, hooks);
}

inline std::vector<TaskInstance> routed_instances(std::size_t n) {
  std::vector<TaskInstance> out;
  for (std::size_t k = 0; k < n; ++k) {
    const std::string gold(1, static_cast<char>('A' + k % 5));
    out.push_back({"q" + std::to_string(k), "routed",
                   "Question " + std::to_string(k) + ": which option is supported? [gold:" + gold + "]",
                   gold, AnswerFormat::Multichoice});
  }
  return out;
}

inline AgentSpec role(const std::string& id, const std::string& prompt) {
  return {id, prompt.substr(0, prompt.find(':')), prompt};
}

/// Retriever a feeds the answerer s directly and through a noise agent z.
/// The designated removable edge is z -> s.
inline Topology noise_topology() {
  Topology t;
  t.id = "noise";
  t.agents = {role("a", "Retriever: look up the supporting evidence."),
              role("z", "Noise: talk about something else."),
              role("s", "Answerer: give the final option.")};
  t.edges = {{"a", "z"}, {"a", "s"}, {"z", "s"}};
  t.sink_id = "s";
  return t;
}

/// Interchange pair where the roles carry the answer. t_in relies on its
/// retriever; t_src has no retriever, but its chain edges route everything
/// through position 1.
inline Topology role_dominated_in() {
  Topology t;
  t.id = "t_in";
  t.agents = {role("r", "Retriever: look up the supporting evidence."),
              role("m", "Relay: forward what you receive."),
              role("s", "Answerer: give the final option.")};
  t.edges = {{"r", "s"}, {"m", "s"}};
  t.sink_id = "s";
  return t;
}

inline Topology role_dominated_src() {
  Topology t;
  t.id = "t_src";
  t.agents = {role("n1", "Noise: talk about something else."),
              role("n2", "Noise2: talk about anything."),
              role("f", "Answerer: give the final option.")};
  t.edges = {{"n1", "n2"}, {"n2", "f"}};
  t.sink_id = "f";
  return t;
}

/// Interchange pair where the edges carry the answer: same roles, but
/// t_src routes the retriever through a noise agent that does not relay.
inline Topology edge_dominated_in() {
  Topology t;
  t.id = "e_in";
  t.agents = {role("r", "Retriever: look up the supporting evidence."),
              role("n", "Noise: talk about something else."),
              role("s", "Answerer: give the final option.")};
  t.edges = {{"r", "s"}, {"n", "s"}};
  t.sink_id = "s";
  return t;
}

inline Topology edge_dominated_src() {
  Topology t = edge_dominated_in();
  t.id = "e_src";
  t.edges = {{"r", "n"}, {"n", "s"}};
  return t;
}

}  // namespace fixtures

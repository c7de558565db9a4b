#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "masscope/backend.hpp"
#include "masscope/core.hpp"
#include "masscope/linalg.hpp"
#include "masscope/metrics.hpp"

namespace masscope {

// ---------------------------------------------------------------------------
// Link pruning from a dense graph

/// Mean alpha received at `dst` for messages from `src`, averaged over the
/// traces in which the edge carried a message; 0 for edges that never did.
/// `records[k]` are the metric records of `traces[k]`.
/// Throws Errc::TopologyMismatch if a trace belongs to another topology.
std::map<Edge, double> edge_importance(const Topology& topology,
                                       std::span<const ExecutionTrace> traces,
                                       std::span<const std::vector<MetricRecord>> records);

struct PruneConfig {
  enum class TieBreak { LowestAlphaFirst, Lexicographic };

  std::size_t max_removals = 4;
  std::size_t min_edges = 1;
  std::size_t eval_instances = 0;  // 0 = the whole training set
  TieBreak tie_break = TieBreak::LowestAlphaFirst;
  std::size_t parallelism = 1;
};

struct PruneDecision {
  Edge edge;
  double importance = 0.0;
  double acc_before = 0.0;
  double acc_after = 0.0;
  bool accepted = false;
};

struct PruneResult {
  Topology topology;
  double accuracy = 0.0;
  std::vector<PruneDecision> log;
};

/// Greedy link dropping. Each round: evaluate, rank edges by importance
/// (ascending), tentatively drop the weakest unprotected edge that keeps
/// every source connected to the sink, and keep the drop iff training
/// accuracy does not decrease; otherwise restore and protect the edge.
/// Throws Errc::NoRemovableEdge when no edge of the input can be dropped.
PruneResult prune_topology(const Topology& topology, std::span<const TaskInstance> trainset,
                           Backend& backend, const PruneConfig& config);

// ---------------------------------------------------------------------------
// Team selection by relevance and diversity

struct CandidateTeam {
  std::vector<std::string> agent_ids;  // pool order
  double relevance = 0.0;
  double diversity = 1.0;  // Vendi score
};

/// Mean cosine between each member's role prompt and the query.
double relevance_score(std::span<const AgentSpec> team, std::string_view query, Backend& embedder);

/// Cosine similarity matrix of the members' role-prompt embeddings.
Eigen::MatrixXd role_similarity(std::span<const AgentSpec> team, Backend& embedder);

/// Indices of the non-dominated points (maximizing both coordinates), in
/// increasing index order. Identical points do not dominate each other.
std::vector<std::size_t> pareto_front(std::span<const std::pair<double, double>> points);

struct TeamSelection {
  CandidateTeam chosen;
  std::vector<CandidateTeam> front;
  std::size_t n_candidates = 0;
};

/// Enumerates all teams with size in [lo, hi], scores them, keeps the Pareto
/// front, and picks the member maximizing relevance + diversity / hi (ties
/// to the lexicographically smallest sorted id list).
/// Throws Errc::EmptyPool, Errc::EmptyFront (lo > pool size), or
/// Errc::PoolTooLarge (C(pool, hi) > 1e6).
TeamSelection select_team(std::span<const AgentSpec> pool, std::string_view query, std::size_t lo,
                          std::size_t hi, Backend& embedder);

/// Candidate agents drafted by the model over `rounds` planner passes. Each
/// pass must reply with a JSON array of {"name", "role_prompt"} objects; a
/// pass that does not parse keeps the previous draft.
/// Throws Errc::SchemaViolation when no pass produced a valid draft.
std::vector<AgentSpec> generate_candidates(std::string_view query, Backend& backend,
                                           int rounds = 2);

}  // namespace masscope

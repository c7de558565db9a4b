#pragma once

// Role Alignment (R) and Connection Significance (O).
//
// For agent i with role prompt p_i, output y_i, incoming messages X_i and
// query q:
//
//   S1_i = cos(e(p_i), e(y_i))
//   S2_i = mean_{j != i} cos(e(y_i), e(y_j))
//   R_i  = S1_i * (1 - S2_i)
//
//   alpha_{i,l} = exp(sim(x_l, y_i)) / sum_{z in X_i + {p_i, q}} exp(sim(z, y_i))
//   O_i         = sum_l alpha_{i,l} * s_{i,l},   s in {+1, -1} from the judge
//
// Reports average R_i and O_i over agents, then over instances.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "masscope/backend.hpp"
#include "masscope/core.hpp"

namespace masscope {

struct MetricRecord {
  std::string agent_id;
  double s1 = 0.0;
  double s2 = 0.0;
  double r = 0.0;
  /// alpha[l] is the weight of the l-th incoming message (step input order).
  std::vector<double> alpha;
  /// usefulness[l] is +1 / -1, or nullopt when the judge reply was unusable.
  std::vector<std::optional<int>> usefulness;
  double o = 0.0;
  std::vector<std::string> reasons;
};

struct AggregateReport {
  double r_mean = 0.0;
  double o_mean = 0.0;
  double accuracy = 0.0;
  std::size_t n_instances = 0;
  std::size_t n_agents = 0;  // total records across instances
};

struct IllusoryThresholds {
  double tau_acc = 0.95;
  double tau_r = 0.70;
  double tau_o = 0.70;
};

struct IllusoryVerdict {
  bool flagged = false;
  bool verifiable = true;
  double acc_ratio = 0.0;
  double r_ratio = 0.0;
  double o_ratio = 0.0;  // NaN when the baseline O is exactly zero
  std::vector<std::string> reasons;
};

/// Softmax weights of the incoming messages, given each message's similarity
/// to the output and the two prior similarities (role prompt, query).
/// Returns one weight per message; the priors' weights are the remainder.
std::vector<double> influence_weights(std::span<const double> message_sims, double role_sim,
                                      double query_sim);

/// S1, S2, and R for every step of the trace. A single-step trace gets S2 = 0
/// and a warning in `reasons`.
std::vector<MetricRecord> role_alignment(const ExecutionTrace& trace, const Topology& topology,
                                         Backend& embedder);

/// Alpha, usefulness, and O for every step. With `judge` null the usefulness
/// vectors stay empty and O is 0 (alpha-only mode used by pruning).
std::vector<MetricRecord> connection_significance(const ExecutionTrace& trace,
                                                  const TaskInstance& instance,
                                                  const Topology& topology, Backend& embedder,
                                                  Backend* judge);

/// Both metric families merged into one record per step.
std::vector<MetricRecord> compute_metrics(const ExecutionTrace& trace, const TaskInstance& instance,
                                          const Topology& topology, Backend& backend);

/// Agent-first then instance mean. `scores[k]` is the correctness (0 or 1)
/// of instance k. Throws Errc::EmptyInput on no instances or an instance
/// without records.
AggregateReport aggregate_metrics(std::span<const std::vector<MetricRecord>> per_instance,
                                  std::span<const double> scores);

/// Flags high relative accuracy with low relative R and/or O. A zero
/// baseline accuracy or R makes the verdict unverifiable.
IllusoryVerdict detect_illusory(const AggregateReport& report, const AggregateReport& baseline,
                                const IllusoryThresholds& thresholds = {});

}  // namespace masscope

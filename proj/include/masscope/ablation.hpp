#pragma once

#include <span>
#include <string>

#include "masscope/backend.hpp"
#include "masscope/core.hpp"

namespace masscope {

// Interchange ablations. Agents of the two topologies correspond by position
// in their agent lists.

/// t_in's agents with t_src's edges and sink, re-indexed by position.
/// Throws Errc::AgentCountMismatch, or Errc::InvalidResult when the mapped
/// graph does not validate.
Topology connection_ood(const Topology& t_in, const Topology& t_src);

/// t_in's agent ids, edges and sink with t_src's names and role prompts.
Topology role_ood(const Topology& t_in, const Topology& t_src);

/// Same agent count, same role prompts by position, and the same edge set
/// and sink once ids are replaced by positions.
bool structurally_equal(const Topology& a, const Topology& b);

struct AblationResult {
  double acc_in = 0.0;         // percent
  double acc_conn_ood = 0.0;   // percent
  double acc_role_ood = 0.0;   // percent
  double delta_conn = 0.0;     // percentage points
  double delta_role = 0.0;
};

/// Evaluates t_in and both interchanges on `testset`.
AblationResult run_ablation(const Topology& t_in, const Topology& t_src,
                            std::span<const TaskInstance> testset, Backend& backend,
                            std::size_t parallelism = 1);

/// Header of the ablation table CSV.
inline constexpr std::string_view kAblationCsvHeader =
    "benchmark,in_domain,connection_ood(delta),role_ood(delta)";

/// One row, e.g. "CaseHOLD,63.50,62.88(-0.62),48.26(-15.24)".
std::string ablation_csv_row(std::string_view benchmark, const AblationResult& result);

}  // namespace masscope

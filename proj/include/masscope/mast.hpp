#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "masscope/backend.hpp"
#include "masscope/core.hpp"

namespace masscope {

struct MastMode {
  std::string_view code;
  std::string_view name;
  std::string_view definition;
};

/// The 14 failure modes, in code order.
const std::array<MastMode, 14>& mast_taxonomy() noexcept;
bool is_mast_code(std::string_view code) noexcept;

/// Default codes counted as topology-related.
const std::set<std::string>& default_topology_codes();

std::string mast_prompt(const ExecutionTrace& trace);

/// Codes in a judge reply. nullopt when the reply holds neither a code token
/// nor NONE; unknown codes are dropped.
std::optional<std::set<std::string>> parse_mast_reply(std::string_view reply);

struct MastClassification {
  std::string trace_key;  // topology_id/instance_id
  std::set<std::string> labels;
  bool classified = true;
};

/// Asks the judge for the failure modes of a complete trace, re-asking once
/// on an unparseable reply; after that the trace is marked unclassified.
MastClassification classify_trace(const ExecutionTrace& trace, Backend& judge);

struct MastReport {
  std::map<std::string, std::set<std::string>> per_trace;
  std::map<std::string, std::size_t> counts;
  std::map<std::string, double> distribution;
  std::size_t total = 0;
  std::size_t topology_related = 0;
  double topology_related_share = 0.0;
  std::size_t unclassified = 0;
};

/// Counts every label occurrence. Throws Errc::NoLabels when there are none.
MastReport aggregate_mast(std::span<const MastClassification> per_trace,
                          const std::set<std::string>& topology_codes = default_topology_codes());

/// "code,count,fraction" rows in code order.
std::string mast_csv(const MastReport& report);

}  // namespace masscope

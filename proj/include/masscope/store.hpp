#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "masscope/analysis.hpp"
#include "masscope/backend.hpp"
#include "masscope/core.hpp"
#include "masscope/executor.hpp"
#include "masscope/metrics.hpp"

namespace masscope {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// JSON mapping. Readers throw Errc::SchemaViolation on missing or mistyped
// fields.

Json to_json(const Topology& topology);
Topology topology_from_json(const Json& j);
Json to_json(const TaskInstance& instance);
TaskInstance instance_from_json(const Json& j);
Json to_json(const ExecutionTrace& trace);
ExecutionTrace trace_from_json(const Json& j);
Json to_json(const RunResult& result);  // counters only
Json to_json(const MetricRecord& record);
Json to_json(const AggregateReport& report);
AggregateReport aggregate_from_json(const Json& j);
Json to_json(const IllusoryVerdict& verdict);
Json to_json(const TransferMatrix& m);

// ---------------------------------------------------------------------------
// Files

std::string read_text(const std::filesystem::path& path);
/// Replaces the file; throws Errc::IoError.
void write_text(const std::filesystem::path& path, std::string_view text);

/// One compact JSON document per line, keys in fixed order.
std::string trace_line(const ExecutionTrace& trace);
void write_traces(const std::filesystem::path& path, std::span<const ExecutionTrace> traces);
/// Throws Errc::SchemaViolation naming the offending line.
std::vector<ExecutionTrace> read_traces(const std::filesystem::path& path);

Topology read_topology(const std::filesystem::path& path);
void write_topology(const std::filesystem::path& path, const Topology& topology);

/// Instances from JSONL ({id, query, gold_answer, answer_format[, domain]}).
/// `domain_label` is stamped on every instance; with `keep_file_domain`
/// set, a domain given in the file wins. Throws Errc::SchemaViolation for
/// bad lines, duplicate ids or malformed gold answers, and
/// Errc::EmptyDataset for a file without instances.
std::vector<TaskInstance> load_dataset(const std::filesystem::path& path,
                                       const std::string& domain_label,
                                       bool keep_file_domain = false);

/// Cells from JSONL ({train, test, value}).
std::vector<TransferCell> read_transfer_cells(const std::filesystem::path& path);

// ---------------------------------------------------------------------------

using LabeledDataset = std::pair<std::string, std::vector<TaskInstance>>;

/// Equal-share sample of `total` instances across domains. Each domain gets
/// floor(total / k), the remainder goes one each to the first domains in list
/// order. Picks come from a per-domain seeded shuffle and are interleaved
/// round-robin. Throws Errc::InsufficientData naming a short domain.
std::vector<TaskInstance> mix_domains(std::span<const LabeledDataset> datasets, std::size_t total,
                                      std::uint64_t seed);

// ---------------------------------------------------------------------------

struct Thresholds {
  double tau_acc = 0.95;
  double tau_r = 0.70;
  double tau_o = 0.70;
  double hi = 0.95;
  double lo = 0.70;
};

struct RunConfig {
  BackendConfig backend;
  std::optional<std::filesystem::path> topology;
  std::vector<std::pair<std::string, std::filesystem::path>> datasets;  // sorted by label
  Thresholds thresholds;
  std::uint64_t seed = 42;
  std::size_t parallelism = 1;
};

/// TOML (.toml) or JSON (anything else). Relative paths resolve against the
/// config file's directory.
RunConfig load_config(const std::filesystem::path& path);
RunConfig config_from_json(const Json& j, const std::filesystem::path& base_dir = {});

}  // namespace masscope

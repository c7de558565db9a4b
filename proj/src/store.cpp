#include "masscope/store.hpp"

#include <spdlog/spdlog.h>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "masscope/error.hpp"
#include "masscope/hash.hpp"

namespace masscope {

namespace {

[[noreturn]] void schema(const std::string& what) { throw Error(Errc::SchemaViolation, what); }

const Json& field(const Json& j, const char* key) {
  if (!j.is_object()) schema("expected an object");
  const auto it = j.find(key);
  if (it == j.end()) schema(std::string("missing \"") + key + "\"");
  return *it;
}

std::string str(const Json& j, const char* key) {
  const Json& v = field(j, key);
  if (!v.is_string()) schema(std::string("\"") + key + "\" must be a string");
  return v.get<std::string>();
}

const Json& array(const Json& j, const char* key) {
  const Json& v = field(j, key);
  if (!v.is_array()) schema(std::string("\"") + key + "\" must be an array");
  return v;
}

double number(const Json& j, const char* key) {
  const Json& v = field(j, key);
  if (!v.is_number()) schema(std::string("\"") + key + "\" must be a number");
  return v.get<double>();
}

template <typename Parse>
auto with_schema_context(Parse&& parse, const std::string& where) {
  try {
    return parse();
  } catch (const Error& e) {
    if (e.code() != Errc::SchemaViolation && e.code() != Errc::InvalidArgument) throw;
    std::string msg = e.what();
    msg = msg.substr(msg.find(": ") + 2);
    throw Error(Errc::SchemaViolation, where + ": " + msg);
  }
}

Json parse_json(std::string_view text, const std::string& where) {
  Json j = Json::parse(text, nullptr, false);
  if (j.is_discarded()) schema(where + ": not valid JSON");
  return j;
}

template <typename Fn>
void for_each_line(const std::string& text, Fn&& fn) {
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    fn(line, number);
  }
}

}  // namespace

// ---------------------------------------------------------------------------

Json to_json(const Topology& t) {
  Json agents = Json::array();
  for (const auto& a : t.agents) {
    agents.push_back({{"id", a.id}, {"name", a.name}, {"role_prompt", a.role_prompt}});
  }
  Json edges = Json::array();
  for (const auto& e : t.edges) edges.push_back({{"src", e.src}, {"dst", e.dst}});
  return {{"id", t.id},         {"domain_label", t.domain_label}, {"agents", agents},
          {"edges", edges},     {"sink_id", t.sink_id}};
}

Topology topology_from_json(const Json& j) {
  Topology t;
  t.id = str(j, "id");
  if (j.contains("domain_label")) t.domain_label = str(j, "domain_label");
  for (const auto& a : array(j, "agents")) {
    AgentSpec spec{str(a, "id"), "", str(a, "role_prompt")};
    spec.name = a.contains("name") ? str(a, "name") : spec.id;
    t.agents.push_back(std::move(spec));
  }
  for (const auto& e : array(j, "edges")) t.edges.push_back({str(e, "src"), str(e, "dst")});
  t.sink_id = str(j, "sink_id");
  return t;
}

Json to_json(const TaskInstance& inst) {
  return {{"id", inst.id},
          {"domain", inst.domain},
          {"query", inst.query},
          {"gold_answer", inst.gold_answer},
          {"answer_format", to_string(inst.answer_format)}};
}

TaskInstance instance_from_json(const Json& j) {
  TaskInstance inst;
  inst.id = str(j, "id");
  if (inst.id.empty()) schema("empty id");
  if (j.contains("domain")) inst.domain = str(j, "domain");
  inst.query = str(j, "query");
  inst.gold_answer = str(j, "gold_answer");
  inst.answer_format = answer_format_from_string(str(j, "answer_format"));
  if (auto problem = check_instance(inst)) schema("instance " + inst.id + ": " + *problem);
  return inst;
}

Json to_json(const ExecutionTrace& trace) {
  Json steps = Json::array();
  for (const auto& s : trace.steps) {
    Json inputs = Json::array();
    for (const auto& m : s.inputs) inputs.push_back({{"source_id", m.source_id}, {"text", m.text}});
    steps.push_back({{"agent_id", s.agent_id}, {"inputs", inputs}, {"output", s.output}});
  }
  Json j = {{"topology_id", trace.topology_id},
            {"instance_id", trace.instance_id},
            {"steps", steps},
            {"final_answer", trace.final_answer},
            {"verdict", to_string(trace.verdict)}};
  if (!trace.complete) j["incomplete"] = true;
  return j;
}

ExecutionTrace trace_from_json(const Json& j) {
  ExecutionTrace trace;
  trace.topology_id = str(j, "topology_id");
  trace.instance_id = str(j, "instance_id");
  for (const auto& s : array(j, "steps")) {
    AgentStep step;
    step.agent_id = str(s, "agent_id");
    for (const auto& m : array(s, "inputs")) step.inputs.push_back({str(m, "source_id"), str(m, "text")});
    step.output = str(s, "output");
    trace.steps.push_back(std::move(step));
  }
  trace.final_answer = str(j, "final_answer");
  trace.verdict = verdict_from_string(str(j, "verdict"));
  if (j.contains("incomplete")) {
    const Json& v = j["incomplete"];
    if (!v.is_boolean()) schema("\"incomplete\" must be a boolean");
    trace.complete = !v.get<bool>();
  }
  return trace;
}

Json to_json(const RunResult& r) {
  return {{"accuracy", r.accuracy},
          {"n_correct", r.n_correct},
          {"n_total", r.n_total},
          {"n_unverifiable", r.n_unverifiable}};
}

Json to_json(const MetricRecord& rec) {
  Json usefulness = Json::array();
  for (const auto& s : rec.usefulness) usefulness.push_back(s ? Json(*s) : Json(nullptr));
  return {{"agent_id", rec.agent_id}, {"s1", rec.s1},
          {"s2", rec.s2},             {"r", rec.r},
          {"alpha", rec.alpha},       {"usefulness", usefulness},
          {"o", rec.o},               {"reasons", rec.reasons}};
}

Json to_json(const AggregateReport& r) {
  return {{"r_mean", r.r_mean},
          {"o_mean", r.o_mean},
          {"accuracy", r.accuracy},
          {"n_instances", r.n_instances},
          {"n_agents", r.n_agents}};
}

AggregateReport aggregate_from_json(const Json& j) {
  AggregateReport r;
  r.r_mean = number(j, "r_mean");
  r.o_mean = number(j, "o_mean");
  r.accuracy = number(j, "accuracy");
  r.n_instances = static_cast<std::size_t>(number(j, "n_instances"));
  r.n_agents = static_cast<std::size_t>(number(j, "n_agents"));
  return r;
}

Json to_json(const IllusoryVerdict& v) {
  auto num = [](double x) { return std::isnan(x) ? Json(nullptr) : Json(x); };
  return {{"illusory", v.flagged},          {"verifiable", v.verifiable},
          {"acc_ratio", num(v.acc_ratio)},  {"r_ratio", num(v.r_ratio)},
          {"o_ratio", num(v.o_ratio)},      {"reasons", v.reasons}};
}

Json to_json(const TransferMatrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.values.cols(); ++j) row.push_back(m.values(i, j));
    rows.push_back(std::move(row));
  }
  return {{"kind", to_string(m.kind)},
          {"normalization", to_string(m.normalization)},
          {"train_domains", m.train_domains},
          {"test_domains", m.test_domains},
          {"values", rows}};
}

// ---------------------------------------------------------------------------

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(Errc::IoError, "write failed for " + path.string());
}

std::string trace_line(const ExecutionTrace& trace) { return to_json(trace).dump(); }

void write_traces(const std::filesystem::path& path, std::span<const ExecutionTrace> traces) {
  std::string text;
  for (const auto& t : traces) text += trace_line(t) + "\n";
  write_text(path, text);
}

std::vector<ExecutionTrace> read_traces(const std::filesystem::path& path) {
  std::vector<ExecutionTrace> traces;
  for_each_line(read_text(path), [&](const std::string& line, std::size_t n) {
    const std::string where = path.filename().string() + " line " + std::to_string(n);
    traces.push_back(
        with_schema_context([&] { return trace_from_json(parse_json(line, where)); }, where));
  });
  return traces;
}

Topology read_topology(const std::filesystem::path& path) {
  const std::string where = path.filename().string();
  return with_schema_context(
      [&] { return topology_from_json(parse_json(read_text(path), where)); }, where);
}

void write_topology(const std::filesystem::path& path, const Topology& topology) {
  write_text(path, to_json(topology).dump(2) + "\n");
}

std::vector<TaskInstance> load_dataset(const std::filesystem::path& path,
                                       const std::string& domain_label, bool keep_file_domain) {
  std::vector<TaskInstance> instances;
  std::set<std::string> ids;
  for_each_line(read_text(path), [&](const std::string& line, std::size_t n) {
    const std::string where = path.filename().string() + " line " + std::to_string(n);
    TaskInstance inst =
        with_schema_context([&] { return instance_from_json(parse_json(line, where)); }, where);
    if (!ids.insert(inst.id).second) schema(where + ": duplicate id " + inst.id);
    if (!keep_file_domain || inst.domain.empty()) inst.domain = domain_label;
    instances.push_back(std::move(inst));
  });
  if (instances.empty()) throw Error(Errc::EmptyDataset, path.string() + " has no instances");
  return instances;
}

std::vector<TransferCell> read_transfer_cells(const std::filesystem::path& path) {
  std::vector<TransferCell> cells;
  for_each_line(read_text(path), [&](const std::string& line, std::size_t n) {
    const std::string where = path.filename().string() + " line " + std::to_string(n);
    cells.push_back(with_schema_context(
        [&] {
          const Json j = parse_json(line, where);
          return TransferCell{str(j, "train"), str(j, "test"), number(j, "value")};
        },
        where));
  });
  return cells;
}

// ---------------------------------------------------------------------------

std::vector<TaskInstance> mix_domains(std::span<const LabeledDataset> datasets, std::size_t total,
                                      std::uint64_t seed) {
  if (datasets.empty()) throw Error(Errc::InvalidArgument, "no datasets to mix");
  if (total == 0) return {};
  const std::size_t k = datasets.size();
  std::vector<std::vector<std::size_t>> picks(k);
  for (std::size_t d = 0; d < k; ++d) {
    const auto& [label, instances] = datasets[d];
    const std::size_t quota = total / k + (d < total % k ? 1 : 0);
    if (quota > instances.size()) {
      throw Error(Errc::InsufficientData, "domain " + label + " has " +
                                              std::to_string(instances.size()) + " instances, " +
                                              std::to_string(quota) + " needed");
    }
    std::vector<std::size_t> order(instances.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    SplitMix64 rng(seed ^ fnv1a64(label));
    seeded_shuffle(std::span<std::size_t>(order), rng);
    order.resize(quota);
    picks[d] = std::move(order);
  }
  std::vector<TaskInstance> mixed;
  mixed.reserve(total);
  for (std::size_t round = 0; mixed.size() < total; ++round) {
    for (std::size_t d = 0; d < k; ++d) {
      if (round < picks[d].size()) mixed.push_back(datasets[d].second[picks[d][round]]);
    }
  }
  return mixed;
}

// ---------------------------------------------------------------------------

RunConfig config_from_json(const Json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) schema("config must be an object");
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  RunConfig cfg;
  if (j.contains("backend")) {
    const Json& b = j["backend"];
    if (!b.is_object()) schema("\"backend\" must be a table");
    if (b.contains("kind")) {
      const std::string kind = str(b, "kind");
      if (kind == "mock") {
        cfg.backend.kind = BackendConfig::Kind::Mock;
      } else if (kind == "http") {
        cfg.backend.kind = BackendConfig::Kind::Http;
      } else {
        schema("backend kind must be \"mock\" or \"http\"");
      }
    }
    if (b.contains("base_url")) cfg.backend.base_url = str(b, "base_url");
    if (b.contains("chat_model")) cfg.backend.chat_model = str(b, "chat_model");
    if (b.contains("embed_model")) cfg.backend.embed_model = str(b, "embed_model");
    if (b.contains("judge_model")) cfg.backend.judge_model = str(b, "judge_model");
    if (b.contains("timeout_seconds")) cfg.backend.timeout_seconds = number(b, "timeout_seconds");
    if (b.contains("max_retries")) cfg.backend.max_retries = static_cast<int>(number(b, "max_retries"));
    if (b.contains("embed_dim")) cfg.backend.embed_dim = static_cast<int>(number(b, "embed_dim"));
    if (b.contains("max_in_flight"))
      cfg.backend.max_in_flight = static_cast<int>(number(b, "max_in_flight"));
  }
  if (j.contains("topology")) cfg.topology = resolve(str(j, "topology"));
  if (j.contains("datasets")) {
    const Json& d = j["datasets"];
    if (!d.is_object()) schema("\"datasets\" must map domain labels to paths");
    for (const auto& [label, path] : d.items()) {
      if (!path.is_string()) schema("dataset path for " + label + " must be a string");
      cfg.datasets.emplace_back(label, resolve(path.get<std::string>()));
    }
    std::sort(cfg.datasets.begin(), cfg.datasets.end());
  }
  if (j.contains("thresholds")) {
    const Json& t = j["thresholds"];
    if (t.contains("tau_acc")) cfg.thresholds.tau_acc = number(t, "tau_acc");
    if (t.contains("tau_r")) cfg.thresholds.tau_r = number(t, "tau_r");
    if (t.contains("tau_o")) cfg.thresholds.tau_o = number(t, "tau_o");
    if (t.contains("hi")) cfg.thresholds.hi = number(t, "hi");
    if (t.contains("lo")) cfg.thresholds.lo = number(t, "lo");
  }
  if (j.contains("seed")) {
    const Json& s = j["seed"];
    if (!s.is_number_integer() || s.get<std::int64_t>() < 0) schema("seed must be a non-negative integer");
    cfg.seed = s.get<std::uint64_t>();
  }
  if (j.contains("parallelism")) {
    const Json& p = j["parallelism"];
    if (!p.is_number_integer() || p.get<std::int64_t>() < 1) schema("parallelism must be >= 1");
    cfg.parallelism = p.get<std::size_t>();
  }
  cfg.backend.seed = cfg.seed;
  cfg.backend.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  const std::string where = path.filename().string();
  Json j;
  if (path.extension() == ".toml") {
    try {
      const toml::table table = toml::parse(text, path.string());
      std::ostringstream out;
      out << toml::json_formatter{table};
      j = parse_json(out.str(), where);
    } catch (const toml::parse_error& e) {
      throw Error(Errc::SchemaViolation, where + ": " + std::string(e.description()));
    }
  } else {
    j = parse_json(text, where);
  }
  return with_schema_context([&] { return config_from_json(j, path.parent_path()); }, where);
}

}  // namespace masscope

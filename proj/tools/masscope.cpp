// masscope: command-line front end. Machine output goes to stdout, logs to
// stderr. Exit codes: 0 success, 1 domain error, 2 usage error.

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <cstdio>
#include <iostream>
#include <optional>
#include <thread>

#include "masscope/ablation.hpp"
#include "masscope/analysis.hpp"
#include "masscope/backend.hpp"
#include "masscope/error.hpp"
#include "masscope/executor.hpp"
#include "masscope/mast.hpp"
#include "masscope/metrics.hpp"
#include "masscope/optimize.hpp"
#include "masscope/store.hpp"

namespace fs = std::filesystem;
using namespace masscope;

namespace {

struct Common {
  std::optional<fs::path> config;
  std::uint64_t seed = 42;
  bool seed_given = false;
  std::optional<std::size_t> parallelism;
  std::string backend_kind;
  std::string base_url;
};

RunConfig effective_config(const Common& c) {
  RunConfig cfg = c.config ? load_config(*c.config) : RunConfig{};
  if (c.seed_given || !c.config) cfg.seed = c.seed;
  cfg.backend.seed = cfg.seed;
  if (c.parallelism) cfg.parallelism = *c.parallelism;
  if (cfg.parallelism == 0) throw Error(Errc::InvalidArgument, "parallelism must be >= 1");
  if (c.backend_kind == "http") cfg.backend.kind = BackendConfig::Kind::Http;
  if (c.backend_kind == "mock") cfg.backend.kind = BackendConfig::Kind::Mock;
  if (!c.base_url.empty()) cfg.backend.base_url = c.base_url;
  return cfg;
}

void emit(const Json& j) { std::cout << j.dump(2) << "\n"; }

void emit_to(const std::optional<fs::path>& out, const std::string& text) {
  if (out) {
    write_text(*out, text);
  } else {
    std::cout << text;
  }
}

Topology topology_arg(const std::optional<fs::path>& flag, const RunConfig& cfg) {
  if (flag) return read_topology(*flag);
  if (cfg.topology) return read_topology(*cfg.topology);
  throw Error(Errc::InvalidArgument, "no topology given (flag or config)");
}

std::vector<TaskInstance> dataset_arg(const std::optional<fs::path>& flag, const std::string& domain,
                                      const RunConfig& cfg) {
  if (flag) return load_dataset(*flag, domain.empty() ? flag->stem().string() : domain);
  if (cfg.datasets.empty()) throw Error(Errc::InvalidArgument, "no dataset given (flag or config)");
  std::vector<TaskInstance> all;
  for (const auto& [label, path] : cfg.datasets) {
    auto part = load_dataset(path, label);
    all.insert(all.end(), part.begin(), part.end());
  }
  return all;
}

// Runs fn(k) for k in [0, n) on up to `workers` threads.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w) {
      pool.emplace_back([&] {
        for (std::size_t k; (k = next.fetch_add(1)) < n;) {
          try {
            fn(k);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------

struct RunArgs {
  std::optional<fs::path> topology, dataset, out;
  std::string domain;
};

void cmd_run(const Common& common, const RunArgs& a) {
  const RunConfig cfg = effective_config(common);
  const Topology topology = topology_arg(a.topology, cfg);
  const auto instances = dataset_arg(a.dataset, a.domain, cfg);
  auto backend = make_backend(cfg.backend);
  spdlog::info("running {} on {} instances ({} workers)", topology.id, instances.size(),
               cfg.parallelism);
  const RunResult result = run_dataset(topology, instances, *backend, cfg.parallelism);
  if (a.out) write_traces(*a.out, result.traces);
  Json summary = {{"topology_id", topology.id}};
  summary.update(to_json(result));
  emit(summary);
}

struct MetricsArgs {
  std::optional<fs::path> topology, dataset, traces, out;
  std::string domain;
};

void cmd_metrics(const Common& common, const MetricsArgs& a) {
  const RunConfig cfg = effective_config(common);
  const Topology topology = topology_arg(a.topology, cfg);
  const auto instances = dataset_arg(a.dataset, a.domain, cfg);
  std::map<std::string, const TaskInstance*> by_id;
  for (const auto& inst : instances) by_id[inst.id] = &inst;

  std::vector<ExecutionTrace> traces;
  Json excluded = Json::array();
  for (auto& t : read_traces(*a.traces)) {
    if (!t.complete) {
      excluded.push_back(t.instance_id);
      continue;
    }
    if (!by_id.contains(t.instance_id)) {
      throw Error(Errc::InvalidArgument, "trace instance " + t.instance_id + " not in dataset");
    }
    traces.push_back(std::move(t));
  }
  if (traces.empty()) throw Error(Errc::EmptyInput, "no complete traces to score");

  auto inner = make_backend(cfg.backend);
  CachingBackend backend(*inner);
  std::vector<std::vector<MetricRecord>> records(traces.size());
  parallel_for(traces.size(), cfg.parallelism, [&](std::size_t k) {
    records[k] = compute_metrics(traces[k], *by_id.at(traces[k].instance_id), topology, backend);
  });

  std::vector<double> scores;
  Json per_instance = Json::array();
  for (std::size_t k = 0; k < traces.size(); ++k) {
    scores.push_back(traces[k].verdict == Verdict::Correct ? 1.0 : 0.0);
    Json agents = Json::array();
    for (const auto& rec : records[k]) agents.push_back(to_json(rec));
    per_instance.push_back({{"instance_id", traces[k].instance_id},
                            {"verdict", to_string(traces[k].verdict)},
                            {"agents", agents}});
  }
  const AggregateReport report = aggregate_metrics(records, scores);
  const Json doc = {{"topology_id", topology.id},
                    {"aggregate", to_json(report)},
                    {"excluded_incomplete", excluded},
                    {"instances", per_instance}};
  emit_to(a.out, doc.dump(2) + "\n");
}

struct TransferArgs {
  fs::path results;
  std::string normalize = "column-max";
  std::string kind = "accuracy";
  double hi = 0.95, lo = 0.70;
  std::optional<fs::path> csv;
};

void cmd_transfer(const TransferArgs& a) {
  const auto cells = read_transfer_cells(a.results);
  const TransferMatrix raw = build_transfer_matrix(cells, matrix_kind_from_string(a.kind));
  const TransferMatrix norm = normalize_matrix(raw, normalization_from_string(a.normalize));
  const auto labels = classify_matrix(norm, a.hi, a.lo);

  Json label_rows = Json::array();
  std::string csv = "train/test";
  for (const auto& t : norm.test_domains) csv += "," + t;
  csv += "\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Json row = Json::array();
    csv += norm.train_domains[i];
    for (const auto label : labels[i]) {
      row.push_back(to_string(label));
      csv += "," + std::string(to_string(label));
    }
    csv += "\n";
    label_rows.push_back(std::move(row));
  }
  Json ood = Json::object();
  for (const auto& d : raw.train_domains) {
    if (raw.col_of(d) && raw.values.cols() > 1) ood[d] = ood_row_mean(raw, d);
  }
  if (a.csv) write_text(*a.csv, csv);
  emit({{"raw", to_json(raw)},
        {"normalized", to_json(norm)},
        {"thresholds", {{"hi", a.hi}, {"lo", a.lo}}},
        {"labels", label_rows},
        {"ood_row_mean", ood}});
}

struct PruneArgs {
  std::optional<fs::path> topology, dataset, out, log;
  std::string domain;
  std::size_t max_removals = 4, min_edges = 1, eval_instances = 0;
  std::string tie_break = "lowest-alpha";
};

void cmd_prune(const Common& common, const PruneArgs& a) {
  const RunConfig cfg = effective_config(common);
  const Topology topology = topology_arg(a.topology, cfg);
  const auto instances = dataset_arg(a.dataset, a.domain, cfg);
  auto backend = make_backend(cfg.backend);
  PruneConfig pc;
  pc.max_removals = a.max_removals;
  pc.min_edges = a.min_edges;
  pc.eval_instances = a.eval_instances;
  pc.parallelism = cfg.parallelism;
  pc.tie_break = a.tie_break == "lexicographic" ? PruneConfig::TieBreak::Lexicographic
                                                : PruneConfig::TieBreak::LowestAlphaFirst;
  const PruneResult result = prune_topology(topology, instances, *backend, pc);

  std::string log;
  Json decisions = Json::array();
  for (const auto& d : result.log) {
    Json j = {{"edge", {d.edge.src, d.edge.dst}},
              {"importance", d.importance},
              {"acc_before", d.acc_before},
              {"acc_after", d.acc_after},
              {"accepted", d.accepted}};
    log += j.dump() + "\n";
    decisions.push_back(std::move(j));
  }
  if (a.out) write_topology(*a.out, result.topology);
  if (a.log) write_text(*a.log, log);
  emit({{"topology", to_json(result.topology)},
        {"accuracy", result.accuracy},
        {"decisions", decisions}});
}

struct AblateArgs {
  std::optional<fs::path> t_in, t_src, dataset;
  std::string domain, benchmark;
  std::vector<double> accuracies;
};

void cmd_ablate(const Common& common, const AblateArgs& a) {
  AblationResult r;
  if (!a.accuracies.empty()) {
    if (a.accuracies.size() != 3) {
      throw Error(Errc::InvalidArgument, "--accuracies takes in_domain,connection_ood,role_ood");
    }
    r = {a.accuracies[0], a.accuracies[1], a.accuracies[2],
         ablation_delta(a.accuracies[0], a.accuracies[1]),
         ablation_delta(a.accuracies[0], a.accuracies[2])};
  } else {
    if (!a.t_in || !a.t_src) throw Error(Errc::InvalidArgument, "--in and --src are required");
    const RunConfig cfg = effective_config(common);
    const auto instances = dataset_arg(a.dataset, a.domain, cfg);
    auto backend = make_backend(cfg.backend);
    r = run_ablation(read_topology(*a.t_in), read_topology(*a.t_src), instances, *backend,
                     cfg.parallelism);
  }
  std::cout << kAblationCsvHeader << "\n" << ablation_csv_row(a.benchmark, r) << "\n";
}

struct MastArgs {
  fs::path traces;
  std::vector<std::string> codes;
  std::optional<fs::path> csv;
};

void cmd_mast(const Common& common, const MastArgs& a) {
  const RunConfig cfg = effective_config(common);
  for (const auto& c : a.codes) {
    if (!is_mast_code(c)) throw Error(Errc::InvalidArgument, "unknown failure code " + c);
  }
  const std::set<std::string> codes =
      a.codes.empty() ? default_topology_codes() : std::set<std::string>(a.codes.begin(), a.codes.end());
  std::vector<ExecutionTrace> traces;
  for (auto& t : read_traces(a.traces)) {
    if (t.complete) traces.push_back(std::move(t));
  }
  auto judge = make_backend(cfg.backend);
  std::vector<MastClassification> labels(traces.size());
  parallel_for(traces.size(), cfg.parallelism,
               [&](std::size_t k) { labels[k] = classify_trace(traces[k], *judge); });
  const MastReport report = aggregate_mast(labels, codes);

  Json per_trace = Json::object();
  for (const auto& [key, set] : report.per_trace) per_trace[key] = set;
  if (a.csv) write_text(*a.csv, mast_csv(report));
  emit({{"per_trace", per_trace},
        {"counts", report.counts},
        {"distribution", report.distribution},
        {"total", report.total},
        {"topology_related_codes", codes},
        {"topology_related_share", report.topology_related_share},
        {"unclassified", report.unclassified}});
}

struct SelectArgs {
  std::optional<fs::path> pool;
  std::string query;
  std::size_t lo = 1, hi = 3;
  int rounds = 2;
};

void cmd_select_team(const Common& common, const SelectArgs& a) {
  const RunConfig cfg = effective_config(common);
  auto backend = make_backend(cfg.backend);
  std::vector<AgentSpec> pool;
  if (a.pool) {
    const Json j = Json::parse(read_text(*a.pool));
    const Json& list = j.is_object() ? j.at("agents") : j;
    for (const auto& item : list) {
      AgentSpec spec{item.at("id").get<std::string>(), "", item.at("role_prompt").get<std::string>()};
      spec.name = item.contains("name") ? item["name"].get<std::string>() : spec.id;
      pool.push_back(std::move(spec));
    }
  } else {
    pool = generate_candidates(a.query, *backend, a.rounds);
  }
  const TeamSelection sel = select_team(pool, a.query, a.lo, a.hi, *backend);
  auto team_json = [](const CandidateTeam& t) {
    return Json{{"agent_ids", t.agent_ids}, {"relevance", t.relevance}, {"diversity", t.diversity}};
  };
  Json front = Json::array();
  for (const auto& t : sel.front) front.push_back(team_json(t));
  emit({{"chosen", team_json(sel.chosen)}, {"front", front}, {"n_candidates", sel.n_candidates}});
}

struct MixArgs {
  std::vector<std::string> datasets;  // label=path
  std::size_t total = 0;
  std::optional<fs::path> out;
};

void cmd_mix(const Common& common, const MixArgs& a) {
  const RunConfig cfg = effective_config(common);
  std::vector<LabeledDataset> data;
  if (!a.datasets.empty()) {
    for (const auto& spec : a.datasets) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos || eq == 0) {
        throw Error(Errc::InvalidArgument, "--dataset expects label=path, got " + spec);
      }
      const std::string label = spec.substr(0, eq);
      data.emplace_back(label, load_dataset(spec.substr(eq + 1), label));
    }
  } else {
    for (const auto& [label, path] : cfg.datasets) data.emplace_back(label, load_dataset(path, label));
  }
  std::string text;
  for (const auto& inst : mix_domains(data, a.total, cfg.seed)) text += to_json(inst).dump() + "\n";
  emit_to(a.out, text);
}

struct ReportArgs {
  fs::path metrics, baseline;
  std::optional<double> tau_acc, tau_r, tau_o;
};

void cmd_report(const Common& common, const ReportArgs& a) {
  const RunConfig cfg = effective_config(common);
  IllusoryThresholds th{cfg.thresholds.tau_acc, cfg.thresholds.tau_r, cfg.thresholds.tau_o};
  if (a.tau_acc) th.tau_acc = *a.tau_acc;
  if (a.tau_r) th.tau_r = *a.tau_r;
  if (a.tau_o) th.tau_o = *a.tau_o;
  auto load = [](const fs::path& p) {
    const Json j = Json::parse(read_text(p));
    return std::pair{j.value("topology_id", std::string{}), aggregate_from_json(j.at("aggregate"))};
  };
  const auto [id, report] = load(a.metrics);
  const auto [base_id, baseline] = load(a.baseline);
  Json out = {{"topology_id", id},
              {"baseline_topology_id", base_id},
              {"report", to_json(report)},
              {"baseline", to_json(baseline)},
              {"thresholds", {{"tau_acc", th.tau_acc}, {"tau_r", th.tau_r}, {"tau_o", th.tau_o}}}};
  out["verdict"] = to_json(detect_illusory(report, baseline, th));
  emit(out);
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("masscope"));
  spdlog::set_pattern("[%l] %v");

  CLI::App app{"Diagnostics for multi-agent LLM topologies", "masscope"};
  app.require_subcommand(1);
  Common common;
  bool verbose = false, quiet = false;
  app.add_option("--config", common.config, "Run config (.toml or .json)")->check(CLI::ExistingFile);
  app.add_option_function<std::uint64_t>(
      "--seed", [&](std::uint64_t s) { common.seed = s, common.seed_given = true; },
      "Seed for every random choice (default 42)");
  app.add_option("--parallelism", common.parallelism, "Worker threads");
  app.add_option("--backend", common.backend_kind, "mock or http")
      ->check(CLI::IsMember({"mock", "http"}));
  app.add_option("--base-url", common.base_url, "OpenAI-compatible endpoint for --backend http");
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Warnings and errors only");

  RunArgs run;
  auto* c_run = app.add_subcommand("run", "Execute a topology over a dataset");
  c_run->add_option("--topology", run.topology)->check(CLI::ExistingFile);
  c_run->add_option("--dataset", run.dataset)->check(CLI::ExistingFile);
  c_run->add_option("--domain", run.domain, "Domain label (default: dataset file stem)");
  c_run->add_option("--out", run.out, "Trace JSONL output");

  MetricsArgs met;
  auto* c_met = app.add_subcommand("metrics", "Role Alignment and Connection Significance report");
  c_met->add_option("--topology", met.topology)->check(CLI::ExistingFile);
  c_met->add_option("--dataset", met.dataset)->check(CLI::ExistingFile);
  c_met->add_option("--domain", met.domain);
  c_met->add_option("--traces", met.traces)->required()->check(CLI::ExistingFile);
  c_met->add_option("--out", met.out, "Report JSON (default stdout)");

  TransferArgs tr;
  auto* c_tr = app.add_subcommand("transfer", "Normalize and label a transfer matrix");
  c_tr->add_option("--results", tr.results, "JSONL of {train, test, value}")
      ->required()
      ->check(CLI::ExistingFile);
  c_tr->add_option("--normalize", tr.normalize)
      ->check(CLI::IsMember({"none", "column-max", "column_max", "row-max-auto", "row_max_auto"}));
  c_tr->add_option("--kind", tr.kind);
  c_tr->add_option("--hi", tr.hi, "Success threshold");
  c_tr->add_option("--lo", tr.lo, "Failure threshold");
  c_tr->add_option("--csv", tr.csv, "Write the label grid as CSV");

  PruneArgs pr;
  auto* c_pr = app.add_subcommand("prune", "Drop low-influence edges");
  c_pr->add_option("--topology", pr.topology)->check(CLI::ExistingFile);
  c_pr->add_option("--dataset", pr.dataset)->check(CLI::ExistingFile);
  c_pr->add_option("--domain", pr.domain);
  c_pr->add_option("--max-removals", pr.max_removals);
  c_pr->add_option("--min-edges", pr.min_edges);
  c_pr->add_option("--eval-instances", pr.eval_instances);
  c_pr->add_option("--tie-break", pr.tie_break)
      ->check(CLI::IsMember({"lowest-alpha", "lexicographic"}));
  c_pr->add_option("--out", pr.out, "Pruned topology JSON");
  c_pr->add_option("--log", pr.log, "Decision log JSONL");

  AblateArgs ab;
  auto* c_ab = app.add_subcommand("ablate", "Connection-OOD and Role-OOD interchange");
  c_ab->add_option("--in", ab.t_in, "In-domain topology")->check(CLI::ExistingFile);
  c_ab->add_option("--src", ab.t_src, "Out-of-domain topology")->check(CLI::ExistingFile);
  c_ab->add_option("--dataset", ab.dataset)->check(CLI::ExistingFile);
  c_ab->add_option("--domain", ab.domain);
  c_ab->add_option("--benchmark", ab.benchmark, "Row label")->required();
  c_ab->add_option("--accuracies", ab.accuracies, "Known in,conn,role accuracies (percent)")
      ->delimiter(',');

  MastArgs ma;
  auto* c_ma = app.add_subcommand("mast", "Failure-mode classification of traces");
  c_ma->add_option("--traces", ma.traces)->required()->check(CLI::ExistingFile);
  c_ma->add_option("--topology-codes", ma.codes, "Codes counted as topology-related")
      ->delimiter(',');
  c_ma->add_option("--csv", ma.csv, "Write code,count,fraction CSV");

  SelectArgs se;
  auto* c_se = app.add_subcommand("select-team", "Pareto team selection");
  c_se->add_option("--pool", se.pool, "Candidate agents JSON (omit to draft with the model)")
      ->check(CLI::ExistingFile);
  c_se->add_option("--query", se.query)->required();
  c_se->add_option("--lo", se.lo, "Smallest team size");
  c_se->add_option("--hi", se.hi, "Largest team size");
  c_se->add_option("--rounds", se.rounds, "Drafting rounds without --pool");

  MixArgs mi;
  auto* c_mi = app.add_subcommand("mix", "Equal-share multi-domain training set");
  c_mi->add_option("--dataset", mi.datasets, "label=path (repeatable)");
  c_mi->add_option("--total", mi.total)->required();
  c_mi->add_option("--out", mi.out, "Instance JSONL (default stdout)");

  ReportArgs re;
  auto* c_re = app.add_subcommand("report", "Illusory-coordination verdict");
  c_re->add_option("--metrics", re.metrics)->required()->check(CLI::ExistingFile);
  c_re->add_option("--baseline", re.baseline)->required()->check(CLI::ExistingFile);
  c_re->add_option("--tau-acc", re.tau_acc);
  c_re->add_option("--tau-r", re.tau_r);
  c_re->add_option("--tau-o", re.tau_o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  }
  spdlog::set_level(verbose ? spdlog::level::debug
                            : quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    if (c_run->parsed()) cmd_run(common, run);
    if (c_met->parsed()) cmd_metrics(common, met);
    if (c_tr->parsed()) cmd_transfer(tr);
    if (c_pr->parsed()) cmd_prune(common, pr);
    if (c_ab->parsed()) cmd_ablate(common, ab);
    if (c_ma->parsed()) cmd_mast(common, ma);
    if (c_se->parsed()) cmd_select_team(common, se);
    if (c_mi->parsed()) cmd_mix(common, mi);
    if (c_re->parsed()) cmd_report(common, re);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const nlohmann::json::exception& e) {
    spdlog::error("SchemaViolation: {}", e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  std::cout.flush();
  return 0;
}

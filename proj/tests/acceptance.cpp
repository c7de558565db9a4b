#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include <spdlog/spdlog.h>

#include "fixtures.hpp"
#include "masscope/ablation.hpp"
#include "masscope/analysis.hpp"
#include "masscope/error.hpp"
#include "masscope/executor.hpp"
#include "masscope/mast.hpp"
#include "masscope/metrics.hpp"
#include "masscope/optimize.hpp"
#include "masscope/store.hpp"

using namespace masscope;
namespace fs = std::filesystem;

namespace {

struct Check {
  std::string detail;
  bool ok = true;

  void expect(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

using Seconds = std::chrono::duration<double>;

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(read_text(path));
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> row;
    std::istringstream cells(line);
    for (std::string cell; std::getline(cells, cell, ',');) row.push_back(cell);
    rows.push_back(std::move(row));
  }
  return rows;
}

TransferMatrix dropout_matrix() {
  return build_transfer_matrix(read_transfer_cells(fixtures::data_path("dropout_transfer.jsonl")),
                               MatrixKind::Accuracy);
}

bool throws_code(Errc code, auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code() == code;
  }
  return false;
}

void transfer_labels(Check& c) {
  const auto start = std::chrono::steady_clock::now();
  const TransferMatrix norm = normalize_matrix(dropout_matrix(), Normalization::ColumnMax);
  const auto labels = classify_matrix(norm, 0.95, 0.70);
  const Seconds took = std::chrono::steady_clock::now() - start;
  const auto expected = read_csv(fixtures::data_path("dropout_transfer_labels.csv"));
  c.expect(expected.size() == norm.train_domains.size() + 1, "label grid shape");
  std::size_t cells = 0;
  for (std::size_t i = 0; i + 1 < expected.size() && c.ok; ++i) {
    c.expect(expected[i + 1][0] == norm.train_domains[i], "row order");
    for (std::size_t j = 0; j < norm.test_domains.size(); ++j, ++cells) {
      c.expect(std::string(to_string(labels[i][j])) == expected[i + 1][j + 1],
               norm.train_domains[i] + " -> " + norm.test_domains[j]);
    }
  }
  c.expect(cells == 42, "cell count");
  const auto r = [&](std::string_view d) { return *norm.row_of(d); };
  const auto col = [&](std::string_view d) { return *norm.col_of(d); };
  c.expect(labels[r("StrategyQA")][col("CaseHOLD")] == CellLabel::Failed, "StrategyQA -> CaseHOLD");
  c.expect(labels[r("CaseHOLD")][col("SciBench")] == CellLabel::Success, "CaseHOLD -> SciBench");
  c.expect(took.count() < 1.0, "took longer than 1 s");
  c.detail = c.ok ? std::to_string(cells) + " cells match" : c.detail;
}

void ood_mean(Check& c) {
  const double v = ood_row_mean(dropout_matrix(), "CaseHOLD");
  c.expect(std::abs(v - 0.5578) < 5e-5, "got " + std::to_string(v));
  c.detail = c.ok ? "CaseHOLD = " + std::to_string(v) : c.detail;
}

void ablation_deltas(Check& c) {
  struct Row {
    const char* name;
    double in, conn, role, d_conn, d_role;
  };
  const Row rows[] = {{"CaseHOLD", 63.50, 62.88, 48.26, -0.62, -15.24},
                      {"COM2", 47.90, 50.68, 34.50, 2.78, -13.40},
                      {"MuSiQue", 58.40, 53.04, 48.44, -5.36, -9.96},
                      {"SciBench", 38.90, 38.69, 30.29, -0.21, -8.61},
                      {"TheoremQA", 63.80, 61.26, 51.64, -2.54, -12.16},
                      {"StrategyQA", 72.50, 71.00, 53.89, -1.50, -18.61}};
  auto two_dp = [](double x) { return std::round(x * 100.0) / 100.0; };
  for (const auto& row : rows) {
    c.expect(two_dp(ablation_delta(row.in, row.conn)) == two_dp(row.d_conn), std::string(row.name) + " conn");
    c.expect(two_dp(ablation_delta(row.in, row.role)) == two_dp(row.d_role), std::string(row.name) + " role");
  }
  c.detail = c.ok ? "12 deltas match" : c.detail;
}

void metric_math(Check& c) {
  const auto start = std::chrono::steady_clock::now();
  SplitMix64 rng(1234);
  MockBackend mock;
  int traces = 0;
  for (; traces < 1000 && c.ok; ++traces) {
    const Topology t = fixtures::random_dag(rng, 2 + static_cast<std::size_t>(rng.next_below(5)), 0.5);
    const TaskInstance inst{"i" + std::to_string(traces), "d", "query " + hex64(rng.next()), "1",
                            AnswerFormat::Numeric};
    const ExecutionTrace trace = run_instance(t, inst, mock);
    const auto recs = compute_metrics(trace, inst, t, mock);
    const Embedding q = mock.embed(inst.query);
    for (std::size_t i = 0; i < recs.size(); ++i) {
      const auto& step = trace.steps[i];
      const Embedding out = mock.embed(step.output);
      std::vector<double> sims;
      for (const auto& m : step.inputs) sims.push_back(cosine(mock.embed(m.text), out));
      double role_sim = 0;
      for (const auto& a : t.agents) {
        if (a.id == step.agent_id) role_sim = cosine(mock.embed(a.role_prompt), out);
      }
      const double query_sim = cosine(q, out);

      double z = std::exp(role_sim) + std::exp(query_sim);
      for (double s : sims) z += std::exp(s);
      double msg_sum = 0;
      for (double a : recs[i].alpha) msg_sum += a;
      c.expect(std::abs(msg_sum + (std::exp(role_sim) + std::exp(query_sim)) / z - 1.0) < 1e-9,
               "alpha with priors does not sum to 1");
      c.expect(msg_sum < 1.0, "message alpha reaches 1");
      c.expect(std::abs(recs[i].o) <= msg_sum + 1e-12, "|O| exceeds message alpha");

      const double shift = rng.next_unit() * 10 - 5;
      std::vector<double> shifted = sims;
      for (double& s : shifted) s += shift;
      const auto moved = influence_weights(shifted, role_sim + shift, query_sim + shift);
      for (std::size_t l = 0; l < moved.size(); ++l) {
        c.expect(std::abs(moved[l] - recs[i].alpha[l]) < 1e-12, "softmax not shift invariant");
      }
      if (recs.size() > 1) c.expect(recs[i].r != 0.0, "R is zero for distinct outputs");
    }

    // Same topology with every agent producing the same text: R must vanish.
    MockBackend::Hooks hooks;
    hooks.complete = [](std::string_view, std::string_view, std::span<const Message>)
        -> std::optional<std::string> { return std::string("the shared reply"); };
    MockBackend echo(42, 32, hooks);
    const ExecutionTrace same = run_instance(t, inst, echo);
    if (same.steps.size() > 1) {
      for (const auto& rec : role_alignment(same, t, echo)) c.expect(rec.r == 0.0, "R nonzero for identical outputs");
    }
  }
  const Seconds took = std::chrono::steady_clock::now() - start;
  c.expect(took.count() < 10.0, "took longer than 10 s");
  c.detail = c.ok ? std::to_string(traces) + " traces in " + std::to_string(took.count()) + " s" : c.detail;
}

void cli_determinism(Check& c) {
  const fs::path work = fs::temp_directory_path() / ("masscope-acceptance-" + hex64(SplitMix64(
                                                                                std::random_device{}())
                                                                                .next()));
  fs::create_directories(work);
  const std::string topo = fixtures::data_path("diamond.json").string();
  const std::string data = fixtures::data_path("synthetic10.jsonl").string();
  auto sh = [&](const std::string& cmd) { return std::system(cmd.c_str()) == 0; };
  for (int p : {1, 8}) {
    const std::string base = std::string("\"") + MASSCOPE_CLI + "\" -q --seed 42 --parallelism " +
                             std::to_string(p) + " ";
    const std::string tr = (work / ("traces" + std::to_string(p) + ".jsonl")).string();
    const std::string rep = (work / ("report" + std::to_string(p) + ".json")).string();
    c.expect(sh(base + "run --topology \"" + topo + "\" --dataset \"" + data + "\" --out \"" + tr + "\" > /dev/null"),
             "run failed");
    c.expect(sh(base + "metrics --topology \"" + topo + "\" --dataset \"" + data + "\" --traces \"" + tr +
                "\" --out \"" + rep + "\""),
             "metrics failed");
  }
  if (c.ok) {
    c.expect(read_text(work / "traces1.jsonl") == read_text(work / "traces8.jsonl"), "trace files differ");
    c.expect(read_text(work / "report1.json") == read_text(work / "report8.json"), "report files differ");
    c.expect(!read_text(work / "report1.json").empty(), "empty report");
  }
  fs::remove_all(work);
  c.detail = c.ok ? "traces and reports byte-identical" : c.detail;
}

void statistics(Check& c) {
  SplitMix64 rng(77);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(30), y(30);
    for (std::size_t i = 0; i < 30; ++i) {
      x[i] = rng.next_unit() * 4 - 2;
      y[i] = 0.5 * x[i] + rng.next_unit();
    }
    long double mx = 0, my = 0;
    for (std::size_t i = 0; i < 30; ++i) {
      mx += x[i];
      my += y[i];
    }
    mx /= 30;
    my /= 30;
    long double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < 30; ++i) {
      sxy += (x[i] - mx) * (y[i] - my);
      sxx += (x[i] - mx) * (x[i] - mx);
      syy += (y[i] - my) * (y[i] - my);
    }
    worst = std::max(worst, std::abs(pearson(x, y) - static_cast<double>(sxy / std::sqrt(sxx * syy))));
  }
  c.expect(worst < 1e-10, "pearson deviates by " + std::to_string(worst));
  std::vector<double> a(20), b(20);
  for (std::size_t i = 0; i < 20; ++i) {
    a[i] = static_cast<double>(i);
    b[i] = 3.0 * static_cast<double>(i) - 2.0;
  }
  const double p = perm_pvalue(a, b, 10000, 42);
  c.expect(p < 0.001, "p = " + std::to_string(p));
  c.expect(p == perm_pvalue(a, b, 10000, 42), "p-value not deterministic");
  c.detail = c.ok ? "max pearson error " + std::to_string(worst) + ", p = " + std::to_string(p) : c.detail;
}

void optimization(Check& c) {
  Eigen::MatrixXd block = Eigen::MatrixXd::Zero(4, 4);
  block.topLeftCorner(2, 2).setOnes();
  block.bottomRightCorner(2, 2).setOnes();
  c.expect(std::abs(vendi_score(Eigen::MatrixXd::Identity(3, 3)) - 3.0) < 1e-6, "vendi identity");
  c.expect(std::abs(vendi_score(Eigen::MatrixXd::Ones(3, 3)) - 1.0) < 1e-6, "vendi ones");
  c.expect(std::abs(vendi_score(block) - 2.0) < 1e-6, "vendi block");

  SplitMix64 rng(31);
  for (int trial = 0; trial < 1000 && c.ok; ++trial) {
    std::vector<std::pair<double, double>> pts(rng.next_below(50));
    for (auto& pt : pts) pt = {static_cast<double>(rng.next_below(10)), static_cast<double>(rng.next_below(10))};
    std::vector<std::size_t> oracle;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      bool dominated = false;
      for (std::size_t j = 0; j < pts.size(); ++j) {
        dominated = dominated || (pts[j].first >= pts[i].first && pts[j].second >= pts[i].second &&
                                  pts[j] != pts[i]);
      }
      if (!dominated) oracle.push_back(i);
    }
    c.expect(pareto_front(pts) == oracle, "pareto front differs on set " + std::to_string(trial));
  }

  auto mock = fixtures::routed_backend();
  const PruneResult pr = prune_topology(fixtures::noise_topology(), fixtures::routed_instances(10), mock, {});
  c.expect(!pr.log.empty() && pr.log.front().edge == Edge{"z", "s"} && pr.log.front().accepted,
           "noise edge not dropped first");
  for (const auto& d : pr.log) {
    if (d.accepted) c.expect(d.acc_after >= d.acc_before, "accepted drop lowered accuracy");
  }
  c.detail = c.ok ? "vendi, 1000 fronts, noise edge z->s dropped" : c.detail;
}

void interchange(Check& c) {
  const Topology in = fixtures::role_dominated_in();
  c.expect(structurally_equal(connection_ood(in, in), in), "connection_ood identity");
  c.expect(structurally_equal(role_ood(in, in), in), "role_ood identity");
  Topology small = in;
  small.agents.pop_back();
  small.edges = {{small.agents[0].id, small.agents[1].id}};
  small.sink_id = small.agents[1].id;
  c.expect(throws_code(Errc::AgentCountMismatch, [&] { connection_ood(in, small); }), "count mismatch (conn)");
  c.expect(throws_code(Errc::AgentCountMismatch, [&] { role_ood(in, small); }), "count mismatch (role)");
  auto mock = fixtures::routed_backend();
  const auto r = run_ablation(in, fixtures::role_dominated_src(), fixtures::routed_instances(10), mock);
  c.expect(r.delta_role < r.delta_conn, "role drop not larger than connection drop");
  c.detail = c.ok ? "conn delta " + std::to_string(r.delta_conn) + ", role delta " + std::to_string(r.delta_role)
                  : c.detail;
}

void mast_share(Check& c) {
  const std::vector<std::string> topo(default_topology_codes().begin(), default_topology_codes().end());
  std::vector<std::string> other;
  for (const auto& m : mast_taxonomy()) {
    if (!default_topology_codes().contains(std::string(m.code))) other.emplace_back(m.code);
  }
  std::vector<MastClassification> per;
  for (std::size_t k = 0; k < 1000; ++k) {
    const std::string code = k < 591 ? topo[k % topo.size()] : other[k % other.size()];
    per.push_back({"t/i" + std::to_string(k), {code}, true});
  }
  const MastReport rep = aggregate_mast(per);
  c.expect(rep.total == 1000, "total");
  c.expect(rep.topology_related == 591, "topology-related count");
  c.expect(rep.topology_related_share == 0.591, "share " + std::to_string(rep.topology_related_share));
  double sum = 0;
  for (const auto& [code, f] : rep.distribution) sum += f;
  c.expect(std::abs(sum - 1.0) < 1e-12, "distribution sums to " + std::to_string(sum));
  c.detail = c.ok ? "share 0.591, distribution sums to 1" : c.detail;
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria = {
      {"transfer labels", transfer_labels},   {"ood row mean", ood_mean},
      {"ablation deltas", ablation_deltas},   {"metric math", metric_math},
      {"cli determinism", cli_determinism},   {"statistics", statistics},
      {"optimization", optimization},         {"interchange ablation", interchange},
      {"mast aggregation", mast_share}};
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Check c;
    try {
      criteria[k].second(c);
    } catch (const std::exception& e) {
      c.ok = false;
      c.detail = std::string("exception: ") + e.what();
    }
    failed += c.ok ? 0 : 1;
    std::cout << (c.ok ? "PASS" : "FAIL") << " " << (k + 1) << " " << criteria[k].first << ": " << c.detail
              << "\n";
  }
  return failed == 0 ? 0 : 1;
}

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "fixtures.hpp"
#include "masscope/error.hpp"
#include "masscope/executor.hpp"
#include "masscope/optimize.hpp"

using namespace masscope;

namespace {

std::vector<std::size_t> pareto_oracle(const std::vector<std::pair<double, double>>& pts) {
  std::vector<std::size_t> front;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < pts.size() && !dominated; ++j) {
      dominated = pts[j].first >= pts[i].first && pts[j].second >= pts[i].second &&
                  (pts[j].first > pts[i].first || pts[j].second > pts[i].second);
    }
    if (!dominated) front.push_back(i);
  }
  return front;
}

// Random correlation-like PSD matrix with unit diagonal.
Eigen::MatrixXd random_similarity(SplitMix64& rng, Eigen::Index n, Eigen::Index d) {
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < d; ++k) x(i, k) = rng.next_unit() * 2 - 1;
  x.rowwise().normalize();
  Eigen::MatrixXd k = x * x.transpose();
  k.diagonal().setOnes();
  return k;
}

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return Errc::InvalidArgument;
}

MockBackend axis_backend(const std::map<std::string, int>& axis_of, int dim) {
  MockBackend::Hooks hooks;
  hooks.embed = [axis_of, dim](std::string_view text) -> std::optional<Embedding> {
    if (auto it = axis_of.find(std::string(text)); it != axis_of.end()) {
      return Embedding::Unit(dim, it->second);
    }
    return std::nullopt;
  };
  return MockBackend(42, dim, hooks);
}

}  // namespace

TEST_CASE("vendi score reference values") {
  CHECK(vendi_score(Eigen::MatrixXd::Identity(3, 3)) == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(vendi_score(Eigen::MatrixXd::Ones(3, 3)) == doctest::Approx(1.0).epsilon(1e-6));
  Eigen::MatrixXd block = Eigen::MatrixXd::Zero(4, 4);
  block.topLeftCorner(2, 2).setOnes();
  block.bottomRightCorner(2, 2).setOnes();
  CHECK(vendi_score(block) == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("vendi score rejects invalid matrices") {
  Eigen::MatrixXd asym = Eigen::MatrixXd::Identity(2, 2);
  asym(0, 1) = 0.5;
  CHECK(code_of([&] { vendi_score(asym); }) == Errc::NotSymmetric);
  Eigen::MatrixXd indefinite(3, 3);
  indefinite << 1, 1, -1, 1, 1, 1, -1, 1, 1;
  CHECK(code_of([&] { vendi_score(indefinite); }) == Errc::NotPSD);
  Eigen::MatrixXd bad_diag = Eigen::MatrixXd::Identity(2, 2) * 2.0;
  CHECK(code_of([&] { vendi_score(bad_diag); }) == Errc::InvalidArgument);
}

TEST_CASE("jacobi eigenvalues agree with Eigen's solver") {
  SplitMix64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<Eigen::Index>(1 + rng.next_below(10));
    const Eigen::MatrixXd k = random_similarity(rng, n, 1 + static_cast<Eigen::Index>(rng.next_below(6)));
    const auto jac = jacobi_eigenvalues(k);
    CHECK(jac.converged);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(k, Eigen::EigenvaluesOnly);
    CHECK((jac.eigenvalues - solver.eigenvalues()).cwiseAbs().maxCoeff() < 1e-8);
    const double v = vendi_score(k);
    CHECK(v >= 1.0);
    CHECK(v <= static_cast<double>(n));
  }
}

TEST_CASE("pareto front matches the quadratic oracle") {
  SplitMix64 rng(23);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::pair<double, double>> pts(rng.next_below(40));
    for (auto& p : pts) {
      // Coarse grid so ties and duplicates occur.
      p = {static_cast<double>(rng.next_below(8)), static_cast<double>(rng.next_below(8))};
    }
    CHECK(pareto_front(pts) == pareto_oracle(pts));
  }
  CHECK(pareto_front({}).empty());
}

TEST_CASE("edge importance is the mean alpha per edge") {
  auto mock = fixtures::routed_backend();
  const Topology t = fixtures::noise_topology();
  const auto instances = fixtures::routed_instances(5);
  const RunResult run = run_dataset(t, instances, mock);
  std::vector<std::vector<MetricRecord>> recs;
  for (std::size_t k = 0; k < run.traces.size(); ++k) {
    recs.push_back(connection_significance(run.traces[k], instances[k], t, mock, nullptr));
  }
  const auto imp = edge_importance(t, run.traces, recs);
  REQUIRE(imp.size() == 3);
  double manual = 0;
  for (const auto& r : recs) manual += r[2].alpha[1];  // z -> s is the sink's second input
  CHECK(imp.at(Edge{"z", "s"}) == doctest::Approx(manual / 5));
  CHECK(imp.at(Edge{"z", "s"}) < imp.at(Edge{"a", "s"}));
}

TEST_CASE("pruning drops the noise edge and keeps accuracy") {
  auto mock = fixtures::routed_backend();
  const auto instances = fixtures::routed_instances(10);
  const PruneResult r = prune_topology(fixtures::noise_topology(), instances, mock, {});
  REQUIRE_FALSE(r.log.empty());
  CHECK(r.log.front().edge == Edge{"z", "s"});
  CHECK(r.log.front().accepted);
  CHECK(r.log.front().acc_after >= r.log.front().acc_before);
  CHECK(r.accuracy == 1.0);
  CHECK(std::find(r.topology.edges.begin(), r.topology.edges.end(), Edge{"z", "s"}) ==
        r.topology.edges.end());
  CHECK(r.topology.id == "noise-pruned");
  CHECK(validate_topology(r.topology).ok());
  for (const auto& d : r.log) {
    if (d.accepted) CHECK(d.acc_after >= d.acc_before);
  }
}

TEST_CASE("pruning refuses a chain") {
  auto mock = fixtures::routed_backend();
  Topology chain = fixtures::noise_topology();
  chain.edges = {{"a", "z"}, {"z", "s"}};
  CHECK(code_of([&] { prune_topology(chain, fixtures::routed_instances(3), mock, {}); }) ==
        Errc::NoRemovableEdge);
}

TEST_CASE("pruning protects edges whose removal hurts") {
  auto mock = fixtures::routed_backend();
  // The echo agent looks like the answer, so the evidence edge a -> s ranks lowest.
  Topology t;
  t.id = "echo";
  t.agents = {fixtures::role("a", "Retriever: look up the supporting evidence."),
              fixtures::role("e", "Echo: repeat a stock reply."),
              fixtures::role("s", "Answerer: give the final option.")};
  t.edges = {{"a", "e"}, {"a", "s"}, {"e", "s"}};
  t.sink_id = "s";
  PruneConfig cfg;
  cfg.max_removals = 10;
  const PruneResult r = prune_topology(t, fixtures::routed_instances(5), mock, cfg);
  REQUIRE_FALSE(r.log.empty());
  CHECK(r.log.front().edge == Edge{"a", "s"});
  CHECK_FALSE(r.log.front().accepted);
  CHECK(r.log.front().acc_after < r.log.front().acc_before);
  CHECK(r.accuracy == 1.0);
  const auto& e = r.topology.edges;
  CHECK(std::find(e.begin(), e.end(), Edge{"a", "s"}) != e.end());
  for (const auto& d : r.log) CHECK((d.edge != Edge{"a", "s"} || !d.accepted));
}

TEST_CASE("relevance and team selection on orthogonal roles") {
  const std::map<std::string, int> axes = {
      {"legal expert", 0}, {"legal scholar", 0}, {"physicist", 1}, {"chemist", 2}, {"query", 0}};
  auto backend = axis_backend(axes, 4);
  const std::vector<AgentSpec> pool = {{"l1", "L1", "legal expert"},
                                       {"l2", "L2", "legal scholar"},
                                       {"p", "P", "physicist"},
                                       {"c", "C", "chemist"}};
  CHECK(relevance_score(std::span(pool).first(2), "query", backend) == doctest::Approx(1.0));
  CHECK(relevance_score(std::span(pool).subspan(2), "query", backend) == doctest::Approx(0.0));

  const TeamSelection sel = select_team(pool, "query", 1, 2, backend);
  CHECK(sel.n_candidates == 4 + 6);
  for (const auto& team : sel.front) {
    CHECK(team.diversity >= 1.0 - 1e-9);
    CHECK(team.diversity <= static_cast<double>(team.agent_ids.size()) + 1e-9);
  }
  // Every front member scores 1.5; the lexicographically smallest sorted id list wins.
  CHECK(sel.chosen.agent_ids == std::vector<std::string>{"l1", "c"});
  CHECK(sel.front.size() == 7);
}

TEST_CASE("team selection errors") {
  MockBackend mock;
  const std::vector<AgentSpec> pool = {{"a", "A", "role a"}, {"b", "B", "role b"}};
  CHECK(code_of([&] { select_team({}, "q", 1, 2, mock); }) == Errc::EmptyPool);
  CHECK(code_of([&] { select_team(pool, "q", 3, 4, mock); }) == Errc::EmptyFront);
  CHECK(code_of([&] { select_team(pool, "q", 2, 1, mock); }) == Errc::InvalidArgument);
  std::vector<AgentSpec> big;
  for (int i = 0; i < 60; ++i) big.push_back({"a" + std::to_string(i), "A", "role " + std::to_string(i)});
  CHECK(code_of([&] { select_team(big, "q", 1, 10, mock); }) == Errc::PoolTooLarge);
}

TEST_CASE("candidate drafting parses JSON and keeps the last good draft") {
  int calls = 0;
  MockBackend::Hooks hooks;
  hooks.complete = [&calls](std::string_view, std::string_view,
                            std::span<const Message> inputs) -> std::optional<std::string> {
    ++calls;
    if (inputs.empty()) {
      return std::string(R"(Here: [{"name":"Lawyer","role_prompt":"Apply case law."}])");
    }
    return std::string("I could not improve the draft.");
  };
  MockBackend mock(42, 32, hooks);
  const auto agents = generate_candidates("task", mock, 2);
  CHECK(calls == 2);
  REQUIRE(agents.size() == 1);
  CHECK(agents[0].name == "Lawyer");
  CHECK(agents[0].id == "cand-1");

  MockBackend plain;
  CHECK(code_of([&] { generate_candidates("task", plain, 1); }) == Errc::SchemaViolation);
}

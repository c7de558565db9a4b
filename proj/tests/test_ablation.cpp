#include <doctest.h>

#include "fixtures.hpp"
#include "masscope/ablation.hpp"
#include "masscope/error.hpp"

using namespace masscope;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return Errc::InvalidArgument;
}

Topology chain3(const std::string& prefix, const std::string& role_word) {
  Topology t;
  t.id = prefix + "-chain";
  for (int i = 0; i < 3; ++i) {
    const std::string id = prefix + std::to_string(i);
    t.agents.push_back({id, id, role_word + " " + std::to_string(i)});
  }
  t.edges = {{prefix + "0", prefix + "1"}, {prefix + "1", prefix + "2"}};
  t.sink_id = prefix + "2";
  return t;
}

Topology diamond4(const std::string& prefix, const std::string& role_word) {
  Topology t;
  t.id = prefix + "-diamond";
  for (int i = 0; i < 4; ++i) {
    const std::string id = prefix + std::to_string(i);
    t.agents.push_back({id, id, role_word + " " + std::to_string(i)});
  }
  auto id = [&](int i) { return prefix + std::to_string(i); };
  t.edges = {{id(0), id(1)}, {id(0), id(2)}, {id(1), id(3)}, {id(2), id(3)}};
  t.sink_id = id(3);
  return t;
}

}  // namespace

TEST_CASE("identical inputs are structural identities") {
  const Topology t = diamond4("d", "analyst");
  CHECK(structurally_equal(connection_ood(t, t), t));
  CHECK(structurally_equal(role_ood(t, t), t));
}

TEST_CASE("connection interchange keeps roles and moves edges") {
  Topology in = diamond4("x", "legal");
  in.edges = {{"x0", "x1"}, {"x1", "x2"}, {"x2", "x3"}};
  const Topology src = diamond4("y", "math");
  const Topology out = connection_ood(in, src);
  CHECK(out.agents == in.agents);
  CHECK(out.edges == std::vector<Edge>{{"x0", "x1"}, {"x0", "x2"}, {"x1", "x3"}, {"x2", "x3"}});
  CHECK(out.sink_id == "x3");
  CHECK(validate_topology(out).ok());
}

TEST_CASE("role interchange keeps edges and moves role prompts") {
  const Topology a = chain3("a", "legal");
  const Topology b = chain3("b", "physics");
  const Topology out = role_ood(a, b);
  CHECK(out.edges == a.edges);
  CHECK(out.sink_id == a.sink_id);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(out.agents[k].id == a.agents[k].id);
    CHECK(out.agents[k].role_prompt == b.agents[k].role_prompt);
  }
}

TEST_CASE("agent count mismatch") {
  CHECK(code_of([] { connection_ood(diamond4("a", "r"), chain3("b", "r")); }) == Errc::AgentCountMismatch);
  CHECK(code_of([] { role_ood(chain3("b", "r"), diamond4("a", "r")); }) == Errc::AgentCountMismatch);
}

TEST_CASE("mapped graph must validate") {
  Topology src = chain3("b", "r");
  src.sink_id = "b1";  // has an out-edge
  CHECK(code_of([&] { connection_ood(chain3("a", "r"), src); }) == Errc::InvalidResult);
}

TEST_CASE("interchanges compose back to the source structure") {
  SplitMix64 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng.next_below(6));
    Topology in = fixtures::random_dag(rng, n, 0.4);
    Topology src = fixtures::random_dag(rng, n, 0.6);
    in.id = "in";
    src.id = "src";
    const Topology mixed = role_ood(in, src);
    CHECK(structurally_equal(connection_ood(mixed, src), src));
    CHECK(structurally_equal(connection_ood(mixed, in), mixed));
    CHECK(connection_ood(in, src).agents.size() == n);
  }
}

TEST_CASE("ablation on the routed fixtures") {
  auto mock = fixtures::routed_backend();
  const auto data = fixtures::routed_instances(10);
  SUBCASE("same topology: no deltas") {
    const auto r = run_ablation(fixtures::noise_topology(), fixtures::noise_topology(), data, mock);
    CHECK(r.acc_in == r.acc_conn_ood);
    CHECK(r.acc_in == r.acc_role_ood);
    CHECK(r.delta_conn == 0.0);
    CHECK(r.delta_role == 0.0);
  }
  SUBCASE("roles carry the answer") {
    const auto r = run_ablation(fixtures::role_dominated_in(), fixtures::role_dominated_src(), data, mock, 4);
    CHECK(r.acc_in == 100.0);
    CHECK(r.delta_conn == 0.0);
    CHECK(r.delta_role == -100.0);
  }
  SUBCASE("edges carry the answer") {
    const auto r = run_ablation(fixtures::edge_dominated_in(), fixtures::edge_dominated_src(), data, mock);
    CHECK(r.delta_conn < r.delta_role);
  }
}

TEST_CASE("ablation CSV row") {
  AblationResult r{63.50, 62.88, 48.26, -0.62, -15.24};
  CHECK(ablation_csv_row("CaseHOLD", r) == "CaseHOLD,63.50,62.88(-0.62),48.26(-15.24)");
  r = {47.90, 50.68, 34.50, 2.78, -13.40};
  CHECK(ablation_csv_row("COM2", r) == "COM2,47.90,50.68(+2.78),34.50(-13.40)");
}

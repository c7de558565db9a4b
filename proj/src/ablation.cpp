#include "masscope/ablation.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <future>
#include <set>

#include "masscope/analysis.hpp"
#include "masscope/error.hpp"
#include "masscope/executor.hpp"

namespace masscope {

namespace {

void require_same_count(const Topology& t_in, const Topology& t_src) {
  if (t_in.agents.size() != t_src.agents.size()) {
    throw Error(Errc::AgentCountMismatch,
                t_in.id + " has " + std::to_string(t_in.agents.size()) + " agents, " + t_src.id +
                    " has " + std::to_string(t_src.agents.size()));
  }
}

std::size_t position(const Topology& t, const std::string& id) {
  const auto pos = t.index_of(id);
  if (!pos) throw Error(Errc::InvalidArgument, "agent " + id + " not in topology " + t.id);
  return *pos;
}

Topology checked(Topology t) {
  if (const auto v = validate_topology(t); !v.ok()) {
    throw Error(Errc::InvalidResult, t.id + ": " + v.errors.front().message);
  }
  return t;
}

}  // namespace

Topology connection_ood(const Topology& t_in, const Topology& t_src) {
  require_same_count(t_in, t_src);
  Topology out;
  out.id = t_in.id + "+conn:" + t_src.id;
  out.domain_label = t_in.domain_label;
  out.agents = t_in.agents;
  auto map_id = [&](const std::string& src_id) { return t_in.agents[position(t_src, src_id)].id; };
  for (const auto& e : t_src.edges) out.edges.push_back({map_id(e.src), map_id(e.dst)});
  out.sink_id = map_id(t_src.sink_id);
  return checked(std::move(out));
}

Topology role_ood(const Topology& t_in, const Topology& t_src) {
  require_same_count(t_in, t_src);
  Topology out = t_in;
  out.id = t_in.id + "+role:" + t_src.id;
  for (std::size_t k = 0; k < out.agents.size(); ++k) {
    out.agents[k].name = t_src.agents[k].name;
    out.agents[k].role_prompt = t_src.agents[k].role_prompt;
  }
  return checked(std::move(out));
}

bool structurally_equal(const Topology& a, const Topology& b) {
  if (a.agents.size() != b.agents.size()) return false;
  for (std::size_t k = 0; k < a.agents.size(); ++k) {
    if (a.agents[k].role_prompt != b.agents[k].role_prompt) return false;
  }
  auto positional = [](const Topology& t) {
    std::set<std::pair<std::size_t, std::size_t>> edges;
    for (const auto& e : t.edges) {
      const auto s = t.index_of(e.src), d = t.index_of(e.dst);
      if (!s || !d) return std::optional<decltype(edges)>{};
      edges.emplace(*s, *d);
    }
    return std::optional{edges};
  };
  const auto ea = positional(a), eb = positional(b);
  return ea && eb && *ea == *eb && a.index_of(a.sink_id) == b.index_of(b.sink_id);
}

AblationResult run_ablation(const Topology& t_in, const Topology& t_src,
                            std::span<const TaskInstance> testset, Backend& backend,
                            std::size_t parallelism) {
  const Topology conn = connection_ood(t_in, t_src);
  const Topology role = role_ood(t_in, t_src);
  auto accuracy = [&](const Topology& t) {
    return 100.0 * run_dataset(t, testset, backend, parallelism).accuracy;
  };
  auto f_conn = std::async(std::launch::async, accuracy, std::cref(conn));
  auto f_role = std::async(std::launch::async, accuracy, std::cref(role));
  AblationResult r;
  r.acc_in = accuracy(t_in);
  r.acc_conn_ood = f_conn.get();
  r.acc_role_ood = f_role.get();
  r.delta_conn = ablation_delta(r.acc_in, r.acc_conn_ood);
  r.delta_role = ablation_delta(r.acc_in, r.acc_role_ood);
  return r;
}

std::string ablation_csv_row(std::string_view benchmark, const AblationResult& r) {
  return fmt::format("{},{:.2f},{:.2f}({:+.2f}),{:.2f}({:+.2f})", benchmark, r.acc_in,
                     r.acc_conn_ood, r.delta_conn, r.acc_role_ood, r.delta_role);
}

}  // namespace masscope

#include "masscope/optimize.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <json.hpp>
#include <limits>
#include <cmath>
#include <numeric>
#include <set>

#include "masscope/error.hpp"
#include "masscope/executor.hpp"

namespace masscope {

namespace {

struct AlphaStats {
  double sum = 0.0;
  double min = std::numeric_limits<double>::infinity();
  std::size_t count = 0;
};

std::map<Edge, AlphaStats> alpha_stats(const Topology& topology,
                                       std::span<const ExecutionTrace> traces,
                                       std::span<const std::vector<MetricRecord>> records) {
  if (traces.size() != records.size()) {
    throw Error(Errc::TopologyMismatch, "one record list per trace is required");
  }
  std::map<Edge, AlphaStats> stats;
  for (const auto& e : topology.edges) stats.emplace(e, AlphaStats{});
  for (std::size_t k = 0; k < traces.size(); ++k) {
    const auto& trace = traces[k];
    if (trace.topology_id != topology.id) {
      throw Error(Errc::TopologyMismatch,
                  "trace of " + trace.topology_id + " used to score " + topology.id);
    }
    if (records[k].size() != trace.steps.size()) {
      throw Error(Errc::TopologyMismatch, "records do not match trace " + trace.instance_id);
    }
    for (std::size_t s = 0; s < trace.steps.size(); ++s) {
      const auto& step = trace.steps[s];
      const auto& alpha = records[k][s].alpha;
      if (records[k][s].agent_id != step.agent_id) {
        throw Error(Errc::TopologyMismatch, "record/step agent mismatch in " + trace.instance_id);
      }
      for (std::size_t l = 0; l < step.inputs.size() && l < alpha.size(); ++l) {
        auto it = stats.find(Edge{step.inputs[l].source_id, step.agent_id});
        if (it == stats.end()) {
          throw Error(Errc::TopologyMismatch, "message " + step.inputs[l].source_id + "->" +
                                                  step.agent_id + " has no edge in " + topology.id);
        }
        it->second.sum += alpha[l];
        it->second.min = std::min(it->second.min, alpha[l]);
        ++it->second.count;
      }
    }
  }
  return stats;
}

Topology without_edge(const Topology& t, const Edge& edge) {
  Topology out = t;
  std::erase(out.edges, edge);
  return out;
}

}  // namespace

std::map<Edge, double> edge_importance(const Topology& topology,
                                       std::span<const ExecutionTrace> traces,
                                       std::span<const std::vector<MetricRecord>> records) {
  std::map<Edge, double> importance;
  for (const auto& [edge, st] : alpha_stats(topology, traces, records)) {
    importance[edge] = st.count == 0 ? 0.0 : st.sum / static_cast<double>(st.count);
  }
  return importance;
}

PruneResult prune_topology(const Topology& topology, std::span<const TaskInstance> trainset,
                           Backend& backend, const PruneConfig& config) {
  if (const auto v = validate_topology(topology); !v.ok()) {
    throw Error(Errc::InvalidArgument, "topology " + topology.id + ": " + v.errors.front().message);
  }
  if (trainset.empty()) throw Error(Errc::EmptyDataset, "pruning needs training instances");
  if (config.eval_instances > 0 && config.eval_instances < trainset.size()) {
    trainset = trainset.first(config.eval_instances);
  }

  CachingBackend cache(backend);
  auto evaluate = [&](const Topology& t) {
    return run_dataset(t, trainset, cache, std::max<std::size_t>(config.parallelism, 1));
  };

  PruneResult result;
  result.topology = topology;
  RunResult current = evaluate(result.topology);
  std::set<Edge> protected_edges;
  std::size_t removals = 0;
  bool first_round = true;

  while (removals < config.max_removals && result.topology.edges.size() > config.min_edges) {
    const Topology& t = result.topology;
    std::vector<ExecutionTrace> traces;
    std::vector<std::vector<MetricRecord>> records;
    for (std::size_t k = 0; k < current.traces.size(); ++k) {
      if (!current.traces[k].complete) continue;
      records.push_back(connection_significance(current.traces[k], trainset[k], t, cache, nullptr));
      traces.push_back(current.traces[k]);
    }
    const auto stats = alpha_stats(t, traces, records);
    auto mean_of = [&](const Edge& e) {
      const auto& st = stats.at(e);
      return st.count == 0 ? 0.0 : st.sum / static_cast<double>(st.count);
    };

    std::vector<Edge> ranked = t.edges;
    std::stable_sort(ranked.begin(), ranked.end(), [&](const Edge& a, const Edge& b) {
      const double ia = mean_of(a), ib = mean_of(b);
      if (ia != ib) return ia < ib;
      if (config.tie_break == PruneConfig::TieBreak::LowestAlphaFirst) {
        const double ma = stats.at(a).min, mb = stats.at(b).min;
        if (ma != mb) return ma < mb;
        return false;  // canonical edge order
      }
      return a < b;
    });

    const Edge* candidate = nullptr;
    for (const auto& e : ranked) {
      if (protected_edges.contains(e)) continue;
      if (sources_reach_sink(without_edge(t, e))) {
        candidate = &e;
        break;
      }
    }
    if (!candidate) {
      if (first_round) {
        throw Error(Errc::NoRemovableEdge,
                    "every edge of " + topology.id + " is needed to keep the sink reachable");
      }
      break;
    }
    first_round = false;

    Topology trial = without_edge(t, *candidate);
    RunResult trial_run = evaluate(trial);
    PruneDecision decision{*candidate, mean_of(*candidate), current.accuracy, trial_run.accuracy,
                           trial_run.n_correct >= current.n_correct};
    spdlog::info("prune {}->{}: importance {:.4f}, accuracy {:.4f} -> {:.4f} ({})",
                 candidate->src, candidate->dst, decision.importance, decision.acc_before,
                 decision.acc_after, decision.accepted ? "dropped" : "kept");
    if (decision.accepted) {
      result.topology = std::move(trial);
      current = std::move(trial_run);
      ++removals;
    } else {
      protected_edges.insert(*candidate);
    }
    result.log.push_back(std::move(decision));
  }

  if (removals > 0) result.topology.id = topology.id + "-pruned";
  result.accuracy = current.accuracy;
  return result;
}

// ---------------------------------------------------------------------------

double relevance_score(std::span<const AgentSpec> team, std::string_view query, Backend& embedder) {
  if (team.empty()) throw Error(Errc::InvalidArgument, "relevance of an empty team");
  const Embedding q = embedder.embed(query);
  double sum = 0.0;
  for (const auto& agent : team) sum += cosine(embedder.embed(agent.role_prompt), q);
  return sum / static_cast<double>(team.size());
}

Eigen::MatrixXd role_similarity(std::span<const AgentSpec> team, Backend& embedder) {
  const auto n = static_cast<Eigen::Index>(team.size());
  std::vector<Embedding> vecs;
  vecs.reserve(team.size());
  for (const auto& agent : team) vecs.push_back(embedder.embed(agent.role_prompt));
  Eigen::MatrixXd sim(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    sim(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      sim(i, j) = sim(j, i) =
          cosine(vecs[static_cast<std::size_t>(i)], vecs[static_cast<std::size_t>(j)]);
    }
  }
  return sim;
}

std::vector<std::size_t> pareto_front(std::span<const std::pair<double, double>> points) {
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Descending x, then descending y: a point can only be dominated by one
  // that precedes it.
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (points[a].first != points[b].first) return points[a].first > points[b].first;
    return points[a].second > points[b].second;
  });

  std::vector<std::size_t> front;
  double best_y_larger_x = -std::numeric_limits<double>::infinity();
  std::size_t g = 0;
  while (g < order.size()) {
    // Group of equal x; its first element has the group's largest y.
    std::size_t end = g;
    while (end < order.size() && points[order[end]].first == points[order[g]].first) ++end;
    const double group_top = points[order[g]].second;
    // Points with larger x dominate iff their y is >= this one's; within the
    // group, only points tied with the top survive.
    if (group_top > best_y_larger_x) {
      for (std::size_t k = g; k < end && points[order[k]].second == group_top; ++k) {
        front.push_back(order[k]);
      }
    }
    best_y_larger_x = std::max(best_y_larger_x, group_top);
    g = end;
  }
  std::sort(front.begin(), front.end());
  return front;
}

namespace {

// C(n, k), saturating at `cap` + 1.
std::size_t binomial_capped(std::size_t n, std::size_t k, std::size_t cap) {
  k = std::min(k, n - k);
  double c = 1.0;
  for (std::size_t i = 1; i <= k; ++i) {
    c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
    if (c > static_cast<double>(cap)) return cap + 1;
  }
  return static_cast<std::size_t>(std::llround(c));
}

std::vector<std::string> sorted_ids(const CandidateTeam& team) {
  auto ids = team.agent_ids;
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace

namespace {

// Objectives are compared on a 1e-9 grid so eigensolver noise cannot break ties.
double snap(double x) { return std::round(x * 1e9) / 1e9; }

}  // namespace

TeamSelection select_team(std::span<const AgentSpec> pool, std::string_view query, std::size_t lo,
                          std::size_t hi, Backend& embedder) {
  if (pool.empty()) throw Error(Errc::EmptyPool, "candidate pool is empty");
  if (lo < 1 || hi < lo) throw Error(Errc::InvalidArgument, "team size bounds need 1 <= lo <= hi");
  const std::size_t n = pool.size();
  if (lo > n) {
    throw Error(Errc::EmptyFront, "no team of size >= " + std::to_string(lo) + " from " +
                                      std::to_string(n) + " agents");
  }
  hi = std::min(hi, n);
  constexpr std::size_t kMaxTeams = 1'000'000;
  if (binomial_capped(n, hi, kMaxTeams) > kMaxTeams) {
    throw Error(Errc::PoolTooLarge, "C(" + std::to_string(n) + ", " + std::to_string(hi) +
                                        ") exceeds " + std::to_string(kMaxTeams));
  }

  const Embedding q = embedder.embed(query);
  std::vector<double> member_relevance(n);
  for (std::size_t i = 0; i < n; ++i) {
    member_relevance[i] = cosine(embedder.embed(pool[i].role_prompt), q);
  }
  const Eigen::MatrixXd sim = role_similarity(pool, embedder);

  std::vector<CandidateTeam> candidates;
  std::vector<std::pair<double, double>> points;
  for (std::size_t k = lo; k <= hi; ++k) {
    std::vector<Eigen::Index> idx(k);
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    for (;;) {
      CandidateTeam team;
      double rel = 0.0;
      for (auto i : idx) {
        team.agent_ids.push_back(pool[static_cast<std::size_t>(i)].id);
        rel += member_relevance[static_cast<std::size_t>(i)];
      }
      team.relevance = snap(rel / static_cast<double>(k));
      team.diversity = snap(vendi_score(sim(idx, idx)));
      points.emplace_back(team.relevance, team.diversity);
      candidates.push_back(std::move(team));

      // Next k-combination in lexicographic order.
      std::size_t pos = k;
      while (pos > 0 && static_cast<std::size_t>(idx[pos - 1]) == n - k + pos - 1) --pos;
      if (pos == 0) break;
      ++idx[pos - 1];
      for (std::size_t j = pos; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
  }

  TeamSelection selection;
  selection.n_candidates = candidates.size();
  for (std::size_t i : pareto_front(points)) selection.front.push_back(candidates[i]);

  const auto denom = static_cast<double>(hi);
  const CandidateTeam* best = nullptr;
  double best_score = -std::numeric_limits<double>::infinity();
  for (const auto& team : selection.front) {
    const double score = team.relevance + team.diversity / denom;
    if (!best || score > best_score || (score == best_score && sorted_ids(team) < sorted_ids(*best))) {
      best = &team;
      best_score = score;
    }
  }
  selection.chosen = *best;
  return selection;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kPlannerPrompt =
    "You are a Planner assembling a team of expert agents. Decompose the task into sub-tasks and "
    "draft one agent role per sub-task. If a previous draft is provided, review it as an "
    "Observer would: merge redundant roles, add missing expertise, and sharpen each role. Reply "
    "with a JSON array only, where each element is {\"name\": string, \"role_prompt\": string}.";

std::optional<std::vector<AgentSpec>> parse_candidates(std::string_view reply) {
  const auto open = reply.find('[');
  const auto close = reply.rfind(']');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
    return std::nullopt;
  }
  const auto doc = nlohmann::json::parse(reply.substr(open, close - open + 1), nullptr, false);
  if (doc.is_discarded() || !doc.is_array() || doc.empty()) return std::nullopt;
  std::vector<AgentSpec> agents;
  for (const auto& item : doc) {
    if (!item.is_object() || !item.contains("name") || !item.contains("role_prompt") ||
        !item["name"].is_string() || !item["role_prompt"].is_string()) {
      return std::nullopt;
    }
    AgentSpec a;
    a.id = "cand-" + std::to_string(agents.size() + 1);
    a.name = item["name"].get<std::string>();
    a.role_prompt = item["role_prompt"].get<std::string>();
    if (a.name.empty() || a.role_prompt.empty()) return std::nullopt;
    agents.push_back(std::move(a));
  }
  return agents;
}

}  // namespace

std::vector<AgentSpec> generate_candidates(std::string_view query, Backend& backend, int rounds) {
  if (rounds < 1) throw Error(Errc::InvalidArgument, "rounds must be >= 1");
  std::optional<std::vector<AgentSpec>> draft;
  std::string draft_text;
  for (int round = 0; round < rounds; ++round) {
    std::vector<Message> inputs;
    if (draft) inputs.push_back({"draft", draft_text});
    const std::string reply = backend.complete(kPlannerPrompt, query, inputs);
    if (auto parsed = parse_candidates(reply)) {
      draft = std::move(parsed);
      draft_text = reply;
    } else {
      spdlog::warn("candidate round {} reply is not a JSON role list", round + 1);
    }
  }
  if (!draft) throw Error(Errc::SchemaViolation, "no candidate round produced a JSON role list");
  return *draft;
}

}  // namespace masscope

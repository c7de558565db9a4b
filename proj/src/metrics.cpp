#include "masscope/metrics.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <limits>

#include "masscope/error.hpp"
#include "masscope/linalg.hpp"

namespace masscope {

namespace {

const AgentSpec& agent_of(const Topology& topology, const std::string& agent_id) {
  const AgentSpec* agent = topology.find(agent_id);
  if (!agent) {
    throw Error(Errc::TopologyMismatch,
                "trace step " + agent_id + " is not an agent of topology " + topology.id);
  }
  return *agent;
}

void check_trace(const ExecutionTrace& trace, const Topology& topology) {
  if (trace.topology_id != topology.id) {
    throw Error(Errc::TopologyMismatch,
                "trace of " + trace.topology_id + " scored against topology " + topology.id);
  }
}

}  // namespace

std::vector<double> influence_weights(std::span<const double> message_sims, double role_sim,
                                      double query_sim) {
  const auto m = static_cast<Eigen::Index>(message_sims.size());
  Eigen::VectorXd scores(m + 2);
  for (Eigen::Index l = 0; l < m; ++l) scores(l) = message_sims[static_cast<std::size_t>(l)];
  scores(m) = role_sim;
  scores(m + 1) = query_sim;
  const Eigen::VectorXd weights = softmax(scores);
  return {weights.data(), weights.data() + m};
}

std::vector<MetricRecord> role_alignment(const ExecutionTrace& trace, const Topology& topology,
                                         Backend& embedder) {
  check_trace(trace, topology);
  const std::size_t n = trace.steps.size();
  std::vector<Embedding> outputs;
  outputs.reserve(n);
  for (const auto& step : trace.steps) outputs.push_back(embedder.embed(step.output));

  std::vector<MetricRecord> records(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& step = trace.steps[i];
    MetricRecord& rec = records[i];
    rec.agent_id = step.agent_id;
    rec.s1 = cosine(embedder.embed(agent_of(topology, step.agent_id).role_prompt), outputs[i]);
    if (n < 2) {
      rec.s2 = 0.0;
      rec.reasons.push_back("single-agent trace: S2 defined as 0");
    } else {
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) sum += cosine(outputs[i], outputs[j]);
      rec.s2 = sum / static_cast<double>(n - 1);
    }
    rec.r = rec.s1 * (1.0 - rec.s2);
  }
  return records;
}

std::vector<MetricRecord> connection_significance(const ExecutionTrace& trace,
                                                  const TaskInstance& instance,
                                                  const Topology& topology, Backend& embedder,
                                                  Backend* judge) {
  check_trace(trace, topology);
  if (trace.instance_id != instance.id) {
    throw Error(Errc::InvalidArgument,
                "trace of instance " + trace.instance_id + " paired with instance " + instance.id);
  }
  const Embedding query_vec = embedder.embed(instance.query);

  std::vector<MetricRecord> records(trace.steps.size());
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const auto& step = trace.steps[i];
    MetricRecord& rec = records[i];
    rec.agent_id = step.agent_id;
    const AgentSpec& agent = agent_of(topology, step.agent_id);
    if (step.inputs.empty()) continue;  // O = 0 over an empty message set

    const Embedding out = embedder.embed(step.output);
    std::vector<double> sims;
    sims.reserve(step.inputs.size());
    for (const auto& msg : step.inputs) sims.push_back(cosine(embedder.embed(msg.text), out));
    rec.alpha = influence_weights(sims, cosine(embedder.embed(agent.role_prompt), out),
                                  cosine(query_vec, out));

    if (!judge) continue;
    rec.usefulness.resize(step.inputs.size());
    for (std::size_t l = 0; l < step.inputs.size(); ++l) {
      try {
        const int s =
            judge->judge_usefulness(instance.query, agent.role_prompt, step.inputs[l].text).value();
        rec.usefulness[l] = s;
        rec.o += rec.alpha[l] * s;
      } catch (const Error& err) {
        if (err.code() != Errc::JudgeParseFailure) throw;
        spdlog::warn("instance {}: message {} -> {} excluded from O: {}", trace.instance_id,
                     step.inputs[l].source_id, step.agent_id, err.what());
        rec.reasons.push_back("judge reply unusable for message from " + step.inputs[l].source_id);
      }
    }
  }
  return records;
}

std::vector<MetricRecord> compute_metrics(const ExecutionTrace& trace, const TaskInstance& instance,
                                          const Topology& topology, Backend& backend) {
  auto records = role_alignment(trace, topology, backend);
  auto links = connection_significance(trace, instance, topology, backend, &backend);
  for (std::size_t i = 0; i < records.size(); ++i) {
    records[i].alpha = std::move(links[i].alpha);
    records[i].usefulness = std::move(links[i].usefulness);
    records[i].o = links[i].o;
    for (auto& r : links[i].reasons) records[i].reasons.push_back(std::move(r));
  }
  return records;
}

AggregateReport aggregate_metrics(std::span<const std::vector<MetricRecord>> per_instance,
                                  std::span<const double> scores) {
  if (per_instance.empty()) throw Error(Errc::EmptyInput, "no instances to aggregate");
  if (scores.size() != per_instance.size()) {
    throw Error(Errc::DimensionMismatch, "one correctness score per instance is required");
  }
  AggregateReport report;
  double r_sum = 0.0, o_sum = 0.0, acc_sum = 0.0;
  for (std::size_t k = 0; k < per_instance.size(); ++k) {
    const auto& records = per_instance[k];
    if (records.empty()) {
      throw Error(Errc::EmptyInput, "instance " + std::to_string(k) + " has no metric records");
    }
    double r_inst = 0.0, o_inst = 0.0;
    for (const auto& rec : records) {
      r_inst += rec.r;
      o_inst += rec.o;
    }
    const auto n_agents = static_cast<double>(records.size());
    r_sum += r_inst / n_agents;
    o_sum += o_inst / n_agents;
    acc_sum += scores[k];
    report.n_agents += records.size();
  }
  const auto n = static_cast<double>(per_instance.size());
  report.r_mean = r_sum / n;
  report.o_mean = o_sum / n;
  report.accuracy = acc_sum / n;
  report.n_instances = per_instance.size();
  return report;
}

IllusoryVerdict detect_illusory(const AggregateReport& report, const AggregateReport& baseline,
                                const IllusoryThresholds& th) {
  IllusoryVerdict v;
  if (baseline.accuracy == 0.0 || baseline.r_mean == 0.0) {
    v.verifiable = false;
    v.acc_ratio = v.r_ratio = v.o_ratio = std::numeric_limits<double>::quiet_NaN();
    v.reasons.push_back(baseline.accuracy == 0.0 ? "ZeroBaseline: baseline accuracy is 0"
                                                 : "ZeroBaseline: baseline R is 0");
    return v;
  }
  v.acc_ratio = report.accuracy / baseline.accuracy;
  v.r_ratio = report.r_mean / baseline.r_mean;
  // A non-positive baseline O divides by its magnitude, as in row-absmax
  // normalization, so the sign of the report's O is preserved.
  if (baseline.o_mean > 0.0) {
    v.o_ratio = report.o_mean / baseline.o_mean;
  } else if (baseline.o_mean < 0.0) {
    v.o_ratio = report.o_mean / std::abs(baseline.o_mean);
  } else {
    v.o_ratio = std::numeric_limits<double>::quiet_NaN();
    v.reasons.push_back("baseline O is 0: O criterion skipped");
  }

  const bool acc_high = v.acc_ratio >= th.tau_acc;
  const bool r_low = v.r_ratio < th.tau_r;
  const bool o_low = !std::isnan(v.o_ratio) && v.o_ratio < th.tau_o;
  v.flagged = acc_high && (r_low || o_low);
  if (v.flagged) {
    if (r_low) v.reasons.push_back("R at " + std::to_string(v.r_ratio) + " of baseline");
    if (o_low) v.reasons.push_back("O at " + std::to_string(v.o_ratio) + " of baseline");
  } else if (!acc_high) {
    v.reasons.push_back("accuracy below threshold: transfer failure, not illusory");
  }
  return v;
}

}  // namespace masscope

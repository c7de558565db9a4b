#include "masscope/executor.hpp"

#include <spdlog/spdlog.h>

#include <atomic>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <map>
#include <thread>

#include "masscope/error.hpp"

namespace masscope {

namespace {

bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(a[i])) !=
        std::tolower(static_cast<unsigned char>(b[i])))
      return false;
  }
  return true;
}

std::optional<double> to_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string answer_judge_prompt(std::string_view final_answer, std::string_view gold) {
  std::string p = "Decide whether the candidate answer is equivalent to the reference answer.\n\n";
  p += "### Reference answer\n";
  p += gold;
  p += "\n\n### Candidate answer\n";
  p += final_answer;
  p += "\n\nReply with exactly one token: CORRECT or INCORRECT.";
  return p;
}

}  // namespace

Verdict verify_answer(std::string_view final_answer, std::string_view gold, AnswerFormat format,
                      Backend* judge) {
  std::string canon_gold;
  try {
    canon_gold = normalize_answer(gold, format);
  } catch (const Error&) {
    return Verdict::Unverifiable;
  }
  switch (format) {
    case AnswerFormat::Boolean:
    case AnswerFormat::Multichoice:
      return iequals(final_answer, canon_gold) ? Verdict::Correct : Verdict::Incorrect;
    case AnswerFormat::Numeric: {
      std::string canon_final;
      try {
        canon_final = normalize_answer(final_answer, format);
      } catch (const Error&) {
        return Verdict::Unverifiable;
      }
      const auto got = to_double(canon_final);
      const auto want = to_double(canon_gold);
      if (!got || !want) return Verdict::Unverifiable;
      const double abs_err = std::abs(*got - *want);
      if (abs_err <= 1e-6) return Verdict::Correct;
      if (*want != 0.0 && abs_err / std::abs(*want) <= 1e-3) return Verdict::Correct;
      return Verdict::Incorrect;
    }
    case AnswerFormat::Freeform: {
      if (!judge) return Verdict::Unverifiable;
      std::string reply;
      try {
        reply = judge->judge(answer_judge_prompt(final_answer, canon_gold));
      } catch (const Error&) {
        return Verdict::Unverifiable;
      }
      std::string token;
      for (char c : reply)
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_')
          token += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      if (token == "CORRECT") return Verdict::Correct;
      if (token == "INCORRECT") return Verdict::Incorrect;
      return Verdict::Unverifiable;
    }
  }
  return Verdict::Unverifiable;
}

ExecutionTrace run_instance(const Topology& topology, const TaskInstance& instance,
                            Backend& backend, Backend* freeform_judge) {
  ExecutionTrace trace;
  trace.topology_id = topology.id;
  trace.instance_id = instance.id;

  const auto levels = topological_levels(topology);
  std::map<std::string, std::string, std::less<>> outputs;

  for (const auto& level : levels) {
    for (const auto& agent_id : level) {
      const AgentSpec& agent = *topology.find(agent_id);
      AgentStep step;
      step.agent_id = agent_id;
      for (const auto& e : topology.edges) {
        if (e.dst != agent_id) continue;
        // Predecessors that do not reach the sink never run.
        if (auto it = outputs.find(e.src); it != outputs.end()) {
          step.inputs.push_back({e.src, it->second});
        }
      }
      try {
        step.output = backend.complete(agent.role_prompt, instance.query, step.inputs);
        if (step.output.empty()) throw Error(Errc::EmptyResponse, "agent " + agent_id);
      } catch (const Error& err) {
        if (err.code() != Errc::BackendUnavailable && err.code() != Errc::EmptyResponse) throw;
        spdlog::warn("instance {}: agent {} failed: {}", instance.id, agent_id, err.what());
        trace.complete = false;
        trace.verdict = Verdict::Unverifiable;
        return trace;
      }
      outputs.emplace(agent_id, step.output);
      trace.steps.push_back(std::move(step));
    }
  }

  const std::string& sink_output = outputs.at(topology.sink_id);
  try {
    trace.final_answer = normalize_answer(sink_output, instance.answer_format);
  } catch (const Error&) {
    trace.final_answer.clear();
    trace.verdict = Verdict::Unverifiable;
    return trace;
  }
  trace.verdict = verify_answer(trace.final_answer, instance.gold_answer, instance.answer_format,
                                freeform_judge);
  return trace;
}

RunResult summarize(std::vector<ExecutionTrace> traces) {
  RunResult result;
  result.n_total = traces.size();
  for (const auto& t : traces) {
    if (t.verdict == Verdict::Correct) ++result.n_correct;
    if (t.verdict == Verdict::Unverifiable) ++result.n_unverifiable;
  }
  result.accuracy = result.n_total == 0 ? 0.0
                                        : static_cast<double>(result.n_correct) /
                                              static_cast<double>(result.n_total);
  result.traces = std::move(traces);
  return result;
}

RunResult run_dataset(const Topology& topology, std::span<const TaskInstance> instances,
                      Backend& backend, std::size_t parallelism, Backend* freeform_judge) {
  if (parallelism == 0) throw Error(Errc::InvalidArgument, "parallelism must be >= 1");
  if (instances.empty()) throw Error(Errc::EmptyDataset, "no instances to run");
  if (const auto v = validate_topology(topology); !v.ok()) {
    throw Error(Errc::InvalidArgument, "topology " + topology.id + ": " + v.errors.front().message);
  }

  std::vector<ExecutionTrace> traces(instances.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= instances.size()) return;
      try {
        traces[i] = run_instance(topology, instances[i], backend, freeform_judge);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(instances.size());
        return;
      }
      const std::size_t finished = ++done;
      if (finished % 50 == 0 || finished == instances.size()) {
        spdlog::debug("{}: {}/{} instances", topology.id, finished, instances.size());
      }
    }
  };

  const std::size_t n_workers = std::min(parallelism, instances.size());
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return summarize(std::move(traces));
}

}  // namespace masscope

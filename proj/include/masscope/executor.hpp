#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "masscope/backend.hpp"
#include "masscope/core.hpp"

namespace masscope {

struct RunResult {
  std::vector<ExecutionTrace> traces;
  double accuracy = 0.0;  // n_correct / n_total; unverifiable counts as incorrect
  std::size_t n_correct = 0;
  std::size_t n_total = 0;
  std::size_t n_unverifiable = 0;

  bool operator==(const RunResult&) const = default;
};

/// Compares a canonical final answer with the gold answer.
///   boolean / multichoice  case-insensitive equality after canonicalization
///   numeric                relative error <= 1e-3 or absolute error <= 1e-6
///   freeform               judged by `judge` when given, else unverifiable
Verdict verify_answer(std::string_view final_answer, std::string_view gold, AnswerFormat format,
                      Backend* judge = nullptr);

/// Runs every agent that reaches the sink, level by level. Each agent sees the
/// query plus the outputs of its in-edges in canonical edge order. A backend
/// failure stops the instance and yields an incomplete, unverifiable trace.
ExecutionTrace run_instance(const Topology& topology, const TaskInstance& instance,
                            Backend& backend, Backend* freeform_judge = nullptr);

/// Runs instances on `parallelism` workers. Traces come back in input order
/// and the result does not depend on `parallelism`.
/// Throws Errc::EmptyDataset for no instances, Errc::InvalidArgument for
/// parallelism 0 or an invalid topology.
RunResult run_dataset(const Topology& topology, std::span<const TaskInstance> instances,
                      Backend& backend, std::size_t parallelism = 1,
                      Backend* freeform_judge = nullptr);

/// Recomputes the accuracy counters from a list of traces.
RunResult summarize(std::vector<ExecutionTrace> traces);

}  // namespace masscope

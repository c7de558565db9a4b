#include "masscope/mast.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <regex>

#include "masscope/error.hpp"

namespace masscope {

const std::array<MastMode, 14>& mast_taxonomy() noexcept {
  static constexpr std::array<MastMode, 14> modes{{
      {"FM-1.1", "Disobey task specification",
       "Failure to adhere to specified constraints or requirements."},
      {"FM-1.2", "Disobey role specification",
       "Failure to adhere to defined responsibilities of its role."},
      {"FM-1.3", "Step repetition", "Unnecessary reiteration of previously completed steps."},
      {"FM-1.4", "Loss of conversation history",
       "Unexpected context truncation, reverting to previous state."},
      {"FM-1.5", "Unaware of terminal condition",
       "Lack of recognition for criteria that triggers interaction end."},
      {"FM-2.1", "Conversation reset", "Unexpected restarting of a dialogue, losing progress."},
      {"FM-2.2", "Fail to ask clarification",
       "Inability to request info when faced with unclear data."},
      {"FM-2.3", "Task derailment", "Deviation from the intended objective of a given task."},
      {"FM-2.4", "Information withholding",
       "Failure to share important data impacting decision-making."},
      {"FM-2.5", "Ignored agent input",
       "Disregarding input provided by other agents in the system."},
      {"FM-2.6", "Reasoning-action mismatch",
       "Discrepancy between reasoning and actual actions taken."},
      {"FM-3.1", "Premature termination", "Ending interaction before objectives are met."},
      {"FM-3.2", "No/incomplete verification",
       "Omission of checking of task outcomes or system outputs."},
      {"FM-3.3", "Incorrect verification",
       "Failure to adequately validate information during iterations."},
  }};
  return modes;
}

bool is_mast_code(std::string_view code) noexcept {
  const auto& modes = mast_taxonomy();
  return std::any_of(modes.begin(), modes.end(), [&](const MastMode& m) { return m.code == code; });
}

const std::set<std::string>& default_topology_codes() {
  static const std::set<std::string> codes{"FM-1.1", "FM-1.2", "FM-1.3",
                                           "FM-2.3", "FM-2.5", "FM-3.2"};
  return codes;
}

std::string mast_prompt(const ExecutionTrace& trace) {
  std::string prompt =
      "Classify the failures in the multi-agent execution log below. Failure modes:\n";
  for (const auto& m : mast_taxonomy()) {
    prompt += fmt::format("{} {}: {}\n", m.code, m.name, m.definition);
  }
  prompt += "\nLog:\n";
  for (const auto& step : trace.steps) {
    prompt += "[" + step.agent_id + "]\n";
    for (const auto& msg : step.inputs) prompt += "  from " + msg.source_id + ": " + msg.text + "\n";
    prompt += "  output: " + step.output + "\n";
  }
  prompt += "Final answer: " + trace.final_answer + "\n";
  prompt +=
      "\nReply with the applicable codes separated by commas (for example FM-1.2, FM-2.5), "
      "or NONE if no failure occurred.";
  return prompt;
}

std::optional<std::set<std::string>> parse_mast_reply(std::string_view reply) {
  static const std::regex code_re(R"(FM-\d+\.\d+)");
  static const std::regex none_re(R"(\bNONE\b)", std::regex::icase);
  std::set<std::string> codes;
  bool any = false;
  const std::string text(reply);
  for (auto it = std::sregex_iterator(text.begin(), text.end(), code_re);
       it != std::sregex_iterator(); ++it) {
    any = true;
    const std::string code = it->str();
    if (is_mast_code(code)) {
      codes.insert(code);
    } else {
      spdlog::warn("dropping unknown failure code {}", code);
    }
  }
  if (!any && !std::regex_search(text, none_re)) return std::nullopt;
  return codes;
}

MastClassification classify_trace(const ExecutionTrace& trace, Backend& judge) {
  if (!trace.complete) {
    throw Error(Errc::InvalidArgument, "trace " + trace.instance_id + " is incomplete");
  }
  MastClassification out;
  out.trace_key = trace.topology_id + "/" + trace.instance_id;
  const std::string prompt = mast_prompt(trace);
  for (int attempt = 0; attempt < 2; ++attempt) {
    if (auto labels = parse_mast_reply(judge.judge(prompt))) {
      out.labels = std::move(*labels);
      return out;
    }
  }
  spdlog::warn("trace {} left unclassified: judge reply unparseable twice", out.trace_key);
  out.classified = false;
  return out;
}

MastReport aggregate_mast(std::span<const MastClassification> per_trace,
                          const std::set<std::string>& topology_codes) {
  MastReport report;
  for (const auto& m : mast_taxonomy()) report.counts[std::string(m.code)] = 0;
  for (const auto& c : per_trace) {
    if (!c.classified) {
      ++report.unclassified;
      continue;
    }
    report.per_trace[c.trace_key].insert(c.labels.begin(), c.labels.end());
    for (const auto& label : c.labels) {
      ++report.counts[label];
      ++report.total;
      if (topology_codes.contains(label)) ++report.topology_related;
    }
  }
  if (report.total == 0) throw Error(Errc::NoLabels, "no failure labels to aggregate");
  const auto total = static_cast<double>(report.total);
  for (const auto& [code, count] : report.counts) {
    report.distribution[code] = static_cast<double>(count) / total;
  }
  report.topology_related_share = static_cast<double>(report.topology_related) / total;
  return report;
}

std::string mast_csv(const MastReport& report) {
  std::string csv = "code,count,fraction\n";
  for (const auto& [code, count] : report.counts) {
    csv += fmt::format("{},{},{}\n", code, count, report.distribution.at(code));
  }
  return csv;
}

}  // namespace masscope

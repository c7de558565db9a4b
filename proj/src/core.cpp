#include "masscope/core.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <set>
#include <unordered_map>

#include "masscope/error.hpp"

namespace masscope {

std::optional<std::size_t> Topology::index_of(std::string_view agent_id) const {
  for (std::size_t i = 0; i < agents.size(); ++i)
    if (agents[i].id == agent_id) return i;
  return std::nullopt;
}

const AgentSpec* Topology::find(std::string_view agent_id) const {
  auto idx = index_of(agent_id);
  return idx ? &agents[*idx] : nullptr;
}

std::string_view to_string(AnswerFormat format) noexcept {
  switch (format) {
    case AnswerFormat::Boolean: return "boolean";
    case AnswerFormat::Multichoice: return "multichoice";
    case AnswerFormat::Numeric: return "numeric";
    case AnswerFormat::Freeform: return "freeform";
  }
  return "freeform";
}

AnswerFormat answer_format_from_string(std::string_view text) {
  if (text == "boolean") return AnswerFormat::Boolean;
  if (text == "multichoice") return AnswerFormat::Multichoice;
  if (text == "numeric") return AnswerFormat::Numeric;
  if (text == "freeform") return AnswerFormat::Freeform;
  throw Error(Errc::InvalidArgument, "unknown answer format '" + std::string(text) + "'");
}

std::string_view to_string(Verdict verdict) noexcept {
  switch (verdict) {
    case Verdict::Correct: return "correct";
    case Verdict::Incorrect: return "incorrect";
    case Verdict::Unverifiable: return "unverifiable";
  }
  return "unverifiable";
}

Verdict verdict_from_string(std::string_view text) {
  if (text == "correct") return Verdict::Correct;
  if (text == "incorrect") return Verdict::Incorrect;
  if (text == "unverifiable") return Verdict::Unverifiable;
  throw Error(Errc::InvalidArgument, "unknown verdict '" + std::string(text) + "'");
}

namespace {

// Adjacency over agent positions; edges with unknown endpoints are dropped.
struct Graph {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::vector<std::size_t>> in;
};

Graph build_graph(const Topology& t) {
  std::unordered_map<std::string_view, std::size_t> pos;
  for (std::size_t i = 0; i < t.agents.size(); ++i) pos.emplace(t.agents[i].id, i);
  Graph g;
  g.out.resize(t.agents.size());
  g.in.resize(t.agents.size());
  for (const auto& e : t.edges) {
    auto s = pos.find(e.src);
    auto d = pos.find(e.dst);
    if (s == pos.end() || d == pos.end()) continue;
    g.out[s->second].push_back(d->second);
    g.in[d->second].push_back(s->second);
  }
  return g;
}

// Tarjan's algorithm; returns components that contain a cycle.
std::vector<std::vector<std::size_t>> cyclic_components(const Graph& g) {
  const std::size_t n = g.out.size();
  std::vector<int> index(n, -1), low(n, 0);
  std::vector<bool> on_stack(n, false);
  std::vector<std::size_t> stack;
  std::vector<std::vector<std::size_t>> cycles;
  int counter = 0;

  std::function<void(std::size_t)> visit = [&](std::size_t v) {
    index[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack[v] = true;
    for (std::size_t w : g.out[v]) {
      if (index[w] < 0) {
        visit(w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack[w]) {
        low[v] = std::min(low[v], index[w]);
      }
    }
    if (low[v] == index[v]) {
      std::vector<std::size_t> comp;
      std::size_t w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack[w] = false;
        comp.push_back(w);
      } while (w != v);
      const bool self_loop =
          std::find(g.out[v].begin(), g.out[v].end(), v) != g.out[v].end();
      if (comp.size() > 1 || self_loop) {
        std::sort(comp.begin(), comp.end());
        cycles.push_back(std::move(comp));
      }
    }
  };
  for (std::size_t v = 0; v < n; ++v)
    if (index[v] < 0) visit(v);
  std::sort(cycles.begin(), cycles.end());
  return cycles;
}

std::vector<bool> reaches(const Graph& g, std::size_t target) {
  std::vector<bool> seen(g.in.size(), false);
  std::vector<std::size_t> work{target};
  seen[target] = true;
  while (!work.empty()) {
    const std::size_t v = work.back();
    work.pop_back();
    for (std::size_t u : g.in[v]) {
      if (!seen[u]) {
        seen[u] = true;
        work.push_back(u);
      }
    }
  }
  return seen;
}

}  // namespace

ValidationResult validate_topology(const Topology& t) {
  using K = Violation::Kind;
  ValidationResult result;
  auto error = [&](K kind, std::string msg) { result.errors.push_back({kind, std::move(msg)}); };

  std::set<std::string_view> ids;
  for (const auto& a : t.agents) {
    if (a.id.empty()) error(K::EmptyAgentId, "agent with empty id");
    else if (!ids.insert(a.id).second) error(K::DuplicateAgentId, "duplicate agent id " + a.id);
    if (a.role_prompt.empty()) error(K::EmptyRolePrompt, "agent " + a.id + " has an empty role prompt");
  }

  std::set<Edge> seen_edges;
  for (const auto& e : t.edges) {
    for (const auto* end : {&e.src, &e.dst}) {
      if (!ids.contains(*end)) error(K::UnknownEndpoint, "unknown endpoint " + *end);
    }
    if (!seen_edges.insert(e).second) error(K::DuplicateEdge, "duplicate edge " + e.src + "->" + e.dst);
  }

  const Graph g = build_graph(t);
  const auto cycles = cyclic_components(g);
  for (const auto& comp : cycles) {
    std::string msg = "cycle {";
    for (std::size_t k = 0; k < comp.size(); ++k) {
      if (k) msg += ',';
      msg += t.agents[comp[k]].id;
    }
    error(K::Cycle, msg + "}");
  }

  const auto sink = t.index_of(t.sink_id);
  if (!sink) {
    error(K::MissingSink, "sink " + t.sink_id + " is not an agent");
    return result;
  }
  if (!g.out[*sink].empty()) error(K::SinkHasOutEdges, "sink " + t.sink_id + " has outgoing edges");

  const auto to_sink = reaches(g, *sink);
  for (std::size_t i = 0; i < t.agents.size(); ++i) {
    if (!to_sink[i]) {
      result.warnings.push_back({K::Unreachable, "agent " + t.agents[i].id + " has no path to the sink"});
    }
  }
  return result;
}

std::vector<std::string> sink_ancestors(const Topology& t) {
  const auto sink = t.index_of(t.sink_id);
  if (!sink) throw Error(Errc::InvalidArgument, "sink " + t.sink_id + " is not an agent");
  const auto to_sink = reaches(build_graph(t), *sink);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < t.agents.size(); ++i)
    if (to_sink[i]) ids.push_back(t.agents[i].id);
  return ids;
}

std::vector<std::vector<std::string>> topological_levels(const Topology& t) {
  const Graph g = build_graph(t);
  const auto cycles = cyclic_components(g);
  if (!cycles.empty()) {
    throw Error(Errc::CyclicTopology, "topology " + t.id + " contains a cycle through " +
                                          t.agents[cycles.front().front()].id);
  }
  const auto sink = t.index_of(t.sink_id);
  if (!sink) throw Error(Errc::InvalidArgument, "sink " + t.sink_id + " is not an agent");
  const auto keep = reaches(g, *sink);
  const std::size_t n = t.agents.size();

  // Kahn's order over the kept subgraph, tracking longest distance.
  std::vector<std::size_t> indegree(n, 0);
  for (std::size_t v = 0; v < n; ++v)
    if (keep[v])
      for (std::size_t u : g.in[v])
        if (keep[u]) ++indegree[v];
  std::vector<std::size_t> level(n, 0);
  std::vector<std::size_t> ready;
  for (std::size_t v = 0; v < n; ++v)
    if (keep[v] && indegree[v] == 0) ready.push_back(v);
  std::size_t depth = 0;
  while (!ready.empty()) {
    const std::size_t v = ready.back();
    ready.pop_back();
    depth = std::max(depth, level[v]);
    for (std::size_t w : g.out[v]) {
      if (!keep[w]) continue;
      level[w] = std::max(level[w], level[v] + 1);
      if (--indegree[w] == 0) ready.push_back(w);
    }
  }

  std::vector<std::vector<std::string>> levels(depth + 1);
  for (std::size_t v = 0; v < n; ++v)
    if (keep[v]) levels[level[v]].push_back(t.agents[v].id);
  return levels;
}

bool sources_reach_sink(const Topology& t) {
  const auto sink = t.index_of(t.sink_id);
  if (!sink) return false;
  const Graph g = build_graph(t);
  const auto to_sink = reaches(g, *sink);
  for (std::size_t v = 0; v < g.in.size(); ++v)
    if (g.in[v].empty() && !to_sink[v]) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Answer canonicalization

namespace {

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

struct NumberToken {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool negative = false;
  std::string int_digits;
  std::string frac_digits;
  long exponent = 0;
};

// Scans one number starting at `i` (which must be a sign, digit, or '.').
std::optional<NumberToken> scan_number(std::string_view s, std::size_t i) {
  NumberToken tok;
  tok.begin = i;
  if (s[i] == '-' || s[i] == '+') {
    tok.negative = s[i] == '-';
    ++i;
  }
  while (i < s.size() && is_digit(s[i])) tok.int_digits += s[i++];
  // Thousands separators: "1,234,567". Each group is exactly three digits.
  if (!tok.int_digits.empty() && tok.int_digits.size() <= 3) {
    while (i + 3 < s.size() && s[i] == ',' && is_digit(s[i + 1]) && is_digit(s[i + 2]) &&
           is_digit(s[i + 3]) && (i + 4 >= s.size() || !is_digit(s[i + 4]))) {
      tok.int_digits.append(s.substr(i + 1, 3));
      i += 4;
    }
  }
  if (i < s.size() && s[i] == '.' && i + 1 < s.size() && is_digit(s[i + 1])) {
    ++i;
    while (i < s.size() && is_digit(s[i])) tok.frac_digits += s[i++];
  }
  if (tok.int_digits.empty() && tok.frac_digits.empty()) return std::nullopt;
  if (i < s.size() && (s[i] == 'e' || s[i] == 'E')) {
    std::size_t j = i + 1;
    bool neg_exp = false;
    if (j < s.size() && (s[j] == '-' || s[j] == '+')) neg_exp = s[j++] == '-';
    if (j < s.size() && is_digit(s[j])) {
      long e = 0;
      while (j < s.size() && is_digit(s[j])) {
        if (e < 100000) e = e * 10 + (s[j] - '0');
        ++j;
      }
      tok.exponent = neg_exp ? -e : e;
      i = j;
    }
  }
  tok.end = i;
  return tok;
}

std::vector<NumberToken> find_numbers(std::string_view s) {
  std::vector<NumberToken> found;
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    const bool boundary = i == 0 || !(is_alnum(s[i - 1]) || s[i - 1] == '.');
    bool starts = false;
    if (is_digit(c)) starts = boundary;
    else if ((c == '-' || c == '+') && boundary && i + 1 < s.size())
      starts = is_digit(s[i + 1]) || (s[i + 1] == '.' && i + 2 < s.size() && is_digit(s[i + 2]));
    else if (c == '.' && boundary && i + 1 < s.size()) starts = is_digit(s[i + 1]);
    if (starts) {
      if (auto tok = scan_number(s, i)) {
        i = tok->end;
        found.push_back(std::move(*tok));
        continue;
      }
    }
    ++i;
  }
  return found;
}

std::string expand_decimal(const NumberToken& tok) {
  if (tok.exponent > 1000 || tok.exponent < -1000) {
    throw Error(Errc::Unparseable, "exponent out of range");
  }
  const std::string digits = tok.int_digits + tok.frac_digits;
  const long point = static_cast<long>(tok.int_digits.size()) + tok.exponent;
  std::string int_part, frac_part;
  if (point <= 0) {
    int_part = "0";
    frac_part = std::string(static_cast<std::size_t>(-point), '0') + digits;
  } else if (point >= static_cast<long>(digits.size())) {
    int_part = digits + std::string(static_cast<std::size_t>(point) - digits.size(), '0');
  } else {
    int_part = digits.substr(0, static_cast<std::size_t>(point));
    frac_part = digits.substr(static_cast<std::size_t>(point));
  }
  const auto nz = int_part.find_first_not_of('0');
  int_part = nz == std::string::npos ? "0" : int_part.substr(nz);
  while (!frac_part.empty() && frac_part.back() == '0') frac_part.pop_back();

  std::string out = int_part;
  if (!frac_part.empty()) out += "." + frac_part;
  if (tok.negative && out != "0") out.insert(out.begin(), '-');
  return out;
}

}  // namespace

std::string normalize_answer(std::string_view text, AnswerFormat format) {
  switch (format) {
    case AnswerFormat::Boolean: {
      std::optional<std::string> last;
      std::size_t i = 0;
      while (i < text.size()) {
        if (!is_alnum(text[i])) {
          ++i;
          continue;
        }
        std::size_t j = i;
        while (j < text.size() && is_alnum(text[j])) ++j;
        const std::string word = lower(text.substr(i, j - i));
        if (word == "yes" || word == "true") last = "true";
        else if (word == "no" || word == "false") last = "false";
        i = j;
      }
      if (!last) throw Error(Errc::Unparseable, "no yes/no/true/false token");
      return *last;
    }
    case AnswerFormat::Multichoice: {
      for (std::size_t k = text.size(); k-- > 0;) {
        const char c = text[k];
        if (c < 'A' || c > 'E') continue;
        const bool left_ok = k == 0 || !is_alnum(text[k - 1]);
        const bool right_ok = k + 1 == text.size() || !is_alnum(text[k + 1]);
        if (left_ok && right_ok) return std::string(1, c);
      }
      throw Error(Errc::Unparseable, "no standalone A-E token");
    }
    case AnswerFormat::Numeric: {
      const auto numbers = find_numbers(text);
      if (numbers.empty()) throw Error(Errc::Unparseable, "no numeric token");
      return expand_decimal(numbers.back());
    }
    case AnswerFormat::Freeform: {
      std::string out;
      bool pending_space = false;
      for (char c : trim(text)) {
        if (is_space(c)) {
          pending_space = true;
          continue;
        }
        if (pending_space) out += ' ';
        pending_space = false;
        out += c;
      }
      if (out.empty()) throw Error(Errc::Unparseable, "empty answer");
      return out;
    }
  }
  throw Error(Errc::Unparseable, "unknown format");
}

std::optional<std::string> check_instance(const TaskInstance& inst) {
  if (inst.id.empty()) return "empty id";
  if (inst.query.empty()) return "empty query";
  try {
    switch (inst.answer_format) {
      case AnswerFormat::Numeric: {
        const auto gold = trim(inst.gold_answer);
        const auto numbers = find_numbers(gold);
        if (numbers.size() != 1 || numbers[0].begin != 0 || numbers[0].end != gold.size()) {
          return "numeric gold '" + inst.gold_answer + "' is not a single decimal number";
        }
        expand_decimal(numbers[0]);
        break;
      }
      case AnswerFormat::Multichoice: {
        const auto gold = trim(inst.gold_answer);
        if (gold.size() != 1 || normalize_answer(gold, inst.answer_format).empty()) {
          return "multichoice gold '" + inst.gold_answer + "' is not one of A-E";
        }
        break;
      }
      default:
        normalize_answer(inst.gold_answer, inst.answer_format);
    }
  } catch (const Error&) {
    return "gold answer '" + inst.gold_answer + "' does not match format " +
           std::string(to_string(inst.answer_format));
  }
  return std::nullopt;
}

}  // namespace masscope

#include "masscope/backend.hpp"

#include <cmath>
#include <cstdio>

#include "masscope/error.hpp"
#include "masscope/hash.hpp"

namespace masscope {

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return std::string(buf, 16);
}

void BackendConfig::validate() const {
  if (kind == Kind::Http && (!base_url || base_url->empty())) {
    throw Error(Errc::InvalidArgument, "http backend requires base_url");
  }
  if (!(timeout_seconds > 0)) throw Error(Errc::InvalidArgument, "timeout must be positive");
  if (max_retries < 0) throw Error(Errc::InvalidArgument, "max_retries must be >= 0");
  if (embed_dim < 1) throw Error(Errc::InvalidArgument, "embed_dim must be >= 1");
  if (max_in_flight < 1) throw Error(Errc::InvalidArgument, "max_in_flight must be >= 1");
}

// ---------------------------------------------------------------------------

MockBackend::MockBackend(std::uint64_t seed, int dim, Hooks hooks)
    : seed_(seed), dim_(dim), hooks_(std::move(hooks)) {
  if (dim_ < 1) throw Error(Errc::InvalidArgument, "embedding dimension must be >= 1");
}

std::string MockBackend::default_completion(std::string_view role_prompt, std::string_view query,
                                            std::span<const Message> inputs) {
  std::uint64_t h = fnv1a64(role_prompt);
  h = fnv1a64("\n", h);
  h = fnv1a64(query, h);
  h = fnv1a64("\n", h);
  for (const auto& m : inputs) {
    h = fnv1a64(m.text, h);
    h = fnv1a64("\n", h);
  }
  std::string out = "[";
  out += role_prompt.substr(0, 8);
  out += '|';
  out += hex64(h);
  out += ']';
  return out;
}

Usefulness MockBackend::default_usefulness(std::string_view query, std::string_view role_prompt,
                                           std::string_view message) {
  std::uint64_t h = fnv1a64(query);
  h = fnv1a64("\x1f", h);
  h = fnv1a64(role_prompt, h);
  h = fnv1a64("\x1f", h);
  h = fnv1a64(message, h);
  return (h % 2 == 0) ? Usefulness::useful() : Usefulness::not_useful();
}

Embedding MockBackend::default_embedding(std::string_view text) const {
  const std::uint64_t base = fnv1a64(text) ^ seed_;
  for (std::uint64_t counter = 0;; ++counter) {
    SplitMix64 rng(base + counter);
    Embedding v(dim_);
    for (int k = 0; k < dim_; ++k) v(k) = rng.next_unit() * 2.0 - 1.0;
    const double norm = v.norm();
    if (norm > 0.0) return v / norm;
  }
}

std::string MockBackend::complete(std::string_view role_prompt, std::string_view query,
                                  std::span<const Message> inputs) {
  if (role_prompt.empty()) throw Error(Errc::InvalidArgument, "empty role prompt");
  if (hooks_.complete) {
    if (auto out = hooks_.complete(role_prompt, query, inputs)) {
      if (out->empty()) throw Error(Errc::EmptyResponse, "scripted completion is empty");
      return *out;
    }
  }
  return default_completion(role_prompt, query, inputs);
}

Embedding MockBackend::embed(std::string_view text) {
  if (text.empty()) throw Error(Errc::InvalidArgument, "cannot embed empty text");
  if (hooks_.embed) {
    if (auto v = hooks_.embed(text)) {
      const double norm = v->norm();
      if (!(norm > 0.0)) throw Error(Errc::ZeroVector, "scripted embedding is zero");
      return *v / norm;
    }
  }
  return default_embedding(text);
}

Usefulness MockBackend::judge_usefulness(std::string_view query, std::string_view role_prompt,
                                         std::string_view message) {
  if (hooks_.usefulness) {
    if (auto u = hooks_.usefulness(query, role_prompt, message)) return *u;
  }
  return default_usefulness(query, role_prompt, message);
}

std::string MockBackend::judge(std::string_view prompt) {
  if (hooks_.judge) {
    if (auto reply = hooks_.judge(prompt)) return *reply;
  }
  return "NONE";
}

// ---------------------------------------------------------------------------

std::string usefulness_prompt(std::string_view query, std::string_view role_prompt,
                              std::string_view message) {
  std::string p;
  p += "You are evaluating communication inside a multi-agent system.\n";
  p += "An agent with the role below received a message from another agent while working on "
       "the task.\n";
  p += "Decide whether the message is useful for this agent to fulfil its role on this task.\n\n";
  p += "### Task\n";
  p += query;
  p += "\n\n### Agent role\n";
  p += role_prompt;
  p += "\n\n### Incoming message\n";
  p += message;
  p += "\n\nReply with exactly one token: USEFUL or NOT_USEFUL.";
  return p;
}

std::optional<Usefulness> parse_usefulness(std::string_view reply) {
  auto is_trim = [](char c) {
    return c == ' ' || c == '\n' || c == '\r' || c == '\t' || c == '"' || c == '\'' || c == '`';
  };
  while (!reply.empty() && is_trim(reply.front())) reply.remove_prefix(1);
  while (!reply.empty() && (is_trim(reply.back()) || reply.back() == '.')) reply.remove_suffix(1);
  if (reply == "USEFUL") return Usefulness::useful();
  if (reply == "NOT_USEFUL") return Usefulness::not_useful();
  return std::nullopt;
}

std::string format_user_turn(std::string_view query, std::span<const Message> inputs) {
  std::string turn = "Task:\n";
  turn += query;
  turn += "\n";
  for (const auto& m : inputs) {
    turn += "\nMessage from ";
    turn += m.source_id;
    turn += ":\n";
    turn += m.text;
    turn += "\n";
  }
  return turn;
}

std::chrono::milliseconds backoff_delay(int attempt, double unit_draw) {
  const double jitter = 0.9 + 0.2 * unit_draw;
  const double ms = 250.0 * std::ldexp(1.0, attempt) * jitter;
  return std::chrono::milliseconds(static_cast<long long>(std::llround(ms)));
}

// ---------------------------------------------------------------------------

Embedding CachingBackend::embed(std::string_view text) {
  std::string key(text);
  {
    std::lock_guard lock(mutex_);
    if (auto it = embeddings_.find(key); it != embeddings_.end()) return it->second;
  }
  Embedding v = inner_.embed(text);
  std::lock_guard lock(mutex_);
  return embeddings_.emplace(std::move(key), std::move(v)).first->second;
}

Usefulness CachingBackend::judge_usefulness(std::string_view query, std::string_view role_prompt,
                                            std::string_view message) {
  std::string key;
  key.reserve(query.size() + role_prompt.size() + message.size() + 2);
  key.append(query).append(1, '\x1f').append(role_prompt).append(1, '\x1f').append(message);
  {
    std::lock_guard lock(mutex_);
    if (auto it = verdicts_.find(key); it != verdicts_.end()) return it->second;
  }
  const Usefulness u = inner_.judge_usefulness(query, role_prompt, message);
  std::lock_guard lock(mutex_);
  return verdicts_.emplace(std::move(key), u).first->second;
}

std::size_t CachingBackend::cached_embeddings() const {
  std::lock_guard lock(mutex_);
  return embeddings_.size();
}

std::unique_ptr<Backend> make_backend(const BackendConfig& config) {
  config.validate();
  if (config.kind == BackendConfig::Kind::Http) return std::make_unique<HttpBackend>(config);
  return std::make_unique<MockBackend>(config.seed, config.embed_dim);
}

}  // namespace masscope

#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>

#include "masscope/core.hpp"
#include "masscope/linalg.hpp"

namespace masscope {

/// Judge verdict on whether a message helps an agent: +1 useful, -1 not.
class Usefulness {
 public:
  static constexpr Usefulness useful() { return Usefulness(1); }
  static constexpr Usefulness not_useful() { return Usefulness(-1); }

  constexpr int value() const noexcept { return value_; }
  constexpr bool operator==(const Usefulness&) const = default;

 private:
  constexpr explicit Usefulness(int v) : value_(v) {}
  int value_;
};

struct BackendConfig {
  enum class Kind { Mock, Http };

  Kind kind = Kind::Mock;
  std::optional<std::string> base_url;
  std::string chat_model = "gpt-oss-20b";
  std::string embed_model = "all-MiniLM-L6-v2";
  std::string judge_model = "gpt-oss-20b";
  double timeout_seconds = 60.0;
  int max_retries = 3;
  std::uint64_t seed = 42;
  int embed_dim = 32;
  int max_in_flight = 8;

  /// Throws Errc::InvalidArgument when the invariants do not hold.
  void validate() const;
};

/// Model capabilities used by every workflow. Implementations must accept
/// concurrent calls.
class Backend {
 public:
  virtual ~Backend() = default;

  /// One agent invocation: role prompt as the system turn, the query and
  /// labeled incoming messages as the user turn.
  virtual std::string complete(std::string_view role_prompt, std::string_view query,
                               std::span<const Message> inputs) = 0;

  /// Unit-norm text embedding.
  virtual Embedding embed(std::string_view text) = 0;

  /// Throws Errc::JudgeParseFailure when no verdict can be parsed.
  virtual Usefulness judge_usefulness(std::string_view query, std::string_view role_prompt,
                                      std::string_view message) = 0;

  /// Free-form judge call (failure classification, answer verification).
  virtual std::string judge(std::string_view prompt) = 0;
};

// ---------------------------------------------------------------------------

/// Bit-deterministic backend built from FNV-1a-64 and SplitMix64.
///
///   complete  "[" + role_prompt[0:8] + "|" + hex(fnv(role \n query \n (text \n)*)) + "]"
///   embed     SplitMix64(fnv(text) ^ seed), d draws in [-1, 1], L2-normalized
///   judge     +1 iff fnv(query \x1f role \x1f message) is even
///
/// Hooks let test fixtures script individual calls; a hook returning nullopt
/// falls through to the deterministic default. Hooks must be thread-safe.
class MockBackend final : public Backend {
 public:
  struct Hooks {
    std::function<std::optional<std::string>(std::string_view role, std::string_view query,
                                             std::span<const Message> inputs)>
        complete;
    std::function<std::optional<Embedding>(std::string_view text)> embed;
    std::function<std::optional<Usefulness>(std::string_view query, std::string_view role,
                                            std::string_view message)>
        usefulness;
    std::function<std::optional<std::string>(std::string_view prompt)> judge;
  };

  explicit MockBackend(std::uint64_t seed = 42, int dim = 32, Hooks hooks = {});

  std::string complete(std::string_view role_prompt, std::string_view query,
                       std::span<const Message> inputs) override;
  Embedding embed(std::string_view text) override;
  Usefulness judge_usefulness(std::string_view query, std::string_view role_prompt,
                              std::string_view message) override;
  /// Default reply is "NONE".
  std::string judge(std::string_view prompt) override;

  static std::string default_completion(std::string_view role_prompt, std::string_view query,
                                        std::span<const Message> inputs);
  static Usefulness default_usefulness(std::string_view query, std::string_view role_prompt,
                                       std::string_view message);
  Embedding default_embedding(std::string_view text) const;

 private:
  std::uint64_t seed_;
  int dim_;
  Hooks hooks_;
};

// ---------------------------------------------------------------------------

/// Judge prompt for message usefulness. Demands exactly USEFUL or NOT_USEFUL.
std::string usefulness_prompt(std::string_view query, std::string_view role_prompt,
                              std::string_view message);

/// Strict parse of a judge reply: the trimmed reply (surrounding quotes,
/// backticks, and a trailing period removed) must be USEFUL or NOT_USEFUL.
std::optional<Usefulness> parse_usefulness(std::string_view reply);

/// User turn sent to the chat model for one agent invocation.
std::string format_user_turn(std::string_view query, std::span<const Message> inputs);

/// Delay before retry `attempt` (0-based): 250 ms * 2^attempt, jittered by
/// a factor drawn uniformly from [0.9, 1.1].
std::chrono::milliseconds backoff_delay(int attempt, double unit_draw);

/// OpenAI-compatible HTTP backend (chat completions and embeddings).
/// Bearer token is read from MASSCOPE_API_KEY.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(BackendConfig config);
  ~HttpBackend() override;

  std::string complete(std::string_view role_prompt, std::string_view query,
                       std::span<const Message> inputs) override;
  Embedding embed(std::string_view text) override;
  Usefulness judge_usefulness(std::string_view query, std::string_view role_prompt,
                              std::string_view message) override;
  std::string judge(std::string_view prompt) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// ---------------------------------------------------------------------------

/// Decorator that memoizes embeddings and usefulness verdicts by content, so
/// metric results do not depend on call order. Chat and judge calls pass
/// through uncached.
class CachingBackend final : public Backend {
 public:
  explicit CachingBackend(Backend& inner) : inner_(inner) {}

  std::string complete(std::string_view role_prompt, std::string_view query,
                       std::span<const Message> inputs) override {
    return inner_.complete(role_prompt, query, inputs);
  }
  Embedding embed(std::string_view text) override;
  Usefulness judge_usefulness(std::string_view query, std::string_view role_prompt,
                              std::string_view message) override;
  std::string judge(std::string_view prompt) override { return inner_.judge(prompt); }

  std::size_t cached_embeddings() const;

 private:
  Backend& inner_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, Embedding> embeddings_;
  std::unordered_map<std::string, Usefulness> verdicts_;
};

std::unique_ptr<Backend> make_backend(const BackendConfig& config);

}  // namespace masscope

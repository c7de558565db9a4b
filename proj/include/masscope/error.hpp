#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace masscope {

/// Error kinds surfaced by the library. The CLI maps every one of these to
/// exit code 1 (domain error).
enum class Errc {
  InvalidArgument,
  CyclicTopology,
  Unparseable,
  BackendUnavailable,
  EmptyResponse,
  ZeroVector,
  JudgeParseFailure,
  EmptyDataset,
  DimensionMismatch,
  EmptyInput,
  DegenerateVariance,
  AllZeroLine,
  UnknownDomain,
  MissingCell,
  DuplicateCell,
  TopologyMismatch,
  NoRemovableEdge,
  PoolTooLarge,
  EmptyPool,
  EmptyFront,
  NotPSD,
  NotSymmetric,
  AgentCountMismatch,
  InvalidResult,
  NoLabels,
  IoError,
  SchemaViolation,
  InsufficientData,
};

std::string_view to_string(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace masscope

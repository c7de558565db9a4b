#include "masscope/error.hpp"

namespace masscope {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::CyclicTopology: return "CyclicTopology";
    case Errc::Unparseable: return "Unparseable";
    case Errc::BackendUnavailable: return "BackendUnavailable";
    case Errc::EmptyResponse: return "EmptyResponse";
    case Errc::ZeroVector: return "ZeroVector";
    case Errc::JudgeParseFailure: return "JudgeParseFailure";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::DegenerateVariance: return "DegenerateVariance";
    case Errc::AllZeroLine: return "AllZeroLine";
    case Errc::UnknownDomain: return "UnknownDomain";
    case Errc::MissingCell: return "MissingCell";
    case Errc::DuplicateCell: return "DuplicateCell";
    case Errc::TopologyMismatch: return "TopologyMismatch";
    case Errc::NoRemovableEdge: return "NoRemovableEdge";
    case Errc::PoolTooLarge: return "PoolTooLarge";
    case Errc::EmptyPool: return "EmptyPool";
    case Errc::EmptyFront: return "EmptyFront";
    case Errc::NotPSD: return "NotPSD";
    case Errc::NotSymmetric: return "NotSymmetric";
    case Errc::AgentCountMismatch: return "AgentCountMismatch";
    case Errc::InvalidResult: return "InvalidResult";
    case Errc::NoLabels: return "NoLabels";
    case Errc::IoError: return "IoError";
    case Errc::SchemaViolation: return "SchemaViolation";
    case Errc::InsufficientData: return "InsufficientData";
  }
  return "Unknown";
}

}  // namespace masscope

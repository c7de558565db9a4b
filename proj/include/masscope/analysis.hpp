#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "masscope/error.hpp"

namespace masscope {

// ---------------------------------------------------------------------------
// Correlation

/// Sample Pearson correlation, clamped to [-1, 1]. Needs >= 3 paired values
/// and nonzero variance on both sides (Errc::DegenerateVariance).
template <typename Scalar>
Scalar pearson(std::span<const Scalar> xs, std::span<const Scalar> ys) {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  if (xs.size() != ys.size()) throw Error(Errc::DimensionMismatch, "pearson of unequal lengths");
  if (xs.size() < 3) throw Error(Errc::InvalidArgument, "pearson needs at least 3 samples");
  const auto n = static_cast<Eigen::Index>(xs.size());
  const Vec x = Eigen::Map<const Vec>(xs.data(), n);
  const Vec y = Eigen::Map<const Vec>(ys.data(), n);
  const Vec dx = x.array() - x.mean();
  const Vec dy = y.array() - y.mean();
  const Scalar sxx = dx.squaredNorm();
  const Scalar syy = dy.squaredNorm();
  if (sxx == Scalar(0) || syy == Scalar(0)) {
    throw Error(Errc::DegenerateVariance, "pearson input is constant");
  }
  const Scalar r = dx.dot(dy) / std::sqrt(sxx * syy);
  return std::clamp(r, Scalar(-1), Scalar(1));
}

inline double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  return pearson<double>(std::span<const double>(xs), std::span<const double>(ys));
}

/// Two-sided permutation p-value for Pearson's r:
///   p = (1 + #{k : |r(xs, perm_k(ys))| >= |r_obs|}) / (n_resamples + 1)
/// Resample k shuffles ys with SplitMix64(seed + k), so the result is fixed
/// per seed.
double perm_pvalue(std::span<const double> xs, std::span<const double> ys,
                   std::size_t n_resamples = 10000, std::uint64_t seed = 42);

enum class Stars { None, One, Two, Three };

std::string_view to_string(Stars stars) noexcept;
Stars significance_stars(double p_value) noexcept;

struct CorrelationResult {
  double r = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
  Stars stars = Stars::None;
};

CorrelationResult correlate(std::span<const double> xs, std::span<const double> ys,
                            std::size_t n_resamples = 10000, std::uint64_t seed = 42);

// ---------------------------------------------------------------------------
// Transfer matrices

enum class MatrixKind { Accuracy, RoleAlignment, ConnectionSignificance };
enum class Normalization { None, ColumnMax, RowMaxAuto };
enum class CellLabel { Success, Neutral, Failed };

std::string_view to_string(MatrixKind kind) noexcept;
std::string_view to_string(Normalization mode) noexcept;
std::string_view to_string(CellLabel label) noexcept;
MatrixKind matrix_kind_from_string(std::string_view text);
/// Accepts "none", "column-max"/"column_max", "row-max-auto"/"row_max_auto".
Normalization normalization_from_string(std::string_view text);

/// Train-domain by test-domain grid. Rows may include pseudo-rows such as
/// multi-domain training that have no matching column.
struct TransferMatrix {
  std::vector<std::string> train_domains;
  std::vector<std::string> test_domains;
  Eigen::MatrixXd values;
  MatrixKind kind = MatrixKind::Accuracy;
  Normalization normalization = Normalization::None;

  std::optional<std::size_t> row_of(std::string_view train_domain) const;
  std::optional<std::size_t> col_of(std::string_view test_domain) const;
};

struct TransferCell {
  std::string train_domain;
  std::string test_domain;
  double value = 0.0;
};

/// Dense grid with labels in first-appearance order. Every test domain must
/// also appear as a train domain; extra train rows are pseudo-rows.
/// Throws Errc::MissingCell or Errc::DuplicateCell.
TransferMatrix build_transfer_matrix(std::span<const TransferCell> cells, MatrixKind kind);

/// column_max: each cell divided by its column maximum.
/// row_max_auto: each cell divided by its row maximum; a row with no
///   positive entry is divided by its absolute maximum instead.
/// A line of zeros throws Errc::AllZeroLine.
TransferMatrix normalize_matrix(const TransferMatrix& m, Normalization mode);

/// >= hi -> success, < lo -> failed, otherwise neutral.
CellLabel classify_cell(double normalized_value, double hi = 0.95, double lo = 0.70);

std::vector<std::vector<CellLabel>> classify_matrix(const TransferMatrix& normalized,
                                                    double hi = 0.95, double lo = 0.70);

/// Mean of a train row excluding its in-domain (diagonal) cell.
double ood_row_mean(const TransferMatrix& m, std::string_view train_domain);

/// Signed accuracy change in percentage points, rounded to 2 decimals.
double ablation_delta(double acc_base_percent, double acc_ablated_percent);

/// Raw grid as CSV: header "train/test,<test domains...>", one row per train domain.
std::string transfer_csv(const TransferMatrix& m);

}  // namespace masscope

#include "masscope/analysis.hpp"

#include <charconv>
#include <map>
#include <numeric>
#include <set>

#include "masscope/hash.hpp"

namespace masscope {

double perm_pvalue(std::span<const double> xs, std::span<const double> ys,
                   std::size_t n_resamples, std::uint64_t seed) {
  const double r_obs = std::abs(pearson<double>(xs, ys));
  if (n_resamples == 0) return 1.0;

  const auto n = static_cast<Eigen::Index>(xs.size());
  const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(xs.data(), n);
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(ys.data(), n);
  const Eigen::VectorXd dx = x.array() - x.mean();
  const Eigen::VectorXd dy = y.array() - y.mean();
  // Centering and the norms are invariant under permuting y.
  const double scale = std::sqrt(dx.squaredNorm() * dy.squaredNorm());
  constexpr double kTieTolerance = 1e-12;

  std::size_t at_least_as_extreme = 0;
  Eigen::VectorXd permuted(n);
  for (std::size_t k = 0; k < n_resamples; ++k) {
    permuted = dy;
    SplitMix64 rng(seed + k);
    seeded_shuffle(std::span<double>(permuted.data(), static_cast<std::size_t>(n)), rng);
    const double r = std::abs(dx.dot(permuted) / scale);
    if (r >= r_obs - kTieTolerance) ++at_least_as_extreme;
  }
  return static_cast<double>(1 + at_least_as_extreme) / static_cast<double>(n_resamples + 1);
}

std::string_view to_string(Stars stars) noexcept {
  switch (stars) {
    case Stars::None: return "";
    case Stars::One: return "*";
    case Stars::Two: return "**";
    case Stars::Three: return "***";
  }
  return "";
}

Stars significance_stars(double p) noexcept {
  if (p < 0.001) return Stars::Three;
  if (p < 0.01) return Stars::Two;
  if (p < 0.05) return Stars::One;
  return Stars::None;
}

CorrelationResult correlate(std::span<const double> xs, std::span<const double> ys,
                            std::size_t n_resamples, std::uint64_t seed) {
  CorrelationResult res;
  res.r = pearson<double>(xs, ys);
  res.p_value = perm_pvalue(xs, ys, n_resamples, seed);
  res.n = xs.size();
  res.stars = significance_stars(res.p_value);
  return res;
}

// ---------------------------------------------------------------------------

std::string_view to_string(MatrixKind kind) noexcept {
  switch (kind) {
    case MatrixKind::Accuracy: return "accuracy";
    case MatrixKind::RoleAlignment: return "role_alignment";
    case MatrixKind::ConnectionSignificance: return "connection_significance";
  }
  return "accuracy";
}

std::string_view to_string(Normalization mode) noexcept {
  switch (mode) {
    case Normalization::None: return "none";
    case Normalization::ColumnMax: return "column_max";
    case Normalization::RowMaxAuto: return "row_max_auto";
  }
  return "none";
}

std::string_view to_string(CellLabel label) noexcept {
  switch (label) {
    case CellLabel::Success: return "success";
    case CellLabel::Neutral: return "neutral";
    case CellLabel::Failed: return "failed";
  }
  return "neutral";
}

MatrixKind matrix_kind_from_string(std::string_view text) {
  if (text == "accuracy") return MatrixKind::Accuracy;
  if (text == "role_alignment" || text == "role-alignment") return MatrixKind::RoleAlignment;
  if (text == "connection_significance" || text == "connection-significance")
    return MatrixKind::ConnectionSignificance;
  throw Error(Errc::InvalidArgument, "unknown matrix kind '" + std::string(text) + "'");
}

Normalization normalization_from_string(std::string_view text) {
  if (text == "none") return Normalization::None;
  if (text == "column-max" || text == "column_max") return Normalization::ColumnMax;
  if (text == "row-max-auto" || text == "row_max_auto") return Normalization::RowMaxAuto;
  throw Error(Errc::InvalidArgument, "unknown normalization '" + std::string(text) + "'");
}

std::optional<std::size_t> TransferMatrix::row_of(std::string_view train_domain) const {
  for (std::size_t i = 0; i < train_domains.size(); ++i)
    if (train_domains[i] == train_domain) return i;
  return std::nullopt;
}

std::optional<std::size_t> TransferMatrix::col_of(std::string_view test_domain) const {
  for (std::size_t j = 0; j < test_domains.size(); ++j)
    if (test_domains[j] == test_domain) return j;
  return std::nullopt;
}

TransferMatrix build_transfer_matrix(std::span<const TransferCell> cells, MatrixKind kind) {
  TransferMatrix m;
  m.kind = kind;
  auto intern = [](std::vector<std::string>& labels, const std::string& label) {
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == label) return i;
    labels.push_back(label);
    return labels.size() - 1;
  };
  std::map<std::pair<std::size_t, std::size_t>, double> grid;
  for (const auto& c : cells) {
    const std::size_t i = intern(m.train_domains, c.train_domain);
    const std::size_t j = intern(m.test_domains, c.test_domain);
    if (!grid.emplace(std::pair{i, j}, c.value).second) {
      throw Error(Errc::DuplicateCell, "(" + c.train_domain + ", " + c.test_domain + ")");
    }
  }
  for (const auto& test : m.test_domains) {
    if (!m.row_of(test)) throw Error(Errc::MissingCell, "no training row for test domain " + test);
  }
  const auto rows = static_cast<Eigen::Index>(m.train_domains.size());
  const auto cols = static_cast<Eigen::Index>(m.test_domains.size());
  m.values.resize(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      auto it = grid.find({static_cast<std::size_t>(i), static_cast<std::size_t>(j)});
      if (it == grid.end()) {
        throw Error(Errc::MissingCell, "(" + m.train_domains[static_cast<std::size_t>(i)] + ", " +
                                           m.test_domains[static_cast<std::size_t>(j)] + ")");
      }
      m.values(i, j) = it->second;
    }
  }
  return m;
}

namespace {

// Divisor for one row or column: the max when positive, otherwise the
// absolute max (all-negative lines).
template <typename Line>
double line_divisor(const Line& line, const std::string& what) {
  const double top = line.maxCoeff();
  if (top > 0.0) return top;
  const double absmax = line.cwiseAbs().maxCoeff();
  if (absmax == 0.0) throw Error(Errc::AllZeroLine, what + " is all zero");
  return absmax;
}

}  // namespace

TransferMatrix normalize_matrix(const TransferMatrix& m, Normalization mode) {
  TransferMatrix out = m;
  out.normalization = mode;
  switch (mode) {
    case Normalization::None:
      break;
    case Normalization::ColumnMax:
      for (Eigen::Index j = 0; j < m.values.cols(); ++j) {
        out.values.col(j) =
            m.values.col(j) /
            line_divisor(m.values.col(j), "column " + m.test_domains[static_cast<std::size_t>(j)]);
      }
      break;
    case Normalization::RowMaxAuto:
      for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
        out.values.row(i) =
            m.values.row(i) /
            line_divisor(m.values.row(i), "row " + m.train_domains[static_cast<std::size_t>(i)]);
      }
      break;
  }
  return out;
}

CellLabel classify_cell(double v, double hi, double lo) {
  if (!(0.0 < lo && lo < hi && hi <= 1.0)) {
    throw Error(Errc::InvalidArgument, "thresholds must satisfy 0 < lo < hi <= 1");
  }
  if (v >= hi) return CellLabel::Success;
  if (v < lo) return CellLabel::Failed;
  return CellLabel::Neutral;
}

std::vector<std::vector<CellLabel>> classify_matrix(const TransferMatrix& normalized, double hi,
                                                    double lo) {
  std::vector<std::vector<CellLabel>> labels(static_cast<std::size_t>(normalized.values.rows()));
  for (Eigen::Index i = 0; i < normalized.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < normalized.values.cols(); ++j) {
      labels[static_cast<std::size_t>(i)].push_back(classify_cell(normalized.values(i, j), hi, lo));
    }
  }
  return labels;
}

double ood_row_mean(const TransferMatrix& m, std::string_view train_domain) {
  const auto row = m.row_of(train_domain);
  const auto col = m.col_of(train_domain);
  if (!row || !col) {
    throw Error(Errc::UnknownDomain, "domain " + std::string(train_domain) + " not on both axes");
  }
  if (m.values.cols() < 2) throw Error(Errc::InvalidArgument, "no out-of-domain cells");
  double sum = 0.0;
  for (Eigen::Index j = 0; j < m.values.cols(); ++j)
    if (static_cast<std::size_t>(j) != *col) sum += m.values(static_cast<Eigen::Index>(*row), j);
  return sum / static_cast<double>(m.values.cols() - 1);
}

double ablation_delta(double base, double ablated) {
  if (base < 0.0 || base > 100.0 || ablated < 0.0 || ablated > 100.0) {
    throw Error(Errc::InvalidArgument, "accuracies must be percentages in [0, 100]");
  }
  const double delta = std::round((ablated - base) * 100.0) / 100.0;
  return delta == 0.0 ? 0.0 : delta;  // no "-0.00"
}

std::string transfer_csv(const TransferMatrix& m) {
  std::string csv = "train/test";
  for (const auto& t : m.test_domains) csv += "," + t;
  csv += "\n";
  char buf[32];
  for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
    csv += m.train_domains[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < m.values.cols(); ++j) {
      // Shortest representation that round-trips.
      const auto res = std::to_chars(buf, buf + sizeof buf, m.values(i, j));
      csv += ',';
      csv.append(buf, res.ptr);
    }
    csv += "\n";
  }
  return csv;
}

}  // namespace masscope

#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hetfx {

// Propensity scores are kept inside [kScoreFloor, 1 - kScoreFloor] so that
// inverse weights stay finite.
inline constexpr double kScoreFloor = 1e-6;

inline double clamp_score(double e) noexcept {
  return e < kScoreFloor ? kScoreFloor : (e > 1.0 - kScoreFloor ? 1.0 - kScoreFloor : e);
}

inline std::span<const double> as_span(const Eigen::VectorXd& v) noexcept {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

/// Observational study: covariates X (n x p) with the covariate of interest
/// X^l as one of its columns, binary treatment D, outcome Y, and optionally
/// propensity scores supplied from outside. Validated on construction and
/// immutable afterwards; the with_* members return modified copies.
class ObservationalDataset {
 public:
  ObservationalDataset(Eigen::MatrixXd x, Eigen::Index xl_index, Eigen::VectorXd d,
                       Eigen::VectorXd y, std::optional<Eigen::VectorXd> external_scores = {},
                       std::vector<std::string> covariate_names = {});

  Eigen::Index n() const noexcept { return x_.rows(); }
  Eigen::Index p() const noexcept { return x_.cols(); }
  const Eigen::MatrixXd& x() const noexcept { return x_; }
  Eigen::Index xl_index() const noexcept { return xl_index_; }
  const Eigen::VectorXd& xl() const noexcept { return xl_; }
  const Eigen::VectorXd& d() const noexcept { return d_; }
  const Eigen::VectorXd& y() const noexcept { return y_; }
  const std::optional<Eigen::VectorXd>& external_scores() const noexcept { return scores_; }
  const std::vector<std::string>& covariate_names() const noexcept { return names_; }

  Eigen::Index treated_count() const noexcept;

  ObservationalDataset with_outcome(Eigen::VectorXd y) const;
  ObservationalDataset with_treatment(Eigen::VectorXd d) const;
  ObservationalDataset with_covariates(Eigen::MatrixXd x) const;
  ObservationalDataset with_external_scores(std::optional<Eigen::VectorXd> scores) const;
  // Rows in the given order; indices may repeat (bootstrap resamples).
  ObservationalDataset select_rows(std::span<const Eigen::Index> rows) const;

 private:
  Eigen::MatrixXd x_;
  Eigen::Index xl_index_;
  Eigen::VectorXd xl_;
  Eigen::VectorXd d_;
  Eigen::VectorXd y_;
  std::optional<Eigen::VectorXd> scores_;
  std::vector<std::string> names_;
};

/// Strictly increasing, nonempty set of x^l locations.
class EvaluationGrid {
 public:
  explicit EvaluationGrid(std::vector<double> points);
  const std::vector<double>& points() const noexcept { return points_; }
  std::size_t size() const noexcept { return points_.size(); }
  double operator[](std::size_t i) const { return points_[i]; }

  // m equispaced points on [lo, hi].
  static EvaluationGrid linspace(double lo, double hi, std::size_t m);

 private:
  std::vector<double> points_;
};

struct GridTrim {
  double lower_quantile = 0.05;
  double upper_quantile = 0.95;
};

/// m equispaced points between two empirical quantiles of X^l.
EvaluationGrid default_grid(const ObservationalDataset& data, std::size_t m, GridTrim trim = {});

struct CsvSchema {
  std::string treatment_col;
  std::string outcome_col;
  std::string xl_col;
  std::optional<std::string> score_col;
  // Empty means every column not named above. X^l is always included and,
  // when absent from an explicit list, placed first.
  std::vector<std::string> covariate_cols;
  std::size_t min_rows = 10;
};

struct CsvLoad {
  ObservationalDataset dataset;
  // Rows dropped because a selected cell was empty or non-numeric.
  std::size_t rejected_rows = 0;
};

CsvLoad read_csv(const std::filesystem::path& path, const CsvSchema& schema);

// Writes columns in the order d, y, [score], covariates. Floats use 17
// significant digits so read_csv recovers them exactly.
void write_dataset_csv(const ObservationalDataset& data, const std::filesystem::path& path,
                       const std::string& score_col = "e");

// Splits RFC-4180 text into records; exposed for tests.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

}  // namespace hetfx

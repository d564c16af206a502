#include "hetfx/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "hetfx/error.hpp"
#include "hetfx/io.hpp"
#include "hetfx/stats.hpp"

namespace hetfx {
namespace {

void check_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw InvalidArgument(std::string(what) + " contains non-finite values");
}

std::optional<double> parse_number(std::string_view cell) {
  while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
  while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t')) cell.remove_suffix(1);
  if (cell.empty()) return std::nullopt;
  if (cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

std::string format_full(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

ObservationalDataset::ObservationalDataset(Eigen::MatrixXd x, Eigen::Index xl_index,
                                           Eigen::VectorXd d, Eigen::VectorXd y,
                                           std::optional<Eigen::VectorXd> external_scores,
                                           std::vector<std::string> covariate_names)
    : x_(std::move(x)),
      xl_index_(xl_index),
      d_(std::move(d)),
      y_(std::move(y)),
      scores_(std::move(external_scores)),
      names_(std::move(covariate_names)) {
  const Eigen::Index n = x_.rows();
  if (n == 0 || x_.cols() == 0) throw InvalidArgument("dataset: empty covariate matrix");
  if (xl_index_ < 0 || xl_index_ >= x_.cols()) {
    throw InvalidArgument("dataset: X^l column index out of range");
  }
  if (d_.size() != n || y_.size() != n) throw InvalidArgument("dataset: column lengths differ");
  if (scores_ && scores_->size() != n) throw InvalidArgument("dataset: score column length differs");
  check_finite(x_, "dataset: X");
  check_finite(y_, "dataset: Y");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (d_[i] != 0.0 && d_[i] != 1.0) {
      throw DataError("dataset: treatment must be 0 or 1", static_cast<std::size_t>(i + 1));
    }
    if (scores_ && !((*scores_)[i] > 0.0 && (*scores_)[i] < 1.0)) {
      throw DataError("dataset: external score outside (0, 1)", static_cast<std::size_t>(i + 1));
    }
  }
  const Eigen::Index treated = treated_count();
  if (treated == 0 || treated == n) {
    throw InvalidArgument("dataset: need at least one treated and one control unit");
  }
  if (!names_.empty() && static_cast<Eigen::Index>(names_.size()) != x_.cols()) {
    throw InvalidArgument("dataset: covariate name count differs from column count");
  }
  xl_ = x_.col(xl_index_);
}

Eigen::Index ObservationalDataset::treated_count() const noexcept {
  return static_cast<Eigen::Index>(d_.sum());
}

ObservationalDataset ObservationalDataset::with_outcome(Eigen::VectorXd y) const {
  return {x_, xl_index_, d_, std::move(y), scores_, names_};
}

ObservationalDataset ObservationalDataset::with_treatment(Eigen::VectorXd d) const {
  return {x_, xl_index_, std::move(d), y_, scores_, names_};
}

ObservationalDataset ObservationalDataset::with_covariates(Eigen::MatrixXd x) const {
  return {std::move(x), xl_index_, d_, y_, scores_, names_};
}

ObservationalDataset ObservationalDataset::with_external_scores(
    std::optional<Eigen::VectorXd> scores) const {
  return {x_, xl_index_, d_, y_, std::move(scores), names_};
}

ObservationalDataset ObservationalDataset::select_rows(std::span<const Eigen::Index> rows) const {
  const auto m = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd x(m, p());
  Eigen::VectorXd d(m), y(m);
  std::optional<Eigen::VectorXd> s;
  if (scores_) s = Eigen::VectorXd(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    const Eigen::Index i = rows[static_cast<std::size_t>(r)];
    if (i < 0 || i >= n()) throw InvalidArgument("select_rows: row index out of range");
    x.row(r) = x_.row(i);
    d[r] = d_[i];
    y[r] = y_[i];
    if (s) (*s)[r] = (*scores_)[i];
  }
  return {std::move(x), xl_index_, std::move(d), std::move(y), std::move(s), names_};
}

EvaluationGrid::EvaluationGrid(std::vector<double> points) : points_(std::move(points)) {
  if (points_.empty()) throw InvalidArgument("evaluation grid must be nonempty");
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (!std::isfinite(points_[i])) throw InvalidArgument("evaluation grid has a non-finite point");
    if (i > 0 && !(points_[i] > points_[i - 1])) {
      throw InvalidArgument("evaluation grid must be strictly increasing");
    }
  }
}

EvaluationGrid EvaluationGrid::linspace(double lo, double hi, std::size_t m) {
  if (m == 0) throw InvalidArgument("linspace: need at least one point");
  if (m == 1) return EvaluationGrid({0.5 * (lo + hi)});
  if (!(hi > lo)) throw InvalidArgument("linspace: empty interval");
  std::vector<double> pts(m);
  const double step = (hi - lo) / static_cast<double>(m - 1);
  for (std::size_t i = 0; i < m; ++i) pts[i] = lo + step * static_cast<double>(i);
  pts.back() = hi;
  return EvaluationGrid(std::move(pts));
}

EvaluationGrid default_grid(const ObservationalDataset& data, std::size_t m, GridTrim trim) {
  if (m < 2) throw InvalidArgument("default_grid: need m >= 2");
  if (!(trim.lower_quantile >= 0.0 && trim.lower_quantile < trim.upper_quantile &&
        trim.upper_quantile <= 1.0)) {
    throw InvalidArgument("default_grid: invalid trimming quantiles");
  }
  const auto xl = as_span(data.xl());
  const double lo = quantile(xl, trim.lower_quantile);
  const double hi = quantile(xl, trim.upper_quantile);
  if (!(hi > lo)) throw InvalidArgument("default_grid: X^l is degenerate");
  return EvaluationGrid::linspace(lo, hi, m);
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;

  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    // Skip blank lines.
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field_started || field.empty()) {
          in_quotes = true;
          field_started = true;
        } else {
          field += c;
        }
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        end_record();
        break;
      case '\n':
        end_record();
        break;
      default:
        field += c;
        field_started = true;
    }
  }
  if (!field.empty() || field_started || !record.empty()) end_record();
  return records;
}

CsvLoad read_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string text = buf.str();
  if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) text.erase(0, 3);
  const auto records = parse_csv(text);
  if (records.empty()) throw SchemaError(path.string() + ": missing header row", "");

  const auto& header = records.front();
  std::map<std::string, std::size_t> index;
  for (std::size_t j = 0; j < header.size(); ++j) index.emplace(header[j], j);
  auto column = [&](const std::string& name) {
    const auto it = index.find(name);
    if (it == index.end()) {
      throw SchemaError(path.string() + ": missing column '" + name + "'", name);
    }
    return it->second;
  };

  const std::size_t d_col = column(schema.treatment_col);
  const std::size_t y_col = column(schema.outcome_col);
  const std::size_t xl_col = column(schema.xl_col);
  std::optional<std::size_t> s_col;
  if (schema.score_col) s_col = column(*schema.score_col);

  std::vector<std::size_t> cov_cols;
  std::vector<std::string> cov_names;
  if (schema.covariate_cols.empty()) {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (j == d_col || j == y_col || (s_col && j == *s_col)) continue;
      cov_cols.push_back(j);
      cov_names.push_back(header[j]);
    }
  } else {
    if (std::find(schema.covariate_cols.begin(), schema.covariate_cols.end(), schema.xl_col) ==
        schema.covariate_cols.end()) {
      cov_cols.push_back(xl_col);
      cov_names.push_back(schema.xl_col);
    }
    for (const auto& name : schema.covariate_cols) {
      cov_cols.push_back(column(name));
      cov_names.push_back(name);
    }
  }
  const auto xl_pos = static_cast<Eigen::Index>(
      std::find(cov_cols.begin(), cov_cols.end(), xl_col) - cov_cols.begin());

  std::vector<double> x_vals, d_vals, y_vals, s_vals;
  std::size_t rejected = 0;
  const std::size_t width = cov_cols.size();
  std::vector<double> row_x(width);
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    auto cell = [&](std::size_t j) -> std::optional<double> {
      if (j >= rec.size()) return std::nullopt;
      return parse_number(rec[j]);
    };
    const auto dv = cell(d_col);
    const auto yv = cell(y_col);
    std::optional<double> sv;
    bool ok = dv && yv;
    if (s_col) {
      sv = cell(*s_col);
      ok = ok && sv;
    }
    for (std::size_t k = 0; ok && k < width; ++k) {
      const auto v = cell(cov_cols[k]);
      if (!v) ok = false;
      else row_x[k] = *v;
    }
    if (!ok) {
      ++rejected;
      continue;
    }
    if (*dv != 0.0 && *dv != 1.0) {
      throw DataError(path.string() + ": row " + std::to_string(r) + ": treatment value " +
                          rec[d_col] + " is not 0 or 1",
                      r);
    }
    if (sv && !(*sv >= 0.0 && *sv <= 1.0)) {
      throw DataError(path.string() + ": row " + std::to_string(r) + ": score outside [0, 1]", r);
    }
    d_vals.push_back(*dv);
    y_vals.push_back(*yv);
    if (sv) s_vals.push_back(*sv);
    x_vals.insert(x_vals.end(), row_x.begin(), row_x.end());
  }

  const std::size_t n = d_vals.size();
  if (n < schema.min_rows) {
    throw InsufficientData(path.string() + ": " + std::to_string(n) + " usable rows (" +
                           std::to_string(rejected) + " rejected); need at least " +
                           std::to_string(schema.min_rows));
  }
  const auto rows = static_cast<Eigen::Index>(n);
  const auto cols = static_cast<Eigen::Index>(width);
  Eigen::MatrixXd x = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                     Eigen::RowMajor>>(x_vals.data(), rows, cols);
  Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(d_vals.data(), rows);
  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(y_vals.data(), rows);
  std::optional<Eigen::VectorXd> scores;
  if (s_col) {
    // Scores of exactly 0 or 1 are clamped later; keep them strictly inside here.
    Eigen::VectorXd s = Eigen::Map<const Eigen::VectorXd>(s_vals.data(), rows);
    scores = s.cwiseMax(kScoreFloor).cwiseMin(1.0 - kScoreFloor);
  }
  return {ObservationalDataset(std::move(x), xl_pos, std::move(d), std::move(y), std::move(scores),
                               std::move(cov_names)),
          rejected};
}

void write_dataset_csv(const ObservationalDataset& data, const std::filesystem::path& path,
                       const std::string& score_col) {
  std::ostringstream out;
  out << "d,y";
  if (data.external_scores()) out << ',' << score_col;
  for (Eigen::Index j = 0; j < data.p(); ++j) {
    out << ',';
    if (!data.covariate_names().empty()) {
      out << data.covariate_names()[static_cast<std::size_t>(j)];
    } else {
      out << (j == data.xl_index() ? std::string("xl") : "x" + std::to_string(j));
    }
  }
  out << '\n';
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    out << (data.d()[i] == 1.0 ? "1" : "0") << ',' << format_full(data.y()[i]);
    if (data.external_scores()) out << ',' << format_full((*data.external_scores())[i]);
    for (Eigen::Index j = 0; j < data.p(); ++j) out << ',' << format_full(data.x()(i, j));
    out << '\n';
  }
  write_file_atomic(path, out.str());
}

}  // namespace hetfx

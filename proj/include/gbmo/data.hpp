#pragma once

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "gbmo/core.hpp"

namespace gbmo {

/// Features and targets of one dataset. Targets are always dense n x d; a
/// class column is expanded to one-hot at load time.
struct RawDataset {
  RealMatrix features;
  RealMatrix targets;
  std::vector<std::string> feature_names;

  std::size_t num_samples() const { return features.rows(); }
  std::size_t num_features() const { return features.cols(); }
  std::size_t num_outputs() const { return targets.cols(); }
};

inline void check_finite(const RealMatrix& m, std::string_view what) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (!std::isfinite(m(r, c))) {
        throw DataError(std::string(what) + ": non-finite value at row " + std::to_string(r) +
                        ", column " + std::to_string(c));
      }
    }
  }
}

inline void validate_dataset(const RawDataset& ds) {
  if (ds.features.rows() == 0) throw DataError("dataset has no rows");
  if (ds.features.cols() == 0) throw DataError("dataset has no feature columns");
  if (ds.targets.cols() == 0) throw DataError("dataset has no target columns");
  if (ds.targets.rows() != ds.features.rows()) {
    throw DataError("feature rows (" + std::to_string(ds.features.rows()) +
                    ") and target rows (" + std::to_string(ds.targets.rows()) + ") differ");
  }
  check_finite(ds.features, "features");
  check_finite(ds.targets, "targets");
}

// ---------------------------------------------------------------------------
// Binning

/// Per-feature bin boundaries. Bin k of feature j covers (s_{k-1}, s_k] with
/// s_{-1} = -inf and s_{b-1} = +inf implicit, so b bins need b-1 boundaries.
class BinMapper {
 public:
  BinMapper() = default;
  explicit BinMapper(std::vector<std::vector<double>> boundaries)
      : boundaries_(std::move(boundaries)) {
    for (std::size_t j = 0; j < boundaries_.size(); ++j) {
      const auto& b = boundaries_[j];
      for (std::size_t k = 0; k < b.size(); ++k) {
        if (!std::isfinite(b[k]) || (k > 0 && !(b[k - 1] < b[k]))) {
          throw ConfigError("bin boundaries of feature " + std::to_string(j) +
                            " must be finite and strictly increasing");
        }
      }
    }
  }

  std::size_t num_features() const { return boundaries_.size(); }
  std::size_t num_bins(std::size_t feature) const { return boundaries_[feature].size() + 1; }
  std::size_t max_num_bins() const {
    std::size_t result = 1;
    for (const auto& b : boundaries_) result = std::max(result, b.size() + 1);
    return result;
  }
  const std::vector<double>& boundaries(std::size_t feature) const { return boundaries_[feature]; }

  // First boundary >= x; right-closed intervals.
  std::size_t bin_value(std::size_t feature, double x) const {
    const auto& b = boundaries_[feature];
    return static_cast<std::size_t>(std::lower_bound(b.begin(), b.end(), x) - b.begin());
  }

  bool operator==(const BinMapper&) const = default;

 private:
  std::vector<std::vector<double>> boundaries_;
};

namespace detail {

// Midpoint strictly below `hi` so that `lo` stays in the lower bin.
inline double midpoint_below(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2.0;
  return mid < hi ? mid : lo;
}

inline std::vector<double> feature_boundaries(std::vector<double> values, std::size_t max_bins) {
  std::sort(values.begin(), values.end());
  std::vector<double> distinct;
  for (double v : values) {
    if (distinct.empty() || distinct.back() != v) distinct.push_back(v);
  }
  std::vector<double> result;
  if (distinct.size() <= max_bins) {
    for (std::size_t i = 1; i < distinct.size(); ++i) {
      result.push_back(midpoint_below(distinct[i - 1], distinct[i]));
    }
    return result;
  }
  // q-th quantile value, then the midpoint to the next larger distinct value.
  const std::size_t n = values.size();
  for (std::size_t q = 1; q < max_bins; ++q) {
    const std::size_t pos = (q * n + max_bins - 1) / max_bins - 1;
    const double v = values[std::min(pos, n - 1)];
    const auto next = std::upper_bound(distinct.begin(), distinct.end(), v);
    if (next == distinct.end()) break;
    const double boundary = midpoint_below(v, *next);
    if (result.empty() || result.back() < boundary) result.push_back(boundary);
  }
  return result;
}

}  // namespace detail

/// Quantile-midpoint boundaries per feature. A feature with at most
/// max_bins distinct values gets one bin per value.
inline BinMapper build_bin_mapper(const RealMatrix& features, std::size_t max_bins,
                                  std::size_t workers = 1) {
  if (max_bins < 2) throw ConfigError("max_bins must be at least 2");
  if (max_bins > 65536) throw ConfigError("max_bins must be at most 65536");
  check_finite(features, "features");
  std::vector<std::vector<double>> boundaries(features.cols());
  parallel_for(features.cols(), workers, [&](std::size_t j) {
    std::vector<double> column(features.rows());
    for (std::size_t i = 0; i < features.rows(); ++i) column[i] = features(i, j);
    boundaries[j] = detail::feature_boundaries(std::move(column), max_bins);
  });
  return BinMapper(std::move(boundaries));
}

/// n x m bin indices, stored column-major. Narrow (8-bit) storage when every
/// feature has at most 256 bins, 16-bit otherwise.
class BinnedMatrix {
 public:
  using Narrow = std::vector<std::uint8_t>;
  using Wide = std::vector<std::uint16_t>;

  BinnedMatrix() = default;
  BinnedMatrix(std::size_t rows, std::vector<std::size_t> bins_per_feature)
      : rows_(rows), num_bins_(std::move(bins_per_feature)) {
    const std::size_t cells = rows_ * num_bins_.size();
    const std::size_t widest =
        num_bins_.empty() ? 1 : *std::max_element(num_bins_.begin(), num_bins_.end());
    if (widest <= 256) {
      storage_ = Narrow(cells, 0);
    } else {
      storage_ = Wide(cells, 0);
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return num_bins_.size(); }
  std::size_t num_bins(std::size_t feature) const { return num_bins_[feature]; }
  bool is_narrow() const { return std::holds_alternative<Narrow>(storage_); }

  std::size_t at(std::size_t row, std::size_t feature) const {
    return std::visit([&](const auto& v) -> std::size_t { return v[feature * rows_ + row]; },
                      storage_);
  }

  void set(std::size_t row, std::size_t feature, std::size_t bin) {
    std::visit(
        [&](auto& v) {
          using Cell = typename std::decay_t<decltype(v)>::value_type;
          v[feature * rows_ + row] = static_cast<Cell>(bin);
        },
        storage_);
  }

  /// Calls fn with a span over column `feature` in its native cell type.
  template <typename Fn>
  decltype(auto) visit_column(std::size_t feature, Fn&& fn) const {
    return std::visit(
        [&](const auto& v) -> decltype(auto) {
          using Cell = typename std::decay_t<decltype(v)>::value_type;
          return fn(std::span<const Cell>(v.data() + feature * rows_, rows_));
        },
        storage_);
  }

 private:
  std::size_t rows_ = 0;
  std::vector<std::size_t> num_bins_;
  std::variant<Narrow, Wide> storage_;
};

inline BinnedMatrix bin_matrix(const BinMapper& mapper, const RealMatrix& features,
                               std::size_t workers = 1) {
  if (features.cols() != mapper.num_features()) {
    throw DataError("feature count " + std::to_string(features.cols()) +
                    " does not match bin mapper (" + std::to_string(mapper.num_features()) + ")");
  }
  check_finite(features, "features");
  std::vector<std::size_t> bins(mapper.num_features());
  for (std::size_t j = 0; j < bins.size(); ++j) bins[j] = mapper.num_bins(j);
  BinnedMatrix out(features.rows(), std::move(bins));
  parallel_for(features.cols(), workers, [&](std::size_t j) {
    for (std::size_t i = 0; i < features.rows(); ++i) {
      out.set(i, j, mapper.bin_value(j, features(i, j)));
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// CSV ingestion

/// Which columns of a CSV row are targets. Either the trailing `count`
/// columns, or a trailing integer class column with `count` classes.
struct LabelSpec {
  enum class Kind { kTrailingBlock, kClassColumn };
  Kind kind = Kind::kTrailingBlock;
  std::size_t count = 1;

  static LabelSpec trailing(std::size_t d) { return {Kind::kTrailingBlock, d}; }
  static LabelSpec classes(std::size_t num_classes) { return {Kind::kClassColumn, num_classes}; }

  /// "5" -> five trailing target columns; "class:10" -> one class column.
  static LabelSpec parse(std::string_view text) {
    auto parse_count = [&](std::string_view s) {
      std::size_t value = 0;
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
      if (ec != std::errc() || ptr != s.data() + s.size() || value == 0) {
        throw ConfigError("invalid label spec '" + std::string(text) +
                          "' (expected N or class:N with N >= 1)");
      }
      return value;
    };
    constexpr std::string_view kClassPrefix = "class:";
    if (text.starts_with(kClassPrefix)) return classes(parse_count(text.substr(kClassPrefix.size())));
    return trailing(parse_count(text));
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

inline std::optional<double> parse_real(std::string_view cell) {
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size()) return std::nullopt;
  return value;
}

}  // namespace detail

/// Numeric cells of a CSV stream. The first row is a header when any of its
/// cells is not numeric. Every row must have the same width.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::size_t width = 0;
};

inline CsvTable read_csv_table(std::istream& in) {
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (table.rows.empty() && table.header.empty() && table.width == 0) {
      bool numeric = true;
      for (auto c : cells) numeric = numeric && detail::parse_real(c).has_value();
      if (!numeric) {
        for (auto c : cells) table.header.emplace_back(c);
        table.width = cells.size();
        continue;
      }
    }
    if (table.width == 0) table.width = cells.size();
    const std::size_t row_index = table.rows.size();
    if (cells.size() != table.width) {
      throw DataError("row " + std::to_string(row_index) + " (line " + std::to_string(line_no) +
                      ") has " + std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(table.width));
    }
    std::vector<double> values(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto v = detail::parse_real(cells[c]);
      if (!v) {
        throw DataError("cannot parse '" + std::string(cells[c]) + "' at row " +
                        std::to_string(row_index) + " (line " + std::to_string(line_no) +
                        "), column " + std::to_string(c));
      }
      if (!std::isfinite(*v)) {
        throw DataError("non-finite value at row " + std::to_string(row_index) + " (line " +
                        std::to_string(line_no) + "), column " + std::to_string(c));
      }
      values[c] = *v;
    }
    table.rows.push_back(std::move(values));
  }
  return table;
}

/// Parses a labelled CSV into features and targets.
inline RawDataset parse_csv(std::istream& in, const LabelSpec& labels) {
  CsvTable table = read_csv_table(in);
  if (table.rows.empty()) throw DataError("no rows");
  const auto& rows = table.rows;
  const std::size_t width = table.width;

  const std::size_t label_cols =
      labels.kind == LabelSpec::Kind::kTrailingBlock ? labels.count : 1;
  if (width <= label_cols) {
    throw DataError("rows have " + std::to_string(width) + " columns; need more than " +
                    std::to_string(label_cols) + " to hold features and labels");
  }
  const std::size_t m = width - label_cols;
  const std::size_t d = labels.count;
  RawDataset ds{RealMatrix(rows.size(), m), RealMatrix(rows.size(), d), {}};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < m; ++j) ds.features(i, j) = rows[i][j];
    if (labels.kind == LabelSpec::Kind::kTrailingBlock) {
      for (std::size_t j = 0; j < d; ++j) ds.targets(i, j) = rows[i][m + j];
    } else {
      const double cls = rows[i][m];
      if (cls < 0 || cls >= static_cast<double>(d) || cls != std::floor(cls)) {
        throw DataError("row " + std::to_string(i) + ": class label " + std::to_string(cls) +
                        " is not an integer in [0, " + std::to_string(d) + ")");
      }
      ds.targets(i, static_cast<std::size_t>(cls)) = 1.0;
    }
  }
  if (!table.header.empty()) ds.feature_names.assign(table.header.begin(), table.header.begin() + m);
  return ds;
}

/// Parses an unlabelled CSV (every column is a feature). Zero rows is allowed.
inline RealMatrix parse_feature_csv(std::istream& in) {
  const CsvTable table = read_csv_table(in);
  RealMatrix out(table.rows.size(), table.width);
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    std::copy(table.rows[i].begin(), table.rows[i].end(), out.row(i).begin());
  }
  return out;
}

inline RawDataset load_csv(const std::string& path, const LabelSpec& labels) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return parse_csv(in, labels);
}

/// Writes features then targets per row, with a header naming both.
inline void write_csv(std::ostream& out, const RawDataset& ds) {
  for (std::size_t j = 0; j < ds.num_features(); ++j) out << (j ? "," : "") << "x" << j;
  for (std::size_t j = 0; j < ds.num_outputs(); ++j) out << ",y" << j;
  out << '\n';
  char buf[64];
  auto put = [&](double v) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.write(buf, ptr - buf);
  };
  for (std::size_t i = 0; i < ds.num_samples(); ++i) {
    for (std::size_t j = 0; j < ds.num_features(); ++j) {
      if (j) out << ',';
      put(ds.features(i, j));
    }
    for (std::size_t j = 0; j < ds.num_outputs(); ++j) {
      out << ',';
      put(ds.targets(i, j));
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Binary cache: "BMO1", n, m, d as u64 little-endian, then the n x m feature
// block and the n x d target block, each row-major float64 little-endian.

namespace detail {

inline void put_u64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

inline std::uint64_t get_u64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw DataError("binary cache truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline void save_binary_cache(std::ostream& out, const RawDataset& ds) {
  out.write("BMO1", 4);
  detail::put_u64(out, ds.num_samples());
  detail::put_u64(out, ds.num_features());
  detail::put_u64(out, ds.num_outputs());
  for (double v : ds.features.values()) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  for (double v : ds.targets.values()) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline RawDataset load_binary_cache(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::string_view(magic, 4) != "BMO1") {
    throw DataError("not a BMO1 binary cache");
  }
  const auto n = detail::get_u64(in);
  const auto m = detail::get_u64(in);
  const auto d = detail::get_u64(in);
  constexpr std::uint64_t kLimit = std::uint64_t{1} << 40;
  if (n == 0 || m == 0 || d == 0 || n * (m + d) > kLimit) {
    throw DataError("binary cache has invalid shape");
  }
  RawDataset ds{RealMatrix(n, m), RealMatrix(n, d), {}};
  for (double& v : ds.features.values()) v = std::bit_cast<double>(detail::get_u64(in));
  for (double& v : ds.targets.values()) v = std::bit_cast<double>(detail::get_u64(in));
  validate_dataset(ds);
  return ds;
}

}  // namespace gbmo

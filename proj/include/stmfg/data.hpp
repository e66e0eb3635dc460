#ifndef STMFG_DATA_HPP
#define STMFG_DATA_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "stmfg/errors.hpp"
#include "stmfg/graph.hpp"
#include "stmfg/sparse.hpp"

namespace stmfg {

struct Dataset {
  Matrix counts;  // N x M raw counts
  SpotCoordinates coords;
  std::vector<std::string> spot_ids;
  std::vector<std::string> gene_ids;
  std::optional<std::vector<int>> truth_labels;
  /// Names of the categorical labels, indexed by truth label value.
  std::vector<std::string> label_names;

  // Filled by preprocess()
  Matrix preprocessed;                     // N x H model input
  std::vector<std::string> feature_genes;  // H names
  Matrix target_counts;                    // N x H raw counts of the kept genes

  Index spots() const { return counts.rows(); }
  Index genes() const { return counts.cols(); }
};

// ---------------------------------------------------------------------------
// Text parsing helpers

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == ',' && !quoted) {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::optional<double> parse_double(std::string_view s) {
  const std::string t = trim(s);
  double v = 0.0;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  if (!t.empty() && *first == '+') ++first;
  auto [p, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || p != last || t.empty()) return std::nullopt;
  return v;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  return is;
}

inline std::string where(const std::string& path, std::size_t line) {
  return path + ":" + std::to_string(line) + ": ";
}

struct RawExpression {
  std::vector<std::string> spot_ids;
  std::vector<std::string> gene_ids;
  Matrix values;
};

inline void check_count(double v, const std::string& path, std::size_t line, const std::string& spot,
                        const std::string& gene) {
  if (!std::isfinite(v) || v < 0.0) {
    throw DataError(where(path, line) + "spot '" + spot + "', gene '" + gene + "': count must be finite and >= 0");
  }
}

// Counts must be >= 0; other numeric tables (embeddings) only need to be finite.
inline RawExpression read_expression_csv(const std::string& path, bool counts = true) {
  auto is = open_input(path);
  RawExpression raw;
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(is, line)) throw DataError(path + ": empty expression file");
  ++lineno;
  auto header = split_csv_line(line);
  if (header.size() < 2) throw DataError(where(path, lineno) + "header needs a spot column and at least one gene");
  for (std::size_t c = 1; c < header.size(); ++c) raw.gene_ids.push_back(trim(header[c]));
  std::vector<double> values;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError(where(path, lineno) + "expected " + std::to_string(header.size()) + " fields, found " +
                      std::to_string(cells.size()));
    }
    raw.spot_ids.push_back(trim(cells[0]));
    for (std::size_t c = 1; c < cells.size(); ++c) {
      auto v = parse_double(cells[c]);
      if (!v) {
        throw DataError(where(path, lineno) + "column " + std::to_string(c) + " ('" + raw.gene_ids[c - 1] +
                        "'): not a number: '" + cells[c] + "'");
      }
      if (counts) {
        check_count(*v, path, lineno, raw.spot_ids.back(), raw.gene_ids[c - 1]);
      } else if (!std::isfinite(*v)) {
        throw DataError(where(path, lineno) + "column '" + raw.gene_ids[c - 1] + "': value must be finite");
      }
      values.push_back(*v);
    }
  }
  raw.values = Eigen::Map<Matrix>(values.data(), static_cast<Index>(raw.spot_ids.size()),
                                  static_cast<Index>(raw.gene_ids.size()));
  return raw;
}

inline std::vector<std::string> read_id_list(const std::string& path) {
  auto is = open_input(path);
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(is, line)) {
    auto t = trim(line);
    if (!t.empty()) ids.push_back(std::move(t));
  }
  return ids;
}

}  // namespace detail

/// Sidecar id files of a Matrix Market expression file "<stem>.mtx":
/// "<stem>.spots.txt" and "<stem>.genes.txt", one id per line.
inline std::pair<std::string, std::string> matrix_market_sidecars(const std::string& mtx_path) {
  std::filesystem::path p(mtx_path);
  std::filesystem::path stem = p.parent_path() / p.stem();
  return {stem.string() + ".spots.txt", stem.string() + ".genes.txt"};
}

/// Matrix Market coordinate file with rows = spots and columns = genes.
inline detail::RawExpression read_matrix_market(const std::string& path) {
  auto is = detail::open_input(path);
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(is, line)) throw DataError(path + ": empty Matrix Market file");
  ++lineno;
  std::istringstream banner(line);
  std::string tag, object, format, field, symmetry;
  banner >> tag >> object >> format >> field >> symmetry;
  auto lower = [](std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
  };
  if (tag != "%%MatrixMarket" || lower(object) != "matrix" || lower(format) != "coordinate") {
    throw DataError(detail::where(path, lineno) + "expected a '%%MatrixMarket matrix coordinate' banner");
  }
  field = lower(field);
  if (field != "integer" && field != "real" && field != "pattern") {
    throw DataError(detail::where(path, lineno) + "unsupported field type '" + field + "'");
  }
  if (lower(symmetry) != "general") {
    throw DataError(detail::where(path, lineno) + "only 'general' symmetry is supported");
  }
  Index rows = -1, cols = -1;
  long long nnz = -1;
  while (std::getline(is, line)) {
    ++lineno;
    const auto t = detail::trim(line);
    if (t.empty() || t[0] == '%') continue;
    std::istringstream size_line(t);
    if (!(size_line >> rows >> cols >> nnz) || rows < 0 || cols < 0 || nnz < 0) {
      throw DataError(detail::where(path, lineno) + "bad size line");
    }
    break;
  }
  if (rows < 0) throw DataError(path + ": missing size line");

  const auto [spots_path, genes_path] = matrix_market_sidecars(path);
  detail::RawExpression raw;
  raw.spot_ids = detail::read_id_list(spots_path);
  raw.gene_ids = detail::read_id_list(genes_path);
  if (static_cast<Index>(raw.spot_ids.size()) != rows || static_cast<Index>(raw.gene_ids.size()) != cols) {
    throw DataError(path + ": sidecar ids (" + std::to_string(raw.spot_ids.size()) + " spots, " +
                    std::to_string(raw.gene_ids.size()) + " genes) do not match matrix size " + std::to_string(rows) +
                    "x" + std::to_string(cols));
  }
  raw.values = Matrix::Zero(rows, cols);
  long long seen = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto t = detail::trim(line);
    if (t.empty() || t[0] == '%') continue;
    std::istringstream entry(t);
    long long r = 0, c = 0;
    std::string token;
    if (!(entry >> r >> c)) throw DataError(detail::where(path, lineno) + "bad entry");
    double v = 1.0;
    if (field != "pattern") {
      if (!(entry >> token)) throw DataError(detail::where(path, lineno) + "missing value");
      auto parsed = detail::parse_double(token);
      if (!parsed) throw DataError(detail::where(path, lineno) + "not a number: '" + token + "'");
      v = *parsed;
    }
    if (r < 1 || r > rows || c < 1 || c > cols) {
      throw DataError(detail::where(path, lineno) + "index (" + std::to_string(r) + ", " + std::to_string(c) +
                      ") out of range");
    }
    detail::check_count(v, path, lineno, raw.spot_ids[static_cast<std::size_t>(r - 1)],
                        raw.gene_ids[static_cast<std::size_t>(c - 1)]);
    raw.values(r - 1, c - 1) += v;
    ++seen;
  }
  if (seen != nnz) {
    throw DataError(path + ": size line declares " + std::to_string(nnz) + " entries, found " + std::to_string(seen));
  }
  return raw;
}

/// Coordinates CSV: header, then spot_id,x,y rows.
inline std::pair<std::vector<std::string>, SpotCoordinates> read_coordinates(const std::string& path) {
  auto is = detail::open_input(path);
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(is, line)) throw DataError(path + ": empty coordinates file");
  ++lineno;
  std::vector<std::string> ids;
  SpotCoordinates coords;
  while (std::getline(is, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != 3) throw DataError(detail::where(path, lineno) + "expected spot_id,x,y");
    auto x = detail::parse_double(cells[1]);
    auto y = detail::parse_double(cells[2]);
    if (!x || !y || !std::isfinite(*x) || !std::isfinite(*y)) {
      throw DataError(detail::where(path, lineno) + "coordinates must be finite numbers");
    }
    ids.push_back(detail::trim(cells[0]));
    coords.push_back({*x, *y});
  }
  if (ids.empty()) throw DataError(path + ": no spots");
  return {std::move(ids), std::move(coords)};
}

/// Labels CSV: header, then spot_id,label rows. Labels are categorical; they
/// are numbered in sorted order of their text.
inline std::unordered_map<std::string, std::string> read_label_table(const std::string& path) {
  auto is = detail::open_input(path);
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(is, line)) throw DataError(path + ": empty labels file");
  ++lineno;
  std::unordered_map<std::string, std::string> table;
  while (std::getline(is, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != 2) throw DataError(detail::where(path, lineno) + "expected spot_id,label");
    table[detail::trim(cells[0])] = detail::trim(cells[1]);
  }
  return table;
}

/// Loads expression (dense CSV, or Matrix Market when the path ends in .mtx),
/// coordinates and optional labels. Spot order follows the coordinates file.
inline Dataset load_dataset(const std::string& expression_path, const std::string& coords_path,
                            const std::optional<std::string>& labels_path = std::nullopt) {
  const bool mtx = std::filesystem::path(expression_path).extension() == ".mtx";
  detail::RawExpression raw = mtx ? read_matrix_market(expression_path) : detail::read_expression_csv(expression_path);

  std::unordered_map<std::string, Index> row_of;
  for (std::size_t i = 0; i < raw.spot_ids.size(); ++i) {
    if (!row_of.emplace(raw.spot_ids[i], static_cast<Index>(i)).second) {
      throw DataError(expression_path + ": duplicate spot id '" + raw.spot_ids[i] + "'");
    }
  }
  {
    std::unordered_map<std::string, int> seen;
    for (const auto& g : raw.gene_ids) {
      if (++seen[g] > 1) throw DataError(expression_path + ": duplicate gene id '" + g + "'");
    }
  }

  auto [ids, coords] = read_coordinates(coords_path);
  Dataset ds;
  ds.gene_ids = raw.gene_ids;
  ds.counts = Matrix(static_cast<Index>(ids.size()), raw.values.cols());
  std::unordered_map<std::string, int> coord_seen;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (++coord_seen[ids[i]] > 1) throw DataError(coords_path + ": duplicate spot id '" + ids[i] + "'");
    auto it = row_of.find(ids[i]);
    if (it == row_of.end()) {
      throw DataError(coords_path + ": spot '" + ids[i] + "' is missing from " + expression_path);
    }
    ds.counts.row(static_cast<Index>(i)) = raw.values.row(it->second);
  }
  if (ids.size() != raw.spot_ids.size()) {
    for (const auto& s : raw.spot_ids) {
      if (!coord_seen.count(s)) throw DataError(expression_path + ": spot '" + s + "' has no coordinates");
    }
  }
  ds.spot_ids = std::move(ids);
  ds.coords = std::move(coords);

  if (labels_path) {
    const auto table = read_label_table(*labels_path);
    std::map<std::string, int> codes;
    for (const auto& s : ds.spot_ids) {
      auto it = table.find(s);
      if (it == table.end()) throw DataError(*labels_path + ": no label for spot '" + s + "'");
      codes.emplace(it->second, 0);
    }
    int next = 0;
    for (auto& [name, code] : codes) {
      code = next++;
      ds.label_names.push_back(name);
    }
    std::vector<int> labels;
    labels.reserve(ds.spot_ids.size());
    for (const auto& s : ds.spot_ids) labels.push_back(codes.at(table.at(s)));
    ds.truth_labels = std::move(labels);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Preprocessing

struct PreprocessOptions {
  int min_spots = 3;
  int n_hvg = 3000;
};

/// Gene filter, median library-size normalization, log1p, and selection of
/// the most variable genes. Selected genes are emitted in gene-id order.
inline Dataset preprocess(Dataset ds, PreprocessOptions opts = {}) {
  detail::require(opts.n_hvg >= 1, "preprocess: n_hvg must be >= 1");
  const Index n = ds.spots();
  const int min_spots = std::max(opts.min_spots, 1);

  std::vector<Index> kept;
  for (Index g = 0; g < ds.genes(); ++g) {
    const Index expressed = (ds.counts.col(g).array() > 0.0).count();
    if (expressed >= min_spots) kept.push_back(g);
  }
  if (kept.empty()) {
    throw DataError("preprocess: every gene is expressed in fewer than " + std::to_string(min_spots) + " spots");
  }

  Matrix x(n, static_cast<Index>(kept.size()));
  for (std::size_t c = 0; c < kept.size(); ++c) x.col(static_cast<Index>(c)) = ds.counts.col(kept[c]);

  // Summation in gene-id order keeps the result independent of column order.
  std::vector<std::size_t> by_name(kept.size());
  std::iota(by_name.begin(), by_name.end(), 0);
  std::sort(by_name.begin(), by_name.end(), [&](std::size_t a, std::size_t b) {
    return ds.gene_ids[static_cast<std::size_t>(kept[a])] < ds.gene_ids[static_cast<std::size_t>(kept[b])];
  });
  std::vector<double> totals(static_cast<std::size_t>(n), 0.0);
  for (Index i = 0; i < n; ++i) {
    double t = 0.0;
    for (auto c : by_name) t += x(i, static_cast<Index>(c));
    totals[static_cast<std::size_t>(i)] = t;
  }
  std::vector<double> positive;
  for (double t : totals) {
    if (t > 0.0) positive.push_back(t);
  }
  double target = 1.0;
  if (!positive.empty()) {
    std::sort(positive.begin(), positive.end());
    const std::size_t m = positive.size();
    target = m % 2 == 1 ? positive[m / 2] : 0.5 * (positive[m / 2 - 1] + positive[m / 2]);
  }
  Matrix logx = Matrix::Zero(n, x.cols());
  for (Index i = 0; i < n; ++i) {
    const double t = totals[static_cast<std::size_t>(i)];
    if (t <= 0.0) continue;
    for (Index c = 0; c < x.cols(); ++c) logx(i, c) = std::log1p(x(i, c) * (target / t));
  }

  std::vector<double> variance(kept.size(), 0.0);
  for (std::size_t c = 0; c < kept.size(); ++c) {
    const auto col = logx.col(static_cast<Index>(c));
    const double mean = col.mean();
    variance[c] = (col.array() - mean).square().sum() / static_cast<double>(n);
  }
  std::vector<std::size_t> order(kept.size());
  std::iota(order.begin(), order.end(), 0);
  auto name_of = [&](std::size_t c) -> const std::string& { return ds.gene_ids[static_cast<std::size_t>(kept[c])]; };
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return variance[a] != variance[b] ? variance[a] > variance[b] : name_of(a) < name_of(b);
  });
  order.resize(std::min<std::size_t>(order.size(), static_cast<std::size_t>(opts.n_hvg)));
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return name_of(a) < name_of(b); });

  ds.preprocessed = Matrix(n, static_cast<Index>(order.size()));
  ds.target_counts = Matrix(n, static_cast<Index>(order.size()));
  ds.feature_genes.clear();
  for (std::size_t c = 0; c < order.size(); ++c) {
    ds.preprocessed.col(static_cast<Index>(c)) = logx.col(static_cast<Index>(order[c]));
    ds.target_counts.col(static_cast<Index>(c)) = x.col(static_cast<Index>(order[c]));
    ds.feature_genes.push_back(name_of(order[c]));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic layered tissue

struct SyntheticOptions {
  int n_side = 30;
  int k_domains = 5;
  int n_genes = 200;
  std::uint64_t seed = 0;
  double dropout = 0.3;
  double dispersion = 2.0;
  /// Center-to-center spot distance; with the default radius every interior
  /// spot has exactly 6 neighbors.
  double spacing = 500.0;
  double base_mean = 1.5;
  double marker_fold = 3.0;
};

namespace detail {

inline void check_synthetic(const SyntheticOptions& o) {
  require(o.k_domains >= 2, "generate_synthetic: k_domains must be >= 2");
  require(static_cast<long long>(o.n_side) * o.n_side >= 10LL * o.k_domains,
          "generate_synthetic: n_side^2 must be >= 10 * k_domains");
  require(o.n_side >= o.k_domains, "generate_synthetic: need at least one grid row per domain");
  require(o.n_genes >= o.k_domains, "generate_synthetic: need at least one gene per domain");
  require(o.dropout >= 0.0 && o.dropout <= 1.0, "generate_synthetic: dropout must lie in [0, 1]");
  require(o.dispersion > 0.0, "generate_synthetic: dispersion must be positive");
  require(o.spacing > 0.0 && o.base_mean > 0.0 && o.marker_fold > 0.0,
          "generate_synthetic: spacing, base mean and fold must be positive");
}

inline double synthetic_unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Per-gene baseline: log-normal spread around base_mean (Box-Muller).
inline std::vector<double> synthetic_baseline(const SyntheticOptions& o, std::mt19937_64& rng) {
  std::vector<double> baseline(static_cast<std::size_t>(o.n_genes));
  for (auto& b : baseline) {
    const double u1 = 1.0 - synthetic_unit(rng);
    const double u2 = synthetic_unit(rng);
    const double g = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    b = o.base_mean * std::exp(0.5 * g);
  }
  return baseline;
}

inline int synthetic_domain(const SyntheticOptions& o, int grid_row) {
  return static_cast<int>(static_cast<long long>(grid_row) * o.k_domains / o.n_side);
}

inline int synthetic_markers(const SyntheticOptions& o) { return std::max(1, o.n_genes / (2 * o.k_domains)); }

}  // namespace detail

/// Expression program of the synthetic tissue: the N x M matrix of NB means
/// before dropout. Domain d up-regulates genes [d * b, (d + 1) * b) by
/// marker_fold, with b = max(1, n_genes / (2 * k_domains)).
inline Matrix synthetic_means(const SyntheticOptions& o) {
  detail::check_synthetic(o);
  std::mt19937_64 rng(o.seed);
  const auto baseline = detail::synthetic_baseline(o, rng);
  const int markers = detail::synthetic_markers(o);
  Matrix mu(static_cast<Index>(o.n_side) * o.n_side, o.n_genes);
  for (int r = 0; r < o.n_side; ++r) {
    const int domain = detail::synthetic_domain(o, r);
    for (int c = 0; c < o.n_side; ++c) {
      for (int g = 0; g < o.n_genes; ++g) {
        mu(r * o.n_side + c, g) = baseline[static_cast<std::size_t>(g)] * (g / markers == domain ? o.marker_fold : 1.0);
      }
    }
  }
  return mu;
}

/// Hexagonally packed spots with horizontal band domains. Each domain
/// up-regulates its own block of marker genes; counts are drawn from
/// ZINB(pi = dropout, mu = program mean, theta = dispersion).
inline Dataset generate_synthetic(const SyntheticOptions& o) {
  detail::check_synthetic(o);
  std::mt19937_64 rng(o.seed);
  const int n = o.n_side * o.n_side;
  const int m = o.n_genes;
  auto unit = [&rng]() { return detail::synthetic_unit(rng); };
  const std::vector<double> baseline = detail::synthetic_baseline(o, rng);
  const int markers = detail::synthetic_markers(o);

  Dataset ds;
  ds.counts = Matrix::Zero(n, m);
  ds.truth_labels = std::vector<int>(static_cast<std::size_t>(n));
  for (int d = 0; d < o.k_domains; ++d) ds.label_names.push_back("domain_" + std::to_string(d));
  for (int g = 0; g < m; ++g) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "gene_%04d", g);
    ds.gene_ids.emplace_back(buf);
  }

  const double row_height = o.spacing * std::sqrt(3.0) / 2.0;
  for (int r = 0; r < o.n_side; ++r) {
    const int domain = detail::synthetic_domain(o, r);
    for (int c = 0; c < o.n_side; ++c) {
      const int i = r * o.n_side + c;
      char buf[32];
      std::snprintf(buf, sizeof(buf), "spot_%02d_%02d", r, c);
      ds.spot_ids.emplace_back(buf);
      ds.coords.push_back({(c + 0.5 * (r % 2)) * o.spacing, r * row_height});
      (*ds.truth_labels)[static_cast<std::size_t>(i)] = domain;
      for (int g = 0; g < m; ++g) {
        const bool marker = g / markers == domain;
        const double mu = baseline[static_cast<std::size_t>(g)] * (marker ? o.marker_fold : 1.0);
        // Draws happen unconditionally so the stream layout does not depend on dropout.
        const bool dropped = unit() < o.dropout;
        std::gamma_distribution<double> gamma(o.dispersion, mu / o.dispersion);
        const double rate = gamma(rng);
        long long x = 0;
        if (rate > 0.0) x = std::poisson_distribution<long long>(rate)(rng);
        ds.counts(i, g) = dropped ? 0.0 : static_cast<double>(x);
      }
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Writers and readers for run artifacts

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  return os;
}

inline void finish(std::ofstream& os, const std::string& path) {
  os.flush();
  if (!os) throw IoError("failed writing " + path);
}

}  // namespace detail

/// spot_id,z0,z1,... with 17 significant digits.
inline void save_embeddings(const std::string& path, const std::vector<std::string>& spot_ids, const Matrix& z) {
  detail::require_dims(static_cast<Index>(spot_ids.size()) == z.rows(), "save_embeddings: id count != rows");
  auto os = detail::open_output(path);
  os << "spot_id";
  for (Index c = 0; c < z.cols(); ++c) os << ",z" << c;
  os << '\n';
  for (Index r = 0; r < z.rows(); ++r) {
    os << spot_ids[static_cast<std::size_t>(r)];
    for (Index c = 0; c < z.cols(); ++c) os << ',' << detail::fmt_double(z(r, c));
    os << '\n';
  }
  detail::finish(os, path);
}

inline std::pair<std::vector<std::string>, Matrix> load_embeddings(const std::string& path) {
  auto raw = detail::read_expression_csv(path, false);
  return {std::move(raw.spot_ids), std::move(raw.values)};
}

/// spot_id,label
inline void save_labels(const std::string& path, const std::vector<std::string>& spot_ids,
                        const std::vector<int>& labels) {
  detail::require_dims(spot_ids.size() == labels.size(), "save_labels: id count != label count");
  auto os = detail::open_output(path);
  os << "spot_id,label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) os << spot_ids[i] << ',' << labels[i] << '\n';
  detail::finish(os, path);
}

inline std::vector<int> load_labels(const std::string& path, const std::vector<std::string>& spot_ids) {
  const auto table = read_label_table(path);
  std::vector<int> out;
  for (const auto& s : spot_ids) {
    auto it = table.find(s);
    if (it == table.end()) throw DataError(path + ": no label for spot '" + s + "'");
    int v = 0;
    auto [p, ec] = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
    if (ec != std::errc() || p != it->second.data() + it->second.size()) {
      throw DataError(path + ": label '" + it->second + "' is not an integer");
    }
    out.push_back(v);
  }
  return out;
}

struct MetricsRecord {
  std::string dataset;
  std::uint64_t seed = 0;
  int k = 0;
  double inertia = 0.0;
  std::optional<double> ari;
  std::optional<double> nmi;
};

/// Long-format metrics: dataset,seed,metric,value. ARI/NMI rows appear only
/// when ground truth was available.
inline void save_metrics(const std::string& path, const std::vector<MetricsRecord>& records) {
  auto os = detail::open_output(path);
  os << "dataset,seed,metric,value\n";
  for (const auto& r : records) {
    os << r.dataset << ',' << r.seed << ",k," << r.k << '\n';
    os << r.dataset << ',' << r.seed << ",inertia," << detail::fmt_double(r.inertia) << '\n';
    if (r.ari) os << r.dataset << ',' << r.seed << ",ari," << detail::fmt_double(*r.ari) << '\n';
    if (r.nmi) os << r.dataset << ',' << r.seed << ",nmi," << detail::fmt_double(*r.nmi) << '\n';
  }
  detail::finish(os, path);
}

/// Writes expression.csv, coordinates.csv and (when present) labels.csv.
inline void write_dataset(const std::string& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  const std::string expr = (std::filesystem::path(dir) / "expression.csv").string();
  auto os = detail::open_output(expr);
  os << "spot_id";
  for (const auto& g : ds.gene_ids) os << ',' << g;
  os << '\n';
  for (Index i = 0; i < ds.spots(); ++i) {
    os << ds.spot_ids[static_cast<std::size_t>(i)];
    for (Index g = 0; g < ds.genes(); ++g) os << ',' << detail::fmt_double(ds.counts(i, g));
    os << '\n';
  }
  detail::finish(os, expr);

  const std::string coords = (std::filesystem::path(dir) / "coordinates.csv").string();
  auto cs = detail::open_output(coords);
  cs << "spot_id,x,y\n";
  for (std::size_t i = 0; i < ds.coords.size(); ++i) {
    cs << ds.spot_ids[i] << ',' << detail::fmt_double(ds.coords[i].x) << ',' << detail::fmt_double(ds.coords[i].y)
       << '\n';
  }
  detail::finish(cs, coords);

  if (ds.truth_labels) {
    const std::string labels = (std::filesystem::path(dir) / "labels.csv").string();
    auto ls = detail::open_output(labels);
    ls << "spot_id,label\n";
    for (std::size_t i = 0; i < ds.spot_ids.size(); ++i) {
      const int l = (*ds.truth_labels)[i];
      ls << ds.spot_ids[i] << ','
         << (static_cast<std::size_t>(l) < ds.label_names.size() ? ds.label_names[static_cast<std::size_t>(l)]
                                                                 : std::to_string(l))
         << '\n';
    }
    detail::finish(ls, labels);
  }
}

}  // namespace stmfg

#endif  // STMFG_DATA_HPP

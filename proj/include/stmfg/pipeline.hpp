#ifndef STMFG_PIPELINE_HPP
#define STMFG_PIPELINE_HPP

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "stmfg/cluster.hpp"
#include "stmfg/data.hpp"
#include "stmfg/graph.hpp"
#include "stmfg/trainer.hpp"

namespace stmfg {

/// Which matrix the ZINB decoder reconstructs.
enum class ZinbTarget {
  RawCounts,     // raw counts of the selected genes
  Preprocessed,  // the normalized, log-transformed model input
};

struct PipelineOptions {
  TrainConfig train;
  PreprocessOptions preprocess;
  ZinbTarget zinb_target = ZinbTarget::RawCounts;
  KnnSymmetrization knn_mode = KnnSymmetrization::Union;
  /// Number of spatial domains; 0 means "use the number of truth labels".
  int clusters = 0;
  KMeansOptions kmeans;
};

struct PipelineResult {
  Dataset dataset;  // preprocessed
  GraphPair graphs;
  TrainResult training;
  KMeansResult clustering;
  std::optional<double> ari;
  std::optional<double> nmi;
};

inline TrainData make_train_data(const Dataset& ds, const PipelineOptions& opts) {
  detail::require(ds.preprocessed.size() > 0, "make_train_data: dataset is not preprocessed");
  TrainData data;
  data.features = ds.preprocessed;
  if (opts.zinb_target == ZinbTarget::RawCounts) {
    data.target = ds.target_counts;
  } else {
    data.target = ds.preprocessed;
    data.fractional_target = true;
  }
  data.graphs = build_graphs(ds.coords, ds.preprocessed, opts.train.radius, opts.train.knn_k, opts.knn_mode);
  return data;
}

inline int resolve_clusters(const Dataset& ds, int requested) {
  if (requested > 0) return requested;
  if (!ds.truth_labels) throw ContractError("cluster count not given and the dataset has no labels");
  int k = 0;
  for (int l : *ds.truth_labels) k = std::max(k, l + 1);
  return k;
}

/// preprocess -> graphs -> train -> k-means -> (ARI, NMI when labels exist)
inline PipelineResult run_pipeline(const Dataset& raw, const PipelineOptions& opts,
                                   const EpochCallback& on_epoch = {}) {
  PipelineResult out;
  out.dataset = preprocess(raw, opts.preprocess);
  const int k = resolve_clusters(out.dataset, opts.clusters);
  TrainData data = make_train_data(out.dataset, opts);
  out.training = train(data, opts.train, on_epoch);
  out.graphs = std::move(data.graphs);
  out.clustering = kmeans(out.training.trace.z_final.value(), k, opts.train.seed, opts.kmeans);
  if (out.dataset.truth_labels) {
    out.ari = ari(*out.dataset.truth_labels, out.clustering.partition.labels);
    out.nmi = nmi(*out.dataset.truth_labels, out.clustering.partition.labels);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loss log: epoch,zinb,cl,reg,total,seconds

inline constexpr const char* kLossLogHeader = "epoch,zinb,cl,reg,total,seconds";

inline std::string format_loss_row(const EpochRecord& r) {
  return std::to_string(r.epoch) + ',' + detail::fmt_double(r.loss.zinb) + ',' + detail::fmt_double(r.loss.cl) +
         ',' + detail::fmt_double(r.loss.reg) + ',' + detail::fmt_double(r.loss.total) + ',' +
         detail::fmt_double(r.seconds);
}

/// Appends one row per epoch and flushes, so an aborted run keeps its history.
class LossLogWriter {
 public:
  explicit LossLogWriter(const std::string& path) : path_(path), os_(detail::open_output(path)) {
    os_ << kLossLogHeader << '\n';
    detail::finish(os_, path_);
  }

  void append(const EpochRecord& r) {
    os_ << format_loss_row(r) << '\n';
    detail::finish(os_, path_);
  }

 private:
  std::string path_;
  std::ofstream os_;
};

inline void save_loss_log(const std::string& path, const TrainLog& log) {
  LossLogWriter w(path);
  for (const auto& r : log.epochs) w.append(r);
}

inline std::vector<EpochRecord> load_loss_log(const std::string& path) {
  auto is = detail::open_input(path);
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(is, line) || detail::trim(line) != kLossLogHeader) {
    throw DataError(detail::where(path, lineno) + "expected header '" + kLossLogHeader + "'");
  }
  std::vector<EpochRecord> out;
  while (std::getline(is, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 6) throw DataError(detail::where(path, lineno) + "expected 6 fields");
    double v[6];
    for (std::size_t c = 0; c < 6; ++c) {
      auto parsed = detail::parse_double(cells[c]);
      if (!parsed) throw DataError(detail::where(path, lineno) + "bad number '" + cells[c] + "'");
      v[c] = *parsed;
    }
    EpochRecord r;
    r.epoch = static_cast<int>(v[0]);
    r.loss.zinb = v[1];
    r.loss.cl = v[2];
    r.loss.reg = v[3];
    r.loss.total = v[4];
    r.seconds = v[5];
    out.push_back(r);
  }
  return out;
}

}  // namespace stmfg

#endif  // STMFG_PIPELINE_HPP

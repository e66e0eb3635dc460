// stmfg command-line driver: synth, run, ablate, sweep, baseline.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "CLI11.hpp"
#include "stmfg/stmfg.hpp"

namespace fs = std::filesystem;
using namespace stmfg;

namespace {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kData = 2,
  kContract = 3,
  kNumerical = 4,
  kIo = 5,
  kInternal = 6,
};

// ---------------------------------------------------------------------------
// Flags that also go into the manifest

std::string toml_string(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + '"';
}

template <class T>
std::string toml_value(const T& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_same_v<T, std::string>) {
    return toml_string(v);
  } else if constexpr (std::is_floating_point_v<T>) {
    return detail::fmt_double(v);
  } else if constexpr (std::is_integral_v<T>) {
    return std::to_string(v);
  } else {
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + toml_value(v[i]);
    return out + "]";
  }
}

class FlagTable {
 public:
  explicit FlagTable(CLI::App* app) : app_(app) {}

  template <class T>
  CLI::Option* option(const std::string& name, T& var, const std::string& help) {
    entries_.emplace_back(name, [&var] { return toml_value(var); });
    return app_->add_option("--" + name, var, help)->capture_default_str();
  }

  template <class T>
  CLI::Option* list(const std::string& name, std::vector<T>& var, const std::string& help) {
    entries_.emplace_back(name, [&var] { return toml_value(var); });
    return app_->add_option("--" + name, var, help)->delimiter(',')->capture_default_str();
  }

  CLI::Option* flag(const std::string& name, bool& var, const std::string& help) {
    entries_.emplace_back(name, [&var] { return toml_value(var); });
    return app_->add_flag("--" + name, var, help);
  }

  CLI::App* app() const { return app_; }

  std::string section() const {
    std::string out = "[" + app_->get_name() + "]\n";
    for (const auto& [name, fn] : entries_) out += name + " = " + fn() + "\n";
    return out;
  }

 private:
  CLI::App* app_;
  std::vector<std::pair<std::string, std::function<std::string()>>> entries_;
};

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Written before any heavy work; `stmfg --config <manifest> <command>` reruns it.
void write_manifest(const fs::path& out_dir, const FlagTable& flags) {
  fs::create_directories(out_dir);
  const std::string path = (out_dir / "manifest.toml").string();
  auto os = detail::open_output(path);
  os << "# stmfg " << STMFG_VERSION << "\n";
  os << "# created " << utc_timestamp() << "\n";
  os << "# rerun: stmfg --config " << path << ' ' << flags.app()->get_name() << "\n";
  os << flags.section();
  detail::finish(os, path);
}

std::string absolute(const std::string& p) { return p.empty() ? p : fs::absolute(p).lexically_normal().string(); }

// ---------------------------------------------------------------------------
// Shared option groups

struct InputFlags {
  std::string data_dir;
  std::string expression;
  std::string coords;
  std::string labels;
  std::string name;

  void add(FlagTable& t) {
    t.option("data", data_dir, "Directory with expression.csv|.mtx, coordinates.csv and optional labels.csv");
    t.option("expression", expression, "Expression matrix (dense CSV, or Matrix Market .mtx with sidecars)");
    t.option("coords", coords, "Coordinates CSV: spot_id,x,y");
    t.option("labels", labels, "Optional ground-truth labels CSV: spot_id,label");
    t.option("name", name, "Dataset id used in metrics files (default: input directory name)");
  }

  // Fills unset paths from --data and makes everything absolute.
  void resolve() {
    if (!data_dir.empty()) {
      const fs::path d(data_dir);
      if (expression.empty()) {
        expression = fs::exists(d / "expression.mtx") ? (d / "expression.mtx").string() : (d / "expression.csv").string();
      }
      if (coords.empty()) coords = (d / "coordinates.csv").string();
      if (labels.empty() && fs::exists(d / "labels.csv")) labels = (d / "labels.csv").string();
    }
    if (expression.empty() || coords.empty()) {
      throw CLI::ValidationError("inputs", "give --data DIR, or both --expression and --coords");
    }
    data_dir = absolute(data_dir);
    expression = absolute(expression);
    coords = absolute(coords);
    labels = absolute(labels);
    if (name.empty()) {
      const fs::path base = data_dir.empty() ? fs::path(expression).parent_path() : fs::path(data_dir);
      name = base.filename().string();
      if (name.empty()) name = "dataset";
    }
  }

  Dataset load() const {
    return load_dataset(expression, coords, labels.empty() ? std::nullopt : std::optional<std::string>(labels));
  }
};

struct TrainFlags {
  double radius = kDefaultRadius;
  int knn = kDefaultKnn;
  std::string knn_mode = "union";
  double alpha = 1.0;
  double lambda = 0.001;
  double gamma = 0.01;
  double tau = 0.5;
  double lr = 1e-3;
  double weight_decay = 5e-4;
  int epochs = 200;
  int clusters = 0;
  std::uint64_t seed = 0;
  bool no_fusion = false;
  bool no_cl = false;
  bool no_reg = false;
  bool no_zinb = false;
  std::string reg_reduction = "mean";
  std::string contrastive_layers = "last";
  std::string zinb_target = "counts";
  std::vector<Index> hidden{128, 64};
  Index decoder_hidden = 128;
  int min_spots = 3;
  int n_hvg = 3000;
  int kmeans_restarts = 20;

  void add(FlagTable& t) {
    t.option("radius", radius, "Spatial graph radius (coordinate units)");
    t.option("knn", knn, "Neighbors per spot in the feature graph");
    t.option("knn-mode", knn_mode, "Feature-graph symmetrization")->check(CLI::IsMember({"union", "intersection"}));
    t.option("alpha", alpha, "ZINB reconstruction weight");
    t.option("lambda", lambda, "Contrastive weight");
    t.option("gamma", gamma, "Spatial regularization weight");
    t.option("tau", tau, "Contrastive temperature");
    t.option("lr", lr, "Adam learning rate");
    t.option("weight-decay", weight_decay, "L2 weight decay");
    t.option("epochs", epochs, "Training epochs");
    t.option("clusters", clusters, "Number of domains (0: number of distinct labels)");
    t.option("seed", seed, "Seed for initialization and k-means");
    t.flag("no-fusion", no_fusion, "Ablation: single late fusion instead of per-layer fusion");
    t.flag("no-cl", no_cl, "Ablation: drop the contrastive term");
    t.flag("no-reg", no_reg, "Ablation: drop the spatial regularization term");
    t.flag("no-zinb", no_zinb, "Ablation: drop the ZINB term");
    t.option("reg-reduction", reg_reduction, "Spatial term: mean over spot pairs, or raw sum")
        ->check(CLI::IsMember({"mean", "sum"}));
    t.option("contrastive-layers", contrastive_layers, "Contrastive term on the last layer or summed over all")
        ->check(CLI::IsMember({"last", "all"}));
    t.option("zinb-target", zinb_target, "ZINB reconstruction target")
        ->check(CLI::IsMember({"counts", "preprocessed"}));
    t.list("hidden", hidden, "Encoder widths, comma separated");
    t.option("decoder-hidden", decoder_hidden, "Decoder hidden width");
    t.option("min-spots", min_spots, "Drop genes expressed in fewer spots");
    t.option("n-hvg", n_hvg, "Highly variable genes kept as model input");
    t.option("kmeans-restarts", kmeans_restarts, "k-means++ restarts");
  }

  PipelineOptions pipeline() const {
    PipelineOptions o;
    TrainConfig& c = o.train;
    c.lr = lr;
    c.weight_decay = weight_decay;
    c.epochs = epochs;
    c.weights = LossWeights{alpha, lambda, gamma};
    c.tau = tau;
    c.seed = seed;
    c.model.hidden_dims = hidden;
    c.model.decoder_hidden = decoder_hidden;
    c.radius = radius;
    c.knn_k = knn;
    c.contrastive_layers = contrastive_layers == "all" ? ContrastiveLayers::All : ContrastiveLayers::Last;
    c.reg_reduction = reg_reduction == "sum" ? RegReduction::Sum : RegReduction::PairMean;
    c.disable_fusion = no_fusion;
    c.disable_cl = no_cl;
    c.disable_reg = no_reg;
    c.disable_zinb = no_zinb;
    o.preprocess.min_spots = min_spots;
    o.preprocess.n_hvg = n_hvg;
    o.zinb_target = zinb_target == "preprocessed" ? ZinbTarget::Preprocessed : ZinbTarget::RawCounts;
    o.knn_mode = knn_mode == "intersection" ? KnnSymmetrization::Intersection : KnnSymmetrization::Union;
    o.clusters = clusters;
    o.kmeans.restarts = kmeans_restarts;
    return o;
  }
};

// Runs independent jobs on `jobs` threads; results land by index.
template <class Fn>
void parallel_for(std::size_t count, int jobs, Fn&& fn) {
  if (jobs <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), count);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = count;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

struct Summary {
  double mean = 0.0;
  double sd = 0.0;
};

Summary summarize(const std::vector<double>& v) {
  Summary s;
  if (v.empty()) return s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

std::mutex log_mutex;

void note(const std::string& msg) {
  std::lock_guard lock(log_mutex);
  std::cerr << msg << std::endl;
}

// ---------------------------------------------------------------------------
// synth

struct SynthCommand {
  SyntheticOptions opts;
  std::string out;
  FlagTable flags;

  explicit SynthCommand(CLI::App& parent)
      : flags(parent.add_subcommand("synth", "Write a synthetic banded tissue dataset")) {
    flags.option("out", out, "Output directory")->required();
    flags.option("n-side", opts.n_side, "Grid side; the dataset has n-side^2 spots");
    flags.option("domains", opts.k_domains, "Number of horizontal band domains");
    flags.option("genes", opts.n_genes, "Number of genes");
    flags.option("seed", opts.seed, "Generator seed");
    flags.option("dropout", opts.dropout, "Zero-inflation probability");
    flags.option("dispersion", opts.dispersion, "Negative-binomial dispersion");
    flags.option("spacing", opts.spacing, "Distance between neighboring spots");
    flags.option("base-mean", opts.base_mean, "Median baseline mean expression");
    flags.option("marker-fold", opts.marker_fold, "Mean fold change of a domain's marker genes");
    flags.app()->callback([this] { execute(); });
  }

  void execute() {
    out = absolute(out);
    write_manifest(out, flags);
    const Dataset ds = generate_synthetic(opts);
    write_dataset(out, ds);
    std::cout << "wrote " << ds.spots() << " spots x " << ds.genes() << " genes, " << opts.k_domains
              << " domains to " << out << "\n";
  }
};

// ---------------------------------------------------------------------------
// run

struct RunCommand {
  InputFlags input;
  TrainFlags train;
  std::string out;
  int checkpoint_every = 0;
  FlagTable flags;

  explicit RunCommand(CLI::App& parent)
      : flags(parent.add_subcommand("run", "Train on one dataset, cluster, and evaluate")) {
    input.add(flags);
    train.add(flags);
    flags.option("out", out, "Output directory")->required();
    flags.option("checkpoint-every", checkpoint_every, "Save parameters every N epochs (0: final only)");
    flags.app()->callback([this] { execute(); });
  }

  void execute() {
    input.resolve();
    out = absolute(out);
    write_manifest(out, flags);
    const fs::path dir(out);

    const Dataset raw = input.load();
    const PipelineOptions opts = train.pipeline();
    LossLogWriter loss_log((dir / "loss_log.csv").string());
    const int every = checkpoint_every;
    if (every > 0) fs::create_directories(dir / "checkpoints");
    const PipelineResult res = run_pipeline(raw, opts, [&](const EpochRecord& r, const ModelParams& p) {
      loss_log.append(r);
      if (every > 0 && r.epoch % every == 0) {
        char name[32];
        std::snprintf(name, sizeof(name), "epoch_%05d.ckpt", r.epoch);
        save_checkpoint((dir / "checkpoints" / name).string(), p);
      }
    });

    const auto& ids = res.dataset.spot_ids;
    save_embeddings((dir / "embeddings.csv").string(), ids, res.training.trace.z_final.value());
    save_labels((dir / "labels.csv").string(), ids, res.clustering.partition.labels);
    save_checkpoint((dir / "model.ckpt").string(), res.training.params);
    MetricsRecord m;
    m.dataset = input.name;
    m.seed = train.seed;
    m.k = res.clustering.partition.k;
    m.inertia = res.clustering.inertia;
    m.ari = res.ari;
    m.nmi = res.nmi;
    save_metrics((dir / "metrics.csv").string(), {m});

    std::cout << input.name << ": " << ids.size() << " spots, " << res.dataset.genes() << " genes, k=" << m.k
              << ", " << res.training.log.epochs.size() << " epochs in " << detail::fmt_double(res.training.log.seconds)
              << " s";
    if (res.ari) std::cout << ", ARI " << detail::fmt_double(*res.ari) << ", NMI " << detail::fmt_double(*res.nmi);
    std::cout << "\n";
  }
};

// ---------------------------------------------------------------------------
// ablate

struct Variant {
  std::string name;
  std::function<void(TrainConfig&)> apply;
};

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v = {
      {"full", [](TrainConfig&) {}},
      {"w/o mf", [](TrainConfig& c) { c.disable_fusion = true; }},
      {"w/o cl", [](TrainConfig& c) { c.disable_cl = true; }},
      {"w/o reg", [](TrainConfig& c) { c.disable_reg = true; }},
      {"w/o zinb", [](TrainConfig& c) { c.disable_zinb = true; }},
  };
  return v;
}

struct RunScore {
  double ari = 0.0;
  double nmi = 0.0;
  double seconds = 0.0;
};

RunScore score_run(const Dataset& raw, const PipelineOptions& opts) {
  const PipelineResult r = run_pipeline(raw, opts);
  return {*r.ari, *r.nmi, r.training.log.seconds};
}

struct AblateCommand {
  InputFlags input;
  TrainFlags train;
  std::string out;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::vector<std::string> variants;
  int jobs = 1;
  FlagTable flags;

  explicit AblateCommand(CLI::App& parent)
      : flags(parent.add_subcommand("ablate", "Compare the full model against its component ablations")) {
    input.add(flags);
    train.add(flags);
    flags.option("out", out, "Output directory")->required();
    flags.list("seeds", seeds, "Training seeds shared by every variant");
    std::vector<std::string> names;
    for (const auto& v : all_variants()) {
      names.push_back(v.name);
      variants.push_back(v.name);
    }
    flags.list("variants", variants, "Subset of: full, w/o mf, w/o cl, w/o reg, w/o zinb")->check(CLI::IsMember(names));
    flags.option("jobs", jobs, "Runs in parallel (each run stays single-threaded)");
    flags.app()->callback([this] { execute(); });
  }

  void execute() {
    input.resolve();
    out = absolute(out);
    write_manifest(out, flags);
    const Dataset raw = input.load();
    if (!raw.truth_labels) throw DataError("ablate: " + input.name + " has no labels to score against");

    std::vector<const Variant*> chosen;
    for (const auto& v : all_variants()) {
      if (std::find(variants.begin(), variants.end(), v.name) != variants.end()) chosen.push_back(&v);
    }
    const std::size_t runs = chosen.size() * seeds.size();
    std::vector<RunScore> scores(runs);
    parallel_for(runs, jobs, [&](std::size_t i) {
      const Variant& v = *chosen[i / seeds.size()];
      PipelineOptions opts = train.pipeline();
      opts.train.seed = seeds[i % seeds.size()];
      v.apply(opts.train);
      scores[i] = score_run(raw, opts);
      note(v.name + " seed " + std::to_string(opts.train.seed) + ": ARI " + detail::fmt_double(scores[i].ari));
    });

    const fs::path dir(out);
    {
      const std::string path = (dir / "ablation_runs.csv").string();
      auto os = detail::open_output(path);
      os << "dataset,variant,seed,ari,nmi,seconds\n";
      for (std::size_t i = 0; i < runs; ++i) {
        os << input.name << ',' << chosen[i / seeds.size()]->name << ',' << seeds[i % seeds.size()] << ','
           << detail::fmt_double(scores[i].ari) << ',' << detail::fmt_double(scores[i].nmi) << ','
           << detail::fmt_double(scores[i].seconds) << '\n';
      }
      detail::finish(os, path);
    }
    const std::string path = (dir / "ablation.csv").string();
    auto os = detail::open_output(path);
    os << "variant,runs,ari_mean,ari_sd,nmi_mean,nmi_sd\n";
    std::printf("%-10s %6s %8s %8s\n", "variant", "runs", "ARI", "NMI");
    for (std::size_t v = 0; v < chosen.size(); ++v) {
      std::vector<double> a, n;
      for (std::size_t s = 0; s < seeds.size(); ++s) {
        a.push_back(scores[v * seeds.size() + s].ari);
        n.push_back(scores[v * seeds.size() + s].nmi);
      }
      const Summary sa = summarize(a), sn = summarize(n);
      os << chosen[v]->name << ',' << seeds.size() << ',' << detail::fmt_double(sa.mean) << ','
         << detail::fmt_double(sa.sd) << ',' << detail::fmt_double(sn.mean) << ',' << detail::fmt_double(sn.sd) << '\n';
      std::printf("%-10s %6zu %8.4f %8.4f\n", chosen[v]->name.c_str(), seeds.size(), sa.mean, sn.mean);
    }
    detail::finish(os, path);
  }
};

// ---------------------------------------------------------------------------
// sweep

struct SweepCommand {
  InputFlags input;
  TrainFlags train;
  std::string out;
  std::vector<double> alphas, lambdas, gammas, taus;
  std::vector<std::uint64_t> seeds{0};
  int jobs = 1;
  FlagTable flags;

  explicit SweepCommand(CLI::App& parent)
      : flags(parent.add_subcommand("sweep", "Grid over alpha, lambda, gamma and tau")) {
    input.add(flags);
    train.add(flags);
    flags.option("out", out, "Output directory")->required();
    flags.list("alpha-grid", alphas, "alpha values (empty: --alpha)");
    flags.list("lambda-grid", lambdas, "lambda values (empty: --lambda)");
    flags.list("gamma-grid", gammas, "gamma values (empty: --gamma)");
    flags.list("tau-grid", taus, "tau values (empty: --tau)");
    flags.list("seeds", seeds, "Training seeds per grid cell");
    flags.option("jobs", jobs, "Runs in parallel (each run stays single-threaded)");
    flags.app()->callback([this] { execute(); });
  }

  void execute() {
    input.resolve();
    out = absolute(out);
    write_manifest(out, flags);
    const Dataset raw = input.load();
    if (!raw.truth_labels) throw DataError("sweep: " + input.name + " has no labels to score against");

    auto or_base = [](const std::vector<double>& grid, double base) {
      return grid.empty() ? std::vector<double>{base} : grid;
    };
    struct Cell {
      double alpha, lambda, gamma, tau;
      std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (double a : or_base(alphas, train.alpha))
      for (double l : or_base(lambdas, train.lambda))
        for (double g : or_base(gammas, train.gamma))
          for (double t : or_base(taus, train.tau))
            for (auto s : seeds) cells.push_back({a, l, g, t, s});

    std::vector<RunScore> scores(cells.size());
    parallel_for(cells.size(), jobs, [&](std::size_t i) {
      const Cell& c = cells[i];
      PipelineOptions opts = train.pipeline();
      opts.train.weights = LossWeights{c.alpha, c.lambda, c.gamma};
      opts.train.tau = c.tau;
      opts.train.seed = c.seed;
      scores[i] = score_run(raw, opts);
      note("cell " + std::to_string(i + 1) + "/" + std::to_string(cells.size()) + ": ARI " +
           detail::fmt_double(scores[i].ari));
    });

    const std::string path = (fs::path(out) / "sweep.csv").string();
    auto os = detail::open_output(path);
    os << "dataset,alpha,lambda,gamma,tau,seed,ari,nmi,seconds\n";
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const Cell& c = cells[i];
      os << input.name << ',' << detail::fmt_double(c.alpha) << ',' << detail::fmt_double(c.lambda) << ','
         << detail::fmt_double(c.gamma) << ',' << detail::fmt_double(c.tau) << ',' << c.seed << ','
         << detail::fmt_double(scores[i].ari) << ',' << detail::fmt_double(scores[i].nmi) << ','
         << detail::fmt_double(scores[i].seconds) << '\n';
    }
    detail::finish(os, path);
    std::cout << "wrote " << cells.size() << " cells to " << path << "\n";
  }
};

// ---------------------------------------------------------------------------
// baseline

struct BaselineCommand {
  InputFlags input;
  std::string out;
  int clusters = 0;
  Index components = 30;
  std::uint64_t seed = 0;
  int min_spots = 3;
  int n_hvg = 3000;
  int restarts = 20;
  FlagTable flags;

  explicit BaselineCommand(CLI::App& parent)
      : flags(parent.add_subcommand("baseline", "PCA + k-means on the preprocessed expression")) {
    input.add(flags);
    flags.option("out", out, "Output directory")->required();
    flags.option("clusters", clusters, "Number of domains (0: number of distinct labels)");
    flags.option("components", components, "Principal components kept");
    flags.option("seed", seed, "k-means seed");
    flags.option("min-spots", min_spots, "Drop genes expressed in fewer spots");
    flags.option("n-hvg", n_hvg, "Highly variable genes kept");
    flags.option("kmeans-restarts", restarts, "k-means++ restarts");
    flags.app()->callback([this] { execute(); });
  }

  void execute() {
    input.resolve();
    out = absolute(out);
    write_manifest(out, flags);
    const Dataset ds = preprocess(input.load(), PreprocessOptions{min_spots, n_hvg});
    const int k = resolve_clusters(ds, clusters);
    KMeansOptions ko;
    ko.restarts = restarts;
    const KMeansResult r = pca_kmeans_baseline(ds.preprocessed, k, seed, components, ko);
    const fs::path dir(out);
    save_labels((dir / "labels.csv").string(), ds.spot_ids, r.partition.labels);
    MetricsRecord m;
    m.dataset = input.name;
    m.seed = seed;
    m.k = k;
    m.inertia = r.inertia;
    if (ds.truth_labels) {
      m.ari = ari(*ds.truth_labels, r.partition.labels);
      m.nmi = nmi(*ds.truth_labels, r.partition.labels);
    }
    save_metrics((dir / "metrics.csv").string(), {m});
    std::cout << input.name << " baseline: k=" << k;
    if (m.ari) std::cout << ", ARI " << detail::fmt_double(*m.ari) << ", NMI " << detail::fmt_double(*m.nmi);
    std::cout << "\n";
  }
};

// CLI11 reads config files on the top-level app only; let --config appear
// anywhere on the command line.
std::vector<std::string> hoist_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::vector<std::string> config;
  for (std::size_t i = 0; i < args.size();) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config = {args[i], args[i + 1]};
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
    } else if (args[i].rfind("--config=", 0) == 0) {
      config = {args[i]};
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
    } else {
      ++i;
    }
  }
  args.insert(args.begin(), config.begin(), config.end());
  // CLI11 takes the vector in reverse order.
  std::reverse(args.begin(), args.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Epoch-sized N x N buffers are allocated and freed every step; keep them
  // on the heap instead of round-tripping through mmap.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"stmfg: multi-view graph embedding and clustering for spatial transcriptomics"};
  app.set_version_flag("--version", STMFG_VERSION);
  app.set_config("--config", "", "TOML file with [command] sections; command-line flags take precedence");
  app.require_subcommand(1);

  SynthCommand synth(app);
  RunCommand run(app);
  AblateCommand ablate(app);
  SweepCommand sweep(app);
  BaselineCommand baseline(app);

  try {
    app.parse(hoist_config(argc, argv));
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const ContractError& e) {
    std::cerr << "contract error: " << e.what() << "\n";
    return kContract;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kOk;
}

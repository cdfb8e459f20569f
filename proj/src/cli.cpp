#include "rotenc/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "rotenc/alignment.hpp"
#include "rotenc/checkpoint.hpp"
#include "rotenc/config.hpp"
#include "rotenc/data.hpp"
#include "rotenc/model.hpp"
#include "rotenc/trainer.hpp"

namespace rotenc {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

constexpr const char* kVersion = "0.1.0";

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string hash_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::uint64_t h = 1469598103934665603ULL;
  char buffer[1 << 16];
  while (in) {
    in.read(buffer, sizeof(buffer));
    for (std::streamsize i = 0; i < in.gcount(); ++i) h = (h ^ static_cast<unsigned char>(buffer[i])) * 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

void require_file(const fs::path& path, const char* what) {
  if (!fs::is_regular_file(path)) throw Error(ErrorCode::IoError, std::string(what) + " not found: " + path.string());
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(ErrorCode::IoError, "cannot create output directory " + dir.string());
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  return out;
}

const char* align_name(AlignMode mode) {
  switch (mode) {
    case AlignMode::none: return "none";
    case AlignMode::pre: return "pre";
    case AlignMode::post: return "post";
  }
  return "none";
}

AlignMode parse_align(const std::string& s) {
  if (s == "none") return AlignMode::none;
  if (s == "pre") return AlignMode::pre;
  if (s == "post") return AlignMode::post;
  throw Error(ErrorCode::InvalidConfig, "unknown align mode '" + s + "' (none, pre, post)");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

/// Collects what a command read, wrote and how long it took.
class Manifest {
 public:
  explicit Manifest(std::string command) : start_(Clock::now()) {
    doc_["command"] = std::move(command);
    doc_["version"] = kVersion;
  }

  void input(const std::string& role, const fs::path& path) {
    doc_["inputs"][role] = ordered_json{{"path", path.string()}, {"fnv1a64", hash_file(path)},
                                        {"bytes", static_cast<std::uint64_t>(fs::file_size(path))}};
  }
  void output(const fs::path& path) { doc_["outputs"].push_back(path.string()); }
  void set(const std::string& key, ordered_json value) { doc_[key] = std::move(value); }
  void timing(const std::string& key, double seconds) { doc_["timings"][key] = seconds; }

  void write(const fs::path& dir) {
    const fs::path path = dir / "manifest.json";
    output(path);
    timing("total_seconds", seconds_since(start_));
    auto out = open_output(path);
    out << doc_.dump(2) << '\n';
  }

 private:
  ordered_json doc_;
  Clock::time_point start_;
};

struct Common {
  std::string out_dir;
  std::size_t threads = 1;
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--out", common.out_dir, "Output directory")->required();
  cmd->add_option("--threads", common.threads, "Worker threads for inference passes")->check(CLI::PositiveNumber);
}

std::vector<MoleculeRecord> load_records(const std::string& path, Manifest& manifest, const char* role = "data") {
  require_file(path, "dataset");
  manifest.input(role, path);
  return load_dataset(path);
}

Checkpoint load_model(const std::string& path, Manifest& manifest) {
  require_file(path, "checkpoint");
  manifest.input("checkpoint", path);
  return load_checkpoint(fs::path(path));
}

void write_metrics_header(std::ostream& out, const std::vector<std::string>& tasks) {
  for (const std::string& t : tasks) out << "\tmae_" << t << "\trmse_" << t << "\tr2_" << t;
}

void write_metrics_row(std::ostream& out, const Metrics& m) {
  for (std::size_t t = 0; t < m.tasks.size(); ++t) {
    const auto i = static_cast<Eigen::Index>(t);
    out << '\t' << fmt(m.mae(i)) << '\t' << fmt(m.rmse(i)) << '\t' << fmt(m.r2(i));
  }
}

// ---------------------------------------------------------------------------

struct ConvertArgs {
  Common common;
  std::string xyz;
  std::string targets;
  std::string delimiter = "auto";
};

int cmd_convert(const ConvertArgs& a, std::ostream& out) {
  Manifest manifest("convert");
  require_file(a.xyz, "xyz file");
  require_file(a.targets, "targets table");
  manifest.input("xyz", a.xyz);
  manifest.input("targets", a.targets);
  char delimiter = '\0';
  if (a.delimiter == "tab") delimiter = '\t';
  else if (a.delimiter == "comma") delimiter = ',';
  else if (a.delimiter != "auto") throw Error(ErrorCode::InvalidConfig, "--delimiter must be auto, tab or comma");
  const auto records = convert_xyz(a.xyz, a.targets, delimiter);
  const fs::path dir(a.common.out_dir);
  ensure_directory(dir);
  write_dataset(dir / "records.jsonl", records);
  manifest.output(dir / "records.jsonl");
  manifest.set("records", records.size());
  manifest.write(dir);
  out << "wrote " << records.size() << " records to " << (dir / "records.jsonl").string() << '\n';
  return 0;
}

struct SynthArgs {
  Common common;
  std::size_t count = 200;
  std::uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  Manifest manifest("synth");
  const auto records = synthetic_dataset(a.count, a.seed);
  const fs::path dir(a.common.out_dir);
  ensure_directory(dir);
  write_dataset(dir / "records.jsonl", records);
  manifest.output(dir / "records.jsonl");
  manifest.set("seeds", ordered_json{{"seed", a.seed}});
  manifest.set("records", records.size());
  manifest.write(dir);
  out << "wrote " << records.size() << " synthetic records to " << (dir / "records.jsonl").string() << '\n';
  return 0;
}

struct TrainArgs {
  Common common;
  std::string config;
  std::string data;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::string ablate = "none";
  bool all_folds = false;
  bool quiet = false;
};

TrainConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides,
                           std::optional<std::uint64_t> seed, Manifest& manifest) {
  json tree = json::object();
  if (!path.empty()) {
    require_file(path, "config file");
    manifest.input("config", path);
    std::ifstream in(path);
    try {
      tree = json::parse(in);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::InvalidConfig, "config " + path + " is not valid JSON: " + e.what());
    }
  }
  for (const std::string& o : overrides) apply_override(tree, o);
  TrainConfig config = train_config_from_json(tree);
  if (seed) config.seed = *seed;
  return config;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  Manifest manifest("train");
  TrainConfig config = resolve_config(a.config, a.overrides, a.seed, manifest);
  const Ablation ablation = parse_ablation(a.ablate);
  config.model = apply_ablation(config.model, ablation);
  config.validate();
  const auto records = load_records(a.data, manifest);

  const fs::path dir(a.common.out_dir);
  ensure_directory(dir);
  manifest.set("config", to_json(config));
  manifest.set("ablation", to_string(ablation));
  manifest.set("seeds", ordered_json{{"seed", config.seed}, {"split_seed", config.split.seed},
                                     {"inference_seed", config.inference_seed}});
  manifest.set("threads", a.common.threads);

  auto metrics = open_output(dir / "metrics.tsv");
  TrainOptions options;
  options.threads = a.common.threads;
  bool header_written = false;
  std::vector<std::string> tasks;
  options.on_epoch = [&](const EpochRecord& r) {
    if (!header_written) {
      metrics << "epoch\ttrain_loss\ttrain_mse\ttrain_l1\ttrain_eval_mse\tval_mse";
      write_metrics_header(metrics, r.val_metrics.tasks);
      metrics << "\tbest\n";
      header_written = true;
    }
    metrics << r.epoch << '\t' << fmt(r.train_loss) << '\t' << fmt(r.train_mse) << '\t' << fmt(r.train_l1) << '\t'
            << fmt(r.train_eval_mse) << '\t' << fmt(r.val_mse);
    write_metrics_row(metrics, r.val_metrics);
    metrics << '\t' << (r.best ? 1 : 0) << '\n';
    metrics.flush();
    if (!a.quiet) {
      out << "epoch " << r.epoch << " train_loss " << fmt(r.train_loss) << " val_mse " << fmt(r.val_mse)
          << (r.best ? " *" : "") << '\n';
    }
  };

  const auto start = Clock::now();
  TrainResult result = train(config, records, options);
  manifest.timing("train_seconds", seconds_since(start));
  manifest.output(dir / "metrics.tsv");

  save_checkpoint(dir / "checkpoint.bin", result.model, config);
  manifest.output(dir / "checkpoint.bin");
  manifest.set("fused_width", result.model.config().fused_width());
  manifest.set("best_epoch", result.best_epoch);
  manifest.set("initial_train_mse", result.initial_train_mse);

  if (a.all_folds) {
    if (config.split.mode != SplitMode::kfold) throw Error(ErrorCode::InvalidSplit, "--all-folds needs a kfold split");
    TrainOptions cv_options;
    cv_options.threads = a.common.threads;
    const auto cv_start = Clock::now();
    const CrossValidationResult cv = cross_validate(config, records, cv_options);
    manifest.timing("cross_validation_seconds", seconds_since(cv_start));
    auto cv_out = open_output(dir / "cv.tsv");
    cv_out << "fold";
    write_metrics_header(cv_out, cv.mean.tasks);
    cv_out << '\n';
    for (std::size_t f = 0; f < cv.folds.size(); ++f) {
      cv_out << f;
      write_metrics_row(cv_out, cv.folds[f]);
      cv_out << '\n';
    }
    cv_out << "mean";
    write_metrics_row(cv_out, cv.mean);
    cv_out << '\n';
    manifest.output(dir / "cv.tsv");
  }
  manifest.write(dir);
  out << "checkpoint " << (dir / "checkpoint.bin").string() << " (best epoch " << result.best_epoch << ", d_u "
      << result.model.config().fused_width() << ")\n";
  return 0;
}

struct EvalArgs {
  Common common;
  std::string checkpoint;
  std::string data;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  Manifest manifest("eval");
  const Checkpoint ck = load_model(a.checkpoint, manifest);
  const auto records = load_records(a.data, manifest);
  const fs::path dir(a.common.out_dir);
  ensure_directory(dir);
  const auto start = Clock::now();
  const Eigen::MatrixXd pred = ck.model.predict(records, std::nullopt, a.common.threads);
  manifest.timing("predict_seconds", seconds_since(start));
  Eigen::MatrixXd targets(pred.rows(), pred.cols());
  for (std::size_t i = 0; i < records.size(); ++i) {
    targets.row(static_cast<Eigen::Index>(i)) = target_vector(records[i], ck.model.tasks());
  }
  const Metrics m = compute_metrics(pred, targets, ck.model.tasks());

  auto metrics = open_output(dir / "eval.tsv");
  metrics << "task\tmae\trmse\tr2\tn\n";
  for (std::size_t t = 0; t < m.tasks.size(); ++t) {
    const auto i = static_cast<Eigen::Index>(t);
    metrics << m.tasks[t] << '\t' << fmt(m.mae(i)) << '\t' << fmt(m.rmse(i)) << '\t' << fmt(m.r2(i)) << '\t'
            << records.size() << '\n';
    out << m.tasks[t] << ": MAE " << fmt(m.mae(i)) << " RMSE " << fmt(m.rmse(i)) << " R2 " << fmt(m.r2(i)) << '\n';
  }
  manifest.output(dir / "eval.tsv");

  auto predictions = open_output(dir / "predictions.tsv");
  predictions << "id";
  for (const std::string& t : ck.model.tasks()) predictions << '\t' << t << "\tpred_" << t;
  predictions << '\n';
  for (std::size_t i = 0; i < records.size(); ++i) {
    predictions << records[i].id;
    for (Eigen::Index t = 0; t < pred.cols(); ++t) {
      predictions << '\t' << fmt(targets(static_cast<Eigen::Index>(i), t)) << '\t' << fmt(pred(static_cast<Eigen::Index>(i), t));
    }
    predictions << '\n';
  }
  manifest.output(dir / "predictions.tsv");
  manifest.set("config", to_json(ck.train_config));
  manifest.set("seeds", ordered_json{{"inference_seed", ck.model.inference_seed()}});
  manifest.write(dir);
  return 0;
}

struct InvarianceArgs {
  Common common;
  std::string checkpoint;
  std::string data;
  std::size_t rotations = 100;
  std::size_t molecules = 0;
  std::uint64_t seed = 0;
  std::string align_modes;
};

std::vector<MoleculeRecord> limit(std::vector<MoleculeRecord> records, std::size_t count) {
  if (count > 0 && records.size() > count) records.resize(count);
  return records;
}

int cmd_invariance(const InvarianceArgs& a, std::ostream& out) {
  if (a.rotations < 2) throw Error(ErrorCode::InvalidInput, "--rotations must be at least 2");
  Manifest manifest("invariance");
  const Checkpoint ck = load_model(a.checkpoint, manifest);
  const auto records = limit(load_records(a.data, manifest), a.molecules);
  std::vector<AlignMode> modes;
  if (a.align_modes.empty()) {
    modes.push_back(ck.model.inference_alignment());
  } else {
    for (const std::string& m : split_list(a.align_modes)) modes.push_back(parse_align(m));
  }
  const fs::path dir(a.common.out_dir);
  ensure_directory(dir);
  auto report = open_output(dir / "invariance.tsv");
  report << "align_mode\tmean_dev\tmax_dev\tn_molecules\tn_rotations\tk\tseconds\n";
  for (AlignMode mode : modes) {
    const auto start = Clock::now();
    const InvarianceReport r = measure_invariance(ck.model, records, a.rotations, a.seed, mode, a.common.threads);
    const double secs = seconds_since(start);
    report << align_name(mode) << '\t' << fmt(r.mean_dev) << '\t' << fmt(r.max_dev) << '\t' << r.n_molecules << '\t'
           << r.n_rotations << '\t' << ck.model.config().encoder.k << '\t' << fmt(secs) << '\n';
    out << align_name(mode) << ": mean " << std::fixed << std::setprecision(4) << r.mean_dev << " max " << r.max_dev
        << std::defaultfloat << '\n';
    manifest.timing(std::string("invariance_") + align_name(mode) + "_seconds", secs);
  }
  manifest.output(dir / "invariance.tsv");
  manifest.set("seeds", ordered_json{{"rotation_seed", a.seed}, {"inference_seed", ck.model.inference_seed()}});
  manifest.set("config", to_json(ck.train_config));
  manifest.write(dir);
  return 0;
}

struct SweepArgs {
  Common common;
  std::string checkpoint;
  std::string config;
  std::string data;
  std::string ks = "2,4,8,16,32,64";
  bool train = false;
  std::size_t rotations = 10;
  std::size_t molecules = 20;
  std::uint64_t seed = 0;
  std::vector<std::string> overrides;
};

int cmd_sweep_k(const SweepArgs& a, std::ostream& out, std::ostream& err) {
  Manifest manifest("sweep-k");
  std::vector<std::size_t> ks;
  std::set<std::size_t> seen;
  for (const std::string& item : split_list(a.ks)) {
    std::size_t k = 0;
    try {
      std::size_t used = 0;
      k = std::stoul(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidConfig, "--k entries must be positive integers, got '" + item + "'");
    }
    if (k < 1) throw Error(ErrorCode::InvalidConfig, "--k entries must be positive");
    if (!seen.insert(k).second) {
      err << "warning: duplicate k = " << k << " ignored\n";
      continue;
    }
    ks.push_back(k);
  }
  if (ks.empty()) throw Error(ErrorCode::InvalidConfig, "--k lists no values");
  std::sort(ks.begin(), ks.end());

  const auto records = load_records(a.data, manifest);
  const fs::path dir(a.common.out_dir);
  ensure_directory(dir);

  std::optional<Checkpoint> ck;
  TrainConfig config;
  std::vector<MoleculeRecord> eval_records = records;
  if (a.train) {
    config = resolve_config(a.config, a.overrides, a.seed, manifest);
    const std::vector<Fold> folds = split(records.size(), config.split);
    eval_records = select(records, folds.at(config.split.mode == SplitMode::kfold ? config.split.fold : 0).test);
  } else {
    if (a.checkpoint.empty()) throw Error(ErrorCode::InvalidInput, "sweep-k needs --checkpoint, or --train with --config");
    ck.emplace(load_model(a.checkpoint, manifest));
    config = ck->train_config;
  }
  const auto probe = limit(eval_records, a.molecules);

  struct Row {
    std::size_t k;
    Metrics metrics;
    double invariance;
    double seconds;
  };
  std::vector<Row> rows;
  for (std::size_t k : ks) {
    const auto start = Clock::now();
    std::optional<Model> model;
    if (a.train) {
      TrainConfig c = config;
      c.model.encoder.k = k;
      model.emplace(train(c, records, TrainOptions{a.common.threads, {}}).model);
    } else {
      model.emplace(ck->model);
      model->set_view_count(k);
    }
    const Metrics m = evaluate(*model, eval_records, a.common.threads);
    const double secs = seconds_since(start);
    const InvarianceReport inv = measure_invariance(*model, probe, std::max<std::size_t>(2, a.rotations), a.seed,
                                                    std::nullopt, a.common.threads);
    rows.push_back({k, m, inv.mean_dev, secs});
    out << "k=" << k << " seconds " << fmt(secs) << " invariance " << fmt(inv.mean_dev) << '\n';
  }

  auto table = open_output(dir / "sweep_k.tsv");
  table << "k\trelative_mae";
  write_metrics_header(table, rows.front().metrics.tasks);
  table << "\tinvariance_mean\tseconds\n";
  for (const Row& r : rows) {
    double rel = 0.0;
    const auto& base = rows.front().metrics.mae;
    for (Eigen::Index t = 0; t < base.size(); ++t) rel += base(t) > 0.0 ? r.metrics.mae(t) / base(t) : 1.0;
    rel /= static_cast<double>(base.size());
    table << r.k << '\t' << fmt(rel);
    write_metrics_row(table, r.metrics);
    table << '\t' << fmt(r.invariance) << '\t' << fmt(r.seconds) << '\n';
  }
  manifest.output(dir / "sweep_k.tsv");
  manifest.set("mode", a.train ? "train" : "eval");
  manifest.set("k_values", ks);
  manifest.set("config", to_json(config));
  manifest.set("seeds", ordered_json{{"seed", config.seed}, {"rotation_seed", a.seed}});
  manifest.write(dir);
  return 0;
}

struct AlignArgs {
  Common common;
  std::string data;
};

int cmd_align(const AlignArgs& a, std::ostream& out) {
  Manifest manifest("align");
  auto records = load_records(a.data, manifest);
  const fs::path dir(a.common.out_dir);
  ensure_directory(dir);
  auto sidecar = open_output(dir / "degenerate.tsv");
  sidecar << "id\treason\tlambda1\tlambda2\tlambda3\n";
  std::size_t degenerate = 0;
  for (MoleculeRecord& r : records) {
    if (r.coords.rows() < 2) {
      r.coords = center_cloud(r.cloud()).cloud.coords;
      sidecar << r.id << "\ttoo_few_points\t0\t0\t0\n";
      ++degenerate;
      continue;
    }
    const AlignmentResult<double> result = canonical_align(r.cloud());
    r.coords = result.aligned.coords;
    if (result.degenerate) {
      const bool spectrum = is_degenerate_spectrum(result.eigenvalues, AlignmentOptions<double>{}.degenerate_tol);
      sidecar << r.id << '\t' << (spectrum ? "repeated_eigenvalues" : "ambiguous_signs") << '\t'
              << fmt(result.eigenvalues(0)) << '\t' << fmt(result.eigenvalues(1)) << '\t' << fmt(result.eigenvalues(2))
              << '\n';
      ++degenerate;
    }
  }
  write_dataset(dir / "aligned.jsonl", records);
  manifest.output(dir / "aligned.jsonl");
  manifest.output(dir / "degenerate.tsv");
  manifest.set("records", records.size());
  manifest.set("degenerate", degenerate);
  manifest.write(dir);
  out << "aligned " << records.size() << " records, " << degenerate << " degenerate\n";
  return 0;
}

struct ImportanceArgs {
  Common common;
  std::string checkpoint;
  std::string data;
  std::string id;
  std::string task;
};

int cmd_importance(const ImportanceArgs& a, std::ostream& out) {
  Manifest manifest("importance");
  const Checkpoint ck = load_model(a.checkpoint, manifest);
  const auto records = load_records(a.data, manifest);
  auto it = std::find_if(records.begin(), records.end(), [&](const MoleculeRecord& r) { return r.id == a.id; });
  if (it == records.end()) throw Error(ErrorCode::InvalidInput, "no molecule with id '" + a.id + "' in " + a.data);

  const auto& tasks = ck.model.tasks();
  std::size_t task = 0;
  if (!a.task.empty()) {
    auto t = std::find(tasks.begin(), tasks.end(), a.task);
    if (t != tasks.end()) {
      task = static_cast<std::size_t>(t - tasks.begin());
    } else {
      std::size_t used = 0;
      try {
        task = std::stoul(a.task, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != a.task.size() || task >= tasks.size()) {
        throw Error(ErrorCode::InvalidInput, "unknown task '" + a.task + "'");
      }
    }
  }
  const AtomImportance imp = atom_importance(ck.model, *it, task);
  const fs::path dir(a.common.out_dir);
  ensure_directory(dir);
  auto table = open_output(dir / "importance.tsv");
  table << "atom\tatomic_number\tx\ty\tz\tscore\tcoordinate_gradient\n";
  for (Eigen::Index i = 0; i < imp.scores.size(); ++i) {
    table << i << '\t' << it->atomic_numbers[static_cast<std::size_t>(i)] << '\t' << fmt(it->coords(i, 0)) << '\t'
          << fmt(it->coords(i, 1)) << '\t' << fmt(it->coords(i, 2)) << '\t' << fmt(imp.scores(i)) << '\t'
          << fmt(imp.coordinate_gradient(i)) << '\n';
  }
  manifest.output(dir / "importance.tsv");
  manifest.set("molecule", a.id);
  manifest.set("task", tasks[task]);
  manifest.set("seeds", ordered_json{{"inference_seed", ck.model.inference_seed()}});
  manifest.write(dir);
  out << "importance for " << a.id << " (" << tasks[task] << ") written to " << (dir / "importance.tsv").string() << '\n';
  return 0;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ShapeError:
    case ErrorCode::NotScalar:
    case ErrorCode::StaleGradient:
    case ErrorCode::Diverged:
      return 1;
    default:
      return 2;
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Rotation-invariant 3D molecular encoder: training and analysis tools", "rotenc"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  ConvertArgs convert;
  auto* c_convert = app.add_subcommand("convert", "Convert multi-frame XYZ plus a targets table to a record file");
  add_common(c_convert, convert.common);
  c_convert->add_option("--xyz", convert.xyz, "Multi-molecule XYZ file")->required();
  c_convert->add_option("--targets", convert.targets, "Targets table, first column = molecule id")->required();
  c_convert->add_option("--delimiter", convert.delimiter, "auto, tab or comma");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Write a synthetic dataset labelled with the radius of gyration");
  add_common(c_synth, synth.common);
  c_synth->add_option("--count", synth.count, "Number of molecules");
  c_synth->add_option("--seed", synth.seed, "Random seed");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train a model and write checkpoint, metrics and manifest");
  add_common(c_train, tr.common);
  c_train->add_option("--config", tr.config, "JSON training config");
  c_train->add_option("--data", tr.data, "Record file")->required();
  c_train->add_option("--seed", tr.seed, "Overrides the config seed");
  c_train->add_option("--set", tr.overrides, "Config override key.path=value (repeatable)");
  c_train->add_option("--ablate", tr.ablate, "none, no-3d, no-pointnet or no-features");
  c_train->add_flag("--all-folds", tr.all_folds, "Also run k-fold cross-validation and write cv.tsv");
  c_train->add_flag("--quiet", tr.quiet, "No per-epoch progress");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Evaluate a checkpoint on a record file");
  add_common(c_eval, ev.common);
  c_eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  c_eval->add_option("--data", ev.data, "Record file")->required();

  InvarianceArgs inv;
  auto* c_inv = app.add_subcommand("invariance", "Measure output deviation under random rotations");
  add_common(c_inv, inv.common);
  c_inv->add_option("--checkpoint", inv.checkpoint, "Checkpoint file")->required();
  c_inv->add_option("--data", inv.data, "Record file")->required();
  c_inv->add_option("--rotations", inv.rotations, "Rotations per molecule (>= 2)");
  c_inv->add_option("--molecules", inv.molecules, "Use only the first N molecules (0 = all)");
  c_inv->add_option("--seed", inv.seed, "Rotation seed");
  c_inv->add_option("--align-modes", inv.align_modes, "Comma-separated: none, pre, post (default: checkpoint mode)");

  SweepArgs sw;
  auto* c_sweep = app.add_subcommand("sweep-k", "Metrics, invariance and runtime as a function of the view count k");
  add_common(c_sweep, sw.common);
  c_sweep->add_option("--checkpoint", sw.checkpoint, "Checkpoint to evaluate at each k");
  c_sweep->add_option("--config", sw.config, "Training config (with --train)");
  c_sweep->add_option("--data", sw.data, "Record file")->required();
  c_sweep->add_option("--k", sw.ks, "Comma-separated view counts");
  c_sweep->add_flag("--train", sw.train, "Train a fresh model at each k instead of re-evaluating a checkpoint");
  c_sweep->add_option("--rotations", sw.rotations, "Rotations for the invariance column");
  c_sweep->add_option("--molecules", sw.molecules, "Molecules for the invariance column");
  c_sweep->add_option("--seed", sw.seed, "Rotation seed (and training seed with --train)");
  c_sweep->add_option("--set", sw.overrides, "Config override key.path=value (with --train)");

  AlignArgs al;
  auto* c_align = app.add_subcommand("align", "Write canonically aligned coordinates and list degenerate molecules");
  add_common(c_align, al.common);
  c_align->add_option("--data", al.data, "Record file")->required();

  ImportanceArgs im;
  auto* c_imp = app.add_subcommand("importance", "Per-atom gradient importance for one molecule");
  add_common(c_imp, im.common);
  c_imp->add_option("--checkpoint", im.checkpoint, "Checkpoint file")->required();
  c_imp->add_option("--data", im.data, "Record file")->required();
  c_imp->add_option("--id", im.id, "Molecule id")->required();
  c_imp->add_option("--task", im.task, "Task name or index (default: first task)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*c_convert) return cmd_convert(convert, out);
    if (*c_synth) return cmd_synth(synth, out);
    if (*c_train) return cmd_train(tr, out);
    if (*c_eval) return cmd_eval(ev, out);
    if (*c_inv) return cmd_invariance(inv, out);
    if (*c_sweep) return cmd_sweep_k(sw, out, err);
    if (*c_align) return cmd_align(al, out);
    if (*c_imp) return cmd_importance(im, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace rotenc

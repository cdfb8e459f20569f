// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "../support.hpp"
#include "rotenc/alignment.hpp"
#include "rotenc/checkpoint.hpp"
#include "rotenc/encoder.hpp"
#include "rotenc/trainer.hpp"

using namespace rotenc;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

std::vector<MoleculeRecord> nondegenerate_molecules(std::size_t n, std::uint64_t seed) {
  std::vector<MoleculeRecord> out;
  for (const MoleculeRecord& r : synthetic_dataset(4 * n, seed)) {
    if (out.size() == n) break;
    const auto a = canonical_align(r.cloud());
    if (a.degenerate) continue;
    const auto& e = a.eigenvalues;
    if (e(0) - e(1) < 0.05 * e(0) || e(1) - e(2) < 0.05 * e(0)) continue;
    out.push_back(r);
  }
  return out;
}

Model random_model(ModelConfig config, const std::vector<MoleculeRecord>& records, std::uint64_t seed) {
  return Model(config, Vocabulary({1, 6, 7, 8}), task_names(records), edge_width_for(records, config.graph), seed, 7);
}

Outcome strict_invariance() {
  const auto mols = nondegenerate_molecules(50, 101);
  ModelConfig c;
  c.encoder.align_mode = AlignMode::post;
  const Model model = random_model(c, mols, 1);
  const InvarianceReport r = measure_invariance(model, mols, 100, 5);
  return {mols.size() == 50 && r.mean_dev <= 1e-9 && r.max_dev <= 1e-9,
          "molecules=" + std::to_string(mols.size()) + " rotations=100 mean=" + num(r.mean_dev) + " max=" + num(r.max_dev) +
              " (tol 1e-9)"};
}

Outcome deviation_scaling() {
  const auto mols = synthetic_dataset(24, 202);
  ModelConfig c;
  c.encoder.k = 4;
  Model model = random_model(c, mols, 2);
  const double dev4 = measure_invariance(model, mols, 16, 6).mean_dev;
  model.set_view_count(64);
  const double dev64 = measure_invariance(model, mols, 16, 6).mean_dev;
  const double ratio = dev64 / dev4;
  return {ratio >= 0.125 && ratio <= 0.5, "molecules=24 dev(k=4)=" + num(dev4) + " dev(k=64)=" + num(dev64) +
                                              " ratio=" + num(ratio) + " (range [0.125, 0.5], ideal 0.25)"};
}

Outcome haar_sampler() {
  const auto rs = sample_rotations({4096, 303, SamplingMode::haar_random});
  Matrix3<double> sum = Matrix3<double>::Zero();
  double worst_ortho = 0.0, worst_det = 0.0;
  for (const auto& r : rs) {
    sum += r.matrix();
    worst_ortho = std::max(worst_ortho, orthogonality_error(r.matrix()));
    worst_det = std::max(worst_det, std::abs(r.matrix().determinant() - 1.0));
  }
  const double mean = (sum / 4096.0).cwiseAbs().maxCoeff();
  return {mean <= 0.05 && worst_ortho <= 1e-12 && worst_det <= 1e-12,
          "N=4096 max|mean entry|=" + num(mean) + " (tol 0.05) max orthogonality error=" + num(worst_ortho) +
              " max |det-1|=" + num(worst_det) + " (tol 1e-12)"};
}

Outcome alignment_invariance() {
  double worst_rot = 0.0, worst_idem = 0.0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const PointCloudd cloud = testing_support::nondegenerate_cloud(4 + s % 9, 404 + s);
    const auto base = canonical_align(cloud);
    for (const auto& r : sample_rotations({100, 5000 + s, SamplingMode::haar_random})) {
      const auto other = canonical_align(apply_rotation(cloud, r));
      worst_rot = std::max(worst_rot, (other.aligned.coords - base.aligned.coords).cwiseAbs().maxCoeff());
    }
    const auto twice = canonical_align(base.aligned);
    worst_idem = std::max(worst_idem, (twice.aligned.coords - base.aligned.coords).cwiseAbs().maxCoeff());
  }
  return {worst_rot <= 1e-6 && worst_idem <= 1e-9, "clouds=200 rotations=100 max rotation deviation=" + num(worst_rot) +
                                                       " (tol 1e-6) max idempotence deviation=" + num(worst_idem) +
                                                       " (tol 1e-9)"};
}

Outcome chirality() {
  EncoderConfig c;
  c.align_mode = AlignMode::post;
  const Vocabulary vocab({1, 6, 7, 8});
  ModelState state;
  Rng rng(505);
  init_encoder_parameters(c, vocab.size(), state, rng);
  double min_distance = std::numeric_limits<double>::infinity();
  double worst_edge = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const PointCloudd cloud = testing_support::nondegenerate_cloud(4 + s % 5, 600 + s);
    const PointCloudd image = mirror(cloud);
    const double d = (encode(cloud, vocab, state, c, 7) - encode(image, vocab, state, c, 7)).norm();
    min_distance = std::min(min_distance, d);
    const MolecularGraph ga = build_graph(testing_support::record_from(cloud, "a", 0.0), GraphOptions{});
    const MolecularGraph gb = build_graph(testing_support::record_from(image, "b", 0.0), GraphOptions{});
    if (ga.edges != gb.edges) return {false, "mirror image changed the edge set"};
    if (ga.edge_features.size() > 0) {
      worst_edge = std::max(worst_edge, (ga.edge_features - gb.edge_features).cwiseAbs().maxCoeff());
    }
  }
  return {min_distance > 1e-3 && worst_edge <= 1e-12, "pairs=20 min fingerprint distance=" + num(min_distance) +
                                                          " (need > 1e-3) max RBF edge difference=" + num(worst_edge) +
                                                          " (tol 1e-12)"};
}

Outcome gradient_correctness() {
  const auto data = synthetic_dataset(6, 707);
  Model model = random_model(ModelConfig{}, data, 3);
  // Generic weights so every message parameter receives gradient.
  Rng rng(708);
  for (ad::Index l = 0; l < model.config().gnn.layers; ++l) {
    const std::string name = "gnn.layer" + std::to_string(l) + ".message.w2";
    const ad::Value& w = model.state().param(name);
    w.data_mut() = random_normal(w.rows(), w.cols(), 0.1, rng);
  }
  std::vector<Sample> samples;
  Eigen::MatrixXd target(static_cast<Eigen::Index>(data.size()), 1);
  for (std::size_t i = 0; i < data.size(); ++i) {
    samples.push_back(model.prepare(data[i], AlignMode::none));
    target(static_cast<Eigen::Index>(i), 0) = data[i].targets.at("rg");
  }
  std::vector<const Sample*> batch;
  for (const auto& s : samples) batch.push_back(&s);
  std::vector<std::vector<Rotationd>> views;
  for (std::size_t i = 0; i < batch.size(); ++i) views.push_back(model.training_views(900 + i));
  const ad::Value y = ad::Value::constant(target);
  auto loss = [&] {
    const ForwardOutput f = model.forward(batch, views, true);
    return total_loss(f.loss_prediction, y, f.loss_fused, model.config().lambda).total;
  };
  const ad::GradientCheckResult r = ad::gradient_check(loss, model.state().parameters, 1e-5, 50, 709);
  return {r.probes == 50 && r.max_rel_err <= 1e-4, "probes=" + std::to_string(r.probes) + " skipped=" +
                                                       std::to_string(r.skipped) + " max relative error=" +
                                                       num(r.max_rel_err) + " (tol 1e-4)"};
}

Outcome exact_symmetries() {
  const auto mols = synthetic_dataset(20, 808);
  const Model model = random_model(ModelConfig{}, mols, 4);
  const Eigen::MatrixXd base = model.predict(mols);
  std::vector<MoleculeRecord> permuted, moved;
  Rng rng(809);
  for (std::size_t i = 0; i < mols.size(); ++i) {
    permuted.push_back(testing_support::permute_atoms(mols[i], testing_support::random_permutation(mols[i].atomic_numbers.size(), 810 + i)));
    MoleculeRecord m = mols[i];
    m.coords.rowwise() += Eigen::RowVector3d(20.0 * rng.normal(), 20.0 * rng.normal(), 20.0 * rng.normal());
    moved.push_back(m);
  }
  const bool exact = testing_support::bitwise_equal(model.predict(permuted), base);
  const double shift = (model.predict(moved) - base).cwiseAbs().maxCoeff();
  return {exact && shift <= 1e-10, std::string("molecules=20 permutation ") + (exact ? "bit-identical" : "DIFFERS") +
                                       " translation max deviation=" + num(shift) + " (tol 1e-10)"};
}

Outcome learning_smoke() {
  const auto data = synthetic_dataset(250, 909);
  TrainConfig c;
  c.epochs = 50;
  c.batch_size = 32;
  c.seed = 11;
  c.split.mode = SplitMode::holdout;
  c.split.train_fraction = 0.8;
  const TrainResult r = train(c, data);
  const double final_mse = r.history.back().train_eval_mse;
  const Metrics held_out = evaluate(r.model, select(data, r.fold.test));
  const bool pass = r.fold.train.size() == 200 && r.fold.test.size() == 50 && final_mse <= 0.5 * r.initial_train_mse &&
                    held_out.r2(0) > 0.3;
  return {pass, "train=" + std::to_string(r.fold.train.size()) + " held-out=" + std::to_string(r.fold.test.size()) +
                    " initial train MSE=" + num(r.initial_train_mse) + " final=" + num(final_mse) +
                    " (need <= 50%) held-out R2=" + num(held_out.r2(0)) + " (need > 0.3)"};
}

Outcome ablations() {
  const auto data = synthetic_dataset(60, 1010);
  TrainConfig base;
  base.epochs = 2;
  base.batch_size = 16;
  base.model.engineered_features = true;
  base.split.mode = SplitMode::holdout;
  std::vector<ad::Index> widths;
  std::string detail;
  bool pass = true;
  for (Ablation a : {Ablation::none, Ablation::no_features, Ablation::no_3d, Ablation::no_pointnet}) {
    TrainConfig c = base;
    c.model = apply_ablation(base.model, a);
    const TrainResult r = train(c, data);
    const ad::Index d_u = r.model.state().param("head.w1").rows();
    const bool ok = std::isfinite(r.history.back().train_loss) && d_u == c.model.fused_width() &&
                    r.model.state().parameters.contains("encoder.embedding") == c.model.use_3d &&
                    r.model.state().parameters.contains("encoder.conv0.weight") ==
                        (c.model.use_3d && c.model.encoder.use_pointwise);
    pass = pass && ok;
    for (ad::Index w : widths) pass = pass && w != d_u;
    widths.push_back(d_u);
    detail += to_string(a) + ":d_u=" + std::to_string(d_u) + (ok ? "" : "(invalid)") + " ";
  }
  return {pass, detail + "(all distinct)"};
}

Outcome determinism() {
  const auto data = synthetic_dataset(60, 1111);
  TrainConfig c;
  c.epochs = 4;
  c.batch_size = 16;
  c.seed = 12;
  c.model.encoder.k = 8;
  c.split.mode = SplitMode::holdout;
  const TrainResult a = train(c, data);
  const TrainResult b = train(c, data);
  bool same_history = a.history.size() == b.history.size();
  for (std::size_t e = 0; same_history && e < a.history.size(); ++e) {
    same_history = a.history[e].train_loss == b.history[e].train_loss && a.history[e].val_mse == b.history[e].val_mse &&
                   a.history[e].train_eval_mse == b.history[e].train_eval_mse;
  }
  bool same_params = true;
  const NamedTensors sa = a.model.state().snapshot(), sb = b.model.state().snapshot();
  for (const auto& [name, t] : sa) same_params = same_params && testing_support::bitwise_equal(t, sb.at(name));

  const auto path = std::filesystem::temp_directory_path() / ("rotenc_acceptance_" + std::to_string(::getpid()) + ".bin");
  save_checkpoint(path, a.model, c);
  const Checkpoint loaded = load_checkpoint(path);
  std::filesystem::remove(path);
  const bool same_predictions = testing_support::bitwise_equal(loaded.model.predict(data), a.model.predict(data));
  return {same_history && same_params && same_predictions,
          std::string("loss curves ") + (same_history ? "identical" : "DIFFER") + ", parameters " +
              (same_params ? "identical" : "DIFFER") + ", checkpoint predictions " +
              (same_predictions ? "identical" : "DIFFER")};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_seconds;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "strict invariance after alignment", 120, strict_invariance},
      {2, "deviation scales as 1/sqrt(k)", 300, deviation_scaling},
      {3, "Haar sampler soundness", 10, haar_sampler},
      {4, "alignment invariance and idempotence", 60, alignment_invariance},
      {5, "chirality separation", 60, chirality},
      {6, "gradient correctness", 60, gradient_correctness},
      {7, "exact permutation and translation symmetry", 60, exact_symmetries},
      {8, "learning smoke test", 600, learning_smoke},
      {9, "ablation machinery", 300, ablations},
      {10, "determinism and persistence", 300, determinism},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto start = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    const bool in_time = secs <= c.budget_seconds;
    const bool pass = o.pass && in_time;
    if (!pass) ++failures;
    std::cout << (pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << o.detail << "; "
              << num(secs) << "s of " << c.budget_seconds << "s" << (in_time ? "" : " OVER BUDGET") << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failures)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failures == 0 ? 0 : 1;
}

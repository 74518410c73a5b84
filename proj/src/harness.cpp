#include "dafc/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

#include "dafc/kernels.hpp"
#include "dafc/metrics.hpp"

namespace dafc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

bool same_bits(double a, double b) {
  if (std::isnan(a) && std::isnan(b)) return true;
  return std::memcmp(&a, &b, sizeof a) == 0;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << text;
}

// Streams of the base seed; each consumer draws from its own generator.
enum Stream : std::uint64_t { kInit = 1, kPretrain = 2, kFcm = 3, kTrain = 4, kShuffle = 5 };

/// Nearest-centroid softmax: logits tau (z.c_j - |c_j|^2 / 2) rank clusters
/// exactly like -|z - c_j|^2.  tau is the inverse of the mean squared
/// distance from each point to its closest centroid.
void init_head(ModelParams& model, const Tensor& z, const Tensor& c) {
  const std::size_t M = z.dim(0), d = z.dim(1), k = c.dim(0);
  Tensor dist({M, k});
  kernels::pairwise_sq_dist(z.data(), c.data(), dist.data(), M, k, d);
  double spread = 0.0;
  for (std::size_t i = 0; i < M; ++i) spread += *std::min_element(dist.ptr() + i * k, dist.ptr() + (i + 1) * k);
  const double tau = 1.0 / std::max(spread / static_cast<double>(M), 1e-12);
  Tensor& w = model.at("head.weight").value;  // d×k
  Tensor& b = model.at("head.bias").value;
  for (std::size_t j = 0; j < k; ++j) {
    double sq = 0.0;
    for (std::size_t q = 0; q < d; ++q) {
      w[q * k + j] = tau * c.at(j, q);
      sq += c.at(j, q) * c.at(j, q);
    }
    b[j] = -0.5 * tau * sq;
  }
}

std::vector<int> predict(ModelParams& model, const Tensor& images) {
  const Tensor p = head_eval(model, encode_eval(model, images));
  return metrics::argmax_rows(p.data(), p.dim(0), p.dim(1));
}

EvalResult score(ModelParams& model, const data::Dataset& ds) {
  if (!ds.truth_labels) return {kNaN, kNaN, kNaN, kNaN};
  metrics::LabelPair pair{predict(model, ds.images), *ds.truth_labels, model.arch.clusters, 0};
  for (int v : pair.truth) pair.k_truth = std::max(pair.k_truth, static_cast<std::size_t>(std::max(v, 0)) + 1);
  const auto s = metrics::score_all(pair);
  return {s.acc, s.ari, s.nmi, 1.0 - s.acc};
}

struct LossInputs {
  const Tensor& x;
  const fuzzy::FuzzyState& state;  // rows matching x
  const TrainConfig& cfg;
  std::size_t epoch, batch;
};

JointLoss batch_losses(Tape& t, ModelParams& model, const LossInputs& in, const ForwardContext& ctx) {
  JointLoss out = joint_loss(t, model, in.x, in.state, {in.cfg.eps_r, in.cfg.beta, nullptr}, ctx);
  if (!std::isfinite(out.rec.value().item())) throw NonFiniteError(in.epoch, in.batch, "L_Rec");
  if (!std::isfinite(out.clu.value().item())) throw NonFiniteError(in.epoch, in.batch, "L_F_clu");
  return out;
}

/// Loss terms of the unaugmented dataset in eval mode, averaged over batches.
void eval_losses(ModelParams& model, const data::Dataset& ds, const fuzzy::FuzzyState& state,
                 const TrainConfig& cfg, std::size_t bs, EpochRow& row) {
  const std::size_t n = ds.size();
  double rec = 0.0, clu = 0.0;
  std::size_t count = 0;
  for (std::size_t s = 0; s < n; s += bs) {
    const std::size_t e = std::min(n, s + bs);
    std::vector<std::size_t> rows(e - s);
    for (std::size_t i = s; i < e; ++i) rows[i - s] = i;
    const Tensor x = ds.images.slice_rows(s, e);
    const fuzzy::FuzzyState st = state.rows(rows);
    Tape t;
    const auto l = batch_losses(t, model, {x, st, cfg, 0, count}, ForwardContext{});
    rec += l.rec.value().item();
    clu += l.clu.value().item();
    ++count;
  }
  row.l_rec = rec / static_cast<double>(count);
  row.l_clu = clu / static_cast<double>(count);
  row.l_total = row.l_rec + row.l_clu;
}

void record(RunReport& report, EpochRow row, const EvalResult& m) {
  row.acc = m.acc;
  row.ari = m.ari;
  row.nmi = m.nmi;
  row.test_error = m.test_error;
  if (report.rows.empty()) {
    report.best_acc = m.acc;
    report.best_ari = m.ari;
    report.best_nmi = m.nmi;
    report.best_epoch = row.epoch;
  } else {
    if (m.acc > report.best_acc) report.best_epoch = row.epoch;
    report.best_acc = std::fmax(report.best_acc, m.acc);
    report.best_ari = std::fmax(report.best_ari, m.ari);
    report.best_nmi = std::fmax(report.best_nmi, m.nmi);
  }
  row.best_acc = report.best_acc;
  row.best_ari = report.best_ari;
  row.best_nmi = report.best_nmi;
  report.rows.push_back(row);
}

std::vector<NamedTensor> state_tensors(const TrainSession& s) {
  std::vector<NamedTensor> extra = {
      {"fuzzy.mu", s.state.mu},
      {"fuzzy.wmat", s.state.wmat},
      {"fuzzy.coeffs", Tensor({3}, {s.state.m, s.state.lambda1, s.state.lambda2})},
  };
  if (s.dataset.normalized()) {
    const std::size_t C = s.dataset.channel_means.size();
    extra.push_back({"data.means", Tensor({C}, s.dataset.channel_means)});
    extra.push_back({"data.stds", Tensor({C}, s.dataset.channel_stds)});
  }
  return extra;
}

const Tensor* find_extra(const Checkpoint& ckpt, const std::string& name) {
  for (const auto& e : ckpt.extra)
    if (e.name == name) return &e.value;
  return nullptr;
}

data::Dataset prepare(const Checkpoint& ckpt, const data::Dataset& ds) {
  const Tensor* means = find_extra(ckpt, "data.means");
  const Tensor* stds = find_extra(ckpt, "data.stds");
  if (!means || !stds || ds.normalized()) return ds;
  return data::normalize(ds, means->vec(), stds->vec());
}

}  // namespace

// ------------------------------------------------------------------- report

std::string RunReport::to_csv() const {
  std::string s =
      "epoch,l_rec,l_clu,l_total,acc,ari,nmi,test_error,best_acc,best_ari,best_nmi,refine_delta,reseeded,wall_ms\n";
  for (const auto& r : rows) {
    s += std::to_string(r.epoch);
    for (double v : {r.l_rec, r.l_clu, r.l_total, r.acc, r.ari, r.nmi, r.test_error, r.best_acc, r.best_ari,
                     r.best_nmi, r.refine_delta})
      s += "," + num(v);
    s += "," + std::to_string(r.reseeded) + "," + num(r.wall_ms) + "\n";
  }
  return s;
}

bool same_results(const RunReport& a, const RunReport& b) {
  if (a.rows.size() != b.rows.size() || a.pretrain_losses.size() != b.pretrain_losses.size()) return false;
  for (std::size_t i = 0; i < a.pretrain_losses.size(); ++i)
    if (!same_bits(a.pretrain_losses[i], b.pretrain_losses[i])) return false;
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const auto &x = a.rows[i], &y = b.rows[i];
    if (x.epoch != y.epoch || x.reseeded != y.reseeded) return false;
    const double xs[] = {x.l_rec, x.l_clu, x.l_total, x.acc, x.ari, x.nmi, x.test_error,
                         x.best_acc, x.best_ari, x.best_nmi, x.refine_delta};
    const double ys[] = {y.l_rec, y.l_clu, y.l_total, y.acc, y.ari, y.nmi, y.test_error,
                         y.best_acc, y.best_ari, y.best_nmi, y.refine_delta};
    for (std::size_t j = 0; j < std::size(xs); ++j)
      if (!same_bits(xs[j], ys[j])) return false;
  }
  return a.best_epoch == b.best_epoch && same_bits(a.best_acc, b.best_acc) && same_bits(a.best_ari, b.best_ari) &&
         same_bits(a.best_nmi, b.best_nmi);
}

NonFiniteError::NonFiniteError(std::size_t e, std::size_t b, std::string t)
    : std::runtime_error("non-finite " + t + " at epoch " + std::to_string(e) + ", batch " + std::to_string(b)),
      epoch(e),
      batch(b),
      term(std::move(t)) {}

// -------------------------------------------------------------------- train

JointLoss joint_loss(Tape& t, ModelParams& model, const Tensor& x, const fuzzy::FuzzyState& state,
                     const JointLossOptions& opt, const ForwardContext& ctx) {
  JointLoss out;
  // Centroids are decoded in eval mode before the batch forward, so neither
  // they nor the loss see the running statistics this batch will update.
  out.decoded_centroids = decode(t, model, t.constant(model.centroids()), ForwardContext{});
  Var xv = t.constant(x);
  out.z = encode(t, model, xv, ctx);
  Var x_hat = decode(t, model, out.z, ctx);
  Var y = cluster_head(t, model, out.z);
  out.labels = fuzzy::PseudoLabelBatch::build(y.value(), opt.eps_r);
  const Tensor& target = opt.targets ? *opt.targets : out.labels.refined;
  out.rec = fuzzy::reconstruction_loss(x_hat, x, y, target, opt.beta);
  if (std::isfinite(out.rec.value().item())) {
    out.cluster = fuzzy::clustering_loss(out.decoded_centroids, x, state);
    out.clu = out.cluster.loss;
    out.total = ops::add(out.rec, out.clu);
  }
  return out;
}

TrainSession run_training(const TrainConfig& cfg, const data::Dataset& input, const TrainHooks& hooks) {
  cfg.validate();
  if (cfg.threads > 0) kernels::set_threads(static_cast<int>(cfg.threads));
  input.validate();

  TrainSession s;
  s.dataset = input;
  if (cfg.normalize && !input.normalized()) {
    auto st = data::channel_stats(input.images);
    for (auto& v : st.stds)
      if (v <= 0.0) v = 1.0;
    s.dataset = data::normalize(input, st.means, st.stds);
  }
  const data::Dataset& ds = s.dataset;
  const std::size_t n = ds.size();

  const std::size_t k = cfg.clusters > 0 ? cfg.clusters : DatasetSpec::parse(cfg.dataset).implied_classes();
  if (k < 2) throw ConfigParseError("cluster count unknown: set clusters in the config");
  if (k > n) throw ConfigParseError("more clusters than samples");
  const auto shape = ds.image_shape();
  ArchConfig arch = ArchConfig::from_preset(cfg.arch, shape[0], shape[1], shape[2], k);
  if (cfg.dropout) arch.dropout = *cfg.dropout;
  Rng init_rng(mix_seed(cfg.seed, kInit));
  s.model = build_model(arch, init_rng);
  ModelParams& model = s.model;

  const auto policy = data::parse_policy(cfg.augment);
  const std::size_t bs = std::min(cfg.batch_size, n);

  if (cfg.pretrain_epochs > 0) {
    RmsProp pre(cfg.pretrain_lr);
    s.report.pretrain_losses =
        pretrain_autoencoder(model, ds.images, {cfg.pretrain_epochs, bs, mix_seed(cfg.seed, kPretrain), policy}, pre);
  }

  // Centroids and dataset-level memberships from fuzzy c-means on the
  // pretrained embeddings; weights from the decoded centroids.
  const auto t0 = std::chrono::steady_clock::now();
  {
    const Tensor z = encode_eval(model, ds.images);
    auto fcm = fuzzy::fcm_fit(z, k, cfg.m, cfg.fcm_restarts, mix_seed(cfg.seed, kFcm));
    model.centroids() = fcm.centroids;
    s.state = fuzzy::FuzzyState::uniform(n, k, cfg.m, cfg.lambda1, cfg.lambda2);
    s.state.mu = std::move(fcm.mu);
    fuzzy::update_weights(decode_eval(model, model.centroids()), s.state);
    init_head(model, z, model.centroids());
  }
  fuzzy::FuzzyState& state = s.state;

  {
    EpochRow row;
    eval_losses(model, ds, state, cfg, bs, row);
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    record(s.report, row, score(model, ds));
    if (hooks.after_epoch) hooks.after_epoch(s.report.rows.back());
  }

  RmsProp opt(cfg.lr);
  Rng rng(mix_seed(cfg.seed, kTrain));
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const auto plan = data::batches(n, {bs, mix_seed(cfg.seed, kShuffle), epoch, false});
    const std::size_t iters = cfg.max_iter > 0 ? std::min(cfg.max_iter, plan.size()) : plan.size();
    EpochRow row;
    row.epoch = epoch;
    std::size_t used = 0;
    for (std::size_t b = 0; b < iters; ++b) {
      const auto& idx = plan[b];
      if (idx.size() < 2) continue;
      auto aug = data::augment(ds.images.gather_rows(idx), policy, rng);
      Tensor x = policy == data::AugmentPolicy::none ? std::move(aug.original) : std::move(aug.combined);
      // A transformed copy shares the membership row of its original.
      std::vector<std::size_t> rows(idx);
      if (policy != data::AugmentPolicy::none) rows.insert(rows.end(), idx.begin(), idx.end());
      if (hooks.before_batch) hooks.before_batch(epoch, b, x);

      fuzzy::FuzzyState batch_state = state.rows(rows);
      Tape t;
      model.zero_grad();
      const auto l = batch_losses(t, model, {x, batch_state, cfg, epoch, b}, ForwardContext{Mode::train, &rng, {}});
      t.backward(l.total);

      // Closed-form step with the network held fixed: memberships, weights,
      // then centroids.  Losses above used the previous state.
      const auto cu = fuzzy::alternate(l.cluster.distances, l.decoded_centroids.value(), l.z.value(),
                                       model.centroids(), batch_state);
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < k; ++j) {
          state.mu.at(idx[r], j) = batch_state.mu.at(r, j);
          state.wmat.at(idx[r], j) = batch_state.wmat.at(r, j);
        }
      model.centroids() = cu.centroids;
      row.reseeded += cu.reseeded.size();

      opt.step(model.params);
      if (!model.all_finite()) throw NonFiniteError(epoch, b, "parameters");

      row.l_rec += l.rec.value().item();
      row.l_clu += l.clu.value().item();
      row.refine_delta += l.labels.mean_refinement();
      ++used;
    }
    const double denom = static_cast<double>(std::max<std::size_t>(used, 1));
    row.l_rec /= denom;
    row.l_clu /= denom;
    row.refine_delta /= denom;
    row.l_total = row.l_rec + row.l_clu;
    const auto m = score(model, ds);
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    record(s.report, row, m);
    if (hooks.after_epoch) hooks.after_epoch(s.report.rows.back());
  }
  return s;
}

RunReport train(const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  const data::Dataset ds = load_dataset(cfg.dataset);
  const std::filesystem::path out(cfg.out);
  std::filesystem::create_directories(out);
  write_text(out / "config.txt", cfg.to_text());
  TrainSession s;
  try {
    s = run_training(cfg, ds, hooks);
  } catch (const NonFiniteError& e) {
    write_text(out / "nonfinite.txt", "epoch = " + std::to_string(e.epoch) + "\nbatch = " +
                                          std::to_string(e.batch) + "\nterm = " + e.term + "\n");
    throw;
  }
  write_text(out / "report.csv", s.report.to_csv());

  nlohmann::json j;
  j["best"] = {{"acc", s.report.best_acc},
               {"ari", s.report.best_ari},
               {"nmi", s.report.best_nmi},
               {"epoch", s.report.best_epoch}};
  const auto& f = s.report.final_row();
  j["final"] = {{"epoch", f.epoch}, {"acc", f.acc},       {"ari", f.ari},         {"nmi", f.nmi},
                {"test_error", f.test_error}, {"l_total", f.l_total}};
  j["pretrain_losses"] = s.report.pretrain_losses;
  for (const auto& [k, v] : cfg.fields()) j["config"][k] = v;
  write_text(out / "report.json", j.dump(2) + "\n");

  save_checkpoint(out / "model.dafc", s.model, state_tensors(s));
  return s.report;
}

// ----------------------------------------------------------------- evaluate

EvalResult evaluate(Checkpoint& ckpt, const data::Dataset& dataset) {
  if (!dataset.truth_labels) throw std::invalid_argument("evaluate: dataset '" + dataset.name + "' has no labels");
  const Shape want = ckpt.model.arch.input_shape();
  if (dataset.image_shape() != want)
    throw ShapeError("evaluate: dataset images " + shape_str(dataset.image_shape()) + " but model expects " +
                     shape_str(want));
  return score(ckpt.model, prepare(ckpt, dataset));
}

EvalResult evaluate(const std::filesystem::path& checkpoint, const std::string& dataset_spec) {
  Checkpoint ckpt = load_checkpoint(checkpoint);
  return evaluate(ckpt, load_dataset(dataset_spec));
}

// -------------------------------------------------------------------- sweep

std::vector<SweepCell> sweep(const TrainConfig& cfg, const Grid& grid, const std::filesystem::path& out_dir) {
  if (grid.size() == 0) throw std::invalid_argument("sweep: grid is empty");
  std::filesystem::create_directories(out_dir);
  std::vector<SweepCell> cells;
  for (const auto& params : grid.cells()) {
    SweepCell cell;
    cell.params = params;
    TrainConfig c = cfg;
    c.out = (out_dir / ("cell_" + std::to_string(cells.size()))).string();
    try {
      for (const auto& [k, v] : params) c.set(k, v);
      cell.report = train(c);
      cell.status = "ok";
    } catch (const std::exception& e) {
      cell.status = "error";
      cell.error = e.what();
    }
    cells.push_back(std::move(cell));
  }

  std::string csv = "cell";
  for (const auto& [k, _] : grid.axes) csv += "," + k;
  csv += ",status,epochs,final_acc,final_ari,final_nmi,best_acc,best_ari,best_nmi,final_l_total,refine_delta,error\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    csv += std::to_string(i);
    for (const auto& [_, v] : c.params) csv += "," + v;
    csv += "," + c.status;
    if (c.status == "ok") {
      const auto& f = c.report.final_row();
      // Mean pseudo-label refinement over the training epochs.
      double delta = 0.0;
      for (std::size_t r = 1; r < c.report.rows.size(); ++r) delta += c.report.rows[r].refine_delta;
      delta /= static_cast<double>(std::max<std::size_t>(c.report.rows.size() - 1, 1));
      csv += "," + std::to_string(f.epoch);
      for (double v : {f.acc, f.ari, f.nmi, c.report.best_acc, c.report.best_ari, c.report.best_nmi, f.l_total, delta})
        csv += "," + num(v);
      csv += ",\n";
    } else {
      std::string err = c.error;
      std::replace(err.begin(), err.end(), '"', '\'');
      std::replace(err.begin(), err.end(), '\n', ' ');
      csv += ",,,,,,,,,,\"" + err + "\"\n";
    }
  }
  write_text(out_dir / "sweep.csv", csv);
  return cells;
}

// ------------------------------------------------------------------- export

void export_embeddings(Checkpoint& ckpt, const data::Dataset& dataset, const std::filesystem::path& path) {
  const data::Dataset ds = prepare(ckpt, dataset);
  const Tensor z = encode_eval(ckpt.model, ds.images);
  const Tensor p = head_eval(ckpt.model, z);
  const std::size_t d = z.dim(1), k = p.dim(1);
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.precision(17);
  os << "index,label";
  for (std::size_t q = 0; q < d; ++q) os << ",z" << q;
  for (std::size_t j = 0; j < k; ++j) os << ",p" << j;
  os << "\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    os << i << "," << (ds.truth_labels ? (*ds.truth_labels)[i] : -1);
    for (std::size_t q = 0; q < d; ++q) os << "," << z.at(i, q);
    for (std::size_t j = 0; j < k; ++j) os << "," << p.at(i, j);
    os << "\n";
  }
  if (!os) throw std::runtime_error("error while writing " + path.string());
}

void export_embeddings(const std::filesystem::path& checkpoint, const std::string& dataset_spec,
                       const std::filesystem::path& path) {
  Checkpoint ckpt = load_checkpoint(checkpoint);
  export_embeddings(ckpt, load_dataset(dataset_spec), path);
}

std::string dataset_spec_near(const std::filesystem::path& checkpoint) {
  const auto cfg_path = checkpoint.parent_path() / "config.txt";
  if (!std::filesystem::exists(cfg_path))
    throw std::runtime_error("no config.txt next to " + checkpoint.string() + "; pass --dataset");
  return load_config(cfg_path).dataset;
}

}  // namespace dafc

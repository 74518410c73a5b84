#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dafc/config.hpp"
#include "dafc/data.hpp"
#include "dafc/fuzzy.hpp"
#include "dafc/network.hpp"

namespace dafc {

/// One line of a training report.  Epoch 0 is the state right after
/// pretraining and centroid initialization (losses evaluated in eval mode);
/// later epochs report the mean over their training batches.  Metric fields
/// are NaN when the dataset carries no labels.
struct EpochRow {
  std::size_t epoch = 0;
  double l_rec = 0.0, l_clu = 0.0, l_total = 0.0;
  double acc = 0.0, ari = 0.0, nmi = 0.0, test_error = 0.0;
  double best_acc = 0.0, best_ari = 0.0, best_nmi = 0.0;  // running maxima
  double refine_delta = 0.0;  // mean |refined - raw| pseudo-label change
  std::size_t reseeded = 0;   // empty clusters re-seeded during the epoch
  double wall_ms = 0.0;
};

struct RunReport {
  std::vector<double> pretrain_losses;
  std::vector<EpochRow> rows;
  double best_acc = 0.0, best_ari = 0.0, best_nmi = 0.0;
  std::size_t best_epoch = 0;  // epoch with the highest Acc

  const EpochRow& final_row() const { return rows.back(); }
  std::string to_csv() const;
};

/// Bitwise equality of every field except wall-clock times (NaN == NaN).
bool same_results(const RunReport& a, const RunReport& b);

class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(std::size_t epoch, std::size_t batch, std::string term);
  std::size_t epoch, batch;
  std::string term;
};

struct TrainHooks {
  /// Sees (and may modify) each training batch before the forward pass.
  std::function<void(std::size_t epoch, std::size_t batch, Tensor& x)> before_batch;
  std::function<void(const EpochRow&)> after_epoch;
};

struct JointLossOptions {
  double eps_r = 0.9;
  double beta = 1.0;
  /// Head targets to use instead of the refined pseudo-labels of this pass.
  const Tensor* targets = nullptr;
};

struct JointLoss {
  Var rec, clu, total;  // clu and total stay invalid when rec is not finite
  fuzzy::PseudoLabelBatch labels;
  fuzzy::ClusteringLoss cluster;
  Var z, decoded_centroids;
};

/// One batch of the joint objective on tape t: reconstruction plus head
/// consistency against refined pseudo-labels, then the fuzzy clustering term
/// against the eval-mode decoded centroids.  state holds the rows of x.
JointLoss joint_loss(Tape& t, ModelParams& model, const Tensor& x, const fuzzy::FuzzyState& state,
                     const JointLossOptions& opt, const ForwardContext& ctx);

struct TrainSession {
  RunReport report;
  ModelParams model;
  fuzzy::FuzzyState state;  // dataset-level memberships and weights (M = N)
  data::Dataset dataset;    // as trained on (normalized when configured)
};

/// Runs the whole pipeline on an already loaded dataset without touching the
/// file system.  Truth labels, if present, are read only by the metric pass.
TrainSession run_training(const TrainConfig& cfg, const data::Dataset& dataset, const TrainHooks& hooks = {});

/// Load cfg.dataset, run, and write report.csv, report.json, config.txt and
/// model.dafc under cfg.out.
RunReport train(const TrainConfig& cfg, const TrainHooks& hooks = {});

struct EvalResult {
  double acc = 0.0, ari = 0.0, nmi = 0.0, test_error = 0.0;
};

/// Normalization statistics stored in a checkpoint are applied first.
EvalResult evaluate(Checkpoint& ckpt, const data::Dataset& dataset);
EvalResult evaluate(const std::filesystem::path& checkpoint, const std::string& dataset_spec);

struct SweepCell {
  std::vector<std::pair<std::string, std::string>> params;
  std::string status;  // "ok" or "error"
  std::string error;
  RunReport report;
};

/// One independent seeded run per grid cell; failures are recorded per cell.
/// Writes sweep.csv under out_dir (cells run in out_dir/cell_<i>).
std::vector<SweepCell> sweep(const TrainConfig& cfg, const Grid& grid, const std::filesystem::path& out_dir);

/// CSV: index, label (-1 if absent), z_0..z_{d-1}, p_0..p_{k-1}.
void export_embeddings(Checkpoint& ckpt, const data::Dataset& dataset, const std::filesystem::path& path);
void export_embeddings(const std::filesystem::path& checkpoint, const std::string& dataset_spec,
                       const std::filesystem::path& path);

/// Dataset spec recorded in the config.txt written next to a checkpoint.
std::string dataset_spec_near(const std::filesystem::path& checkpoint);

}  // namespace dafc

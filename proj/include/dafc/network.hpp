#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dafc/autograd.hpp"
#include "dafc/data.hpp"
#include "dafc/optim.hpp"
#include "dafc/ops.hpp"
#include "dafc/rng.hpp"

namespace dafc {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class PoolKind { none, max, avg };

/// Fixed pooling geometry: max 2/2, avg 4/4.
std::size_t pool_kernel(PoolKind kind);

/// One encoder stage: conv -> [batchnorm] -> relu -> [pool].
struct ConvBlock {
  std::size_t channels = 8;
  std::size_t filter = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
  bool norm = true;
  PoolKind pool = PoolKind::none;

  friend bool operator==(const ConvBlock&, const ConvBlock&) = default;
};

struct ArchConfig {
  std::string preset = "custom";
  std::size_t in_c = 1, in_h = 28, in_w = 28;
  std::vector<ConvBlock> encoder;
  std::vector<std::size_t> fc_widths;  // hidden widths between conv stack and bottleneck
  std::size_t bottleneck = 16;         // d
  double dropout = 0.5;
  std::size_t clusters = 10;           // k

  /// Throws ConfigError listing every violated constraint.
  void validate() const;

  /// Spatial shape (C,H,W) entering encoder block i; i == encoder.size()
  /// gives the conv stack output.
  std::vector<Shape> stage_shapes() const;
  std::size_t flat_features() const;
  Shape input_shape() const { return {in_c, in_h, in_w}; }

  /// Two conv blocks without pooling, one hidden FC layer, d = 16.
  static ArchConfig tiny(std::size_t in_c, std::size_t in_h, std::size_t in_w, std::size_t k);
  /// Conv/BN/ReLU stages with max and average pooling, FC bottleneck and
  /// dropout 0.5, at reduced channel counts.
  static ArchConfig reference(std::size_t in_c, std::size_t in_h, std::size_t in_w, std::size_t k);
  static ArchConfig from_preset(std::string_view name, std::size_t in_c, std::size_t in_h, std::size_t in_w,
                                std::size_t k);

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

/// All network tensors by name: encoder "enc.*", decoder "dec.*", cluster
/// head "head.*", batchnorm running statistics (not trainable) and the
/// bottleneck centroids "centroids" (k×d, not trainable; updated in closed
/// form by the clustering step).
class ModelParams {
 public:
  ArchConfig arch;
  std::vector<Parameter> params;

  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  bool has(std::string_view name) const;
  Parameter& add(std::string name, Tensor value, bool trainable = true);

  Tensor& centroids() { return at("centroids").value; }
  const Tensor& centroids() const { return at("centroids").value; }

  /// Number of trainable scalars.
  std::size_t trainable_count() const;
  bool all_finite() const;
  void zero_grad();
};

/// He-initialized weights, zero biases, unit-Gaussian centroids.
ModelParams build_model(const ArchConfig& cfg, Rng& rng);

/// Per-call forward options.
struct ForwardContext {
  Mode mode = Mode::eval;
  Rng* rng = nullptr;  // required for dropout in train mode
  ops::BatchNormConfig bn{};
};

/// x: B×C×H×W  ->  z: B×d
Var encode(Tape& tape, ModelParams& m, const Var& x, const ForwardContext& ctx);
/// z: B×d  ->  x_hat: B×C×H×W
Var decode(Tape& tape, ModelParams& m, const Var& z, const ForwardContext& ctx);
/// z: B×d  ->  soft labels B×k (linear map + row softmax)
Var cluster_head(Tape& tape, ModelParams& m, const Var& z);

/// Gradient-free eval-mode helpers over a full tensor, processed in chunks.
Tensor encode_eval(ModelParams& m, const Tensor& x, std::size_t chunk = 512);
Tensor decode_eval(ModelParams& m, const Tensor& z, std::size_t chunk = 512);
Tensor head_eval(ModelParams& m, const Tensor& z);

struct PretrainOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;
  data::AugmentPolicy augment = data::AugmentPolicy::none;
};

/// Fit encoder and decoder to mean ||x - decode(encode(x))||^2 alone.
/// Returns the mean batch loss of every epoch.
std::vector<double> pretrain_autoencoder(ModelParams& m, const Tensor& images, const PretrainOptions& opt,
                                         RmsProp& optimizer);

/// Binary checkpoint: "DAFC", u32 version, ArchConfig, u32 count, then each
/// tensor as (u32 name length, name, u32 rank, u64 dims, little-endian f64).
/// Extra tensors are appended after the model parameters.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor value;
};

void save_checkpoint(const std::filesystem::path& path, const ModelParams& m,
                     const std::vector<NamedTensor>& extra = {});

struct Checkpoint {
  ModelParams model;
  std::vector<NamedTensor> extra;
};

/// Throws std::runtime_error on bad magic, version mismatch or truncation.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dafc

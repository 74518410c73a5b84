#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dafc/rng.hpp"
#include "dafc/tensor.hpp"

namespace dafc::data {

/// Images N×C×H×W.  truth_labels are only ever read by evaluation code.
struct Dataset {
  std::string name;
  Tensor images;
  std::optional<std::vector<int>> truth_labels;
  std::vector<double> channel_means;  // filled by normalize()
  std::vector<double> channel_stds;

  std::size_t size() const { return images.empty() ? 0 : images.dim(0); }
  Shape image_shape() const { return {images.dim(1), images.dim(2), images.dim(3)}; }
  bool normalized() const { return !channel_means.empty(); }
  /// Throws std::invalid_argument if an invariant is violated.
  void validate() const;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Parse IDX image (and optional label) files; pixels are divided by 255.
Dataset load_idx(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels = {});

void write_idx_images(const std::filesystem::path& path, std::span<const std::uint8_t> pixels, std::size_t n,
                      std::size_t rows, std::size_t cols);
void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels);

/// Keep only the listed classes (relabelled 0..n-1 in listed order) and at
/// most `limit` samples (0 = no limit), preserving file order.
Dataset select_classes(const Dataset& ds, std::span<const int> classes, std::size_t limit = 0);

Dataset without_labels(const Dataset& ds);

struct BlobSpec {
  std::size_t k = 4;
  std::size_t n_per_cluster = 500;
  std::size_t dim = 16;
  double sigma = 1.0;
  double separation = 10.0;
  std::uint64_t seed = 0;
};

/// Isotropic Gaussian clusters with pairwise center distance `separation`,
/// mapped into [0,1] by a single affine map.  Images have shape N×1×1×dim.
Dataset synth_blobs(const BlobSpec& spec);

enum class AugmentPolicy { none, shift, shift_flip };
AugmentPolicy parse_policy(const std::string& s);
std::string to_string(AugmentPolicy p);

/// Translate a C×H×W (or 1×C×H×W) image by (dx columns, dy rows) with zero
/// fill, then optionally mirror horizontally.
Tensor shift_image(const Tensor& image, int dx, int dy, bool flip);

struct AugmentedBatch {
  Tensor original;     // B×C×H×W
  Tensor transformed;  // B×C×H×W
  Tensor combined;     // 2B×C×H×W: originals followed by transforms
};

/// Shift by up to ±2 pixels per axis; shift_flip also mirrors with p = 0.5.
AugmentedBatch augment(const Tensor& batch, AugmentPolicy policy, Rng& rng);

struct ChannelStats {
  std::vector<double> means, stds;
};
ChannelStats channel_stats(const Tensor& images);

/// Per-channel (x - mean) / std.
Dataset normalize(const Dataset& ds, const std::vector<double>& means, const std::vector<double>& stds);

struct BatchPlan {
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
  bool drop_last = false;
};

/// Seeded shuffle of 0..n-1 for plan.epoch, cut into batches.
std::vector<std::vector<std::size_t>> batches(std::size_t n, const BatchPlan& plan);

}  // namespace dafc::data

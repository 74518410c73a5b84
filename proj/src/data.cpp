#include "dafc/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace dafc::data {

void Dataset::validate() const {
  if (images.rank() != 4) throw std::invalid_argument("dataset '" + name + "': images must be N×C×H×W");
  if (images.dim(0) < 1) throw std::invalid_argument("dataset '" + name + "': empty");
  if (!normalized())
    for (double v : images.data())
      if (!(v >= 0.0 && v <= 1.0))
        throw std::invalid_argument("dataset '" + name + "': pixel value outside [0,1]");
  if (truth_labels && truth_labels->size() != size())
    throw std::invalid_argument("dataset '" + name + "': label count does not match image count");
}

// ---------------------------------------------------------------------- IDX

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off, const std::filesystem::path& p) {
  if (off + 4 > b.size()) throw std::runtime_error("IDX file truncated in header: " + p.string());
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

void put_be32(std::ofstream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                     static_cast<char>(v)};
  os.write(b, 4);
}

std::string hex(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels) {
  const auto ib = read_file(images);
  const auto magic = be32(ib, 0, images);
  if (magic != kIdxImagesMagic)
    throw std::runtime_error("bad IDX image magic " + hex(magic) + " in " + images.string());
  const std::size_t n = be32(ib, 4, images), rows = be32(ib, 8, images), cols = be32(ib, 12, images);
  if (n == 0 || rows == 0 || cols == 0) throw std::runtime_error("IDX image file has a zero dimension");
  const std::size_t payload = n * rows * cols;
  if (ib.size() < 16 + payload)
    throw std::runtime_error("IDX image payload truncated: expected " + std::to_string(payload) + " bytes, found " +
                             std::to_string(ib.size() - 16));
  Dataset ds;
  ds.name = images.filename().string();
  std::vector<double> px(payload);
  for (std::size_t i = 0; i < payload; ++i) px[i] = static_cast<double>(ib[16 + i]) / 255.0;
  ds.images = Tensor({n, 1, rows, cols}, std::move(px));
  if (labels) {
    const auto lb = read_file(*labels);
    const auto lmagic = be32(lb, 0, *labels);
    if (lmagic != kIdxLabelsMagic)
      throw std::runtime_error("bad IDX label magic " + hex(lmagic) + " in " + labels->string());
    const std::size_t ln = be32(lb, 4, *labels);
    if (ln != n)
      throw std::runtime_error("IDX image/label count mismatch: " + std::to_string(n) + " images, " +
                               std::to_string(ln) + " labels");
    if (lb.size() < 8 + ln) throw std::runtime_error("IDX label payload truncated");
    ds.truth_labels = std::vector<int>(lb.begin() + 8, lb.begin() + 8 + static_cast<std::ptrdiff_t>(ln));
  }
  return ds;
}

void write_idx_images(const std::filesystem::path& path, std::span<const std::uint8_t> pixels, std::size_t n,
                      std::size_t rows, std::size_t cols) {
  if (pixels.size() != n * rows * cols) throw std::invalid_argument("write_idx_images: pixel count mismatch");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  put_be32(os, kIdxImagesMagic);
  put_be32(os, static_cast<std::uint32_t>(n));
  put_be32(os, static_cast<std::uint32_t>(rows));
  put_be32(os, static_cast<std::uint32_t>(cols));
  os.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  put_be32(os, kIdxLabelsMagic);
  put_be32(os, static_cast<std::uint32_t>(labels.size()));
  os.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

Dataset select_classes(const Dataset& ds, std::span<const int> classes, std::size_t limit) {
  if (!ds.truth_labels) throw std::invalid_argument("select_classes: dataset has no labels");
  std::vector<std::size_t> keep;
  std::vector<int> relabel;
  for (std::size_t i = 0; i < ds.size() && (limit == 0 || keep.size() < limit); ++i) {
    auto it = std::find(classes.begin(), classes.end(), (*ds.truth_labels)[i]);
    if (it == classes.end()) continue;
    keep.push_back(i);
    relabel.push_back(static_cast<int>(it - classes.begin()));
  }
  if (keep.empty()) throw std::invalid_argument("select_classes: no samples of the requested classes");
  Dataset out = ds;
  out.images = ds.images.gather_rows(keep);
  out.truth_labels = std::move(relabel);
  return out;
}

Dataset without_labels(const Dataset& ds) {
  Dataset out = ds;
  out.truth_labels.reset();
  return out;
}

// -------------------------------------------------------------------- blobs

Dataset synth_blobs(const BlobSpec& s) {
  if (s.k < 2) throw std::invalid_argument("synth_blobs: k must be >= 2");
  if (!(s.sigma > 0.0)) throw std::invalid_argument("synth_blobs: sigma must be > 0");
  if (!(s.separation > 0.0)) throw std::invalid_argument("synth_blobs: separation must be > 0");
  if (s.n_per_cluster == 0) throw std::invalid_argument("synth_blobs: n_per_cluster must be >= 1");
  if (s.dim < s.k) throw std::invalid_argument("synth_blobs: need dim >= k to place equidistant centers");
  Rng rng(s.seed);
  const std::size_t n = s.k * s.n_per_cluster;
  // Scaled basis vectors are pairwise `separation` apart.
  const double offset = s.separation / std::sqrt(2.0);
  std::vector<double> x(n * s.dim);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % s.k;
    labels[i] = static_cast<int>(c);
    for (std::size_t d = 0; d < s.dim; ++d) x[i * s.dim + d] = (d == c ? offset : 0.0) + s.sigma * rng.normal();
  }
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  const double a = *lo, range = *hi - *lo;
  for (auto& v : x) v = std::clamp((v - a) / range, 0.0, 1.0);
  Dataset ds;
  ds.name = "blobs";
  ds.images = Tensor({n, 1, 1, s.dim}, std::move(x));
  ds.truth_labels = std::move(labels);
  return ds;
}

// ------------------------------------------------------------- augmentation

AugmentPolicy parse_policy(const std::string& s) {
  if (s == "none") return AugmentPolicy::none;
  if (s == "shift") return AugmentPolicy::shift;
  if (s == "shift+flip" || s == "shift_flip") return AugmentPolicy::shift_flip;
  throw std::invalid_argument("unknown augmentation policy '" + s + "' (expected none, shift or shift+flip)");
}

std::string to_string(AugmentPolicy p) {
  switch (p) {
    case AugmentPolicy::none: return "none";
    case AugmentPolicy::shift: return "shift";
    case AugmentPolicy::shift_flip: return "shift+flip";
  }
  return "none";
}

Tensor shift_image(const Tensor& image, int dx, int dy, bool flip) {
  const auto& s = image.shape();
  if (s.size() < 3) throw ShapeError("shift_image: expected C×H×W, got " + shape_str(s));
  const std::size_t H = s[s.size() - 2], W = s[s.size() - 1];
  const std::size_t planes = image.size() / (H * W);
  Tensor out(s);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w) {
        const long sh = static_cast<long>(h) - dy;
        const long sw = static_cast<long>(w) - dx;
        if (sh < 0 || sw < 0 || sh >= static_cast<long>(H) || sw >= static_cast<long>(W)) continue;
        const std::size_t ow = flip ? W - 1 - w : w;
        out[(p * H + h) * W + ow] = image[(p * H + static_cast<std::size_t>(sh)) * W + static_cast<std::size_t>(sw)];
      }
  return out;
}

AugmentedBatch augment(const Tensor& batch, AugmentPolicy policy, Rng& rng) {
  if (batch.rank() != 4) throw ShapeError("augment: expected B×C×H×W, got " + shape_str(batch.shape()));
  AugmentedBatch out{batch, batch, Tensor()};
  if (policy != AugmentPolicy::none) {
    const std::size_t stride = batch.row_stride();
    const Shape one{1, batch.dim(1), batch.dim(2), batch.dim(3)};
    for (std::size_t b = 0; b < batch.dim(0); ++b) {
      const int dx = static_cast<int>(rng.index(5)) - 2;
      const int dy = static_cast<int>(rng.index(5)) - 2;
      const bool flip = policy == AugmentPolicy::shift_flip && rng.bernoulli(0.5);
      const Tensor img = shift_image(batch.slice_rows(b, b + 1).reshaped(one), dx, dy, flip);
      std::copy(img.vec().begin(), img.vec().end(), out.transformed.ptr() + b * stride);
    }
  }
  out.combined = concat_rows(out.original, out.transformed);
  return out;
}

// ------------------------------------------------------------ normalization

ChannelStats channel_stats(const Tensor& images) {
  if (images.rank() != 4) throw ShapeError("channel_stats: expected N×C×H×W");
  const std::size_t N = images.dim(0), C = images.dim(1), P = images.dim(2) * images.dim(3);
  ChannelStats st{std::vector<double>(C), std::vector<double>(C)};
  const double n = static_cast<double>(N * P);
  for (std::size_t c = 0; c < C; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t p = 0; p < P; ++p) s += images[(i * C + c) * P + p];
    const double mean = s / n;
    double v = 0.0;
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t p = 0; p < P; ++p) {
        const double d = images[(i * C + c) * P + p] - mean;
        v += d * d;
      }
    st.means[c] = mean;
    st.stds[c] = std::sqrt(v / n);
  }
  return st;
}

Dataset normalize(const Dataset& ds, const std::vector<double>& means, const std::vector<double>& stds) {
  const std::size_t C = ds.images.dim(1);
  if (means.size() != C || stds.size() != C)
    throw std::invalid_argument("normalize: need one mean and std per channel (" + std::to_string(C) + ")");
  for (double s : stds)
    if (!(s > 0.0)) throw std::invalid_argument("normalize: channel std must be > 0");
  Dataset out = ds;
  const std::size_t N = ds.images.dim(0), P = ds.images.dim(2) * ds.images.dim(3);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < P; ++p) {
        double& v = out.images[(i * C + c) * P + p];
        v = (v - means[c]) / stds[c];
      }
  out.channel_means = means;
  out.channel_stds = stds;
  return out;
}

// ----------------------------------------------------------------- batching

std::vector<std::vector<std::size_t>> batches(std::size_t n, const BatchPlan& plan) {
  if (plan.batch_size == 0) throw std::invalid_argument("batches: batch size must be positive");
  if (plan.batch_size > n)
    throw std::invalid_argument("batches: batch size " + std::to_string(plan.batch_size) + " exceeds dataset size " +
                                std::to_string(n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Fisher-Yates with our own draws; std::shuffle's algorithm is unspecified.
  Rng rng(mix_seed(plan.seed, plan.epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < n; s += plan.batch_size) {
    const std::size_t e = std::min(n, s + plan.batch_size);
    if (plan.drop_last && e - s < plan.batch_size) break;
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s), order.begin() + static_cast<std::ptrdiff_t>(e));
  }
  return out;
}

}  // namespace dafc::data

#include "dafc/network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dafc {

std::size_t pool_kernel(PoolKind kind) {
  switch (kind) {
    case PoolKind::max: return 2;
    case PoolKind::avg: return 4;
    case PoolKind::none: return 1;
  }
  return 1;
}

// ---------------------------------------------------------------- ArchConfig

std::vector<Shape> ArchConfig::stage_shapes() const {
  std::vector<Shape> out;
  std::size_t c = in_c, h = in_h, w = in_w;
  out.push_back({c, h, w});
  for (const auto& b : encoder) {
    if (b.stride == 0 || h + 2 * b.padding < b.filter || w + 2 * b.padding < b.filter)
      throw ConfigError("conv block does not fit its input");
    h = (h + 2 * b.padding - b.filter) / b.stride + 1;
    w = (w + 2 * b.padding - b.filter) / b.stride + 1;
    c = b.channels;
    if (b.pool != PoolKind::none) {
      const auto k = pool_kernel(b.pool);
      if (h < k || w < k) throw ConfigError("pool window does not fit its input");
      h = (h - k) / k + 1;
      w = (w - k) / k + 1;
    }
    out.push_back({c, h, w});
  }
  return out;
}

std::size_t ArchConfig::flat_features() const { return shape_numel(stage_shapes().back()); }

void ArchConfig::validate() const {
  std::vector<std::string> errs;
  if (in_c == 0 || in_h == 0 || in_w == 0) errs.push_back("input shape must be positive");
  std::size_t h = in_h, w = in_w;
  for (std::size_t i = 0; i < encoder.size() && errs.empty(); ++i) {
    const auto& b = encoder[i];
    const std::string tag = "encoder block " + std::to_string(i) + ": ";
    if (b.channels == 0) errs.push_back(tag + "channels must be positive");
    if (b.filter != 2 && b.filter != 3) errs.push_back(tag + "filter must be 2 or 3");
    if (b.stride == 0) errs.push_back(tag + "stride must be positive");
    if (h + 2 * b.padding < b.filter || w + 2 * b.padding < b.filter) {
      errs.push_back(tag + "filter larger than padded input");
      break;
    }
    if (b.stride == 0) break;
    h = (h + 2 * b.padding - b.filter) / b.stride + 1;
    w = (w + 2 * b.padding - b.filter) / b.stride + 1;
    if (b.pool != PoolKind::none) {
      const auto k = pool_kernel(b.pool);
      if (h < k || w < k) {
        errs.push_back(tag + "pool window " + std::to_string(k) + " exceeds feature map " + std::to_string(h) +
                       "x" + std::to_string(w));
        break;
      }
      h = (h - k) / k + 1;
      w = (w - k) / k + 1;
    }
  }
  for (auto width : fc_widths)
    if (width == 0) errs.push_back("fully connected widths must be positive");
  if (bottleneck == 0) errs.push_back("bottleneck dimension must be positive");
  if (clusters < 2) errs.push_back("cluster count k must be >= 2");
  if (bottleneck < clusters) errs.push_back("bottleneck dimension d must be >= cluster count k");
  if (!(dropout >= 0.0 && dropout < 1.0)) errs.push_back("dropout must lie in [0,1)");
  if (!errs.empty()) {
    std::string msg = "invalid ArchConfig:";
    for (const auto& e : errs) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
}

ArchConfig ArchConfig::tiny(std::size_t in_c, std::size_t in_h, std::size_t in_w, std::size_t k) {
  ArchConfig a;
  a.preset = "tiny";
  a.in_c = in_c;
  a.in_h = in_h;
  a.in_w = in_w;
  a.encoder = {ConvBlock{8, 3, 1, 1, true, PoolKind::none}, ConvBlock{8, 3, 1, 1, true, PoolKind::none}};
  a.fc_widths = {32};
  a.bottleneck = 16;
  a.dropout = 0.0;
  a.clusters = k;
  return a;
}

ArchConfig ArchConfig::reference(std::size_t in_c, std::size_t in_h, std::size_t in_w, std::size_t k) {
  ArchConfig a;
  a.preset = "reference";
  a.in_c = in_c;
  a.in_h = in_h;
  a.in_w = in_w;
  a.encoder = {ConvBlock{8, 3, 1, 1, true, PoolKind::max}, ConvBlock{16, 3, 1, 1, true, PoolKind::max},
               ConvBlock{32, 2, 1, 1, true, PoolKind::avg}};
  a.fc_widths = {128};
  a.bottleneck = 32;
  a.dropout = 0.5;
  a.clusters = k;
  return a;
}

ArchConfig ArchConfig::from_preset(std::string_view name, std::size_t in_c, std::size_t in_h, std::size_t in_w,
                                   std::size_t k) {
  if (name == "tiny") return tiny(in_c, in_h, in_w, k);
  if (name == "reference") return reference(in_c, in_h, in_w, k);
  throw ConfigError("unknown architecture preset '" + std::string(name) + "' (expected tiny or reference)");
}

// --------------------------------------------------------------- ModelParams

Parameter& ModelParams::at(std::string_view name) {
  for (auto& p : params)
    if (p.name == name) return p;
  throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

const Parameter& ModelParams::at(std::string_view name) const {
  for (const auto& p : params)
    if (p.name == name) return p;
  throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

bool ModelParams::has(std::string_view name) const {
  return std::any_of(params.begin(), params.end(), [&](const Parameter& p) { return p.name == name; });
}

Parameter& ModelParams::add(std::string name, Tensor value, bool trainable) {
  params.push_back(Parameter{std::move(name), std::move(value), Tensor(), trainable});
  return params.back();
}

std::size_t ModelParams::trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : params)
    if (p.trainable) n += p.value.size();
  return n;
}

bool ModelParams::all_finite() const {
  return std::all_of(params.begin(), params.end(), [](const Parameter& p) { return p.value.all_finite(); });
}

void ModelParams::zero_grad() {
  for (auto& p : params)
    if (p.trainable) p.zero_grad();
}

namespace {

Tensor he_normal(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : t.data()) v = rng.normal() * sd;
  return t;
}

void add_linear(ModelParams& m, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng) {
  m.add(prefix + ".weight", he_normal({in, out}, in, rng));
  m.add(prefix + ".bias", Tensor({out}));
}

void add_conv(ModelParams& m, const std::string& prefix, std::size_t cin, std::size_t cout, std::size_t f,
              bool norm, Rng& rng) {
  m.add(prefix + ".weight", he_normal({cout, cin, f, f}, cin * f * f, rng));
  m.add(prefix + ".bias", Tensor({cout}));
  if (norm) {
    const std::string bn = prefix + ".bn";
    m.add(bn + ".gamma", Tensor({cout}, 1.0));
    m.add(bn + ".beta", Tensor({cout}));
    m.add(bn + ".running_mean", Tensor({cout}), false);
    m.add(bn + ".running_var", Tensor({cout}, 1.0), false);
  }
}

std::string idx(const char* base, std::size_t i) { return std::string(base) + std::to_string(i); }

}  // namespace

ModelParams build_model(const ArchConfig& cfg, Rng& rng) {
  cfg.validate();
  ModelParams m;
  m.arch = cfg;
  const auto stages = cfg.stage_shapes();
  const std::size_t flat = shape_numel(stages.back());

  std::size_t cin = cfg.in_c;
  for (std::size_t i = 0; i < cfg.encoder.size(); ++i) {
    const auto& b = cfg.encoder[i];
    add_conv(m, idx("enc.conv", i), cin, b.channels, b.filter, b.norm, rng);
    cin = b.channels;
  }
  std::size_t width = flat;
  for (std::size_t i = 0; i < cfg.fc_widths.size(); ++i) {
    add_linear(m, idx("enc.fc", i), width, cfg.fc_widths[i], rng);
    width = cfg.fc_widths[i];
  }
  add_linear(m, "enc.out", width, cfg.bottleneck, rng);

  width = cfg.bottleneck;
  for (std::size_t i = cfg.fc_widths.size(); i-- > 0;) {
    add_linear(m, idx("dec.fc", i), width, cfg.fc_widths[i], rng);
    width = cfg.fc_widths[i];
  }
  add_linear(m, "dec.out", width, flat, rng);
  for (std::size_t i = cfg.encoder.size(); i-- > 0;) {
    const std::size_t cout = i == 0 ? cfg.in_c : cfg.encoder[i - 1].channels;
    add_conv(m, idx("dec.conv", i), cfg.encoder[i].channels, cout, 3, i != 0 && cfg.encoder[i].norm, rng);
  }

  add_linear(m, "head", cfg.bottleneck, cfg.clusters, rng);

  Tensor c({cfg.clusters, cfg.bottleneck});
  for (auto& v : c.data()) v = rng.normal();
  m.add("centroids", std::move(c), false);
  return m;
}

// ------------------------------------------------------------------ forward

namespace {

Var param(Tape& t, ModelParams& m, const std::string& name) { return t.parameter(m.at(name)); }

Var conv_stage(Tape& t, ModelParams& m, const std::string& prefix, Var x, std::size_t stride, std::size_t pad,
               bool norm, bool activate, const ForwardContext& ctx) {
  x = ops::conv2d(x, param(t, m, prefix + ".weight"), param(t, m, prefix + ".bias"), stride, pad);
  if (norm) {
    const std::string bn = prefix + ".bn";
    x = ops::batchnorm(x, param(t, m, bn + ".gamma"), param(t, m, bn + ".beta"), m.at(bn + ".running_mean").value,
                       m.at(bn + ".running_var").value, ctx.mode, ctx.bn);
  }
  return activate ? ops::relu(x) : x;
}

Rng& dropout_rng(const ForwardContext& ctx, double p) {
  static thread_local Rng unused(0);
  if (ctx.mode == Mode::train && p > 0.0) {
    if (!ctx.rng) throw std::invalid_argument("train-mode forward with dropout needs an Rng");
    return *ctx.rng;
  }
  return unused;
}

}  // namespace

Var encode(Tape& t, ModelParams& m, const Var& x, const ForwardContext& ctx) {
  const auto& a = m.arch;
  const auto& xs = x.shape();
  if (xs.size() != 4 || xs[1] != a.in_c || xs[2] != a.in_h || xs[3] != a.in_w)
    throw ShapeError("encode: input shape " + shape_str(xs) + " does not match B×" + shape_str(a.input_shape()));
  const std::size_t B = xs[0];
  Var h = x;
  for (std::size_t i = 0; i < a.encoder.size(); ++i) {
    const auto& b = a.encoder[i];
    h = conv_stage(t, m, idx("enc.conv", i), h, b.stride, b.padding, b.norm, true, ctx);
    if (b.pool == PoolKind::max) h = ops::maxpool2d(h, 2, 2);
    if (b.pool == PoolKind::avg) h = ops::avgpool2d(h, 4, 4);
  }
  h = ops::reshape(h, {B, a.flat_features()});
  for (std::size_t i = 0; i < a.fc_widths.size(); ++i) {
    const std::string p = idx("enc.fc", i);
    h = ops::relu(ops::linear(h, param(t, m, p + ".weight"), param(t, m, p + ".bias")));
    h = ops::dropout(h, a.dropout, ctx.mode, dropout_rng(ctx, a.dropout));
  }
  return ops::linear(h, param(t, m, "enc.out.weight"), param(t, m, "enc.out.bias"));
}

Var decode(Tape& t, ModelParams& m, const Var& z, const ForwardContext& ctx) {
  const auto& a = m.arch;
  if (z.shape().size() != 2 || z.shape()[1] != a.bottleneck)
    throw ShapeError("decode: expected B×" + std::to_string(a.bottleneck) + ", got " + shape_str(z.shape()));
  const std::size_t B = z.shape()[0];
  Var h = z;
  for (std::size_t i = a.fc_widths.size(); i-- > 0;) {
    const std::string p = idx("dec.fc", i);
    h = ops::relu(ops::linear(h, param(t, m, p + ".weight"), param(t, m, p + ".bias")));
  }
  h = ops::linear(h, param(t, m, "dec.out.weight"), param(t, m, "dec.out.bias"));
  if (a.encoder.empty()) return ops::reshape(h, {B, a.in_c, a.in_h, a.in_w});

  const auto stages = a.stage_shapes();
  const Shape& top = stages.back();
  h = ops::relu(ops::reshape(h, {B, top[0], top[1], top[2]}));
  for (std::size_t i = a.encoder.size(); i-- > 0;) {
    const Shape& target = stages[i];
    if (h.shape()[2] != target[1] || h.shape()[3] != target[2]) h = ops::upsample_nearest(h, target[1], target[2]);
    const bool last = i == 0;
    h = conv_stage(t, m, idx("dec.conv", i), h, 1, 1, !last && a.encoder[i].norm, !last, ctx);
  }
  return h;
}

Var cluster_head(Tape& t, ModelParams& m, const Var& z) {
  if (z.shape().size() != 2 || z.shape()[1] != m.arch.bottleneck)
    throw ShapeError("cluster_head: expected B×" + std::to_string(m.arch.bottleneck) + ", got " +
                     shape_str(z.shape()));
  return ops::softmax_rows(ops::linear(z, param(t, m, "head.weight"), param(t, m, "head.bias")));
}

namespace {
template <class Fn>
Tensor chunked(const Tensor& in, std::size_t chunk, Fn&& fn) {
  const std::size_t n = in.dim(0);
  Tensor out;
  std::vector<double> data;
  Shape shape;
  for (std::size_t s = 0; s < n; s += chunk) {
    const Tensor part = fn(in.slice_rows(s, std::min(n, s + chunk)));
    if (shape.empty()) shape = part.shape();
    data.insert(data.end(), part.vec().begin(), part.vec().end());
  }
  shape[0] = n;
  return Tensor(std::move(shape), std::move(data));
}
}  // namespace

Tensor encode_eval(ModelParams& m, const Tensor& x, std::size_t chunk) {
  return chunked(x, chunk, [&](const Tensor& part) {
    Tape t;
    return encode(t, m, t.constant(part), ForwardContext{}).value();
  });
}

Tensor decode_eval(ModelParams& m, const Tensor& z, std::size_t chunk) {
  return chunked(z, chunk, [&](const Tensor& part) {
    Tape t;
    return decode(t, m, t.constant(part), ForwardContext{}).value();
  });
}

Tensor head_eval(ModelParams& m, const Tensor& z) {
  Tape t;
  return cluster_head(t, m, t.constant(z)).value();
}

std::vector<double> pretrain_autoencoder(ModelParams& m, const Tensor& images, const PretrainOptions& opt,
                                         RmsProp& optimizer) {
  if (images.empty() || images.dim(0) == 0) throw std::invalid_argument("pretrain_autoencoder: empty dataset");
  if (opt.epochs < 1) throw std::invalid_argument("pretrain_autoencoder: epochs must be >= 1");
  const std::size_t n = images.dim(0);
  const std::size_t bs = std::min(opt.batch_size, n);
  Rng rng(mix_seed(opt.seed, 0x5052));
  std::vector<double> trajectory;
  for (std::size_t e = 0; e < opt.epochs; ++e) {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& idx : data::batches(n, {bs, mix_seed(opt.seed, 0x5053), e, false})) {
      if (idx.size() < 2) continue;  // batch statistics need two samples
      const auto aug = data::augment(images.gather_rows(idx), opt.augment, rng);
      const Tensor& x = opt.augment == data::AugmentPolicy::none ? aug.original : aug.combined;
      Tape t;
      m.zero_grad();
      const ForwardContext ctx{Mode::train, &rng, {}};
      Var xv = t.constant(x);
      Var x_hat = decode(t, m, encode(t, m, xv, ctx), ctx);
      Var diff = ops::sub(ops::reshape(x_hat, x.shape()), xv);
      Var loss = ops::scale(ops::sum_squares(diff), 1.0 / static_cast<double>(x.dim(0)));
      t.backward(loss);
      optimizer.step(m.params);
      total += loss.value().item();
      ++count;
    }
    trajectory.push_back(total / static_cast<double>(count));
  }
  return trajectory;
}

// --------------------------------------------------------------- checkpoint

namespace {

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  void bytes(const void* p, std::size_t n) { os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  template <class T>
  void le(T v) {
    unsigned char buf[sizeof(T)];
    std::uint64_t u = 0;
    if constexpr (std::is_floating_point_v<T>)
      u = std::bit_cast<std::uint64_t>(static_cast<double>(v));
    else
      u = static_cast<std::uint64_t>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(u >> (8 * i));
    bytes(buf, sizeof(T));
  }
  void u32(std::size_t v) { le<std::uint32_t>(static_cast<std::uint32_t>(v)); }
  void u64(std::size_t v) { le<std::uint64_t>(v); }
  void f64(double v) { le<double>(v); }
  void str(const std::string& s) {
    u32(s.size());
    bytes(s.data(), s.size());
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}
  void bytes(void* p, std::size_t n) {
    is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) throw std::runtime_error("checkpoint truncated");
  }
  std::uint64_t le(std::size_t n) {
    unsigned char buf[8];
    bytes(buf, n);
    std::uint64_t u = 0;
    for (std::size_t i = 0; i < n; ++i) u |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return u;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(le(8)); }
  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::string str() {
    const auto n = u32();
    if (n > (1u << 20)) throw std::runtime_error("checkpoint string length implausible");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

 private:
  std::istream& is_;
};

void write_arch(Writer& w, const ArchConfig& a) {
  w.str(a.preset);
  w.u32(a.in_c);
  w.u32(a.in_h);
  w.u32(a.in_w);
  w.u32(a.encoder.size());
  for (const auto& b : a.encoder) {
    w.u32(b.channels);
    w.u32(b.filter);
    w.u32(b.stride);
    w.u32(b.padding);
    w.le<std::uint8_t>(b.norm ? 1 : 0);
    w.le<std::uint8_t>(static_cast<std::uint8_t>(b.pool));
  }
  w.u32(a.fc_widths.size());
  for (auto v : a.fc_widths) w.u32(v);
  w.u32(a.bottleneck);
  w.f64(a.dropout);
  w.u32(a.clusters);
}

ArchConfig read_arch(Reader& r) {
  ArchConfig a;
  a.preset = r.str();
  a.in_c = r.u32();
  a.in_h = r.u32();
  a.in_w = r.u32();
  const auto nb = r.u32();
  if (nb > 1024) throw std::runtime_error("checkpoint: implausible block count");
  for (std::uint32_t i = 0; i < nb; ++i) {
    ConvBlock b;
    b.channels = r.u32();
    b.filter = r.u32();
    b.stride = r.u32();
    b.padding = r.u32();
    b.norm = r.u8() != 0;
    const auto pool = r.u8();
    if (pool > 2) throw std::runtime_error("checkpoint: bad pool kind");
    b.pool = static_cast<PoolKind>(pool);
    a.encoder.push_back(b);
  }
  const auto nf = r.u32();
  if (nf > 1024) throw std::runtime_error("checkpoint: implausible layer count");
  for (std::uint32_t i = 0; i < nf; ++i) a.fc_widths.push_back(r.u32());
  a.bottleneck = r.u32();
  a.dropout = r.f64();
  a.clusters = r.u32();
  return a;
}

void write_tensor(Writer& w, const std::string& name, const Tensor& t) {
  w.str(name);
  w.u32(t.rank());
  for (auto d : t.shape()) w.u64(d);
  for (double v : t.data()) w.f64(v);
}

NamedTensor read_tensor(Reader& r) {
  NamedTensor nt;
  nt.name = r.str();
  const auto rank = r.u32();
  if (rank == 0 || rank > 8) throw std::runtime_error("checkpoint: bad tensor rank for '" + nt.name + "'");
  Shape s(rank);
  std::size_t n = 1;
  for (auto& d : s) {
    d = r.u64();
    if (d == 0 || d > (1ull << 32)) throw std::runtime_error("checkpoint: bad tensor dim for '" + nt.name + "'");
    n *= d;
  }
  if (n > (1ull << 31)) throw std::runtime_error("checkpoint: tensor too large");
  std::vector<double> data(n);
  for (auto& v : data) v = r.f64();
  nt.value = Tensor(std::move(s), std::move(data));
  return nt;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& m, const std::vector<NamedTensor>& extra) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  Writer w(os);
  w.bytes("DAFC", 4);
  w.u32(kCheckpointVersion);
  write_arch(w, m.arch);
  w.u32(m.params.size() + extra.size());
  for (const auto& p : m.params) write_tensor(w, p.name, p.value);
  for (const auto& e : extra) write_tensor(w, e.name, e.value);
  if (!os) throw std::runtime_error("error writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());
  Reader r(is);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, "DAFC", 4) != 0) throw std::runtime_error("checkpoint: bad magic in " + path.string());
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: version " + std::to_string(version) + " not supported (expected " +
                             std::to_string(kCheckpointVersion) + ")");
  const ArchConfig arch = read_arch(r);
  Rng rng(0);
  Checkpoint ck{build_model(arch, rng), {}};
  std::vector<bool> seen(ck.model.params.size(), false);
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor nt = read_tensor(r);
    auto it = std::find_if(ck.model.params.begin(), ck.model.params.end(),
                           [&](const Parameter& p) { return p.name == nt.name; });
    if (it == ck.model.params.end()) {
      ck.extra.push_back(std::move(nt));
      continue;
    }
    if (it->value.shape() != nt.value.shape())
      throw std::runtime_error("checkpoint: tensor '" + nt.name + "' has shape " + shape_str(nt.value.shape()) +
                               ", architecture expects " + shape_str(it->value.shape()));
    it->value = std::move(nt.value);
    seen[static_cast<std::size_t>(it - ck.model.params.begin())] = true;
  }
  for (std::size_t i = 0; i < seen.size(); ++i)
    if (!seen[i]) throw std::runtime_error("checkpoint: missing tensor '" + ck.model.params[i].name + "'");
  return ck;
}

}  // namespace dafc

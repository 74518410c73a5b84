#include "dafc/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace dafc {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigParseError("config key '" + key + "': expected a number, got '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigParseError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigParseError("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw std::runtime_error("cannot open " + p.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

void TrainConfig::set(const std::string& key, const std::string& value) {
  if (key == "dataset") dataset = value;
  else if (key == "arch") arch = value;
  else if (key == "clusters") clusters = to_uint(key, value);
  else if (key == "dropout") dropout = to_double(key, value);
  else if (key == "lambda1") lambda1 = to_double(key, value);
  else if (key == "lambda2") lambda2 = to_double(key, value);
  else if (key == "m") m = to_double(key, value);
  else if (key == "eps_r") eps_r = to_double(key, value);
  else if (key == "beta") beta = to_double(key, value);
  else if (key == "lr") lr = to_double(key, value);
  else if (key == "pretrain_lr") pretrain_lr = to_double(key, value);
  else if (key == "batch_size") batch_size = to_uint(key, value);
  else if (key == "pretrain_epochs") pretrain_epochs = to_uint(key, value);
  else if (key == "max_epochs") max_epochs = to_uint(key, value);
  else if (key == "max_iter") max_iter = to_uint(key, value);
  else if (key == "seed") seed = to_uint(key, value);
  else if (key == "out") out = value;
  else if (key == "augment") augment = value;
  else if (key == "normalize") normalize = to_bool(key, value);
  else if (key == "fcm_restarts") fcm_restarts = to_uint(key, value);
  else if (key == "threads") threads = to_uint(key, value);
  else throw ConfigParseError("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> TrainConfig::fields() const {
  std::vector<std::pair<std::string, std::string>> f = {
      {"dataset", dataset},
      {"arch", arch},
      {"clusters", std::to_string(clusters)},
      {"lambda1", fmt(lambda1)},
      {"lambda2", fmt(lambda2)},
      {"m", fmt(m)},
      {"eps_r", fmt(eps_r)},
      {"beta", fmt(beta)},
      {"lr", fmt(lr)},
      {"pretrain_lr", fmt(pretrain_lr)},
      {"batch_size", std::to_string(batch_size)},
      {"pretrain_epochs", std::to_string(pretrain_epochs)},
      {"max_epochs", std::to_string(max_epochs)},
      {"max_iter", std::to_string(max_iter)},
      {"seed", std::to_string(seed)},
      {"out", out},
      {"augment", augment},
      {"normalize", normalize ? "true" : "false"},
      {"fcm_restarts", std::to_string(fcm_restarts)},
      {"threads", std::to_string(threads)},
  };
  if (dropout) f.insert(f.begin() + 3, {"dropout", fmt(*dropout)});
  return f;
}

std::string TrainConfig::to_text() const {
  std::string s;
  for (const auto& [k, v] : fields()) s += k + " = " + v + "\n";
  return s;
}

void TrainConfig::validate() const {
  std::vector<std::string> errs;
  if (arch != "tiny" && arch != "reference") errs.push_back("arch must be tiny or reference");
  if (dropout && !(*dropout >= 0.0 && *dropout < 1.0)) errs.push_back("dropout must lie in [0,1)");
  if (!(lambda1 >= 0.0)) errs.push_back("lambda1 must be >= 0");
  if (!(lambda2 >= 0.0)) errs.push_back("lambda2 must be >= 0");
  if (!(m > 1.0)) errs.push_back("m must be > 1");
  if (!(eps_r > 0.0 && eps_r < 1.0)) errs.push_back("eps_r must lie in (0,1)");
  if (!(beta >= 0.0)) errs.push_back("beta must be >= 0");
  if (!(lr > 0.0)) errs.push_back("lr must be > 0");
  if (!(pretrain_lr > 0.0)) errs.push_back("pretrain_lr must be > 0");
  if (batch_size < 2) errs.push_back("batch_size must be >= 2");
  if (max_epochs < 1) errs.push_back("max_epochs must be >= 1");
  if (fcm_restarts < 1) errs.push_back("fcm_restarts must be >= 1");
  try {
    data::parse_policy(augment);
  } catch (const std::invalid_argument& e) {
    errs.push_back(e.what());
  }
  try {
    DatasetSpec::parse(dataset);
  } catch (const std::invalid_argument& e) {
    errs.push_back(e.what());
  }
  if (!errs.empty()) {
    std::string msg = "invalid TrainConfig:";
    for (const auto& e : errs) msg += "\n  - " + e;
    throw ConfigParseError(msg);
  }
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig cfg;
  std::vector<std::string> seen;
  std::istringstream is(text);
  std::string line;
  for (std::size_t lineno = 1; std::getline(is, line); ++lineno) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigParseError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (std::find(seen.begin(), seen.end(), key) != seen.end())
      throw ConfigParseError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    seen.push_back(key);
    try {
      cfg.set(key, value);
    } catch (const ConfigParseError& e) {
      throw ConfigParseError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_config(const std::filesystem::path& path) { return parse_config(read_text(path)); }

// ------------------------------------------------------------ dataset specs

DatasetSpec DatasetSpec::parse(const std::string& text) {
  DatasetSpec s;
  const auto colon = text.find(':');
  s.kind = trim(text.substr(0, colon));
  if (s.kind != "blobs" && s.kind != "mnist" && s.kind != "idx")
    throw ConfigParseError("dataset spec '" + text + "': kind must be blobs, mnist or idx");
  if (colon != std::string::npos)
    for (const auto& item : split(text.substr(colon + 1), ',')) {
      if (item.empty()) continue;
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ConfigParseError("dataset spec '" + text + "': expected key=value");
      s.args[trim(item.substr(0, eq))] = trim(item.substr(eq + 1));
    }
  static const std::map<std::string, std::vector<std::string>> allowed = {
      {"blobs", {"k", "n", "dim", "sigma", "separation", "seed"}},
      {"mnist", {"digits", "limit", "dir"}},
      {"idx", {"images", "labels", "limit"}},
  };
  for (const auto& [k, v] : s.args) {
    const auto& ok = allowed.at(s.kind);
    if (std::find(ok.begin(), ok.end(), k) == ok.end())
      throw ConfigParseError("dataset spec '" + text + "': unknown key '" + k + "' for " + s.kind);
  }
  if (s.kind == "idx" && !s.args.count("images")) throw ConfigParseError("idx dataset spec needs images=PATH");
  return s;
}

std::size_t DatasetSpec::implied_classes() const {
  if (kind == "blobs") return args.count("k") ? to_uint("k", args.at("k")) : data::BlobSpec{}.k;
  if (kind == "mnist") return args.count("digits") ? args.at("digits").size() : 10;
  return 0;
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& p, const std::optional<std::filesystem::path>& root) {
  if (p.is_absolute()) return p;
  if (root) return *root / p;
  if (const char* env = std::getenv("DAFC_DATA_DIR"); env && *env) return std::filesystem::path(env) / p;
  return p;
}

}  // namespace

data::Dataset load_dataset(const std::string& text, const std::optional<std::filesystem::path>& data_root) {
  const DatasetSpec s = DatasetSpec::parse(text);
  auto get = [&](const std::string& k) -> std::optional<std::string> {
    auto it = s.args.find(k);
    return it == s.args.end() ? std::nullopt : std::optional(it->second);
  };
  data::Dataset ds;
  if (s.kind == "blobs") {
    data::BlobSpec b;
    if (auto v = get("k")) b.k = to_uint("k", *v);
    if (auto v = get("n")) b.n_per_cluster = to_uint("n", *v);
    if (auto v = get("dim")) b.dim = to_uint("dim", *v);
    if (auto v = get("sigma")) b.sigma = to_double("sigma", *v);
    if (auto v = get("separation")) b.separation = to_double("separation", *v);
    if (auto v = get("seed")) b.seed = to_uint("seed", *v);
    ds = data::synth_blobs(b);
  } else if (s.kind == "mnist") {
    std::filesystem::path dir = get("dir") ? resolve(*get("dir"), data_root) : resolve(".", data_root);
    if (!get("dir") && !data_root && !std::getenv("DAFC_DATA_DIR"))
      throw std::runtime_error("mnist dataset: pass dir=PATH, a data root, or set DAFC_DATA_DIR");
    ds = data::load_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
    ds.name = "mnist";
    std::vector<int> digits;
    for (char c : get("digits").value_or("0123456789")) {
      if (c < '0' || c > '9') throw ConfigParseError("mnist digits must be characters 0-9");
      digits.push_back(c - '0');
    }
    const std::size_t limit = get("limit") ? to_uint("limit", *get("limit")) : 0;
    ds = data::select_classes(ds, digits, limit);
  } else {
    std::optional<std::filesystem::path> labels;
    if (auto v = get("labels")) labels = resolve(*v, data_root);
    ds = data::load_idx(resolve(*get("images"), data_root), labels);
    if (auto v = get("limit")) {
      const std::size_t limit = std::min<std::size_t>(to_uint("limit", *v), ds.size());
      const Tensor imgs = ds.images.slice_rows(0, limit);
      ds.images = imgs;
      if (ds.truth_labels) ds.truth_labels->resize(limit);
    }
  }
  ds.validate();
  return ds;
}

// -------------------------------------------------------------------- grids

Grid Grid::parse(const std::string& text) {
  Grid g;
  std::istringstream is(text);
  std::string line;
  for (std::size_t lineno = 1; std::getline(is, line); ++lineno) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigParseError("grid line " + std::to_string(lineno) + ": expected key = v1, v2");
    const std::string key = trim(line.substr(0, eq));
    if (key != "lambda1" && key != "lambda2" && key != "eps_r" && key != "m")
      throw ConfigParseError("grid line " + std::to_string(lineno) + ": cannot sweep '" + key +
                             "' (allowed: lambda1, lambda2, eps_r, m)");
    for (const auto& [k, _] : g.axes)
      if (k == key) throw ConfigParseError("grid line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    auto values = split(line.substr(eq + 1), ',');
    std::erase_if(values, [](const std::string& v) { return v.empty(); });
    if (values.empty()) throw ConfigParseError("grid line " + std::to_string(lineno) + ": no values");
    for (const auto& v : values) to_double(key, v);
    g.axes.emplace_back(key, std::move(values));
  }
  if (g.axes.empty()) throw ConfigParseError("grid is empty");
  return g;
}

Grid Grid::load(const std::filesystem::path& path) { return parse(read_text(path)); }

std::size_t Grid::size() const {
  std::size_t n = 1;
  for (const auto& a : axes) n *= a.second.size();
  return axes.empty() ? 0 : n;
}

std::vector<std::vector<std::pair<std::string, std::string>>> Grid::cells() const {
  std::vector<std::vector<std::pair<std::string, std::string>>> out;
  const std::size_t n = size();
  for (std::size_t c = 0; c < n; ++c) {
    std::vector<std::pair<std::string, std::string>> cell(axes.size());
    std::size_t rem = c;
    for (std::size_t a = axes.size(); a-- > 0;) {
      const auto& vals = axes[a].second;
      cell[a] = {axes[a].first, vals[rem % vals.size()]};
      rem /= vals.size();
    }
    out.push_back(std::move(cell));
  }
  return out;
}

}  // namespace dafc

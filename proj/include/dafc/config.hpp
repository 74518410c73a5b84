#pragma once

// Flat `key = value` configuration files.  Blank lines and text after `#`
// are ignored; every key must be known and may appear once.
//
//   dataset          dataset spec string (see DatasetSpec)
//   arch             tiny | reference
//   clusters         k; 0 takes the number of classes named by the dataset spec
//   dropout          overrides the preset's dropout rate when set
//   lambda1 lambda2  entropy balance coefficients           (>= 0)
//   m                fuzzifier                              (> 1)
//   eps_r            similarity threshold                   (0, 1)
//   beta             weight of the head/pseudo-label term   (>= 0)
//   lr               learning rate of the joint stage       (> 0)
//   pretrain_lr      learning rate of autoencoder pretraining (> 0)
//   batch_size       samples per batch before augmentation  (>= 2)
//   pretrain_epochs  autoencoder-only epochs                (>= 0)
//   max_epochs       joint epochs                           (>= 1)
//   max_iter         batches per epoch; 0 means one pass over the data
//   seed             base seed for every random stream
//   out              output directory
//   augment          none | shift | shift+flip
//   normalize        true | false (per-channel standardization)
//   fcm_restarts     restarts of the initial fuzzy c-means  (>= 1)
//   threads          OpenMP threads; 0 keeps the runtime default

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dafc/data.hpp"

namespace dafc {

class ConfigParseError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TrainConfig {
  std::string dataset = "blobs:k=4,n=500,dim=16,sigma=1,separation=10,seed=0";
  std::string arch = "tiny";
  std::size_t clusters = 0;
  std::optional<double> dropout;
  double lambda1 = 0.5;
  double lambda2 = 0.5;
  double m = 2.0;
  double eps_r = 0.9;
  double beta = 1.0;
  double lr = 1e-4;
  double pretrain_lr = 1e-3;
  std::size_t batch_size = 256;
  std::size_t pretrain_epochs = 10;
  std::size_t max_epochs = 30;
  std::size_t max_iter = 0;
  std::uint64_t seed = 0;
  std::string out = "dafc_out";
  std::string augment = "none";
  bool normalize = true;
  std::size_t fcm_restarts = 5;
  std::size_t threads = 0;

  /// Throws ConfigParseError naming every out-of-range field.
  void validate() const;

  /// Apply one key/value pair (used by the file parser and grid sweeps).
  void set(const std::string& key, const std::string& value);

  /// key = value lines that parse back to the same config.
  std::string to_text() const;
  /// Ordered (key, value) pairs, one per field.
  std::vector<std::pair<std::string, std::string>> fields() const;
};

TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);

/// Dataset spec: `<kind>:<key>=<value>,...`
///   blobs:k=4,n=500,dim=16,sigma=1,separation=10,seed=0   (n per cluster)
///   mnist:digits=0123,limit=4000[,dir=PATH]   reads train-images-idx3-ubyte
///                                             and train-labels-idx1-ubyte
///   idx:images=PATH[,labels=PATH]
/// Relative mnist/idx paths resolve against data_root, falling back to the
/// DAFC_DATA_DIR environment variable.
struct DatasetSpec {
  std::string kind;
  std::map<std::string, std::string> args;

  static DatasetSpec parse(const std::string& text);
  /// Classes implied by the dataset string (k for blobs, digit count for mnist), or 0.
  std::size_t implied_classes() const;
};

data::Dataset load_dataset(const std::string& spec, const std::optional<std::filesystem::path>& data_root = {});

/// Sweep grid file: one `key = v1, v2, ...` line per swept key.  Allowed keys
/// are lambda1, lambda2, eps_r and m.
struct Grid {
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;

  static Grid parse(const std::string& text);
  static Grid load(const std::filesystem::path& path);
  std::size_t size() const;
  /// Cartesian product in row-major order (last axis fastest).
  std::vector<std::vector<std::pair<std::string, std::string>>> cells() const;
};

}  // namespace dafc

#pragma once

// Flat key = value run configuration. Lines starting with '#' are comments.
// A `preset` key is applied before every other key in the file, whatever
// its position.

#include "fedstl/datagen.hpp"
#include "fedstl/mining.hpp"
#include "fedstl/models.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fedstl {

enum class Method { FedStl, FedAvg, Both };

struct RunConfig {
  // run
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::string out_dir = "out";
  Method method = Method::Both;
  bool timings = true;

  // model
  ArchKind arch = ArchKind::LinearAR;
  std::size_t hidden_dim = 16;
  double lr = 0.01;
  double cluster_lr = 0.01;
  double lambda = 1.0;
  std::size_t batch_size = 64;

  // federation
  std::size_t rounds = 50;
  double participation = 0.1;
  std::size_t local_epochs = 6;
  std::size_t cluster_epochs = 4;
  std::size_t cluster_period = 5;
  std::size_t n_clusters = 5;
  std::size_t sample_windows = 32;
  std::size_t seed_steps = 50;
  bool share_all = false;

  // mining
  std::vector<int> templates{1};
  TemplateOptions template_options;
  double tol_rel = 1e-6;
  double delta_rel = 1e-6;
  std::size_t clause_cap = 4096;

  // data
  std::size_t n_clients = 20;
  std::size_t n_groups = 5;
  std::size_t n_vars = 1;
  std::size_t series_len = 720;
  std::size_t input_len = 120;
  std::size_t output_len = 24;
  std::vector<double> levels, amplitudes, periods, noise;
  std::optional<double> gap;
  std::string data_dir;  // non-empty: one client per *.csv file, sorted by name

  // Throws ConfigError for an unknown key or a malformed value.
  void set(const std::string& key, const std::string& value);
  void apply_preset(const std::string& name);
  // Throws ConfigError. Called before any work starts.
  void validate() const;

  // Number of clients selected per round: ceil(participation * n).
  std::size_t selection_count(std::size_t n) const;
  Arch architecture() const;
  GenSpec gen_spec() const;
  // Canonical key = value listing, in a fixed key order.
  std::vector<std::pair<std::string, std::string>> entries() const;
};

std::vector<std::string> preset_names();
RunConfig read_config(std::istream& in);
RunConfig load_config(const std::string& path);

// Synthetic data or the CSV directory, windowed per the config.
Dataset load_dataset(const RunConfig& config);

}  // namespace fedstl

#pragma once

// Synthetic client datasets with planted group structure, plus CSV I/O.

#include "fedstl/models.hpp"
#include "fedstl/stl.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace fedstl {

// x1(t) = level + amplitude * sin(2*pi*(t + phase) / period) + noise * N(0,1)
// Further variables follow x1 shifted by var_offsets[v], or sit below x1 by
// more than the planted gap when one is set.
struct GroupFamily {
  double level = 0.0;
  double amplitude = 1.0;
  double period = 24.0;
  double noise = 0.0;
  std::vector<double> var_offsets;  // n_vars entries; entry 0 is ignored
};

struct GenSpec {
  std::size_t n_clients = 20;
  std::size_t n_groups = 5;
  std::size_t n_vars = 1;
  std::size_t length = 720;
  std::size_t input_len = 120;
  std::size_t output_len = 24;
  std::vector<GroupFamily> families;  // one per group
  // Every step satisfies x1 - xv > gap for v >= 1.
  std::optional<double> gap;
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
};

// Levels 0.3 apart with amplitude 0.1 and noise 0.02, so group ranges do
// not overlap. Periods differ between groups.
std::vector<GroupFamily> separable_families(std::size_t n_groups, std::size_t n_vars);

std::vector<std::string> default_schema(std::size_t n_vars);

struct ClientDataset {
  int id = 0;
  Trace series;
  Batch train, val, test;
};

// Stride-1 windows split 80/10/10 in time order. The first output_len - 1
// windows of val and of test are dropped so no target step is shared
// between splits. Throws ShapeError when a split would be empty.
ClientDataset window_series(int id, Trace series, std::size_t input_len, std::size_t output_len);

struct Dataset {
  std::vector<ClientDataset> clients;
  std::vector<int> labels;  // planted group per client
};

// Client c belongs to group c mod n_groups.
Dataset generate(const GenSpec& spec);

// Header of variable names, one row per step. Interior empty cells are
// filled by linear interpolation along the column. Throws IoError.
Trace read_csv(std::istream& in);
Trace load_csv(const std::string& path);
void write_csv(std::ostream& out, const Trace& trace);

}  // namespace fedstl

#pragma once

// Wall-clock timings of mining and federation rounds at desk scale.

#include "fedstl/config.hpp"

#include <string>
#include <vector>

namespace fedstl {

struct BenchRow {
  std::string section;  // "mining", "scaling" or "round"
  std::string item;
  std::size_t count = 0;  // clients mined, formulas mined, or member visits over the timed rounds
  double seconds = 0.0;
};

struct BenchOptions {
  std::vector<int> rows;                      // template rows to time
  std::vector<int> scaling = {5, 10, 15};     // formula counts, ascending
  std::size_t repeats = 3;                    // minimum over repeats is reported
  std::size_t rounds = 2;                     // federation rounds timed
};

// Options taking their template rows from the config.
BenchOptions bench_options(const RunConfig& config);

// An empty row list yields an empty table. Rows unavailable for the data's
// schema are omitted.
std::vector<BenchRow> bench(const RunConfig& config, const BenchOptions& options);

// Whitespace-aligned table with a header line.
std::string render_bench(const std::vector<BenchRow>& rows);

}  // namespace fedstl

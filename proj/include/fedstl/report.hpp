#pragma once

// End-to-end training runs and their JSON report (schema 1).

#include "fedstl/config.hpp"
#include "fedstl/federation.hpp"

#include <string>

namespace fedstl {

struct TrainOptions {
  // Write report.json and checkpoints/ under config.out_dir.
  bool write_files = true;
};

// Runs the configured method(s) and returns the report text. Progress goes
// to the log; no other output. Throws ConfigError before doing any work
// when the config is invalid.
std::string train(const RunConfig& config, const TrainOptions& options = {});

struct SummaryRow {
  double mse_mean = 0.0, mse_std = 0.0;
  double rho_pct_mean = 0.0, rho_pct_std = 0.0;
};

// Population mean and standard deviation over clients.
SummaryRow summarize(const std::vector<double>& mse, const std::vector<double>& rho_pct);

}  // namespace fedstl

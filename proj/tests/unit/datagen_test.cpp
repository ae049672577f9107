#include "fedstl/datagen.hpp"
#include "fedstl/error.hpp"
#include "fedstl/mining.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <sstream>

namespace fedstl {
namespace {

GenSpec small_spec(std::size_t clients, std::size_t groups) {
  GenSpec s;
  s.n_clients = clients;
  s.n_groups = groups;
  s.length = 200;
  s.input_len = 24;
  s.output_len = 6;
  s.families = separable_families(groups, 1);
  s.seed = 9;
  return s;
}

TEST(Datagen, SingleGroupNoiselessClientsDifferOnlyByPhase) {
  GenSpec s = small_spec(3, 1);
  s.families[0].noise = 0.0;
  Dataset d = generate(s);
  const auto& f = s.families[0];
  for (const auto& c : d.clients) {
    // Recover the phase from the first two samples and check the rest.
    const Trace& x = c.series;
    const double s0 = std::asin(std::clamp((x.at(0, 0) - f.level) / f.amplitude, -1.0, 1.0));
    double best = 1e9;
    for (double phi : {s0, M_PI - s0}) {
      double err = 0.0;
      for (std::size_t t = 0; t < x.length(); ++t) {
        err = std::max(err, std::fabs(x.at(t, 0) - f.level -
                                      f.amplitude * std::sin(phi + 2 * M_PI * t / f.period)));
      }
      best = std::min(best, err);
    }
    EXPECT_LT(best, 1e-9) << "client " << c.id;
  }
}

TEST(Datagen, GroupRangesAreDisjointAndMinedBoundsSeparate) {
  GenSpec s = small_spec(4, 2);
  s.families[0].level = 10;
  s.families[1].level = 100;
  for (auto& f : s.families) {
    f.amplitude = 5.0;
    f.noise = 1.0;
  }
  Dataset d = generate(s);
  const std::array<int, 1> row{1};
  TemplateOptions opts;
  opts.window_len = 6;
  std::vector<std::pair<double, double>> ranges;  // per client, outer range of the mined bounds
  for (const auto& c : d.clients) {
    auto templates = builtin_templates({"x"}, 6, row, opts);
    MinedProperty m = infer_tight(templates[0], c.train.targets, default_tolerance(c.train.targets));
    double a = 0, b = 0;
    for (std::size_t h = 0; h < templates[0].holes().size(); ++h) {
      (templates[0].holes()[h].name == "a1" ? a : b) = m.parameters[h];
    }
    ranges.emplace_back(b, a);
  }
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    for (std::size_t j = 0; j < ranges.size(); ++j) {
      if (d.labels[i] == d.labels[j]) continue;
      const bool overlap = ranges[i].first <= ranges[j].second && ranges[j].first <= ranges[i].second;
      EXPECT_FALSE(overlap) << i << " vs " << j;
    }
  }
}

TEST(Datagen, PlantedGapHoldsEverywhere) {
  GenSpec s = small_spec(6, 3);
  s.n_vars = 2;
  s.families = separable_families(3, 2);
  s.gap = 3.0;
  Dataset d = generate(s);
  Formula gap = parse("G[0,5](x1 - x2 > 3)");
  Formula gap_in = parse("G[0,23](x1 - x2 > 3)");
  for (const auto& c : d.clients) {
    for (const Batch* b : {&c.train, &c.val, &c.test}) {
      for (const auto& y : b->targets) EXPECT_TRUE(eval_bool(gap, y, 0));
      for (const auto& x : b->inputs) EXPECT_TRUE(eval_bool(gap_in, x, 0));
    }
  }
}

TEST(Datagen, PlantedRangesHoldOnTrainWindows) {
  GenSpec s = small_spec(10, 5);
  Dataset d = generate(s);
  for (const auto& c : d.clients) {
    const auto& f = s.families[static_cast<std::size_t>(d.labels[static_cast<std::size_t>(c.id)])];
    // Gaussian noise is unbounded; 8 sigma bounds every draw at this sample size.
    const double lo = f.level - f.amplitude - 8 * f.noise, hi = f.level + f.amplitude + 8 * f.noise;
    Formula range = parse("G[0,5](x >= " + std::to_string(lo) + " & x <= " + std::to_string(hi) + ")");
    for (const auto& y : c.train.targets) EXPECT_TRUE(eval_bool(range, y, 0));
  }
}

TEST(Datagen, DeterministicAndSeedSensitive) {
  GenSpec s = small_spec(4, 2);
  Dataset a = generate(s), b = generate(s);
  for (std::size_t i = 0; i < a.clients.size(); ++i) {
    EXPECT_EQ(std::memcmp(a.clients[i].series.data().data(), b.clients[i].series.data().data(),
                          a.clients[i].series.data().size() * 8),
              0);
  }
  s.seed = 10;
  Dataset c = generate(s);
  EXPECT_NE(a.clients[0].series, c.clients[0].series);
}

TEST(Datagen, SplitsAreOrderedAndTargetsDisjoint) {
  GenSpec s = small_spec(2, 1);
  Dataset d = generate(s);
  const auto& c = d.clients[0];
  const std::size_t windows = s.length - s.input_len - s.output_len + 1;
  ASSERT_EQ(c.train.inputs.size(), windows * 8 / 10);
  // Locate each window's start by its first input step.
  auto start_of = [&](const Trace& x) {
    for (std::size_t w = 0; w < windows; ++w) {
      if (c.series.slice(w, s.input_len) == x) return w;
    }
    ADD_FAILURE() << "window not found";
    return std::size_t{0};
  };
  const std::size_t last_train = start_of(c.train.inputs.back());
  const std::size_t first_val = start_of(c.val.inputs.front());
  const std::size_t last_val = start_of(c.val.inputs.back());
  const std::size_t first_test = start_of(c.test.inputs.front());
  EXPECT_GE(first_val, last_train + s.output_len);
  EXPECT_GE(first_test, last_val + s.output_len);
  for (std::size_t i = 0; i < c.train.inputs.size(); ++i) {
    const std::size_t w = start_of(c.train.inputs[i]);
    EXPECT_EQ(w, i);
    EXPECT_EQ(c.train.targets[i], c.series.slice(w + s.input_len, s.output_len));
  }
}

TEST(Datagen, SpecValidation) {
  GenSpec s = small_spec(4, 2);
  s.families[0].noise = 0.03;  // amplitude 0.1
  EXPECT_THROW(generate(s), ConfigError);
  s = small_spec(2, 3);
  EXPECT_THROW(s.validate(), ConfigError);
  s = small_spec(4, 2);
  s.gap = 1.0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = small_spec(4, 2);
  s.length = 40;
  EXPECT_THROW(generate(s), ShapeError);
}

TEST(Csv, ReadsHeaderAndRows) {
  std::istringstream in("x,y\n1,2\n3,4\n5,6\n");
  Trace t = read_csv(in);
  EXPECT_EQ(t.length(), 3u);
  EXPECT_EQ(t.schema(), (std::vector<std::string>{"x", "y"}));
  EXPECT_EQ(t.at(2, 1), 6.0);
}

TEST(Csv, InterpolatesInteriorGaps) {
  std::istringstream in("x\n2\n\n4\n");
  EXPECT_EQ(read_csv(in).at(1, 0), 3.0);
  std::istringstream run("x\n0\n\n\n3\n");
  Trace t = read_csv(run);
  EXPECT_DOUBLE_EQ(t.at(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(t.at(2, 0), 2.0);
}

TEST(Csv, Errors) {
  std::istringstream first("x\n\n2\n"), lead("x,y\n,1\n2,3\n"), ragged("x,y\n1\n");
  std::istringstream text("x\nabc\n"), partial("x\n1.5q\n"), header("");
  EXPECT_THROW(read_csv(first), IoError);
  EXPECT_THROW(read_csv(lead), IoError);
  EXPECT_THROW(read_csv(header), IoError);
  EXPECT_THROW(read_csv(ragged), IoError);
  EXPECT_THROW(read_csv(text), IoError);
  EXPECT_THROW(read_csv(partial), IoError);
  std::istringstream end_missing("x,y\n1,2\n3,\n");
  EXPECT_THROW(read_csv(end_missing), IoError);
  EXPECT_THROW(load_csv("/nonexistent/file.csv"), IoError);
}

TEST(Csv, WriteReadRoundTripIsExact) {
  Trace t({"a", "b"}, {0.1, -2.5e-7, 1.0 / 3.0, 12345.678});
  std::stringstream buf;
  write_csv(buf, t);
  EXPECT_EQ(read_csv(buf), t);
}

}  // namespace
}  // namespace fedstl

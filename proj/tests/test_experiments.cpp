#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "inkmark/error.hpp"
#include "inkmark/experiments.hpp"
#include "inkmark/report.hpp"

using namespace inkmark;
using nlohmann::json;

namespace {

json small_config(double fpr = 0.02, std::size_t n = 60) {
  return json{{"scheme", "redgreen"},
              {"redgreen", {{"gamma", 0.5}, {"delta", 2.0}, {"h", 1}, {"mode", "soft"}}},
              {"fpr_target", fpr},
              {"spike_modulus", 1.0},
              {"bootstrap_resamples", 200},
              {"timestamp", "2024-01-01T00:00:00Z"},
              {"pools",
               {{{"name", "low"}, {"model", {{"kind", "synthetic"}, {"peak_mass", 0.9}, {"vocab_size", 500}}},
                 {"text_len", 60}, {"n_texts", n}},
                {{"name", "high"}, {"model", {{"kind", "synthetic"}, {"peak_mass", 0.2}, {"vocab_size", 500}}},
                 {"text_len", 60}, {"n_texts", n}}}}};
}

std::string message_of(const json& j) {
  try {
    ExperimentConfig::from_json(j);
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(ExperimentConfig, ParsesAndRoundTrips) {
  const auto c = ExperimentConfig::from_json(small_config());
  EXPECT_EQ(c.pools.size(), 2U);
  EXPECT_EQ(c.key_policy, KeyPolicy::PerText);
  EXPECT_EQ(c.timestamp, "2024-01-01T00:00:00Z");
  const auto back = ExperimentConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
}

TEST(ExperimentConfig, ErrorsNameTheField) {
  auto j = small_config();
  j.erase("spike_modulus");
  EXPECT_NE(message_of(j).find("spike_modulus"), std::string::npos);
  j = small_config();
  j["pools"][0]["model"]["kind"] = "gpt";
  EXPECT_NE(message_of(j).find("unknown model kind"), std::string::npos);
  j = small_config();
  j["pools"].erase(1);
  EXPECT_NE(message_of(j).find("at least two pools"), std::string::npos);
  j = small_config();
  j["pools"][1]["name"] = "low";
  EXPECT_NE(message_of(j).find("duplicate pool name"), std::string::npos);
  j = small_config();
  j["pools"][0]["n_texts"] = -3;
  EXPECT_NE(message_of(j).find("n_texts"), std::string::npos);
  j = small_config();
  j["pools"][0]["target_entropy"] = 2.0;
  EXPECT_NE(message_of(j).find("exactly one of peak_mass and target_entropy"), std::string::npos);
  j = small_config();
  j["key_policy"] = "sometimes";
  EXPECT_NE(message_of(j).find("key_policy"), std::string::npos);
  EXPECT_THROW(ExperimentConfig::load("/nonexistent/config.json"), IoError);
}

TEST(ExperimentConfig, TargetEntropySolvesThePeak) {
  auto j = small_config();
  j["pools"][0]["model"].erase("peak_mass");
  j["pools"][0]["target_entropy"] = 3.0;
  const auto c = ExperimentConfig::from_json(j);
  const auto pools = build_pools(c, 1);
  ASSERT_TRUE(pools[0].peak_mass.has_value());
  EXPECT_NEAR(SyntheticModel(*pools[0].peak_mass, 500).shannon_entropy_bits(), 3.0, 1e-9);
  EXPECT_NEAR(pools[0].avg_entropy_bits, 3.0, 1e-9);
}

TEST(ExperimentConfig, MissingCorpusIsAValidationError) {
  auto j = small_config();
  j["pools"][0]["model"] = {{"kind", "ngram"}, {"path", "no/such/model.json"}};
  const auto c = ExperimentConfig::from_json(j, "/tmp");
  EXPECT_THROW(build_pools(c, 1), ValidationError);
}

TEST(Calibration, LargestKRule) {
  std::vector<double> s;
  for (int i = 0; i < 100; ++i) s.push_back(i);
  // k = 1: exactly one score (99) may sit at or above the threshold.
  const double t = calibrate_threshold(s, 0.01);
  EXPECT_GT(t, 98.0);
  EXPECT_LE(t, 99.0);
  EXPECT_EQ(std::count_if(s.begin(), s.end(), [&](double x) { return x >= t; }), 1);
  EXPECT_EQ(minimum_calibration_texts(1e-3), 1000U);
  EXPECT_EQ(minimum_calibration_texts(0.02), 50U);
  try {
    calibrate_threshold(std::vector<double>(99, 0.0), 0.01);
    ADD_FAILURE();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("too few plain texts"), std::string::npos);
  }
}

TEST(Experiment, DeterministicAndOrdered) {
  const auto c = ExperimentConfig::from_json(small_config());
  const auto a = run_experiment(c, 17);
  const auto b = run_experiment(c, 17);
  EXPECT_EQ(canonical_json(a.to_json()), canonical_json(b.to_json()));
  EXPECT_NE(canonical_json(run_experiment(c, 18).to_json()), canonical_json(a.to_json()));
  ASSERT_EQ(a.pools.size(), 2U);
  EXPECT_LT(a.pools[0].avg_entropy_bits, a.pools[1].avg_entropy_bits);
  EXPECT_EQ(a.low_pool, "low");
  EXPECT_EQ(a.high_pool, "high");
  EXPECT_GE(a.pools[0].fnr, a.pools[1].fnr);
  EXPECT_DOUBLE_EQ(a.disparity, a.pools[0].fnr - a.pools[1].fnr);
  EXPECT_TRUE(a.disparity_ci.contains(a.disparity));
  // Pooled FPR honours the target.
  const double pooled = (a.pools[0].fpr + a.pools[1].fpr) / 2.0;
  EXPECT_LE(pooled, 0.02 + 1e-12);
  EXPECT_EQ(a.metadata.at("timestamp"), "2024-01-01T00:00:00Z");
  EXPECT_EQ(a.metadata.at("seed"), 17);
}

TEST(Experiment, RocIsMonotone) {
  const auto r = run_experiment(ExperimentConfig::from_json(small_config()), 3);
  for (const auto& p : r.pools) {
    ASSERT_FALSE(p.roc.empty());
    EXPECT_LE(p.roc.size(), 101U);
    for (std::size_t i = 1; i < p.roc.size(); ++i) {
      EXPECT_GT(p.roc[i].threshold, p.roc[i - 1].threshold);
      EXPECT_LE(p.roc[i].fpr, p.roc[i - 1].fpr);
      EXPECT_GE(p.roc[i].fnr, p.roc[i - 1].fnr);
    }
  }
}

TEST(Experiment, HardModeHasNoFalseNegatives) {
  auto j = small_config();
  j["redgreen"]["mode"] = "hard";
  j["pools"][0]["model"]["peak_mass"] = 0.3;
  const auto r = run_experiment(ExperimentConfig::from_json(j), 5);
  for (const auto& p : r.pools) EXPECT_EQ(p.fnr, 0.0) << p.name;
}

TEST(Experiment, StatisticsMatchDirectDetection) {
  const auto c = ExperimentConfig::from_json(small_config());
  const auto pools = build_pools(c, 9);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto key = pool_text_key(c, pools[1], i);
    RedGreenDetector det(key, 0.5, 1, 500);
    EXPECT_EQ(detection_statistic(c, pools[1], i, true), det.detect(pools[1].watermarked[i], 4.0).z_score);
    EXPECT_EQ(detection_statistic(c, pools[1], i, false), det.detect(pools[1].plain[i], 4.0).z_score);
  }
  auto shared = small_config();
  shared["key_policy"] = "shared";
  const auto cs = ExperimentConfig::from_json(shared);
  const auto ps = build_pools(cs, 9);
  EXPECT_EQ(pool_text_key(cs, ps[0], 0), pool_text_key(cs, ps[1], 7));
  EXPECT_NE(pool_text_key(c, pools[0], 0), pool_text_key(c, pools[0], 1));
}

TEST(Experiment, TooFewTextsForTheTarget) {
  const auto c = ExperimentConfig::from_json(small_config(1e-3, 60));
  EXPECT_THROW(run_experiment(c, 1), ValidationError);
}

TEST(Experiment, BinarySchemeRuns) {
  auto j = small_config(0.05, 20);
  j["scheme"] = "binary";
  j["binary"] = {{"lambda", 8.0}};
  j["pools"][0]["text_len"] = 30;
  j["pools"][1]["text_len"] = 30;
  const auto r = run_experiment(ExperimentConfig::from_json(j), 2);
  EXPECT_EQ(r.pools.size(), 2U);
  EXPECT_LE(r.pools[1].fnr, r.pools[0].fnr);
}

TEST(Report, RoundTripAndFiles) {
  const auto r = run_experiment(ExperimentConfig::from_json(small_config()), 4);
  const auto back = ExperimentReport::from_json(r.to_json());
  EXPECT_EQ(canonical_json(back.to_json()), canonical_json(r.to_json()));
  const auto dir = std::filesystem::temp_directory_path() / "inkmark_report_test";
  std::filesystem::remove_all(dir);
  const auto files = emit_report(r, dir);
  EXPECT_EQ(files.size(), 5U);
  std::ifstream csv(dir / "pools.csv");
  std::string line;
  std::size_t rows = 0;
  std::getline(csv, line);
  EXPECT_EQ(line.rfind("pool,", 0), 0U);
  while (std::getline(csv, line)) rows += !line.empty();
  EXPECT_EQ(rows, 2U);
  std::ifstream svg(dir / "fnr_vs_entropy.svg");
  std::stringstream ss;
  ss << svg.rdbuf();
  EXPECT_NE(ss.str().find("<svg"), std::string::npos);
  EXPECT_NE(ss.str().find("</svg>"), std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST(OperatingPoint, SoftRuleModulusAndSmallRun) {
  EXPECT_NEAR(soft_rule_modulus(0.5, 2.0), std::tanh(1.0), 1e-15);
  const auto r = reproduce_operating_point(1, 200, 1000);
  EXPECT_NEAR(r.avg_spike_entropy, 0.8, 0.01);
  EXPECT_EQ(r.n_trials, 200U);
  EXPECT_LE(r.fnr, 0.05);
  EXPECT_NEAR(r.fpr_nominal, 3.167124183311992e-05, 1e-12);
}

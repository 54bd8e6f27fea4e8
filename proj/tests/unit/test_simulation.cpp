#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "fedsnt/error.hpp"
#include "fedsnt/simulation.hpp"

using namespace fedsnt;

namespace {

ScenarioConfig small(int rounds = 6) {
  ScenarioConfig c;
  c.rounds = rounds;
  c.samples_per_client = 60;
  c.task.dim = 16;
  c.eval.probe_count = 100;
  return c;
}

}  // namespace

TEST(CosineLr, Schedule) {
  EXPECT_DOUBLE_EQ(cosine_lr(0.1, 0, 100), 0.1);
  EXPECT_NEAR(cosine_lr(0.1, 50, 100), 0.05, 1e-15);
  EXPECT_NEAR(cosine_lr(0.1, 100, 100), 0.0, 1e-15);
  for (int t = 1; t < 100; ++t) EXPECT_LE(cosine_lr(0.1, t, 100), cosine_lr(0.1, t - 1, 100));
}

TEST(Roster, CountsAndData) {
  auto cfg = small();
  auto task = cfg.make_task();
  auto roster = build_roster(cfg, task);
  ASSERT_EQ(roster.size(), 10u);
  int malicious = 0;
  for (const auto& c : roster) {
    malicious += c.is_malicious;
    EXPECT_EQ(c.sample_count, 60u);
    for (const auto& s : c.dataset) {
      if (c.is_malicious) {
        EXPECT_EQ(s.kind, DataKind::kUnaligned);
      } else {
        EXPECT_NE(s.kind, DataKind::kUnaligned);
      }
    }
  }
  EXPECT_EQ(malicious, 3);
  EXPECT_TRUE(roster[9].is_malicious);
  EXPECT_FALSE(roster[0].is_malicious);
}

TEST(Roster, MaliciousCountRounds) {
  for (auto [k, ratio, want] : std::vector<std::tuple<int, double, int>>{
           {10, 0.3, 3}, {50, 0.3, 15}, {100, 0.3, 30}, {10, 0.0, 0}, {7, 0.5, 4}}) {
    ScenarioConfig c;
    c.num_clients = k;
    c.malicious_ratio = ratio;
    EXPECT_EQ(c.malicious_count(), want);
  }
}

TEST(Roster, SybilsShareData) {
  auto cfg = small();
  cfg.sybil = true;
  auto roster = build_roster(cfg, cfg.make_task());
  EXPECT_EQ(roster[7].dataset, roster[8].dataset);
  EXPECT_EQ(roster[8].dataset, roster[9].dataset);
  EXPECT_NE(roster[0].dataset, roster[1].dataset);
}

TEST(Simulation, ZeroRoundsKeepsInitialModel) {
  auto r = run_simulation(small(0));
  EXPECT_TRUE(r.records.empty());
  EXPECT_EQ(r.final_model, ParameterVector::zeros(17));
  EXPECT_DOUBLE_EQ(r.final_metrics.safety_rate, r.initial.safety_rate);
}

TEST(Simulation, Deterministic) {
  auto a = run_simulation(small());
  auto b = run_simulation(small());
  EXPECT_EQ(a.final_model, b.final_model);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].sampled, b.records[i].sampled);
  }
}

TEST(Simulation, ThreadCountDoesNotChangeResult) {
  auto one = small();
  auto four = small();
  four.threads = 4;
  EXPECT_EQ(run_simulation(one).final_model, run_simulation(four).final_model);
}

TEST(Simulation, SamplingWithoutReplacement) {
  auto r = run_simulation(small(20));
  for (const auto& rec : r.records) {
    std::set<ClientId> s(rec.sampled.begin(), rec.sampled.end());
    EXPECT_EQ(s.size(), 3u);
    for (auto id : s) EXPECT_TRUE(id >= 0 && id < 10);
    EXPECT_EQ(rec.updates.size(), 3u);
  }
}

TEST(Simulation, UpdatesIndependentOfServerRule) {
  // Client training sees only the broadcast model and its own data.
  auto a = small(1);
  auto b = small(1);
  b.aggregator = AggregatorKind::kMedian;
  Simulation sa(a), sb(b);
  const auto& ra = sa.run_round();
  const auto& rb = sb.run_round();
  ASSERT_EQ(ra.sampled, rb.sampled);
  for (std::size_t i = 0; i < ra.updates.size(); ++i) {
    EXPECT_EQ(ra.updates[i].params, rb.updates[i].params);
  }
}

TEST(Simulation, FedAvgWeightsRenormalizeOverSampled) {
  auto r = run_simulation(small(5));
  for (const auto& rec : r.records) {
    double s = 0.0;
    for (const auto& [id, w] : rec.report.effective_weights) s += w;
    EXPECT_NEAR(s, 1.0, 1e-12);
    EXPECT_EQ(rec.report.effective_weights.size(), 3u);
    // equal sample counts -> equal weights
    for (const auto& [id, w] : rec.report.effective_weights) EXPECT_NEAR(w, 1.0 / 3.0, 1e-12);
  }
}

TEST(Simulation, ChainOfGlobals) {
  auto r = run_simulation(small(4));
  EXPECT_EQ(r.records.front().global_before, ParameterVector::zeros(17));
  for (std::size_t i = 1; i < r.records.size(); ++i) {
    EXPECT_EQ(r.records[i].global_before, r.records[i - 1].global_after);
  }
  EXPECT_EQ(r.records.back().global_after, r.final_model);
}

TEST(Simulation, DefaultFIsClamped) {
  auto c = small(3);
  c.aggregator = AggregatorKind::kKrum;
  auto r = run_simulation(c);
  for (const auto& rec : r.records) EXPECT_EQ(rec.byzantine_f, 0);
  c.aggregator = AggregatorKind::kTrimmedMean;
  r = run_simulation(c);
  for (const auto& rec : r.records) EXPECT_EQ(rec.byzantine_f, 1);
}

TEST(Simulation, RecordJsonRoundTrip) {
  auto r = run_simulation(small(2));
  for (const auto& rec : r.records) {
    auto back = record_from_json(record_to_json(rec, true));
    EXPECT_EQ(back.round, rec.round);
    EXPECT_EQ(back.sampled, rec.sampled);
    EXPECT_EQ(back.global_after, rec.global_after);
    ASSERT_EQ(back.updates.size(), rec.updates.size());
    EXPECT_EQ(back.updates[0].params, rec.updates[0].params);
    EXPECT_EQ(back.report.effective_weights, rec.report.effective_weights);
  }
}

TEST(Simulation, DefenseRunsWhenConfigured) {
  auto c = small(3);
  c.defense = PostHocConfig{};
  c.defense->level = 3;
  c.defense->defense_samples = 100;
  c.defense->defense_steps = 20;
  auto r = run_simulation(c);
  ASSERT_TRUE(r.defended_model.has_value());
  ASSERT_TRUE(r.defended_metrics.has_value());
  EXPECT_NE(*r.defended_model, r.final_model);
  EXPECT_EQ(r.malicious, (std::set<ClientId>{7, 8, 9}));
}

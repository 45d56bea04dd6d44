#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace coordscan;
using namespace coordscan::synth;

namespace {

const EpochSeconds kStart = epoch_from_civil(2026, 1, 1);

GeneratorConfig base(std::uint64_t seed, int days = 30) {
  GeneratorConfig g;
  g.channels = 10;
  g.span = {kStart, kStart + days * kSecondsPerDay};
  g.base_rate = 5;
  g.seed = seed;
  return g;
}

CampaignSpec campaign(std::vector<std::size_t> channels, double noise) {
  CampaignSpec c;
  c.template_text = "Officials confirm the shipment was seized at the northern port this morning";
  c.channels = std::move(channels);
  c.window = {kStart + 10 * kSecondsPerDay + 3 * kSecondsPerHour, kStart + 10 * kSecondsPerDay + 4 * kSecondsPerHour};
  c.noise_rate = noise;
  return c;
}

}  // namespace

TEST(Generate, VolumeMatchesPoissonExpectation) {
  const auto g = generate(base(4));
  const double expected = 10 * 30 * 5.0;
  EXPECT_LE(std::abs(static_cast<double>(g.corpus.size()) - expected), 3 * std::sqrt(expected));
  EXPECT_EQ(g.corpus.channels().size(), 10u);
  for (const auto& m : g.corpus) {
    EXPECT_GE(m.timestamp, kStart);
    EXPECT_LT(m.timestamp, kStart + 30 * kSecondsPerDay);
  }
}

TEST(Generate, Deterministic) {
  auto cfg = base(9);
  cfg.campaigns.push_back(campaign({0, 1, 2}, 0.05));
  const auto a = generate(cfg);
  const auto b = generate(cfg);
  EXPECT_EQ(to_jsonl(a.corpus), to_jsonl(b.corpus));
  EXPECT_EQ(a.truth.planted_pairs, b.truth.planted_pairs);
  EXPECT_EQ(a.truth.corpus_digest, corpus_digest(a.corpus));
  cfg.seed = 10;
  EXPECT_NE(to_jsonl(generate(cfg).corpus), to_jsonl(a.corpus));
}

TEST(Generate, BurstRaisesVolume) {
  auto cfg = base(2, 10);
  cfg.bursts.push_back({{kStart + 5 * kSecondsPerDay, kStart + 6 * kSecondsPerDay}, 10.0});
  const auto g = generate(cfg);
  std::size_t burst_day = 0;
  for (const auto& m : g.corpus) burst_day += cfg.bursts[0].window.contains(m.timestamp);
  // 10 channels * 5/day * 10; far above the 50 expected without the burst.
  EXPECT_GT(burst_day, 350u);
}

TEST(Generate, ThreeChannelCampaignPlantsThreePairs) {
  auto cfg = base(3);
  cfg.campaigns.push_back(campaign({0, 4, 7}, 0.0));
  const auto g = generate(cfg);
  EXPECT_EQ(g.truth.planted_pairs.size(), 3u);
  EXPECT_EQ(g.truth.campaign_of.size(), 3u);
  std::vector<const Message*> members;
  for (const auto& m : g.corpus) {
    if (g.truth.campaign_of.count(m.id)) members.push_back(&m);
  }
  ASSERT_EQ(members.size(), 3u);
  const std::vector<std::string> docs{members[0]->norm_text, members[1]->norm_text, members[2]->norm_text};
  const auto model = fit(docs, NGramConfig{});
  const auto v = transform_all(docs, model);
  EXPECT_NEAR(cosine(v[0], v[1]), 1.0, 1e-12);
  EXPECT_NEAR(cosine(v[1], v[2]), 1.0, 1e-12);
}

TEST(Generate, CopiesPerChannelClosure) {
  auto cfg = base(5);
  auto c = campaign({1, 2, 3}, 0.02);
  c.copies_per_channel = 2;
  cfg.campaigns.push_back(c);
  const auto g = generate(cfg);
  // 6 messages, 15 pairs, 3 of which are same-channel.
  EXPECT_EQ(g.truth.planted_pairs.size(), 12u);
  std::map<std::string, const Message*> by_id;
  for (const auto& m : g.corpus) by_id[m.id] = &m;
  for (const auto& [a, b] : g.truth.planted_pairs) {
    EXPECT_LT(a, b);
    const auto* ma = by_id.at(a);
    const auto* mb = by_id.at(b);
    EXPECT_NE(ma->channel, mb->channel);
    EXPECT_EQ(bucket_of(ma->timestamp, Resolution::kHourly), bucket_of(mb->timestamp, Resolution::kHourly));
    EXPECT_EQ(g.truth.campaign_of.at(a), g.truth.campaign_of.at(b));
  }
}

TEST(Generate, PerturbRate) {
  std::mt19937_64 rng(1);
  const std::string t(2000, 'a');
  const auto p = perturb(t, 0.1, rng);
  ASSERT_EQ(p.size(), t.size());
  std::size_t diff = 0;
  for (std::size_t i = 0; i < t.size(); ++i) diff += p[i] != t[i];
  EXPECT_NEAR(static_cast<double>(diff) / 2000.0, 0.1, 0.02);
  EXPECT_EQ(perturb(t, 0.0, rng), t);
}

TEST(Generate, BackgroundChannelsAreSeparable) {
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto cfg = base(seed, 2);
    cfg.base_rate = 24;
    const auto scores = score_pairs(generate(cfg).corpus, DetectionConfig{});
    for (const auto& e : scores.entries()) worst = std::max(worst, e.score);
  }
  EXPECT_LT(worst, 0.5);
}

TEST(Generate, Validation) {
  auto cfg = base(0);
  cfg.campaigns.push_back(campaign({0}, 0.0));
  EXPECT_THROW(generate(cfg), ConfigError);
  cfg.campaigns[0] = campaign({0, 0}, 0.0);
  EXPECT_THROW(generate(cfg), ConfigError);
  cfg.campaigns[0] = campaign({0, 12}, 0.0);
  EXPECT_THROW(generate(cfg), ConfigError);
  cfg.campaigns[0] = campaign({0, 1}, 0.4);
  EXPECT_THROW(generate(cfg), ConfigError);
  cfg.campaigns[0] = campaign({0, 1}, 0.0);
  cfg.campaigns[0].window = {kStart - 10, kStart + 10};
  EXPECT_THROW(generate(cfg), ConfigError);
  cfg.campaigns.clear();
  cfg.span = {kStart, kStart};
  EXPECT_THROW(generate(cfg), ConfigError);
  cfg = base(0);
  cfg.base_rate = 0;
  EXPECT_THROW(generate(cfg), ConfigError);
}

TEST(Evaluate, ExactMatch) {
  auto cfg = base(7);
  cfg.campaigns.push_back(campaign({0, 1, 2}, 0.0));
  const auto g = generate(cfg);
  DetectionReport r;
  r.corpus_digest = g.truth.corpus_digest;
  for (const auto& [a, b] : g.truth.planted_pairs) r.pairs.push_back({{}, b, a, "", "", 1.0});
  const auto e = evaluate(r, g.truth);
  EXPECT_EQ(e.true_positives, 3u);
  EXPECT_EQ(e.precision, 1.0);
  EXPECT_EQ(e.recall, 1.0);
  EXPECT_EQ(e.f1, 1.0);
}

TEST(Evaluate, CountsAndVacuousCases) {
  GroundTruth t;
  t.corpus_digest = "d";
  DetectionReport r;
  r.corpus_digest = "d";
  auto e = evaluate(r, t);
  EXPECT_EQ(e.precision, 1.0);
  EXPECT_EQ(e.recall, 1.0);

  t.planted_pairs = {{"a", "b"}, {"c", "d"}};
  r.pairs.push_back({{}, "a", "b", "", "", 1});
  r.pairs.push_back({{}, "a", "c", "", "", 1});
  r.pairs.push_back({{}, "e", "f", "", "", 1});
  e = evaluate(r, t);
  EXPECT_EQ(e.true_positives, 1u);
  EXPECT_EQ(e.false_positives, 2u);
  EXPECT_EQ(e.false_negatives, 1u);
  EXPECT_DOUBLE_EQ(e.precision, 1.0 / 3);
  EXPECT_DOUBLE_EQ(e.recall, 0.5);
  EXPECT_DOUBLE_EQ(e.f1, 2 * (1.0 / 3) * 0.5 / (1.0 / 3 + 0.5));

  r.pairs.clear();
  e = evaluate(r, t);
  EXPECT_EQ(e.precision, 1.0);
  EXPECT_EQ(e.recall, 0.0);
  EXPECT_EQ(e.f1, 0.0);
}

TEST(Evaluate, DigestMismatchThrows) {
  GroundTruth t;
  t.corpus_digest = "x";
  DetectionReport r;
  r.corpus_digest = "y";
  EXPECT_THROW(evaluate(r, t), DataError);
  r.corpus_digest = "x";
  r.resolution = Resolution::kDaily;
  EXPECT_THROW(evaluate(r, t), DataError);
}

TEST(Evaluate, PlantedCampaignDetected) {
  auto cfg = base(11);
  cfg.campaigns.push_back(campaign({2, 5, 8}, 0.0));
  const auto g = generate(cfg);
  const auto e = evaluate(detect(g.corpus, 0.85, DetectionConfig{}), g.truth);
  EXPECT_EQ(e.recall, 1.0);
  EXPECT_EQ(e.precision, 1.0);
}

TEST(Json, ConfigRoundTrip) {
  const auto j = nlohmann::json::parse(R"({
    "channels": 4, "span": {"start": "2026-01-01T00:00:00Z", "end": "2026-01-03T00:00:00Z"},
    "base_rate": 12, "seed": 3,
    "bursts": [{"start": "2026-01-02T00:00:00Z", "end": "2026-01-02T06:00:00Z", "multiplier": 4}],
    "campaigns": [{"template_text": "same words", "channels": ["ch00", 3],
                   "start": "2026-01-02T01:00:00Z", "end": "2026-01-02T02:00:00Z",
                   "copies_per_channel": 2, "noise_rate": 0.01}]})");
  const auto cfg = config_from_json(j);
  EXPECT_EQ(cfg.channels, 4u);
  EXPECT_EQ(cfg.span.start, kStart);
  EXPECT_EQ(cfg.base_rate, 12);
  ASSERT_EQ(cfg.bursts.size(), 1u);
  EXPECT_EQ(cfg.bursts[0].multiplier, 4);
  ASSERT_EQ(cfg.campaigns.size(), 1u);
  EXPECT_EQ(cfg.campaigns[0].channels, (std::vector<std::size_t>{0, 3}));
  EXPECT_EQ(cfg.campaigns[0].copies_per_channel, 2u);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"channels": 2})")), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(
                   R"({"channels": 2, "span": {"start": 0, "end": 100},
                       "campaigns": [{"template_text": "x", "channels": ["ch09", 0], "start": 0, "end": 10}]})")),
               ConfigError);
}

TEST(Json, TruthRoundTrip) {
  auto cfg = base(1);
  auto c = campaign({0, 1, 2}, 0.0);
  c.copies_per_channel = 2;
  cfg.campaigns.push_back(c);
  const auto g = generate(cfg);
  const auto back = truth_from_json(nlohmann::json::parse(truth_json(g.truth).dump()));
  EXPECT_EQ(back.planted_pairs, g.truth.planted_pairs);
  EXPECT_EQ(back.campaign_of, g.truth.campaign_of);
  EXPECT_EQ(back.corpus_digest, g.truth.corpus_digest);
  EXPECT_EQ(back.resolution, g.truth.resolution);
  EXPECT_THROW(truth_from_json(nlohmann::json::parse("{}")), DataError);
}

TEST(LeaderFollower, FollowerCopiesLeaderAfterDelay) {
  LeaderFollowerConfig cfg;
  cfg.seed = 4;
  const auto c = generate_leader_follower(cfg);
  std::map<std::string, const Message*> by_id;
  for (const auto& m : c) by_id[m.id] = &m;
  std::size_t followers = 0;
  for (const auto& [id, m] : by_id) {
    if (m->channel != "follower") continue;
    ++followers;
    const auto* lead = by_id.at("L" + id.substr(1));
    EXPECT_EQ(lead->raw_text, m->raw_text);
    EXPECT_EQ(bucket_of(m->timestamp, Resolution::kHourly).start - bucket_of(lead->timestamp, Resolution::kHourly).start,
              3 * kSecondsPerHour);
  }
  EXPECT_EQ(followers * 2, c.size());
  EXPECT_THROW(generate_leader_follower({.delay = -1}), ConfigError);
}

TEST(Names, ChannelNamesArePadded) {
  EXPECT_EQ(channel_name(0), "ch00");
  EXPECT_EQ(channel_name(9), "ch09");
  EXPECT_EQ(channel_name(10), "ch10");
  EXPECT_EQ(unordered_pair("b", "a"), (IdPair{"a", "b"}));
}

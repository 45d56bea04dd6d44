#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "coordination.hpp"
#include "corpus.hpp"
#include "error.hpp"
#include "seeding.hpp"
#include "timeutil.hpp"
#include "utf8.hpp"

namespace coordscan::synth {

// Half-open [start, end).
struct TimeWindow {
  EpochSeconds start = 0;
  EpochSeconds end = 0;

  bool contains(EpochSeconds t) const { return t >= start && t < end; }
  bool within(const TimeWindow& outer) const { return start >= outer.start && end <= outer.end; }
};

struct BurstSpec {
  TimeWindow window;
  double multiplier = 1.0;
};

struct CampaignSpec {
  std::string template_text;
  std::vector<std::size_t> channels;  // channel indices
  TimeWindow window;
  std::size_t copies_per_channel = 1;
  double noise_rate = 0.0;  // fraction of characters substituted, in [0, 0.3]
};

struct GeneratorConfig {
  std::size_t channels = 10;
  TimeWindow span;
  double base_rate = 5.0;  // expected messages per channel per day
  std::uint64_t vocabulary_seed = 1;
  std::vector<BurstSpec> bursts;
  std::vector<CampaignSpec> campaigns;
  std::uint64_t seed = 0;
  Resolution resolution = Resolution::kHourly;  // ground-truth bucketing

  void validate() const {
    if (channels < 1) throw ConfigError("generator needs at least one channel");
    if (span.end <= span.start) throw ConfigError("generator span is empty");
    if (span.start < 0) throw ConfigError("generator span starts before the epoch");
    if (!(base_rate > 0)) throw ConfigError("base_rate must be > 0");
    for (const auto& b : bursts) {
      if (!(b.multiplier >= 1)) throw ConfigError("burst multiplier must be >= 1");
      if (b.window.end <= b.window.start) throw ConfigError("burst window is empty");
    }
    for (std::size_t i = 0; i < campaigns.size(); ++i) {
      const auto& c = campaigns[i];
      const auto tag = "campaign " + std::to_string(i) + ": ";
      if (c.channels.size() < 2) throw ConfigError(tag + "needs at least two channels");
      std::set<std::size_t> uniq(c.channels.begin(), c.channels.end());
      if (uniq.size() != c.channels.size()) throw ConfigError(tag + "channels must be distinct");
      if (*uniq.rbegin() >= channels) throw ConfigError(tag + "channel index out of range");
      if (c.window.end <= c.window.start || !c.window.within(span)) {
        throw ConfigError(tag + "window must be non-empty and inside the span");
      }
      if (c.copies_per_channel < 1) throw ConfigError(tag + "copies_per_channel must be >= 1");
      if (!(c.noise_rate >= 0 && c.noise_rate <= 0.3)) throw ConfigError(tag + "noise_rate must be in [0, 0.3]");
    }
  }
};

inline std::string channel_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "ch%02zu", i);
  return buf;
}

using IdPair = std::pair<std::string, std::string>;  // first < second

inline IdPair unordered_pair(std::string a, std::string b) {
  if (b < a) std::swap(a, b);
  return {std::move(a), std::move(b)};
}

struct GroundTruth {
  Resolution resolution = Resolution::kHourly;
  std::set<IdPair> planted_pairs;
  std::map<std::string, std::size_t> campaign_of;  // background messages are absent
  std::string corpus_digest;
};

struct Generated {
  Corpus corpus;
  GroundTruth truth;
};

inline constexpr std::string_view kNoiseAlphabet = "abcdefghijklmnopqrstuvwxyz0123456789 .,";

// Replaces each code point with probability `rate` by a different symbol
// from a fixed alphabet.
inline std::string perturb(std::string_view text, double rate, std::mt19937_64& rng) {
  auto cps = utf8::decode(text);
  std::bernoulli_distribution hit(rate);
  std::uniform_int_distribution<std::size_t> pick(0, kNoiseAlphabet.size() - 2);
  for (auto& c : cps) {
    if (!hit(rng)) continue;
    auto idx = pick(rng);
    // Skip over the original symbol so every hit is a real edit.
    const auto self = kNoiseAlphabet.find(static_cast<char>(c < 0x80 ? c : 0));
    if (self != std::string_view::npos && idx >= self) ++idx;
    c = static_cast<char32_t>(static_cast<unsigned char>(kNoiseAlphabet[idx]));
  }
  return utf8::encode(cps);
}

namespace detail {

// Per-channel pools of pseudo-words, pairwise disjoint across channels.
inline std::vector<std::vector<std::string>> word_pools(std::size_t channels, std::uint64_t vocab_seed,
                                                        std::size_t words_per_channel = 300) {
  static constexpr std::string_view kLetters = "abcdefghijklmnopqrstuvwxyz";
  std::unordered_set<std::string> used;
  std::vector<std::vector<std::string>> pools(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    std::mt19937_64 rng(derive_seed(vocab_seed, {0x574F5244ull, c}));
    std::uniform_int_distribution<int> len(4, 9);
    std::uniform_int_distribution<std::size_t> letter(0, kLetters.size() - 1);
    while (pools[c].size() < words_per_channel) {
      std::string w;
      const int l = len(rng);
      for (int i = 0; i < l; ++i) w.push_back(kLetters[letter(rng)]);
      if (used.insert(w).second) pools[c].push_back(std::move(w));
    }
  }
  return pools;
}

inline std::string background_text(const std::vector<std::string>& pool, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> nwords(8, 20);
  std::uniform_int_distribution<std::size_t> word(0, pool.size() - 1);
  std::string s;
  const int n = nwords(rng);
  for (int i = 0; i < n; ++i) {
    if (i) s.push_back(' ');
    s += pool[word(rng)];
  }
  s.push_back('.');
  return s;
}

}  // namespace detail

// Deterministic under cfg.seed (background text also under vocabulary_seed).
// Background volume is Poisson per hour at base_rate / 24 times any burst
// multiplier covering that hour.
inline Generated generate(const GeneratorConfig& cfg) {
  cfg.validate();
  const auto pools = detail::word_pools(cfg.channels, cfg.vocabulary_seed);
  std::vector<Message> msgs;

  for (std::size_t c = 0; c < cfg.channels; ++c) {
    const auto name = channel_name(c);
    std::mt19937_64 rng(derive_seed(cfg.seed, {0x424Bull, c}));
    std::size_t seq = 0;
    for (EpochSeconds h = cfg.span.start; h < cfg.span.end; h += kSecondsPerHour) {
      const EpochSeconds h_end = std::min(h + kSecondsPerHour, cfg.span.end);
      double rate = cfg.base_rate * static_cast<double>(h_end - h) / static_cast<double>(kSecondsPerDay);
      for (const auto& b : cfg.bursts) {
        if (b.window.contains(h)) rate *= b.multiplier;
      }
      const int count = std::poisson_distribution<int>(rate)(rng);
      std::uniform_int_distribution<EpochSeconds> when(h, h_end - 1);
      for (int i = 0; i < count; ++i) {
        Message m;
        m.id = name + "-" + std::to_string(seq++);
        m.channel = name;
        m.timestamp = when(rng);
        m.raw_text = detail::background_text(pools[c], rng);
        m.norm_text = normalize_text(m.raw_text);
        msgs.push_back(std::move(m));
      }
    }
  }

  GroundTruth truth;
  truth.resolution = cfg.resolution;
  for (std::size_t ci = 0; ci < cfg.campaigns.size(); ++ci) {
    const auto& camp = cfg.campaigns[ci];
    std::vector<const Message*> members;
    const auto first = msgs.size();
    for (auto ch : camp.channels) {
      for (std::size_t copy = 0; copy < camp.copies_per_channel; ++copy) {
        std::mt19937_64 rng(derive_seed(cfg.seed, {0x43414D50ull, ci, ch, copy}));
        Message m;
        m.channel = channel_name(ch);
        m.id = "camp" + std::to_string(ci) + "-" + m.channel + "-" + std::to_string(copy);
        m.timestamp = std::uniform_int_distribution<EpochSeconds>(camp.window.start, camp.window.end - 1)(rng);
        m.raw_text = perturb(camp.template_text, camp.noise_rate, rng);
        m.norm_text = normalize_text(m.raw_text);
        truth.campaign_of[m.id] = ci;
        msgs.push_back(std::move(m));
      }
    }
    for (std::size_t i = first; i < msgs.size(); ++i) {
      for (std::size_t j = i + 1; j < msgs.size(); ++j) {
        if (msgs[i].channel == msgs[j].channel) continue;
        if (bucket_of(msgs[i].timestamp, cfg.resolution) != bucket_of(msgs[j].timestamp, cfg.resolution)) continue;
        truth.planted_pairs.insert(unordered_pair(msgs[i].id, msgs[j].id));
      }
    }
  }

  Generated out{Corpus(std::move(msgs)), std::move(truth)};
  out.truth.corpus_digest = corpus_digest(out.corpus);
  return out;
}

struct Evaluation {
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  double precision = 1.0;
  double recall = 1.0;
  double f1 = 1.0;
};

// Precision is 1 when nothing was detected; recall is 1 when nothing was
// planted.
inline Evaluation evaluate(const DetectionReport& report, const GroundTruth& truth) {
  if (report.corpus_digest != truth.corpus_digest) {
    throw DataError("detection report and ground truth refer to different corpora");
  }
  if (report.resolution != truth.resolution) {
    throw DataError("detection report and ground truth use different bucket resolutions");
  }
  std::set<IdPair> found;
  for (const auto& p : report.pairs) found.insert(unordered_pair(p.msg_a, p.msg_b));
  Evaluation e;
  for (const auto& p : found) {
    if (truth.planted_pairs.count(p)) {
      ++e.true_positives;
    } else {
      ++e.false_positives;
    }
  }
  e.false_negatives = truth.planted_pairs.size() - e.true_positives;
  const auto tp = static_cast<double>(e.true_positives);
  if (!found.empty()) e.precision = tp / static_cast<double>(found.size());
  if (!truth.planted_pairs.empty()) e.recall = tp / static_cast<double>(truth.planted_pairs.size());
  e.f1 = e.precision + e.recall > 0 ? 2 * e.precision * e.recall / (e.precision + e.recall) : 0.0;
  return e;
}

struct LeaderFollowerConfig {
  std::size_t buckets = 400;
  Resolution resolution = Resolution::kHourly;
  int delay = 3;                     // follower lag in buckets
  double base_rate = 0.4;            // leader messages per bucket
  double surge_probability = 0.06;   // chance a bucket starts a surge
  double surge_rate = 8.0;
  double repost_probability = 1.0;
  EpochSeconds origin = 1767225600;  // 2026-01-01T00:00:00Z
  std::uint64_t seed = 0;
};

// Two channels: `leader` posts in bursty Poisson bursts; `follower` reposts
// each leader message exactly `delay` buckets later.
inline Corpus generate_leader_follower(const LeaderFollowerConfig& cfg) {
  if (cfg.delay < 0) throw ConfigError("delay must be >= 0");
  const auto w = bucket_width(cfg.resolution);
  const EpochSeconds origin = bucket_of(cfg.origin, cfg.resolution).start;
  std::mt19937_64 rng(derive_seed(cfg.seed, {0x4C46ull}));
  std::bernoulli_distribution surge(cfg.surge_probability);
  std::bernoulli_distribution repost(cfg.repost_probability);
  std::uniform_int_distribution<EpochSeconds> offset(0, w - 1);
  std::vector<Message> msgs;
  std::size_t seq = 0;
  int surge_left = 0;
  for (std::size_t b = 0; b < cfg.buckets; ++b) {
    if (surge_left == 0 && surge(rng)) surge_left = 3;
    const double rate = surge_left > 0 ? cfg.surge_rate : cfg.base_rate;
    if (surge_left > 0) --surge_left;
    const int n = std::poisson_distribution<int>(rate)(rng);
    for (int i = 0; i < n; ++i) {
      const auto id = std::to_string(seq++);
      const EpochSeconds t = origin + static_cast<EpochSeconds>(b) * w + offset(rng);
      msgs.push_back({"L" + id, "leader", Platform::kChannelBroadcast, t, "update " + id, "update " + id});
      if (repost(rng)) {
        const EpochSeconds ft = origin + static_cast<EpochSeconds>(b + cfg.delay) * w + offset(rng);
        msgs.push_back({"F" + id, "follower", Platform::kChannelBroadcast, ft, "update " + id, "update " + id});
      }
    }
  }
  return Corpus(std::move(msgs));
}

// ---- JSON ----

inline EpochSeconds time_from_json(const nlohmann::json& v) {
  if (v.is_number_integer()) return v.get<EpochSeconds>();
  if (v.is_string()) {
    if (auto t = parse_iso8601(v.get<std::string>())) return *t;
  }
  throw ConfigError("expected an epoch integer or ISO-8601 time, got " + v.dump());
}

inline TimeWindow window_from_json(const nlohmann::json& j) {
  return {time_from_json(j.at("start")), time_from_json(j.at("end"))};
}

inline GeneratorConfig config_from_json(const nlohmann::json& j) {
  GeneratorConfig cfg;
  try {
    cfg.channels = j.value("channels", cfg.channels);
    cfg.span = window_from_json(j.at("span"));
    cfg.base_rate = j.value("base_rate", cfg.base_rate);
    cfg.vocabulary_seed = j.value("vocabulary_seed", cfg.vocabulary_seed);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.resolution = parse_resolution(j.value("resolution", std::string("h")));
    for (const auto& b : j.value("bursts", nlohmann::json::array())) {
      cfg.bursts.push_back({window_from_json(b), b.value("multiplier", 1.0)});
    }
    for (const auto& c : j.value("campaigns", nlohmann::json::array())) {
      CampaignSpec spec;
      spec.template_text = c.at("template_text").get<std::string>();
      for (const auto& ch : c.at("channels")) {
        if (ch.is_number_unsigned() || ch.is_number_integer()) {
          spec.channels.push_back(ch.get<std::size_t>());
        } else {
          const auto name = ch.get<std::string>();
          std::size_t idx = 0;
          while (idx < cfg.channels && channel_name(idx) != name) ++idx;
          if (idx == cfg.channels) throw ConfigError("unknown campaign channel " + name);
          spec.channels.push_back(idx);
        }
      }
      spec.window = window_from_json(c);
      spec.copies_per_channel = c.value("copies_per_channel", std::size_t{1});
      spec.noise_rate = c.value("noise_rate", 0.0);
      cfg.campaigns.push_back(std::move(spec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed generator config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

inline nlohmann::ordered_json truth_json(const GroundTruth& t) {
  auto pairs = nlohmann::ordered_json::array();
  for (const auto& [a, b] : t.planted_pairs) pairs.push_back({a, b});
  nlohmann::ordered_json camp = nlohmann::ordered_json::object();
  for (const auto& [id, c] : t.campaign_of) camp[id] = c;
  return {{"resolution", to_string(t.resolution)},
          {"corpus_digest", t.corpus_digest},
          {"planted_pairs", pairs},
          {"campaign_of", camp}};
}

inline GroundTruth truth_from_json(const nlohmann::json& j) {
  GroundTruth t;
  try {
    t.resolution = parse_resolution(j.at("resolution").get<std::string>());
    t.corpus_digest = j.at("corpus_digest").get<std::string>();
    for (const auto& p : j.at("planted_pairs")) {
      t.planted_pairs.insert(unordered_pair(p.at(0).get<std::string>(), p.at(1).get<std::string>()));
    }
    for (const auto& [id, c] : j.at("campaign_of").items()) t.campaign_of[id] = c.get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed ground truth: ") + e.what());
  }
  return t;
}

inline nlohmann::ordered_json evaluation_json(const Evaluation& e) {
  return {{"precision", e.precision},
          {"recall", e.recall},
          {"f1", e.f1},
          {"true_positives", e.true_positives},
          {"false_positives", e.false_positives},
          {"false_negatives", e.false_negatives}};
}

}  // namespace coordscan::synth

#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <coordscan/coordscan.hpp>

namespace testsupport {

using coordscan::EpochSeconds;
using coordscan::Message;

inline Message msg(std::string id, std::string channel, EpochSeconds t, std::string text) {
  Message m;
  m.id = std::move(id);
  m.channel = std::move(channel);
  m.timestamp = t;
  m.raw_text = std::move(text);
  m.norm_text = coordscan::normalize_text(m.raw_text);
  return m;
}

inline std::string fixture(const std::string& name) { return std::string(COORDSCAN_FIXTURES) + "/" + name; }

// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("coordscan-test-" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// Random lowercase text over a small alphabet so n-grams collide often.
inline std::string random_text(std::mt19937_64& rng, int min_len, int max_len, std::string_view alphabet) {
  std::uniform_int_distribution<int> len(min_len, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::string s;
  const int n = len(rng);
  for (int i = 0; i < n; ++i) s.push_back(alphabet[pick(rng)]);
  return s;
}

// Reference per-channel sizes for the filtered Telegram corpus. The nine counts add up
// to 2047.
inline const std::vector<std::pair<std::string, std::size_t>>& reference_channel_counts() {
  static const std::vector<std::pair<std::string, std::size_t>> kCounts{
      {"rt_news", 1461}, {"bbc_world", 310}, {"france24", 178}, {"bbc_world_feed", 73}, {"euronews", 12},
      {"ap", 8},         {"dw_news", 3},     {"sky_news", 1},   {"cnn_breaking", 1}};
  return kCounts;
}

inline coordscan::Corpus reference_count_corpus() {
  std::vector<Message> msgs;
  EpochSeconds t = coordscan::epoch_from_civil(2025, 9, 1);
  for (const auto& [ch, n] : reference_channel_counts()) {
    for (std::size_t i = 0; i < n; ++i) {
      msgs.push_back(msg(ch + "/" + std::to_string(i), ch, t, "venezuela update " + std::to_string(i)));
      t += 3517;
    }
  }
  return coordscan::Corpus(std::move(msgs));
}

// Brute-force TF-IDF cosine over explicit count maps and dense vectors,
// sharing no code with the library beyond the idf formula.
inline double oracle_cosine(const std::string& a, const std::string& b, const std::vector<std::string>& corpus,
                     int n_min, int n_max) {
  auto grams = [&](const std::string& s) {
    std::map<std::string, double> m;
    const auto cps = coordscan::utf8::decode(s);
    for (int n = n_min; n <= n_max; ++n) {
      for (int i = 0; i + n <= static_cast<int>(cps.size()); ++i) {
        m[coordscan::utf8::encode(cps.substr(static_cast<std::size_t>(i), static_cast<std::size_t>(n)))] += 1;
      }
    }
    return m;
  };
  std::map<std::string, double> df;
  for (const auto& d : corpus) {
    for (const auto& [g, c] : grams(d)) df[g] += 1;
  }
  std::vector<std::string> vocab;
  for (const auto& [g, c] : df) vocab.push_back(g);
  const double n = static_cast<double>(corpus.size());
  auto dense = [&](const std::string& s) {
    const auto m = grams(s);
    std::vector<double> v;
    for (const auto& g : vocab) {
      const auto it = m.find(g);
      v.push_back(it == m.end() ? 0.0 : it->second * (std::log((1 + n) / (1 + df[g])) + 1));
    }
    return v;
  };
  const auto u = dense(a), w = dense(b);
  double dot = 0, nu = 0, nw = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * w[i];
    nu += u[i] * u[i];
    nw += w[i] * w[i];
  }
  if (nu == 0 || nw == 0) return 0;
  return dot / std::sqrt(nu * nw);
}

}  // namespace testsupport

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "error.hpp"
#include "utf8.hpp"

namespace coordscan {

// Character n-gram range and vocabulary pruning. Lengths count Unicode code
// points, not bytes.
struct NGramConfig {
  int n_min = 3;
  int n_max = 5;
  std::size_t min_df = 1;

  void validate() const {
    if (n_min < 1 || n_max < n_min || n_max > 8) {
      throw ConfigError("n-gram range must satisfy 1 <= n_min <= n_max <= 8");
    }
    if (min_df < 1) throw ConfigError("min_df must be >= 1");
  }

  friend bool operator==(const NGramConfig&, const NGramConfig&) = default;
};

namespace detail {

struct ViewHash {
  using is_transparent = void;
  std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
};

using GramCounts = std::vector<std::pair<std::string_view, std::uint32_t>>;

// Distinct n-grams of `text` with counts, as views into `text`, which must be
// valid UTF-8 and outlive the result.
inline GramCounts tally_views(std::string_view text, const NGramConfig& cfg) {
  std::vector<std::size_t> starts;
  starts.reserve(text.size() + 1);
  for (std::size_t i = 0; i < text.size(); ++i) {
    if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) starts.push_back(i);
  }
  starts.push_back(text.size());
  const auto len = static_cast<int>(starts.size()) - 1;
  std::unordered_map<std::string_view, std::uint32_t> tally;
  tally.reserve(static_cast<std::size_t>(len) * static_cast<std::size_t>(cfg.n_max - cfg.n_min + 1));
  for (int n = cfg.n_min; n <= cfg.n_max && n <= len; ++n) {
    for (int i = 0; i + n <= len; ++i) {
      const auto from = starts[static_cast<std::size_t>(i)];
      ++tally[text.substr(from, starts[static_cast<std::size_t>(i + n)] - from)];
    }
  }
  return {tally.begin(), tally.end()};
}

// Re-encodes so that invalid bytes become U+FFFD and code points line up
// with UTF-8 boundaries.
inline std::string canonical_utf8(std::string_view text) { return utf8::encode(utf8::decode(text)); }

}  // namespace detail

// Every contiguous substring of n code points for n in [n_min, n_max], with
// multiplicity.
inline std::map<std::string, std::size_t> extract_ngrams(std::string_view text,
                                                         const NGramConfig& cfg) {
  cfg.validate();
  const auto canon = detail::canonical_utf8(text);
  std::map<std::string, std::size_t> out;
  for (const auto& [g, c] : detail::tally_views(canon, cfg)) out.emplace(std::string(g), c);
  return out;
}

// Unit-length TF-IDF vector with strictly ascending column indices.
struct SparseVector {
  std::vector<std::uint32_t> indices;
  std::vector<double> values;

  bool empty() const { return indices.empty(); }
  std::size_t size() const { return indices.size(); }

  double norm() const {
    double s = 0;
    for (double v : values) s += v * v;
    return std::sqrt(s);
  }
};

struct TfidfModel {
  NGramConfig cfg;
  std::vector<std::string> terms;  // lexicographic; position = column index
  std::unordered_map<std::string, std::uint32_t, detail::ViewHash, std::equal_to<>> vocabulary;
  std::vector<double> idf;
  std::size_t doc_count = 0;

  std::size_t dimension() const { return terms.size(); }
};

// Smoothed idf: ln((1 + N) / (1 + df)) + 1.
inline double smooth_idf(std::size_t n_docs, std::size_t df) {
  return std::log((1.0 + static_cast<double>(n_docs)) / (1.0 + static_cast<double>(df))) + 1.0;
}

namespace detail {

// Shared by fit and fit_transform: per-document tallies plus the pruned,
// lexicographically sorted vocabulary as views into `canon`.
struct Tallied {
  std::vector<std::string> canon;
  std::vector<GramCounts> grams;
  std::unordered_map<std::string_view, std::size_t> df;
  std::vector<std::string_view> terms;
};

inline Tallied tally_corpus(std::span<const std::string> docs, const NGramConfig& cfg) {
  cfg.validate();
  if (docs.empty()) throw DataError("fit: no documents");
  Tallied t;
  t.canon.reserve(docs.size());
  for (const auto& d : docs) t.canon.push_back(canonical_utf8(d));
  t.grams.reserve(docs.size());
  for (const auto& c : t.canon) {
    t.grams.push_back(tally_views(c, cfg));
    for (const auto& [g, n] : t.grams.back()) ++t.df[g];
  }
  for (const auto& [g, n] : t.df) {
    if (n >= cfg.min_df) t.terms.push_back(g);
  }
  if (t.terms.empty()) throw DataError("fit: vocabulary is empty after n-gram extraction");
  std::sort(t.terms.begin(), t.terms.end());
  return t;
}

// Raw count times idf, then L2-normalised.
inline SparseVector weigh(std::vector<std::pair<std::uint32_t, double>>& entries, bool sorted = false) {
  if (!sorted) {
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  }
  double sq = 0;
  for (const auto& e : entries) sq += e.second * e.second;
  SparseVector v;
  if (sq == 0) return v;
  const double inv = 1.0 / std::sqrt(sq);
  v.indices.reserve(entries.size());
  v.values.reserve(entries.size());
  for (const auto& [i, w] : entries) {
    v.indices.push_back(i);
    v.values.push_back(w * inv);
  }
  return v;
}

}  // namespace detail

inline TfidfModel fit(std::span<const std::string> docs, const NGramConfig& cfg) {
  const auto t = detail::tally_corpus(docs, cfg);
  TfidfModel model;
  model.cfg = cfg;
  model.doc_count = docs.size();
  model.terms.assign(t.terms.begin(), t.terms.end());
  model.vocabulary.reserve(model.terms.size());
  model.idf.reserve(model.terms.size());
  for (std::size_t i = 0; i < model.terms.size(); ++i) {
    model.vocabulary.emplace(model.terms[i], static_cast<std::uint32_t>(i));
    model.idf.push_back(smooth_idf(docs.size(), t.df.at(t.terms[i])));
  }
  return model;
}

// Out-of-vocabulary n-grams are ignored; a document with none in vocabulary
// gives an empty vector.
inline SparseVector transform(std::string_view doc, const TfidfModel& model) {
  const auto canon = detail::canonical_utf8(doc);
  std::vector<std::pair<std::uint32_t, double>> entries;
  for (const auto& [g, c] : detail::tally_views(canon, model.cfg)) {
    auto it = model.vocabulary.find(g);
    if (it == model.vocabulary.end()) continue;
    entries.emplace_back(it->second, static_cast<double>(c) * model.idf[it->second]);
  }
  return detail::weigh(entries);
}

inline std::vector<SparseVector> transform_all(std::span<const std::string> docs,
                                               const TfidfModel& model) {
  std::vector<SparseVector> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(transform(d, model));
  return out;
}

// Same result as transform_all(docs, fit(docs, cfg)) with one n-gram pass.
inline std::vector<SparseVector> fit_transform(std::span<const std::string> docs, const NGramConfig& cfg) {
  const auto t = detail::tally_corpus(docs, cfg);
  std::unordered_map<std::string_view, std::pair<std::uint32_t, double>> column;
  column.reserve(t.terms.size());
  for (std::size_t i = 0; i < t.terms.size(); ++i) {
    column.emplace(t.terms[i], std::pair{static_cast<std::uint32_t>(i), smooth_idf(docs.size(), t.df.at(t.terms[i]))});
  }
  std::vector<SparseVector> out;
  out.reserve(docs.size());
  std::vector<std::pair<std::uint32_t, double>> entries;
  for (const auto& grams : t.grams) {
    entries.clear();
    for (const auto& [g, c] : grams) {
      auto it = column.find(g);
      if (it == column.end()) continue;
      entries.emplace_back(it->second.first, static_cast<double>(c) * it->second.second);
    }
    out.push_back(detail::weigh(entries));
  }
  return out;
}

// Dot product of two unit vectors; 0 when either is empty.
inline double cosine(const SparseVector& u, const SparseVector& v) {
  double dot = 0;
  std::size_t i = 0, j = 0;
  while (i < u.indices.size() && j < v.indices.size()) {
    if (u.indices[i] < v.indices[j]) {
      ++i;
    } else if (u.indices[i] > v.indices[j]) {
      ++j;
    } else {
      dot += u.values[i++] * v.values[j++];
    }
  }
  return dot;
}

}  // namespace coordscan

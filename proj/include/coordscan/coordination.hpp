#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "error.hpp"
#include "io.hpp"
#include "seeding.hpp"
#include "simindex.hpp"
#include "timeutil.hpp"

namespace coordscan {

enum class Resolution { kHourly, kDaily };

inline std::string_view to_string(Resolution r) { return r == Resolution::kHourly ? "h" : "D"; }

inline Resolution parse_resolution(std::string_view s) {
  if (s == "h" || s == "hourly") return Resolution::kHourly;
  if (s == "D" || s == "daily") return Resolution::kDaily;
  throw ConfigError("bucket resolution must be 'h' or 'D', got '" + std::string(s) + "'");
}

inline constexpr EpochSeconds bucket_width(Resolution r) {
  return r == Resolution::kHourly ? kSecondsPerHour : kSecondsPerDay;
}

// UTC-aligned fixed window.
struct BucketKey {
  Resolution resolution = Resolution::kHourly;
  EpochSeconds start = 0;

  EpochSeconds end() const { return start + bucket_width(resolution); }
  auto operator<=>(const BucketKey&) const = default;
};

inline BucketKey bucket_of(EpochSeconds t, Resolution r) {
  const auto w = bucket_width(r);
  return {r, floor_div(t, w) * w};
}

inline std::string format_bucket(const BucketKey& b) {
  return b.resolution == Resolution::kDaily ? format_date(b.start) : format_datetime(b.start);
}

// Corpus positions grouped by bucket; empty buckets are absent.
inline std::map<BucketKey, std::vector<std::size_t>> bucket_indices(const Corpus& corpus,
                                                                    Resolution r) {
  std::map<BucketKey, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < corpus.size(); ++i) out[bucket_of(corpus[i].timestamp, r)].push_back(i);
  return out;
}

inline std::map<BucketKey, std::vector<Message>> bucketize(const Corpus& corpus, Resolution r) {
  std::map<BucketKey, std::vector<Message>> out;
  for (const auto& m : corpus) out[bucket_of(m.timestamp, r)].push_back(m);
  return out;
}

// A cross-channel message pair in one bucket. Orientation is canonical:
// (channel_a, msg_a) < (channel_b, msg_b).
struct CoordinationPair {
  BucketKey bucket;
  std::string msg_a;
  std::string msg_b;
  std::string channel_a;
  std::string channel_b;
  double score = 0;

  friend bool operator==(const CoordinationPair&, const CoordinationPair&) = default;
};

enum class IdfScope { kBucket, kGlobal };

inline IdfScope parse_idf_scope(std::string_view s) {
  if (s == "bucket") return IdfScope::kBucket;
  if (s == "global") return IdfScope::kGlobal;
  throw ConfigError("idf scope must be 'bucket' or 'global'");
}

inline std::string_view to_string(IdfScope s) { return s == IdfScope::kBucket ? "bucket" : "global"; }

struct DetectionConfig {
  Resolution resolution = Resolution::kHourly;
  NGramConfig ngram;
  IdfScope idf_scope = IdfScope::kBucket;
};

inline constexpr std::size_t kHistogramBins = 50;
using Histogram = std::array<std::size_t, kHistogramBins>;

inline std::size_t histogram_bin(double score) {
  const auto b = static_cast<std::size_t>(std::floor(score * static_cast<double>(kHistogramBins)));
  return std::min(b, kHistogramBins - 1);
}

inline std::string corpus_digest(const Corpus& corpus) { return io::sha256_hex(to_jsonl(corpus)); }

// Every distinct message text as (term id, count) rows over one
// lexicographically ordered vocabulary. Term ids keep the relative order a
// per-bucket fit would give, so bucket-local TF-IDF computed from these rows
// is bit-identical to fit_transform on the bucket, without re-tallying text.
struct GramIndex {
  NGramConfig ngram;
  std::size_t vocabulary_size = 0;
  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> rows;
  std::unordered_map<std::string, std::uint32_t> row_of_text;  // keyed by norm_text

  const std::vector<std::pair<std::uint32_t, std::uint32_t>>& row(const std::string& norm_text) const {
    const auto it = row_of_text.find(norm_text);
    if (it == row_of_text.end()) throw DataError("gram index does not cover this corpus");
    return rows[it->second];
  }
};

namespace detail {

// First eight bytes, big-endian and zero-padded. Whenever two keys differ,
// they order the same way as the full strings.
inline std::uint64_t prefix_key(std::string_view g) {
  std::uint64_t k = 0;
  for (std::size_t i = 0; i < 8; ++i) {
    k = (k << 8) | (i < g.size() ? static_cast<unsigned char>(g[i]) : 0u);
  }
  return k;
}

// Open-addressing table from n-gram text to a first-seen id. Grams of up to
// eight bytes are identified by their packed bytes alone.
class GramTable {
 public:
  explicit GramTable(std::size_t expected) {
    std::size_t cap = 1024;
    while (cap < expected) cap <<= 1;
    slots_.assign(cap, Slot{});
  }

  std::uint32_t id(std::string_view g) {
    const bool inline_key = g.size() <= 8;
    const std::uint64_t key = inline_key ? prefix_key(g) : std::hash<std::string_view>{}(g);
    const auto len = static_cast<std::uint32_t>(g.size());
    std::size_t i = mix(key) & (slots_.size() - 1);
    while (true) {
      auto& s = slots_[i];
      if (s.id == kEmpty) {
        s = {key, static_cast<std::uint32_t>(keys_.size()), len};
        keys_.push_back(g);
        if (keys_.size() * 2 > slots_.size()) grow();
        return static_cast<std::uint32_t>(keys_.size() - 1);
      }
      if (s.key == key && s.len == len && (inline_key || keys_[s.id] == g)) return s.id;
      i = (i + 1) & (slots_.size() - 1);
    }
  }

  const std::vector<std::string_view>& keys() const { return keys_; }

 private:
  static constexpr std::uint32_t kEmpty = 0xFFFFFFFFu;
  struct Slot {
    std::uint64_t key = 0;
    std::uint32_t id = kEmpty;
    std::uint32_t len = 0;
  };

  static std::uint64_t mix(std::uint64_t x) {
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdULL;
    x ^= x >> 33;
    return x;
  }

  void grow() {
    std::vector<Slot> old(slots_.size() * 2);
    old.swap(slots_);
    for (const auto& s : old) {
      if (s.id == kEmpty) continue;
      std::size_t i = mix(s.key) & (slots_.size() - 1);
      while (slots_[i].id != kEmpty) i = (i + 1) & (slots_.size() - 1);
      slots_[i] = s;
    }
  }

  std::vector<Slot> slots_;
  std::vector<std::string_view> keys_;
};

}  // namespace detail

inline GramIndex build_gram_index(const Corpus& corpus, const NGramConfig& cfg) {
  cfg.validate();
  GramIndex idx;
  idx.ngram = cfg;
  std::vector<std::string> canon;
  for (const auto& m : corpus) {
    if (idx.row_of_text.emplace(m.norm_text, static_cast<std::uint32_t>(canon.size())).second) {
      canon.push_back(detail::canonical_utf8(m.norm_text));
    }
  }
  std::size_t total_bytes = 0;
  for (const auto& c : canon) total_bytes += c.size();
  detail::GramTable table(total_bytes);
  std::vector<std::vector<std::uint32_t>> occurrences(canon.size());
  std::vector<std::size_t> starts;
  for (std::size_t d = 0; d < canon.size(); ++d) {
    const std::string_view text = canon[d];
    starts.clear();
    for (std::size_t i = 0; i < text.size(); ++i) {
      if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) starts.push_back(i);
    }
    starts.push_back(text.size());
    const auto len = static_cast<int>(starts.size()) - 1;
    occurrences[d].reserve(static_cast<std::size_t>(len) * static_cast<std::size_t>(cfg.n_max - cfg.n_min + 1));
    for (int n = cfg.n_min; n <= cfg.n_max && n <= len; ++n) {
      for (int i = 0; i + n <= len; ++i) {
        const auto from = starts[static_cast<std::size_t>(i)];
        occurrences[d].push_back(table.id(text.substr(from, starts[static_cast<std::size_t>(i + n)] - from)));
      }
    }
  }
  // Renumber first-seen ids into lexicographic order.
  const auto& keys = table.keys();
  std::vector<std::pair<std::uint64_t, std::uint32_t>> order(keys.size());
  for (std::uint32_t i = 0; i < keys.size(); ++i) order[i] = {detail::prefix_key(keys[i]), i};
  std::sort(order.begin(), order.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return keys[a.second] < keys[b.second];
  });
  std::vector<std::uint32_t> rank(keys.size());
  for (std::size_t i = 0; i < order.size(); ++i) rank[order[i].second] = static_cast<std::uint32_t>(i);
  idx.vocabulary_size = keys.size();
  idx.rows.reserve(occurrences.size());
  for (auto& occ : occurrences) {
    for (auto& id : occ) id = rank[id];
    std::sort(occ.begin(), occ.end());
    auto& row = idx.rows.emplace_back();
    for (std::size_t i = 0; i < occ.size();) {
      std::size_t j = i;
      while (j < occ.size() && occ[j] == occ[i]) ++j;
      row.emplace_back(occ[i], static_cast<std::uint32_t>(j - i));
      i = j;
    }
  }
  return idx;
}

// Every cross-channel pair score for one (corpus, resolution, n-gram config).
// Computed once; thresholding is a pure filter over it.
class PairScores {
 public:
  struct Entry {
    std::uint32_t bucket;  // index into buckets()
    std::uint32_t a;       // corpus positions, canonical orientation
    std::uint32_t b;
    double score;
  };

  Resolution resolution = Resolution::kHourly;
  std::size_t total_buckets = 0;
  std::size_t comparable_buckets = 0;
  std::string corpus_digest;

  const std::vector<BucketKey>& buckets() const { return buckets_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t evaluated() const { return entries_.size(); }

  std::size_t count_at(double tau) const {
    return static_cast<std::size_t>(std::count_if(
        entries_.begin(), entries_.end(), [tau](const Entry& e) { return e.score >= tau; }));
  }

  CoordinationPair materialize(const Entry& e) const {
    return {buckets_[e.bucket], ids_[e.a], ids_[e.b], channels_[e.a], channels_[e.b], e.score};
  }

  std::vector<CoordinationPair> pairs_at(double tau) const {
    std::vector<CoordinationPair> out;
    for (const auto& e : entries_) {
      if (e.score >= tau) out.push_back(materialize(e));
    }
    return out;
  }

  Histogram histogram() const {
    Histogram h{};
    for (const auto& e : entries_) ++h[histogram_bin(e.score)];
    return h;
  }

 private:
  friend PairScores score_pairs(const Corpus&, const DetectionConfig&, const GramIndex&, bool);

  std::vector<BucketKey> buckets_;
  std::vector<Entry> entries_;
  std::vector<std::string> ids_;
  std::vector<std::string> channels_;
};

namespace detail {

// Cosine clamped to [0,1]; values within 1e-12 of 1 snap to 1 so identical
// texts meet tau = 1.
inline double clamp_score(double s) {
  if (s > 1.0 - 1e-12) return 1.0;
  return s < 0 ? 0.0 : s;
}

}  // namespace detail

namespace detail {

// TF-IDF vectors for `docs` with document frequencies taken over `docs`
// themselves; `df` is scratch space of vocabulary size, left zeroed.
inline std::vector<SparseVector> index_vectors(
    const std::vector<const std::vector<std::pair<std::uint32_t, std::uint32_t>>*>& docs, std::size_t min_df,
    std::vector<std::uint32_t>& df) {
  for (const auto* r : docs) {
    for (const auto& [id, n] : *r) ++df[id];
  }
  std::vector<double> idf(docs.size() + 1);
  for (std::size_t k = 1; k <= docs.size(); ++k) idf[k] = smooth_idf(docs.size(), k);
  std::vector<SparseVector> out(docs.size());
  std::vector<std::pair<std::uint32_t, double>> entries;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    entries.clear();
    for (const auto& [id, n] : *docs[d]) {
      if (df[id] < min_df) continue;
      entries.emplace_back(id, static_cast<double>(n) * idf[df[id]]);
    }
    out[d] = weigh(entries, true);
  }
  for (const auto* r : docs) {
    for (const auto& [id, n] : *r) df[id] = 0;
  }
  return out;
}

}  // namespace detail

// `index` must cover every message text in `corpus` and match cfg.ngram.
// Without `with_digest` the corpus digest is left empty.
inline PairScores score_pairs(const Corpus& corpus, const DetectionConfig& cfg, const GramIndex& index,
                              bool with_digest = true) {
  cfg.ngram.validate();
  if (!(index.ngram == cfg.ngram)) throw ConfigError("gram index was built with a different n-gram config");
  PairScores out;
  out.resolution = cfg.resolution;
  if (with_digest) out.corpus_digest = corpus_digest(corpus);
  out.ids_.reserve(corpus.size());
  out.channels_.reserve(corpus.size());
  for (const auto& m : corpus) {
    out.ids_.push_back(m.id);
    out.channels_.push_back(m.channel);
  }

  std::vector<std::uint32_t> df(index.vocabulary_size, 0);
  std::vector<double> dense(index.vocabulary_size, 0.0);
  std::vector<SparseVector> global;
  if (cfg.idf_scope == IdfScope::kGlobal && !corpus.empty()) {
    std::vector<const std::vector<std::pair<std::uint32_t, std::uint32_t>>*> rows;
    rows.reserve(corpus.size());
    for (const auto& m : corpus) rows.push_back(&index.row(m.norm_text));
    global = detail::index_vectors(rows, cfg.ngram.min_df, df);
  }

  const auto groups = bucket_indices(corpus, cfg.resolution);
  out.total_buckets = groups.size();
  for (const auto& [key, members] : groups) {
    std::set<std::string_view> chans;
    for (auto i : members) chans.insert(corpus[i].channel);
    if (chans.size() < 2) continue;
    ++out.comparable_buckets;
    const auto bucket_idx = static_cast<std::uint32_t>(out.buckets_.size());
    out.buckets_.push_back(key);

    std::vector<const SparseVector*> vecs(members.size());
    std::vector<SparseVector> local;
    if (cfg.idf_scope == IdfScope::kBucket) {
      std::vector<const std::vector<std::pair<std::uint32_t, std::uint32_t>>*> rows;
      rows.reserve(members.size());
      for (auto i : members) rows.push_back(&index.row(corpus[i].norm_text));
      local = detail::index_vectors(rows, cfg.ngram.min_df, df);
      for (std::size_t k = 0; k < members.size(); ++k) vecs[k] = &local[k];
    } else {
      for (std::size_t k = 0; k < members.size(); ++k) vecs[k] = &global[members[k]];
    }

    // x is scattered into `dense` and each partner gathers from it; terms
    // are summed in ascending id order, as cosine() would.
    std::vector<PairScores::Entry> bucket_entries;
    for (std::size_t x = 0; x < members.size(); ++x) {
      const auto& vx = *vecs[x];
      for (std::size_t t = 0; t < vx.size(); ++t) dense[vx.indices[t]] = vx.values[t];
      for (std::size_t y = x + 1; y < members.size(); ++y) {
        auto a = members[x];
        auto b = members[y];
        const auto& ma = corpus[a];
        const auto& mb = corpus[b];
        if (ma.channel == mb.channel) continue;
        if (std::tie(mb.channel, mb.id) < std::tie(ma.channel, ma.id)) std::swap(a, b);
        const auto& vy = *vecs[y];
        double dot = 0;
        if (!vx.empty()) {
          for (std::size_t t = 0; t < vy.size(); ++t) dot += dense[vy.indices[t]] * vy.values[t];
        }
        bucket_entries.push_back({bucket_idx, static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b),
                                  detail::clamp_score(dot)});
      }
      for (std::size_t t = 0; t < vx.size(); ++t) dense[vx.indices[t]] = 0;
    }
    std::sort(bucket_entries.begin(), bucket_entries.end(), [&](const auto& l, const auto& r) {
      const auto& la = corpus[l.a];
      const auto& lb = corpus[l.b];
      const auto& ra = corpus[r.a];
      const auto& rb = corpus[r.b];
      return std::tie(la.channel, la.id, lb.channel, lb.id) <
             std::tie(ra.channel, ra.id, rb.channel, rb.id);
    });
    out.entries_.insert(out.entries_.end(), bucket_entries.begin(), bucket_entries.end());
  }
  return out;
}

inline PairScores score_pairs(const Corpus& corpus, const DetectionConfig& cfg) {
  return score_pairs(corpus, cfg, build_gram_index(corpus, cfg.ngram));
}

struct DetectionReport {
  Resolution resolution = Resolution::kHourly;
  double tau = 0;
  std::size_t total_buckets = 0;
  std::size_t comparable_buckets = 0;
  std::size_t pair_buckets = 0;
  std::size_t evaluated_pairs = 0;
  std::vector<CoordinationPair> pairs;
  Histogram histogram{};
  std::string corpus_digest;
};

inline void check_tau(double tau) {
  if (!(tau > 0 && tau <= 1)) throw ConfigError("tau must lie in (0, 1]");
}

inline DetectionReport report_at(const PairScores& scores, double tau) {
  check_tau(tau);
  DetectionReport r;
  r.resolution = scores.resolution;
  r.tau = tau;
  r.total_buckets = scores.total_buckets;
  r.comparable_buckets = scores.comparable_buckets;
  r.evaluated_pairs = scores.evaluated();
  r.pairs = scores.pairs_at(tau);
  r.histogram = scores.histogram();
  r.corpus_digest = scores.corpus_digest;
  std::set<BucketKey> with_pairs;
  for (const auto& p : r.pairs) with_pairs.insert(p.bucket);
  r.pair_buckets = with_pairs.size();
  return r;
}

inline DetectionReport detect(const Corpus& corpus, double tau, const DetectionConfig& cfg) {
  check_tau(tau);
  return report_at(score_pairs(corpus, cfg), tau);
}

struct SweepCurve {
  std::vector<double> taus;
  std::vector<std::size_t> pair_counts;
};

inline void check_taus(std::span<const double> taus) {
  if (taus.empty()) throw ConfigError("threshold sweep needs at least one tau");
  for (std::size_t i = 0; i < taus.size(); ++i) {
    check_tau(taus[i]);
    if (i && taus[i] < taus[i - 1]) throw ConfigError("sweep taus must be ascending");
  }
}

inline SweepCurve threshold_sweep(const PairScores& scores, std::span<const double> taus) {
  check_taus(taus);
  SweepCurve c;
  c.taus.assign(taus.begin(), taus.end());
  for (double t : taus) c.pair_counts.push_back(scores.count_at(t));
  return c;
}

inline SweepCurve threshold_sweep(const Corpus& corpus, std::span<const double> taus,
                                  const DetectionConfig& cfg) {
  check_taus(taus);
  return threshold_sweep(score_pairs(corpus, cfg), taus);
}

// Parses `lo:hi:step` into an inclusive ascending list, rounded to 1e-6.
inline std::vector<double> parse_sweep(std::string_view spec) {
  const auto c1 = spec.find(':');
  const auto c2 = c1 == spec.npos ? spec.npos : spec.find(':', c1 + 1);
  if (c2 == spec.npos) throw ConfigError("sweep must look like lo:hi:step");
  double lo = 0, hi = 0, step = 0;
  try {
    lo = std::stod(std::string(spec.substr(0, c1)));
    hi = std::stod(std::string(spec.substr(c1 + 1, c2 - c1 - 1)));
    step = std::stod(std::string(spec.substr(c2 + 1)));
  } catch (const std::exception&) {
    throw ConfigError("sweep bounds are not numbers: " + std::string(spec));
  }
  if (!(step > 0) || hi < lo) throw ConfigError("sweep needs step > 0 and hi >= lo");
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> taus;
  for (std::size_t i = 0; i < n; ++i) {
    taus.push_back(std::round((lo + static_cast<double>(i) * step) * 1e6) / 1e6);
  }
  check_taus(taus);
  return taus;
}

// Permutes timestamps within each channel. Channel streams use seeds derived
// from (seed, channel name), so the result does not depend on channel order.
inline Corpus shuffle_timestamps(const Corpus& corpus, std::uint64_t seed) {
  std::map<std::string_view, std::vector<std::size_t>> by_channel;
  for (std::size_t i = 0; i < corpus.size(); ++i) by_channel[corpus[i].channel].push_back(i);
  std::vector<Message> out(corpus.messages());
  for (const auto& [channel, members] : by_channel) {
    std::vector<EpochSeconds> stamps;
    stamps.reserve(members.size());
    for (auto i : members) stamps.push_back(corpus[i].timestamp);
    std::mt19937_64 rng(derive_seed(seed, {fnv1a64(channel)}));
    std::shuffle(stamps.begin(), stamps.end(), rng);
    for (std::size_t k = 0; k < members.size(); ++k) out[members[k]].timestamp = stamps[k];
  }
  return Corpus(std::move(out));
}

// Bucket census at one threshold, the row format of a negative-control table.
struct ControlRow {
  std::size_t total_buckets = 0;
  std::size_t comparable_buckets = 0;
  std::size_t pair_buckets = 0;
  std::size_t pairs = 0;
};

struct ControlResult {
  double reference_tau = 0.85;
  std::uint64_t seed = 0;
  SweepCurve original;
  std::vector<SweepCurve> replicates;
  std::vector<double> mean_shuffled;  // aligned to original.taus
  ControlRow original_row;
  std::vector<ControlRow> replicate_rows;
};

inline ControlRow control_row(const PairScores& scores, double tau) {
  const auto r = report_at(scores, tau);
  return {r.total_buckets, r.comparable_buckets, r.pair_buckets, r.pairs.size()};
}

inline std::uint64_t replicate_seed(std::uint64_t seed, std::size_t replicate) {
  return derive_seed(seed, {0x5348554646ull, replicate});
}

inline ControlResult negative_control(const Corpus& corpus, std::span<const double> taus,
                                      double reference_tau, std::uint64_t seed, std::size_t replicates,
                                      const DetectionConfig& cfg, const GramIndex& index) {
  if (replicates < 1) throw ConfigError("negative control needs at least one replicate");
  check_taus(taus);
  check_tau(reference_tau);
  ControlResult res;
  res.reference_tau = reference_tau;
  res.seed = seed;
  const auto original = score_pairs(corpus, cfg, index);
  res.original = threshold_sweep(original, taus);
  res.original_row = control_row(original, reference_tau);
  res.mean_shuffled.assign(taus.size(), 0.0);
  for (std::size_t r = 0; r < replicates; ++r) {
    const auto shuffled = score_pairs(shuffle_timestamps(corpus, replicate_seed(seed, r)), cfg, index, false);
    res.replicates.push_back(threshold_sweep(shuffled, taus));
    res.replicate_rows.push_back(control_row(shuffled, reference_tau));
    for (std::size_t t = 0; t < taus.size(); ++t) {
      res.mean_shuffled[t] += static_cast<double>(res.replicates.back().pair_counts[t]);
    }
  }
  for (auto& m : res.mean_shuffled) m /= static_cast<double>(replicates);
  return res;
}

inline ControlResult negative_control(const Corpus& corpus, std::span<const double> taus,
                                      double reference_tau, std::uint64_t seed,
                                      std::size_t replicates, const DetectionConfig& cfg) {
  return negative_control(corpus, taus, reference_tau, seed, replicates, cfg, build_gram_index(corpus, cfg.ngram));
}

struct Feasibility {
  Resolution resolution = Resolution::kDaily;
  std::size_t total_buckets = 0;
  std::size_t comparable_buckets = 0;
  std::vector<std::pair<BucketKey, std::size_t>> channels_per_bucket;

  bool estimable() const { return comparable_buckets > 0; }
};

inline Feasibility feasibility(const Corpus& corpus, Resolution r) {
  Feasibility f;
  f.resolution = r;
  std::map<BucketKey, std::set<std::string_view>> chans;
  for (const auto& m : corpus) chans[bucket_of(m.timestamp, r)].insert(m.channel);
  f.total_buckets = chans.size();
  for (const auto& [k, s] : chans) {
    f.channels_per_bucket.emplace_back(k, s.size());
    if (s.size() >= 2) ++f.comparable_buckets;
  }
  return f;
}

// Undirected channel graph weighted by pair counts.
struct CoordGraph {
  std::vector<std::string> nodes;  // sorted
  std::map<std::pair<std::string, std::string>, std::size_t> edges;  // key.first < key.second
};

inline CoordGraph project_graph(std::span<const CoordinationPair> pairs) {
  CoordGraph g;
  std::set<std::string> nodes;
  for (const auto& p : pairs) {
    if (p.channel_a == p.channel_b) continue;
    auto key = std::minmax(p.channel_a, p.channel_b);
    ++g.edges[{key.first, key.second}];
    nodes.insert(p.channel_a);
    nodes.insert(p.channel_b);
  }
  g.nodes.assign(nodes.begin(), nodes.end());
  return g;
}

// ---- serialization ----

inline std::string pairs_csv(std::span<const CoordinationPair> pairs) {
  io::CsvWriter csv{"bucket_start", "resolution", "channel_a", "msg_a", "channel_b", "msg_b", "score"};
  for (const auto& p : pairs) {
    csv.row({format_bucket(p.bucket), std::string(to_string(p.bucket.resolution)), p.channel_a,
             p.msg_a, p.channel_b, p.msg_b, io::format_double(p.score)});
  }
  return csv.str();
}

inline std::string histogram_csv(const Histogram& h) {
  io::CsvWriter csv{"bin_lo", "bin_hi", "count"};
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double lo = static_cast<double>(i) / kHistogramBins;
    const double hi = static_cast<double>(i + 1) / kHistogramBins;
    csv.row({io::format_double(lo), io::format_double(hi), std::to_string(h[i])});
  }
  return csv.str();
}

inline nlohmann::ordered_json pair_json(const CoordinationPair& p) {
  return {{"bucket_start", format_bucket(p.bucket)},
          {"channel_a", p.channel_a},
          {"msg_a", p.msg_a},
          {"channel_b", p.channel_b},
          {"msg_b", p.msg_b},
          {"score", p.score}};
}

inline nlohmann::ordered_json report_json(const DetectionReport& r) {
  nlohmann::ordered_json j;
  j["resolution"] = to_string(r.resolution);
  j["tau"] = r.tau;
  j["corpus_digest"] = r.corpus_digest;
  j["total_buckets"] = r.total_buckets;
  j["comparable_buckets"] = r.comparable_buckets;
  j["pair_buckets"] = r.pair_buckets;
  j["evaluated_pairs"] = r.evaluated_pairs;
  j["histogram"] = r.histogram;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& p : r.pairs) arr.push_back(pair_json(p));
  j["pairs"] = arr;
  return j;
}

inline DetectionReport report_from_json(const nlohmann::json& j) {
  DetectionReport r;
  try {
    r.resolution = parse_resolution(j.at("resolution").get<std::string>());
    r.tau = j.at("tau").get<double>();
    r.corpus_digest = j.at("corpus_digest").get<std::string>();
    r.total_buckets = j.at("total_buckets").get<std::size_t>();
    r.comparable_buckets = j.at("comparable_buckets").get<std::size_t>();
    r.pair_buckets = j.at("pair_buckets").get<std::size_t>();
    r.evaluated_pairs = j.at("evaluated_pairs").get<std::size_t>();
    r.histogram = j.at("histogram").get<Histogram>();
    for (const auto& p : j.at("pairs")) {
      CoordinationPair cp;
      cp.msg_a = p.at("msg_a").get<std::string>();
      cp.msg_b = p.at("msg_b").get<std::string>();
      cp.channel_a = p.at("channel_a").get<std::string>();
      cp.channel_b = p.at("channel_b").get<std::string>();
      cp.score = p.at("score").get<double>();
      const auto start = p.at("bucket_start").get<std::string>();
      const auto t = parse_iso8601(start);
      if (!t) throw DataError("bad bucket_start " + start);
      cp.bucket = {r.resolution, *t};
      r.pairs.push_back(std::move(cp));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed detection report: ") + e.what());
  }
  return r;
}

inline std::string sweep_csv(const SweepCurve& c) {
  io::CsvWriter csv{"tau", "pairs"};
  for (std::size_t i = 0; i < c.taus.size(); ++i) {
    csv.row({io::format_double(c.taus[i]), std::to_string(c.pair_counts[i])});
  }
  return csv.str();
}

inline nlohmann::ordered_json sweep_json(const SweepCurve& c) {
  return {{"taus", c.taus}, {"pair_counts", c.pair_counts}};
}

inline nlohmann::ordered_json control_row_json(const ControlRow& r) {
  return {{"total_buckets", r.total_buckets},
          {"comparable_buckets", r.comparable_buckets},
          {"pair_buckets", r.pair_buckets},
          {"pairs", r.pairs}};
}

inline nlohmann::ordered_json control_json(const ControlResult& c) {
  nlohmann::ordered_json j;
  j["reference_tau"] = c.reference_tau;
  j["seed"] = c.seed;
  j["replicates"] = c.replicates.size();
  j["original"] = control_row_json(c.original_row);
  auto rows = nlohmann::ordered_json::array();
  for (const auto& r : c.replicate_rows) rows.push_back(control_row_json(r));
  j["shuffled"] = rows;
  j["taus"] = c.original.taus;
  j["original_curve"] = c.original.pair_counts;
  j["mean_shuffled_curve"] = c.mean_shuffled;
  auto curves = nlohmann::ordered_json::array();
  for (const auto& r : c.replicates) curves.push_back(r.pair_counts);
  j["replicate_curves"] = curves;
  return j;
}

// `tau,original,mean_shuffled,rep_0,...`
inline std::string control_csv(const ControlResult& c) {
  std::vector<std::string> header{"tau", "original", "mean_shuffled"};
  for (std::size_t r = 0; r < c.replicates.size(); ++r) header.push_back("rep_" + std::to_string(r));
  std::string out;
  for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
  out.push_back('\n');
  for (std::size_t t = 0; t < c.original.taus.size(); ++t) {
    out += io::format_double(c.original.taus[t]) + "," + std::to_string(c.original.pair_counts[t]) +
           "," + io::format_double(c.mean_shuffled[t]);
    for (const auto& r : c.replicates) out += "," + std::to_string(r.pair_counts[t]);
    out.push_back('\n');
  }
  return out;
}

inline nlohmann::ordered_json feasibility_json(const Feasibility& f) {
  return {{"resolution", to_string(f.resolution)},
          {"total_buckets", f.total_buckets},
          {"comparable_buckets", f.comparable_buckets},
          {"estimable", f.estimable()}};
}

inline std::string feasibility_csv(const Feasibility& f) {
  io::CsvWriter csv{"bucket_start", "channels"};
  for (const auto& [k, n] : f.channels_per_bucket) csv.row({format_bucket(k), std::to_string(n)});
  return csv.str();
}

inline nlohmann::ordered_json graph_json(const CoordGraph& g) {
  auto edges = nlohmann::ordered_json::array();
  for (const auto& [k, w] : g.edges) edges.push_back({{"source", k.first}, {"target", k.second}, {"weight", w}});
  return {{"nodes", g.nodes}, {"edges", edges}};
}

inline std::string edges_csv(const CoordGraph& g) {
  io::CsvWriter csv{"channel_a", "channel_b", "weight"};
  for (const auto& [k, w] : g.edges) csv.row({k.first, k.second, std::to_string(w)});
  return csv.str();
}

}  // namespace coordscan

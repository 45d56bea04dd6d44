#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "coordination.hpp"
#include "corpus.hpp"
#include "error.hpp"
#include "io.hpp"

namespace coordscan {

struct VolumePoint {
  BucketKey bucket;
  std::vector<std::size_t> counts;  // aligned to VolumeSeries::channels
  std::size_t total = 0;
};

// Zero-filled per-channel message counts from the first to the last occupied
// bucket.
struct VolumeSeries {
  Resolution resolution = Resolution::kDaily;
  std::vector<std::string> channels;
  std::vector<VolumePoint> points;

  std::vector<double> channel_values(std::size_t c) const {
    std::vector<double> v;
    v.reserve(points.size());
    for (const auto& p : points) v.push_back(static_cast<double>(p.counts[c]));
    return v;
  }
};

inline VolumeSeries volume_series(const Corpus& corpus, Resolution r) {
  if (corpus.empty()) throw DataError("volume_series: corpus is empty");
  VolumeSeries s;
  s.resolution = r;
  s.channels = corpus.channels();
  std::map<std::string_view, std::size_t> col;
  for (std::size_t i = 0; i < s.channels.size(); ++i) col[s.channels[i]] = i;
  const auto first = bucket_of(corpus.messages().front().timestamp, r).start;
  const auto last = bucket_of(corpus.messages().back().timestamp, r).start;
  const auto w = bucket_width(r);
  for (EpochSeconds t = first; t <= last; t += w) {
    s.points.push_back({{r, t}, std::vector<std::size_t>(s.channels.size(), 0), 0});
  }
  for (const auto& m : corpus) {
    auto& p = s.points[static_cast<std::size_t>((bucket_of(m.timestamp, r).start - first) / w)];
    ++p.counts[col.at(m.channel)];
    ++p.total;
  }
  return s;
}

struct CdfPoint {
  std::string channel;
  std::size_t count = 0;
  double cumulative = 0;  // fraction of channels with count <= this one
};

// Empirical CDF of messages-per-channel, channels ordered by count.
inline std::vector<CdfPoint> channel_cdf(const CorpusStats& stats) {
  std::vector<CdfPoint> pts;
  for (const auto& [ch, n] : stats.per_channel_counts) pts.push_back({ch, n, 0});
  std::stable_sort(pts.begin(), pts.end(),
                   [](const CdfPoint& a, const CdfPoint& b) { return a.count < b.count; });
  for (std::size_t i = 0; i < pts.size(); ++i) {
    pts[i].cumulative = static_cast<double>(i + 1) / static_cast<double>(pts.size());
  }
  return pts;
}

struct Interarrival {
  std::map<std::string, std::vector<EpochSeconds>> gaps;  // stream -> successive gaps
  std::vector<std::string> notices;
};

inline constexpr const char* kAllStreams = "(all)";

// Gaps between successive timestamps, per channel or over the pooled corpus.
inline Interarrival interarrival(const Corpus& corpus, bool per_channel) {
  std::map<std::string, std::vector<EpochSeconds>> streams;
  for (const auto& m : corpus) streams[per_channel ? m.channel : kAllStreams].push_back(m.timestamp);
  Interarrival out;
  for (auto& [name, ts] : streams) {
    if (ts.size() < 2) {
      out.notices.push_back("stream " + name + " has fewer than 2 messages; skipped");
      continue;
    }
    std::sort(ts.begin(), ts.end());
    auto& g = out.gaps[name];
    for (std::size_t i = 1; i < ts.size(); ++i) g.push_back(ts[i] - ts[i - 1]);
  }
  if (!per_channel && corpus.size() < 2) out.notices.push_back("corpus has fewer than 2 messages");
  return out;
}

struct BurstWindow {
  BucketKey start;
  BucketKey end;  // inclusive
  std::size_t peak_volume = 0;
  double baseline_mean = 0;
  double baseline_std = 0;
};

struct BurstConfig {
  double z = 3.0;
  std::size_t baseline = 14;  // trailing non-burst buckets
};

// A bucket is flagged when its total exceeds mean + z * std of the trailing
// `baseline` unflagged buckets. Buckets without a full baseline behind them
// are never flagged. Contiguous flagged buckets form one window whose
// baseline statistics are those of its opening bucket.
inline std::vector<BurstWindow> detect_bursts(const VolumeSeries& series, const BurstConfig& cfg = {}) {
  if (cfg.baseline < 2) throw ConfigError("burst baseline must cover at least 2 buckets");
  if (series.points.size() < cfg.baseline + 1) {
    throw DataError("series has " + std::to_string(series.points.size()) +
                    " buckets; bursts need at least " + std::to_string(cfg.baseline + 1));
  }
  std::vector<BurstWindow> out;
  std::vector<double> calm;  // totals of unflagged buckets so far
  bool open = false;
  for (const auto& p : series.points) {
    const auto total = static_cast<double>(p.total);
    bool flagged = false;
    double mean = 0, sd = 0;
    if (calm.size() >= cfg.baseline) {
      const auto first = calm.end() - static_cast<std::ptrdiff_t>(cfg.baseline);
      for (auto it = first; it != calm.end(); ++it) mean += *it;
      mean /= static_cast<double>(cfg.baseline);
      for (auto it = first; it != calm.end(); ++it) sd += (*it - mean) * (*it - mean);
      sd = std::sqrt(sd / static_cast<double>(cfg.baseline));
      flagged = total > mean + cfg.z * sd;
    }
    if (flagged) {
      if (!open) {
        out.push_back({p.bucket, p.bucket, p.total, mean, sd});
        open = true;
      } else {
        out.back().end = p.bucket;
        out.back().peak_volume = std::max(out.back().peak_volume, p.total);
      }
    } else {
      open = false;
      calm.push_back(total);
    }
  }
  return out;
}

struct LagEstimate {
  int best_lag = 0;  // positive: second channel follows the first
  double correlation = 0;
};

struct LeadLagReport {
  std::map<std::pair<std::string, std::string>, LagEstimate> pairwise;  // both orientations
  std::map<std::string, std::size_t> first_reporter;
  std::vector<std::string> notes;
};

// Pearson correlation of (a[t], b[t + lag]) over the overlapping span. Empty
// when the overlap is shorter than 3 or either segment is constant.
inline std::optional<double> lagged_correlation(std::span<const double> a, std::span<const double> b,
                                                int lag) {
  const auto n = static_cast<long>(std::min(a.size(), b.size()));
  const long t0 = std::max(0L, -static_cast<long>(lag));
  const long t1 = std::min(n, n - lag);
  const long len = t1 - t0;
  if (len < 3) return std::nullopt;
  double ma = 0, mb = 0;
  for (long t = t0; t < t1; ++t) {
    ma += a[t];
    mb += b[t + lag];
  }
  ma /= static_cast<double>(len);
  mb /= static_cast<double>(len);
  double sab = 0, saa = 0, sbb = 0;
  for (long t = t0; t < t1; ++t) {
    const double x = a[t] - ma;
    const double y = b[t + lag] - mb;
    sab += x * y;
    saa += x * x;
    sbb += y * y;
  }
  if (saa == 0 || sbb == 0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

// Lag in [-max_lag, max_lag] maximising the lagged correlation; ties go to the
// smaller |lag|, then the negative lag.
inline std::optional<LagEstimate> best_lag(std::span<const double> a, std::span<const double> b,
                                           int max_lag) {
  std::optional<LagEstimate> best;
  for (int mag = 0; mag <= max_lag; ++mag) {
    for (int lag : {-mag, mag}) {
      if (mag == 0 && lag != 0) continue;
      const auto c = lagged_correlation(a, b, lag);
      if (!c) continue;
      if (!best || *c > best->correlation) best = LagEstimate{lag, *c};
      if (mag == 0) break;
    }
  }
  return best;
}

inline LeadLagReport lead_lag(const VolumeSeries& series, int max_lag,
                              std::span<const BurstWindow> bursts, const Corpus& corpus) {
  if (max_lag < 0) throw ConfigError("max lag must be non-negative");
  LeadLagReport rep;
  std::vector<std::size_t> active;
  std::vector<std::vector<double>> values;
  for (std::size_t c = 0; c < series.channels.size(); ++c) {
    auto v = series.channel_values(c);
    if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0; })) {
      rep.notes.push_back("channel " + series.channels[c] + " has an all-zero series; excluded");
      continue;
    }
    active.push_back(c);
    values.push_back(std::move(v));
  }
  if (active.size() < 2) throw DataError("lead-lag needs at least two channels with activity");

  for (std::size_t i = 0; i < active.size(); ++i) {
    for (std::size_t j = i + 1; j < active.size(); ++j) {
      const auto& ca = series.channels[active[i]];
      const auto& cb = series.channels[active[j]];
      const auto est = best_lag(values[i], values[j], max_lag);
      if (!est) {
        rep.notes.push_back("no defined correlation for " + ca + " / " + cb);
        continue;
      }
      rep.pairwise[{ca, cb}] = *est;
      rep.pairwise[{cb, ca}] = {-est->best_lag, est->correlation};
    }
  }

  for (const auto& w : bursts) {
    const Message* first = nullptr;
    for (const auto& m : corpus) {
      if (m.timestamp < w.start.start) continue;
      if (m.timestamp >= w.end.end()) break;
      if (first == nullptr || m.timestamp < first->timestamp ||
          (m.timestamp == first->timestamp && m.channel < first->channel)) {
        first = &m;
      }
    }
    if (first != nullptr) ++rep.first_reporter[first->channel];
  }
  return rep;
}

struct AcrPoint {
  EpochSeconds day = 0;
  std::size_t volume = 0;
  std::size_t coord_pairs = 0;
  double acr = 0;  // volume / (1 + coord_pairs)
};

inline double attention_coordination_ratio(std::size_t volume, std::size_t pairs) {
  return static_cast<double>(volume) / (1.0 + static_cast<double>(pairs));
}

// Joins a daily volume series with daily pair counts from a daily-resolution
// detection report.
inline std::vector<AcrPoint> acr_series(const VolumeSeries& daily, const DetectionReport& report) {
  if (daily.resolution != Resolution::kDaily || report.resolution != Resolution::kDaily) {
    throw ConfigError("ACR is defined on daily buckets");
  }
  std::map<EpochSeconds, std::size_t> pairs_per_day;
  for (const auto& p : report.pairs) ++pairs_per_day[p.bucket.start];
  std::vector<AcrPoint> out;
  for (const auto& p : daily.points) {
    const auto it = pairs_per_day.find(p.bucket.start);
    const std::size_t n = it == pairs_per_day.end() ? 0 : it->second;
    out.push_back({p.bucket.start, p.total, n, attention_coordination_ratio(p.total, n)});
  }
  return out;
}

inline std::vector<AcrPoint> acr_series(const Corpus& corpus, double tau, const NGramConfig& ngram,
                                        IdfScope scope = IdfScope::kBucket) {
  check_tau(tau);
  if (corpus.empty()) return {};
  const DetectionConfig cfg{Resolution::kDaily, ngram, scope};
  return acr_series(volume_series(corpus, Resolution::kDaily), detect(corpus, tau, cfg));
}

// ---- serialization ----

inline std::string volume_csv(const VolumeSeries& s) {
  io::CsvWriter csv{"date", "channel", "count"};
  for (const auto& p : s.points) {
    const auto when = format_bucket(p.bucket);
    for (std::size_t c = 0; c < s.channels.size(); ++c) {
      csv.row({when, s.channels[c], std::to_string(p.counts[c])});
    }
  }
  return csv.str();
}

inline std::string cdf_csv(std::span<const CdfPoint> pts) {
  io::CsvWriter csv{"channel", "count", "cumulative_fraction"};
  for (const auto& p : pts) csv.row({p.channel, std::to_string(p.count), io::format_double(p.cumulative)});
  return csv.str();
}

inline std::string interarrival_csv(const Interarrival& ia) {
  io::CsvWriter csv{"stream", "gap_seconds"};
  for (const auto& [name, gaps] : ia.gaps) {
    for (auto g : gaps) csv.row({name, std::to_string(g)});
  }
  return csv.str();
}

inline std::string bursts_csv(std::span<const BurstWindow> bursts) {
  io::CsvWriter csv{"start", "end", "peak", "baseline_mean", "baseline_std"};
  for (const auto& b : bursts) {
    csv.row({format_bucket(b.start), format_bucket(b.end), std::to_string(b.peak_volume),
             io::format_double(b.baseline_mean), io::format_double(b.baseline_std)});
  }
  return csv.str();
}

inline std::string leadlag_csv(const LeadLagReport& r) {
  io::CsvWriter csv{"channel_a", "channel_b", "best_lag", "correlation"};
  for (const auto& [k, e] : r.pairwise) {
    if (k.first < k.second) {
      csv.row({k.first, k.second, std::to_string(e.best_lag), io::format_double(e.correlation)});
    }
  }
  return csv.str();
}

inline std::string first_reporter_csv(const LeadLagReport& r) {
  io::CsvWriter csv{"channel", "bursts_first"};
  for (const auto& [ch, n] : r.first_reporter) csv.row({ch, std::to_string(n)});
  return csv.str();
}

inline std::string acr_csv(std::span<const AcrPoint> pts) {
  io::CsvWriter csv{"date", "volume", "pairs", "acr"};
  for (const auto& p : pts) {
    csv.row({format_date(p.day), std::to_string(p.volume), std::to_string(p.coord_pairs),
             io::format_double(p.acr)});
  }
  return csv.str();
}

}  // namespace coordscan

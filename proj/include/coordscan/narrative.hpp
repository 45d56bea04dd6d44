#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "error.hpp"
#include "io.hpp"
#include "simindex.hpp"
#include "svd.hpp"

namespace coordscan {

struct KMeansOptions {
  std::size_t k = 5;
  std::uint64_t seed = 0;
  int max_iterations = 300;
};

struct KMeansResult {
  std::vector<std::size_t> assignments;
  std::vector<std::vector<double>> centroids;  // dense, k x dimension
  std::vector<double> objective;               // SSE after each update step
  int iterations = 0;
};

namespace detail {

inline double sparse_sq_norm(const SparseVector& x) {
  double s = 0;
  for (double v : x.values) s += v * v;
  return s;
}

inline double sq_distance(const SparseVector& x, double x_sq, const std::vector<double>& c, double c_sq) {
  double dot = 0;
  for (std::size_t k = 0; k < x.size(); ++k) dot += x.values[k] * c[x.indices[k]];
  return std::max(0.0, x_sq - 2 * dot + c_sq);
}

inline double dense_sq_norm(const std::vector<double>& c) {
  double s = 0;
  for (double v : c) s += v * v;
  return s;
}

}  // namespace detail

// Lloyd's algorithm with k-means++ seeding over sparse points and dense
// centroids. Ties go to the lowest cluster index. An emptied cluster is
// re-seeded with the point farthest from its own centroid.
inline KMeansResult kmeans(std::span<const SparseVector> points, std::size_t dimension,
                           const KMeansOptions& opt) {
  const std::size_t n = points.size();
  const std::size_t k = opt.k;
  if (k < 2) throw ConfigError("k must be >= 2");
  if (n < k) throw DataError("k-means needs at least k points");
  std::vector<double> x_sq(n);
  for (std::size_t i = 0; i < n; ++i) x_sq[i] = detail::sparse_sq_norm(points[i]);

  auto densify = [&](const SparseVector& x) {
    std::vector<double> c(dimension, 0.0);
    for (std::size_t t = 0; t < x.size(); ++t) c[x.indices[t]] = x.values[t];
    return c;
  };

  KMeansResult res;
  std::mt19937_64 rng(opt.seed);
  std::vector<std::size_t> chosen;
  chosen.push_back(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
  res.centroids.push_back(densify(points[chosen[0]]));
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  while (res.centroids.size() < k) {
    const auto& c = res.centroids.back();
    const double c_sq = detail::dense_sq_norm(c);
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], detail::sq_distance(points[i], x_sq[i], c, c_sq));
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0) {
      double r = std::uniform_real_distribution<double>(0.0, total)(rng);
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0) continue;
        if (r < d2[i]) {
          pick = i;
          break;
        }
        r -= d2[i];
      }
      while (d2[pick] <= 0 && pick > 0) --pick;
    } else {
      std::vector<std::size_t> rest;
      for (std::size_t i = 0; i < n; ++i) {
        if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) rest.push_back(i);
      }
      pick = rest[std::uniform_int_distribution<std::size_t>(0, rest.size() - 1)(rng)];
    }
    chosen.push_back(pick);
    res.centroids.push_back(densify(points[pick]));
  }

  std::vector<double> c_sq(k);
  auto refresh_norms = [&] {
    for (std::size_t c = 0; c < k; ++c) c_sq[c] = detail::dense_sq_norm(res.centroids[c]);
  };
  auto assign = [&](std::vector<std::size_t>& out) {
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = detail::sq_distance(points[i], x_sq[i], res.centroids[0], c_sq[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double dc = detail::sq_distance(points[i], x_sq[i], res.centroids[c], c_sq[c]);
        if (dc < best_d) {
          best_d = dc;
          best = c;
        }
      }
      out[i] = best;
    }
  };
  auto update = [&] {
    std::vector<std::size_t> sizes(k, 0);
    for (auto& c : res.centroids) std::fill(c.begin(), c.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      auto& c = res.centroids[res.assignments[i]];
      ++sizes[res.assignments[i]];
      for (std::size_t t = 0; t < points[i].size(); ++t) c[points[i].indices[t]] += points[i].values[t];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] == 0) continue;
      for (auto& v : res.centroids[c]) v /= static_cast<double>(sizes[c]);
    }
    return sizes;
  };
  auto objective = [&] {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) {
      s += detail::sq_distance(points[i], x_sq[i], res.centroids[res.assignments[i]], c_sq[res.assignments[i]]);
    }
    return s;
  };

  // Moves the point farthest from its current centroid into each empty
  // cluster, taking only from clusters that keep at least one member.
  auto repair = [&](std::vector<std::size_t>& a) {
    std::vector<std::size_t> sizes(k, 0);
    for (auto c : a) ++sizes[c];
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] != 0) continue;
      std::size_t far = n;
      double far_d = -1;
      for (std::size_t i = 0; i < n; ++i) {
        if (sizes[a[i]] < 2) continue;
        const double di = detail::sq_distance(points[i], x_sq[i], res.centroids[a[i]], c_sq[a[i]]);
        if (di > far_d) {
          far_d = di;
          far = i;
        }
      }
      if (far == n) break;
      --sizes[a[far]];
      a[far] = c;
      ++sizes[c];
    }
  };

  refresh_norms();
  res.assignments.assign(n, 0);
  assign(res.assignments);
  repair(res.assignments);
  std::vector<std::size_t> next(n);
  for (int it = 1; it <= opt.max_iterations; ++it) {
    res.iterations = it;
    update();
    refresh_norms();
    res.objective.push_back(objective());
    assign(next);
    repair(next);
    if (next == res.assignments) break;
    res.assignments = next;
  }
  return res;
}

inline double shannon_entropy_bits(std::span<const std::size_t> counts) {
  double total = 0;
  for (auto c : counts) total += static_cast<double>(c);
  if (total == 0) return 0;
  double h = 0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    h -= p * std::log2(p);
  }
  return h;
}

struct ClusterSpace {
  enum class Kind { kTfidf, kSvd } kind = Kind::kTfidf;
  int svd_dims = 0;
};

// `tfidf` or `svd:<d>`.
inline ClusterSpace parse_cluster_space(std::string_view s) {
  if (s == "tfidf") return {};
  if (s.substr(0, 4) == "svd:") {
    try {
      const int d = std::stoi(std::string(s.substr(4)));
      if (d >= 1) return {ClusterSpace::Kind::kSvd, d};
    } catch (const std::exception&) {
    }
  }
  throw ConfigError("cluster space must be 'tfidf' or 'svd:<d>'");
}

inline std::string to_string(const ClusterSpace& s) {
  return s.kind == ClusterSpace::Kind::kTfidf ? "tfidf" : "svd:" + std::to_string(s.svd_dims);
}

struct NarrativeConfig {
  EpochSeconds from = 0;
  EpochSeconds to = 0;  // inclusive
  std::size_t k = 5;
  std::uint64_t seed = 0;
  NGramConfig ngram;
  ClusterSpace space;
};

// Clustering of one time window. Vectors are the window's TF-IDF rows, used
// for both clustering (unless an SVD space was requested) and projection.
struct ClusterModel {
  std::size_t k = 0;
  std::vector<std::string> ids;
  std::vector<std::string> channels;
  std::vector<std::size_t> assignments;
  std::vector<std::vector<double>> centroids;
  std::vector<double> objective;
  std::vector<SparseVector> vectors;
  std::size_t dimension = 0;
};

inline ClusterModel cluster_window(const Corpus& corpus, const NarrativeConfig& cfg) {
  if (cfg.to < cfg.from) throw ConfigError("narrative window ends before it starts");
  ClusterModel m;
  m.k = cfg.k;
  std::vector<std::string> docs;
  for (const auto& msg : corpus) {
    if (msg.timestamp < cfg.from || msg.timestamp > cfg.to) continue;
    m.ids.push_back(msg.id);
    m.channels.push_back(msg.channel);
    docs.push_back(msg.norm_text);
  }
  if (docs.size() < cfg.k) {
    throw DataError("narrative window holds " + std::to_string(docs.size()) + " messages; k=" +
                    std::to_string(cfg.k) + " needs " + std::to_string(cfg.k - docs.size()) + " more");
  }
  const auto model = fit(docs, cfg.ngram);
  m.vectors = transform_all(docs, model);
  m.dimension = model.dimension();
  const auto usable = static_cast<std::size_t>(
      std::count_if(m.vectors.begin(), m.vectors.end(), [](const SparseVector& v) { return !v.empty(); }));
  if (usable < cfg.k) {
    throw DataError("narrative window has " + std::to_string(usable) + " messages with usable text; k=" +
                    std::to_string(cfg.k) + " needs " + std::to_string(cfg.k - usable) + " more");
  }

  const KMeansOptions opt{cfg.k, cfg.seed, 300};
  KMeansResult km;
  if (cfg.space.kind == ClusterSpace::Kind::kSvd) {
    const auto svd = truncated_svd(m.vectors, m.dimension, cfg.space.svd_dims, cfg.seed);
    std::vector<SparseVector> reduced(m.vectors.size());
    for (std::size_t r = 0; r < reduced.size(); ++r) {
      for (int c = 0; c < cfg.space.svd_dims; ++c) {
        reduced[r].indices.push_back(static_cast<std::uint32_t>(c));
        reduced[r].values.push_back(svd.doc_coords(static_cast<Eigen::Index>(r), c));
      }
    }
    km = kmeans(reduced, static_cast<std::size_t>(cfg.space.svd_dims), opt);
  } else {
    km = kmeans(m.vectors, m.dimension, opt);
  }
  m.assignments = std::move(km.assignments);
  m.centroids = std::move(km.centroids);
  m.objective = std::move(km.objective);
  return m;
}

struct EntropyReport {
  double overall = 0;
  std::map<std::string, double> per_channel;
  std::vector<std::size_t> cluster_sizes;
};

inline EntropyReport narrative_entropy(const ClusterModel& model) {
  EntropyReport r;
  r.cluster_sizes.assign(model.k, 0);
  std::map<std::string, std::vector<std::size_t>> per;
  for (std::size_t i = 0; i < model.assignments.size(); ++i) {
    const auto c = model.assignments[i];
    if (c >= model.k) throw DataError("cluster assignment out of range");
    ++r.cluster_sizes[c];
    auto& counts = per[model.channels[i]];
    counts.resize(model.k, 0);
    ++counts[c];
  }
  r.overall = shannon_entropy_bits(r.cluster_sizes);
  for (const auto& [ch, counts] : per) r.per_channel[ch] = shannon_entropy_bits(counts);
  return r;
}

inline std::string scatter_csv(const ClusterModel& m, const Projection2D& p) {
  io::CsvWriter csv{"msg_id", "channel", "cluster", "x", "y"};
  for (std::size_t i = 0; i < m.ids.size(); ++i) {
    csv.row({m.ids[i], m.channels[i], std::to_string(m.assignments[i]), io::format_double(p.coords[i][0]),
             io::format_double(p.coords[i][1])});
  }
  return csv.str();
}

inline nlohmann::ordered_json entropy_json(const EntropyReport& r) {
  nlohmann::ordered_json per = nlohmann::ordered_json::object();
  for (const auto& [ch, h] : r.per_channel) per[ch] = h;
  return {{"overall", r.overall}, {"per_channel", per}, {"cluster_sizes", r.cluster_sizes}};
}

}  // namespace coordscan

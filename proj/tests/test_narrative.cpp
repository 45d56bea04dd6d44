#include <gtest/gtest.h>

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "support.hpp"

using namespace coordscan;
using testsupport::msg;

namespace {

const EpochSeconds kDay = epoch_from_civil(2026, 1, 3);

std::vector<SparseVector> vectors_for(const std::vector<std::string>& docs, std::size_t& dim) {
  const auto m = fit(docs, NGramConfig{});
  dim = m.dimension();
  return transform_all(docs, m);
}

std::vector<SparseVector> random_sparse(std::size_t rows, std::size_t cols, double density, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(density);
  std::uniform_real_distribution<double> val(0.0, 1.0);
  std::vector<SparseVector> out(rows);
  for (auto& r : out) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (keep(rng)) {
        r.indices.push_back(static_cast<std::uint32_t>(c));
        r.values.push_back(val(rng));
      }
    }
  }
  return out;
}

// Best agreement between predicted and true labels over all relabelings.
double best_agreement(const std::vector<std::size_t>& pred, const std::vector<std::size_t>& truth, std::size_t k) {
  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += perm[pred[i]] == truth[i];
    best = std::max(best, hit);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(pred.size());
}

}  // namespace

TEST(KMeans, TwoPureClusters) {
  std::vector<std::string> docs;
  for (int i = 0; i < 2; ++i) docs.push_back("protests continue in the capital");
  for (int i = 0; i < 2; ++i) docs.push_back("oil tanker leaves the harbor");
  std::size_t dim = 0;
  const auto v = vectors_for(docs, dim);
  const auto r = kmeans(v, dim, {2, 1, 300});
  EXPECT_EQ(r.assignments[0], r.assignments[1]);
  EXPECT_EQ(r.assignments[2], r.assignments[3]);
  EXPECT_NE(r.assignments[0], r.assignments[2]);
}

TEST(KMeans, TemplateFamiliesRecovered) {
  const std::vector<std::string> templates{
      "military deployment near the border draws condemnation from neighbours",
      "inflation figures show prices doubling over the last quarter in major cities",
      "election commission publishes turnout numbers for the regional vote"};
  std::mt19937_64 rng(5);
  std::vector<std::string> docs;
  std::vector<std::size_t> truth;
  for (int i = 0; i < 90; ++i) {
    const auto t = static_cast<std::size_t>(i % 3);
    docs.push_back(normalize_text(synth::perturb(templates[t], 0.01, rng)));
    truth.push_back(t);
  }
  std::size_t dim = 0;
  const auto v = vectors_for(docs, dim);
  // A single k-means++ start can land two seeds in one family; the families
  // are still the lowest-objective partition and most starts find them.
  int recovered = 0;
  double best_objective = std::numeric_limits<double>::infinity();
  double best_agree = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto r = kmeans(v, dim, {3, seed, 300});
    const double agree = best_agreement(r.assignments, truth, 3);
    recovered += agree >= 0.95;
    if (r.objective.back() < best_objective) {
      best_objective = r.objective.back();
      best_agree = agree;
    }
  }
  EXPECT_GE(recovered, 30);
  EXPECT_EQ(best_agree, 1.0);
}

TEST(KMeans, PropertyObjectiveNonIncreasingAndDeterministic) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::string> docs;
    for (int i = 0; i < 60; ++i) docs.push_back(testsupport::random_text(rng, 10, 40, "abcdefg "));
    std::size_t dim = 0;
    const auto v = vectors_for(docs, dim);
    const KMeansOptions opt{5, static_cast<std::uint64_t>(trial), 300};
    const auto r = kmeans(v, dim, opt);
    for (std::size_t i = 1; i < r.objective.size(); ++i) EXPECT_LE(r.objective[i], r.objective[i - 1] + 1e-12);
    std::vector<std::size_t> sizes(5, 0);
    for (auto a : r.assignments) ++sizes[a];
    for (auto s : sizes) EXPECT_GT(s, 0u);
    const auto again = kmeans(v, dim, opt);
    EXPECT_EQ(again.assignments, r.assignments);
    EXPECT_EQ(again.objective, r.objective);
  }
}

TEST(KMeans, EmptyClusterRepairKeepsKClusters) {
  // Five identical points and one outlier with k=3 forces duplicate seeds.
  std::vector<std::string> docs(5, "identical text body");
  docs.push_back("something else entirely");
  std::size_t dim = 0;
  const auto v = vectors_for(docs, dim);
  const auto r = kmeans(v, dim, {3, 0, 300});
  std::vector<std::size_t> sizes(3, 0);
  for (auto a : r.assignments) ++sizes[a];
  for (auto s : sizes) EXPECT_GT(s, 0u);
}

TEST(KMeans, Errors) {
  std::size_t dim = 0;
  const auto v = vectors_for({"abcdef", "ghijkl"}, dim);
  EXPECT_THROW(kmeans(v, dim, {1, 0, 300}), ConfigError);
  EXPECT_THROW(kmeans(v, dim, {3, 0, 300}), DataError);
}

TEST(Entropy, Examples) {
  const std::vector<std::size_t> one{10, 0, 0, 0, 0};
  EXPECT_EQ(shannon_entropy_bits(one), 0.0);
  const std::vector<std::size_t> uniform{7, 7, 7, 7, 7};
  EXPECT_NEAR(shannon_entropy_bits(uniform), std::log2(5.0), 1e-12);
  const std::vector<std::size_t> skew{8, 6, 3, 2, 1};
  const double p[] = {0.4, 0.3, 0.15, 0.1, 0.05};
  double oracle = 0;
  for (double x : p) oracle += x * std::log(1 / x) / std::log(2.0);
  EXPECT_NEAR(shannon_entropy_bits(skew), oracle, 1e-12);
}

TEST(Entropy, PropertyBoundsAndPermutationInvariance) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t k = 2 + rng() % 8;
    std::vector<std::size_t> c(k);
    for (auto& x : c) x = rng() % 20;
    const double h = shannon_entropy_bits(c);
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, std::log2(static_cast<double>(k)) + 1e-12);
    std::shuffle(c.begin(), c.end(), rng);
    EXPECT_NEAR(shannon_entropy_bits(c), h, 1e-12);
  }
}

TEST(Entropy, ReportPerChannelAndPartition) {
  ClusterModel m;
  m.k = 5;
  for (std::size_t i = 0; i < 100; ++i) {
    m.ids.push_back(std::to_string(i));
    m.channels.push_back(i < 20 ? "steady" : "mixed");
    m.assignments.push_back(i < 20 ? 2 : i % 5);
  }
  const auto r = narrative_entropy(m);
  EXPECT_EQ(std::accumulate(r.cluster_sizes.begin(), r.cluster_sizes.end(), std::size_t{0}), 100u);
  EXPECT_EQ(r.per_channel.at("steady"), 0.0);
  EXPECT_NEAR(r.per_channel.at("mixed"), std::log2(5.0), 1e-12);
  EXPECT_GT(r.overall, 0.0);
  EXPECT_LE(r.overall, std::log2(5.0) + 1e-12);
}

TEST(Svd, MatchesDenseOracle) {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    const auto rows = random_sparse(50, 200, 0.05, seed);
    const auto svd = truncated_svd(rows, 200, 2, seed);
    const Eigen::MatrixXd dense = Eigen::MatrixXd(to_sparse_matrix(rows, 200));
    const Eigen::JacobiSVD<Eigen::MatrixXd> oracle(dense);
    for (int k = 0; k < 2; ++k) {
      const double want = oracle.singularValues()(k);
      EXPECT_LE(std::abs(svd.singular_values[static_cast<std::size_t>(k)] - want) / want, 1e-5);
    }
    EXPECT_GE(svd.singular_values[0], svd.singular_values[1]);
  }
}

TEST(Svd, ProjectionCoordinatesAreScaledLoadings) {
  const auto rows = random_sparse(30, 80, 0.1, 9);
  const auto p = svd_project(rows, 80, 4);
  const Eigen::MatrixXd dense = Eigen::MatrixXd(to_sparse_matrix(rows, 80));
  const Eigen::JacobiSVD<Eigen::MatrixXd> oracle(dense, Eigen::ComputeThinU);
  for (int k = 0; k < 2; ++k) {
    double dot = 0;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      dot += p.coords[r][static_cast<std::size_t>(k)] * oracle.matrixU()(static_cast<Eigen::Index>(r), k);
    }
    EXPECT_NEAR(std::abs(dot), oracle.singularValues()(k), 1e-5 * oracle.singularValues()(k));
  }
  EXPECT_EQ(svd_project(rows, 80, 4).coords, p.coords);
}

TEST(Svd, DuplicatedDocumentIsRankDeficient) {
  std::size_t dim = 0;
  const auto v = vectors_for({"same document", "same document", "same document"}, dim);
  EXPECT_THROW(svd_project(v, dim, 0), DataError);
}

// Uncentred non-negative data: the leading component carries the dominant
// group with positive coordinates and leaves the orthogonal group at zero;
// the second component does the reverse.
TEST(Svd, OrthogonalGroupsSeparate) {
  std::vector<SparseVector> rows;
  for (int i = 0; i < 6; ++i) rows.push_back({{0, 1}, {0.6, 0.8}});
  for (int i = 0; i < 3; ++i) rows.push_back({{2, 3}, {0.8, 0.6}});
  const auto p = svd_project(rows, 4, 1);
  for (int i = 0; i < 6; ++i) {
    EXPECT_GT(p.coords[i][0], 0.5);
    EXPECT_NEAR(p.coords[i][1], 0.0, 1e-9);
  }
  for (int i = 6; i < 9; ++i) {
    EXPECT_NEAR(p.coords[i][0], 0.0, 1e-9);
    EXPECT_GT(p.coords[i][1], 0.5);
  }
  EXPECT_NEAR(p.singular_values[0], std::sqrt(6.0), 1e-9);
  EXPECT_NEAR(p.singular_values[1], std::sqrt(3.0), 1e-9);
}

TEST(Window, ShortfallIsNamed) {
  const Corpus c({msg("1", "a", kDay, "first text"), msg("2", "b", kDay + 5, "second text")});
  NarrativeConfig cfg;
  cfg.from = kDay;
  cfg.to = kDay + 86399;
  try {
    cluster_window(c, cfg);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("needs 3 more"), std::string::npos) << e.what();
  }
}

TEST(Window, BoundsAreInclusiveAndSvdSpaceWorks) {
  synth::GeneratorConfig g;
  g.channels = 4;
  g.span = {kDay, kDay + 3 * 86400};
  g.base_rate = 40;
  g.seed = 6;
  const auto c = synth::generate(g).corpus;
  NarrativeConfig cfg;
  cfg.from = kDay + 86400;
  cfg.to = kDay + 2 * 86400 - 1;
  cfg.seed = 3;
  std::size_t in_window = 0;
  for (const auto& m : c) in_window += m.timestamp >= cfg.from && m.timestamp <= cfg.to;
  const auto model = cluster_window(c, cfg);
  EXPECT_EQ(model.ids.size(), in_window);
  const auto ent = narrative_entropy(model);
  EXPECT_EQ(std::accumulate(ent.cluster_sizes.begin(), ent.cluster_sizes.end(), std::size_t{0}), in_window);
  for (const auto& [ch, h] : ent.per_channel) EXPECT_LE(h, std::log2(5.0) + 1e-12);

  cfg.space = parse_cluster_space("svd:3");
  const auto reduced = cluster_window(c, cfg);
  EXPECT_EQ(reduced.assignments.size(), in_window);
  EXPECT_EQ(cluster_window(c, cfg).assignments, reduced.assignments);
  EXPECT_THROW(parse_cluster_space("svd:0"), ConfigError);
  EXPECT_THROW(parse_cluster_space("pca"), ConfigError);
}

TEST(Window, ScatterCsv) {
  std::vector<Message> m;
  const std::vector<std::string> t{"alpha beta gamma", "delta epsilon", "zeta eta theta", "iota kappa", "lambda mu"};
  for (std::size_t i = 0; i < 10; ++i) m.push_back(msg("m" + std::to_string(i), i % 2 ? "x" : "y", kDay + static_cast<EpochSeconds>(i), t[i % 5]));
  const Corpus c(m);
  NarrativeConfig cfg;
  cfg.from = kDay;
  cfg.to = kDay + 100;
  const auto model = cluster_window(c, cfg);
  const auto csv = scatter_csv(model, svd_project(model.vectors, model.dimension, 0));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "msg_id,channel,cluster,x,y");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 11);
}

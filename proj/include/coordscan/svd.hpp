#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "error.hpp"
#include "simindex.hpp"

namespace coordscan {

struct TruncatedSvd {
  std::vector<double> singular_values;    // descending
  Eigen::MatrixXd doc_coords;             // rows = documents, cols = components (U * S)
  Eigen::MatrixXd term_vectors;           // rows = terms, cols = components (V)
  int iterations = 0;
};

struct SvdOptions {
  int oversample = 8;
  int max_iterations = 1000;
  double tolerance = 1e-7;  // relative change of the leading singular values
};

inline Eigen::SparseMatrix<double, Eigen::RowMajor> to_sparse_matrix(std::span<const SparseVector> rows,
                                                                      std::size_t dimension) {
  std::vector<Eigen::Triplet<double>> trips;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t k = 0; k < rows[r].size(); ++k) {
      if (rows[r].indices[k] >= dimension) throw DataError("sparse index outside dimension");
      trips.emplace_back(static_cast<int>(r), static_cast<int>(rows[r].indices[k]), rows[r].values[k]);
    }
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> a(static_cast<Eigen::Index>(rows.size()),
                                                 static_cast<Eigen::Index>(dimension));
  a.setFromTriplets(trips.begin(), trips.end());
  return a;
}

namespace detail {

inline Eigen::MatrixXd orthonormal_basis(const Eigen::MatrixXd& m) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  return qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), m.cols());
}

}  // namespace detail

// Rank-`rank` truncated SVD of the document-term matrix by seeded block
// subspace iteration with Rayleigh-Ritz extraction. Each component's sign is
// fixed so its largest-magnitude document coordinate is positive.
inline TruncatedSvd truncated_svd(std::span<const SparseVector> rows, std::size_t dimension, int rank,
                                  std::uint64_t seed, const SvdOptions& opt = {}) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(dimension);
  if (rank < 1) throw ConfigError("svd rank must be >= 1");
  if (n < rank || d < rank) throw DataError("svd: matrix is smaller than the requested rank");
  const auto a = to_sparse_matrix(rows, dimension);
  const Eigen::SparseMatrix<double, Eigen::RowMajor> at = a.transpose();
  const auto block = std::min<Eigen::Index>(rank + opt.oversample, std::min(n, d));

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd q(d, block);
  for (Eigen::Index j = 0; j < block; ++j) {
    for (Eigen::Index i = 0; i < d; ++i) q(i, j) = gauss(rng);
  }
  q = detail::orthonormal_basis(q);

  TruncatedSvd out;
  Eigen::VectorXd prev = Eigen::VectorXd::Zero(rank);
  Eigen::MatrixXd b;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig;
  for (int it = 1; it <= opt.max_iterations; ++it) {
    const Eigen::MatrixXd y = detail::orthonormal_basis(a * q);
    q = detail::orthonormal_basis(at * y);
    b = a * q;  // n x block
    eig.compute(b.transpose() * b);
    Eigen::VectorXd sv(rank);
    for (int k = 0; k < rank; ++k) sv(k) = std::sqrt(std::max(0.0, eig.eigenvalues()(block - 1 - k)));
    out.iterations = it;
    bool done = it > 2;
    for (int k = 0; k < rank && done; ++k) {
      const double scale = std::max(sv(k), 1e-300);
      if (std::abs(sv(k) - prev(k)) > opt.tolerance * scale) done = false;
    }
    prev = sv;
    if (done) break;
  }

  out.singular_values.assign(prev.data(), prev.data() + rank);
  out.term_vectors.resize(d, rank);
  for (int k = 0; k < rank; ++k) out.term_vectors.col(k) = q * eig.eigenvectors().col(block - 1 - k);
  out.doc_coords = a * out.term_vectors;
  for (int k = 0; k < rank; ++k) {
    Eigen::Index arg = 0;
    out.doc_coords.col(k).cwiseAbs().maxCoeff(&arg);
    if (out.doc_coords(arg, k) < 0) {
      out.doc_coords.col(k) *= -1;
      out.term_vectors.col(k) *= -1;
    }
  }
  return out;
}

struct Projection2D {
  std::vector<std::array<double, 2>> coords;  // aligned to the input rows
  std::array<double, 2> singular_values{};
};

// Rank-2 projection for plotting. Fails when the matrix has rank < 2.
inline Projection2D svd_project(std::span<const SparseVector> rows, std::size_t dimension,
                                std::uint64_t seed) {
  if (rows.size() < 2 || dimension < 2) throw DataError("svd_project needs >= 2 documents and >= 2 terms");
  const auto svd = truncated_svd(rows, dimension, 2, seed);
  if (!(svd.singular_values[0] > 0) || svd.singular_values[1] <= 1e-10 * svd.singular_values[0]) {
    throw DataError("svd_project: document-term matrix has rank < 2");
  }
  Projection2D p;
  p.singular_values = {svd.singular_values[0], svd.singular_values[1]};
  p.coords.reserve(rows.size());
  for (Eigen::Index r = 0; r < svd.doc_coords.rows(); ++r) {
    p.coords.push_back({svd.doc_coords(r, 0), svd.doc_coords(r, 1)});
  }
  return p;
}

}  // namespace coordscan

#pragma once

// Independent reference computations for the test suites. Nothing here calls
// the solver under test.

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "couplab/chain.hpp"
#include "couplab/random.hpp"

namespace oracle {

// Minimum of <C, X> over the vertices of the transport polytope
// {X >= 0, X 1 = a, X^T 1 = b}. A vertex is a basic feasible solution: its
// basis is a spanning tree of the bipartite graph rows + cols with m + n - 1
// edges, and the tree determines X by peeling leaves.
inline double transport_by_vertices(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::MatrixXd& c,
                                    std::size_t* vertices_seen = nullptr) {
  const int m = static_cast<int>(a.size());
  const int n = static_cast<int>(b.size());
  const int cells = m * n;
  const int basis = m + n - 1;
  double best = std::numeric_limits<double>::infinity();
  std::size_t seen = 0;
  std::vector<int> parent(static_cast<std::size_t>(m + n));
  const auto find = [&](int v) {
    while (parent[static_cast<std::size_t>(v)] != v) v = parent[static_cast<std::size_t>(v)];
    return v;
  };
  for (std::uint32_t mask = 0; mask < (1u << cells); ++mask) {
    if (std::popcount(mask) != basis) continue;
    std::iota(parent.begin(), parent.end(), 0);
    bool tree = true;
    for (int k = 0; k < cells && tree; ++k) {
      if (!(mask >> k & 1u)) continue;
      const int r = find(k / n), s = find(m + k % n);
      if (r == s) tree = false;
      parent[static_cast<std::size_t>(r)] = s;
    }
    if (!tree) continue;
    // Leaf peeling: a row or column with a single unresolved basic cell
    // fixes that cell to its remaining supply.
    Eigen::VectorXd ra = a, rb = b;
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(m, n);
    std::uint32_t open = mask;
    bool progress = true;
    while (open && progress) {
      progress = false;
      for (int i = 0; i < m; ++i) {
        int count = 0, last = -1;
        for (int j = 0; j < n; ++j) {
          if (open >> (i * n + j) & 1u) ++count, last = j;
        }
        if (count == 1) {
          x(i, last) = ra[i];
          rb[last] -= ra[i];
          ra[i] = 0.0;
          open &= ~(1u << (i * n + last));
          progress = true;
        }
      }
      for (int j = 0; j < n; ++j) {
        int count = 0, last = -1;
        for (int i = 0; i < m; ++i) {
          if (open >> (i * n + j) & 1u) ++count, last = i;
        }
        if (count == 1) {
          x(last, j) = rb[j];
          ra[last] -= rb[j];
          rb[j] = 0.0;
          open &= ~(1u << (last * n + j));
          progress = true;
        }
      }
    }
    if (x.minCoeff() < -1e-12) continue;
    ++seen;
    best = std::min(best, (x.array() * c.array()).sum());
  }
  if (vertices_seen) *vertices_seen = seen;
  return best;
}

// Sum |a_i - b_i| over aligned weight vectors.
inline double l1(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).cwiseAbs().sum(); }

inline Eigen::VectorXd random_simplex(couplab::Rng& rng, std::size_t k, double zero_probability = 0.0) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(k));
  do {
    for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rng.bernoulli(zero_probability) ? 0.0 : -std::log(1.0 - rng.uniform());
  } while (w.sum() <= 0.0);
  return w / w.sum();
}

// k distinct points on a grid of [0, 1].
inline std::vector<couplab::Point> random_points(couplab::Rng& rng, std::size_t k, std::size_t grid = 64) {
  std::vector<std::size_t> idx(grid);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.index(grid - i)]);
  std::vector<couplab::Point> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back({static_cast<double>(idx[i]) / static_cast<double>(grid - 1)});
  return out;
}

inline couplab::DiscreteMeasure random_measure(couplab::Rng& rng, std::size_t k, std::size_t grid = 64) {
  const Eigen::VectorXd w = random_simplex(rng, k);
  return couplab::DiscreteMeasure(random_points(rng, k, grid), std::vector<double>(w.data(), w.data() + w.size()));
}

// Random row-stochastic chain on k points of [0, 1]; each entry is zero with
// probability `sparsity` (the diagonal is kept positive when a row empties).
inline couplab::FiniteChain random_chain(couplab::Rng& rng, std::size_t k, double sparsity = 0.3) {
  Eigen::MatrixXd p(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.cols(); ++j) p(i, j) = rng.bernoulli(sparsity) ? 0.0 : rng.uniform();
    if (p.row(i).sum() <= 0.0) p(i, i) = 1.0;
    p.row(i) /= p.row(i).sum();
  }
  std::vector<couplab::Point> pts;
  for (std::size_t i = 0; i < k; ++i) pts.push_back({k == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(k - 1)});
  return couplab::FiniteChain(std::move(pts), std::move(p));
}

// P^n by n plain multiplications.
inline Eigen::MatrixXd naive_power(const Eigen::MatrixXd& p, std::size_t n) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Identity(p.rows(), p.cols());
  for (std::size_t i = 0; i < n; ++i) out = out * p;
  return out;
}

}  // namespace oracle

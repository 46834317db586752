// Copyright 2026 The TaxoForge Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Subtopic grouping: affinity propagation over candidate vectors, the
// indicative Topic-Type matrix crossing meaning clusters (columns) with
// semantic-type clusters (rows), spectral co-clustering of that matrix and the
// per-bicluster consistency filter.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "taxoforge/common.hpp"

namespace taxoforge {

inline constexpr double kDefaultConsistencyThreshold = 0.5;

// Dense n x n similarity matrix; the diagonal holds the AP preference.
class SimilarityMatrix {
 public:
  SimilarityMatrix() = default;
  explicit SimilarityMatrix(std::size_t n, double fill = 0.0) : n_(n), data_(n * n, fill) {}

  std::size_t size() const { return n_; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }

  // Pairwise cosine similarities with the median off-diagonal value as preference.
  static SimilarityMatrix cosine(std::span<const std::vector<double>> vectors) {
    SimilarityMatrix s(vectors.size());
    std::vector<double> norms;
    for (const auto& v : vectors) {
      double n = 0;
      for (double x : v) n += x * x;
      norms.push_back(std::sqrt(n));
    }
    for (std::size_t i = 0; i < vectors.size(); ++i) {
      for (std::size_t j = i + 1; j < vectors.size(); ++j) {
        double d = 0;
        for (std::size_t k = 0; k < vectors[i].size(); ++k) d += vectors[i][k] * vectors[j][k];
        const double c = norms[i] > 0 && norms[j] > 0 ? d / (norms[i] * norms[j]) : 0.0;
        s(i, j) = s(j, i) = c;
      }
    }
    s.set_preference(s.median_off_diagonal());
    return s;
  }

  double median_off_diagonal() const {
    std::vector<double> v;
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < n_; ++j) {
        if (i != j) v.push_back((*this)(i, j));
      }
    }
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size();
    return m % 2 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
  }

  void set_preference(double p) {
    for (std::size_t i = 0; i < n_; ++i) (*this)(i, i) = p;
  }

  void check() const {
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < n_; ++j) {
        if (!std::isfinite((*this)(i, j))) throw Error("similarity matrix has a non-finite entry");
        if (std::abs((*this)(i, j) - (*this)(j, i)) > 1e-9) throw Error("similarity matrix is not symmetric");
      }
    }
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

struct ApParams {
  double damping = 0.9;
  std::size_t max_iter = 500;
  std::size_t convergence_iter = 15;
};

struct ApResult {
  std::vector<std::size_t> exemplars;  // ascending point indexes
  std::vector<std::size_t> labels;     // point -> index into exemplars
  std::size_t iterations = 0;
  bool converged = false;
};

// Responsibility/availability message passing. Deterministic: no noise is
// added, ties resolve to the lowest index.
inline ApResult affinity_propagation(const SimilarityMatrix& s, const ApParams& params = {}) {
  if (!(params.damping >= 0.5 && params.damping < 1.0)) throw Error("AP damping must be in [0.5, 1)");
  if (params.max_iter < 1) throw Error("AP max_iter must be at least 1");
  s.check();
  const std::size_t n = s.size();
  ApResult out;
  if (n == 0) return out;
  out.labels.assign(n, 0);
  if (n == 1) {
    out.exemplars = {0};
    out.converged = true;
    return out;
  }

  // Degenerate input: all off-diagonal similarities equal. Message passing
  // cannot break the symmetry, so decide directly.
  const double s01 = s(0, 1);
  bool uniform = true;
  for (std::size_t i = 0; i < n && uniform; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j && std::abs(s(i, j) - s01) > 1e-12) {
        uniform = false;
        break;
      }
    }
  }
  if (uniform) {
    bool own = true;
    for (std::size_t i = 0; i < n; ++i) own = own && s(i, i) > s01;
    if (own) {
      for (std::size_t i = 0; i < n; ++i) {
        out.exemplars.push_back(i);
        out.labels[i] = i;
      }
    } else {
      out.exemplars = {0};
    }
    out.converged = true;
    return out;
  }

  std::vector<double> r(n * n, 0.0), a(n * n, 0.0), col(n);
  auto at = [n](std::size_t i, std::size_t k) { return i * n + k; };
  std::vector<bool> current(n, false), previous(n, false);
  std::size_t stable = 0;
  const double lambda = params.damping;
  for (std::size_t it = 0; it < params.max_iter; ++it) {
    out.iterations = it + 1;
    for (std::size_t i = 0; i < n; ++i) {
      double first = -std::numeric_limits<double>::infinity(), second = first;
      std::size_t arg = 0;
      for (std::size_t k = 0; k < n; ++k) {
        const double v = a[at(i, k)] + s(i, k);
        if (v > first) {
          second = first;
          first = v;
          arg = k;
        } else if (v > second) {
          second = v;
        }
      }
      for (std::size_t k = 0; k < n; ++k) {
        const double fresh = s(i, k) - (k == arg ? second : first);
        r[at(i, k)] = lambda * r[at(i, k)] + (1 - lambda) * fresh;
      }
    }
    for (std::size_t k = 0; k < n; ++k) {
      double sum = 0;
      for (std::size_t i = 0; i < n; ++i) sum += i == k ? r[at(k, k)] : std::max(0.0, r[at(i, k)]);
      col[k] = sum;
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < n; ++k) {
        double fresh;
        if (i == k) {
          fresh = col[k] - r[at(k, k)];
        } else {
          fresh = std::min(0.0, col[k] - std::max(0.0, r[at(i, k)]));
        }
        a[at(i, k)] = lambda * a[at(i, k)] + (1 - lambda) * fresh;
      }
    }
    bool any = false;
    for (std::size_t k = 0; k < n; ++k) {
      current[k] = a[at(k, k)] + r[at(k, k)] > 0;
      any = any || current[k];
    }
    stable = (any && current == previous) ? stable + 1 : 0;
    previous = current;
    if (stable >= params.convergence_iter) {
      out.converged = true;
      break;
    }
  }

  for (std::size_t k = 0; k < n; ++k) {
    if (current[k]) out.exemplars.push_back(k);
  }
  if (out.exemplars.empty()) {
    // No point chose itself; fall back to the strongest self-evidence.
    std::size_t best = 0;
    for (std::size_t k = 1; k < n; ++k) {
      if (a[at(k, k)] + r[at(k, k)] > a[at(best, best)] + r[at(best, best)]) best = k;
    }
    out.exemplars = {best};
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t e = 0; e < out.exemplars.size(); ++e) {
      if (out.exemplars[e] == i) {
        best = e;
        break;
      }
      if (s(i, out.exemplars[e]) > s(i, out.exemplars[best])) best = e;
    }
    out.labels[i] = best;
  }
  return out;
}

// Relabels clusters in order of first appearance.
inline std::vector<std::size_t> canonical_labels(std::span<const std::size_t> labels) {
  std::vector<std::size_t> out;
  std::vector<std::size_t> seen;
  for (std::size_t l : labels) {
    auto it = std::find(seen.begin(), seen.end(), l);
    if (it == seen.end()) {
      seen.push_back(l);
      out.push_back(seen.size() - 1);
    } else {
      out.push_back(static_cast<std::size_t>(it - seen.begin()));
    }
  }
  return out;
}

// Indicative 0/1 matrix: rows are type clusters, columns meaning clusters.
struct TopicTypeMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> cells;          // row-major
  std::vector<std::size_t> meaning_labels;  // candidate -> column
  std::vector<std::size_t> type_labels;     // candidate -> row

  TopicTypeMatrix() = default;
  TopicTypeMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), cells(r * c, 0) {}

  std::uint8_t operator()(std::size_t i, std::size_t j) const { return cells[i * cols + j]; }
  std::uint8_t& operator()(std::size_t i, std::size_t j) { return cells[i * cols + j]; }

  static TopicTypeMatrix from_rows(const std::vector<std::vector<int>>& m) {
    TopicTypeMatrix t(m.size(), m.empty() ? 0 : m.front().size());
    for (std::size_t i = 0; i < t.rows; ++i) {
      if (m[i].size() != t.cols) throw Error("ragged matrix");
      for (std::size_t j = 0; j < t.cols; ++j) t(i, j) = m[i][j] ? 1 : 0;
    }
    return t;
  }

  std::size_t nonzeros() const {
    return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), std::uint8_t{1}));
  }

  // Candidates landing in column j.
  std::vector<std::size_t> column_members(std::size_t j) const {
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < meaning_labels.size(); ++c) {
      if (meaning_labels[c] == j) out.push_back(c);
    }
    return out;
  }
};

// Columns from AP on meaning vectors, rows from AP on type vectors. Cluster
// indexes follow first appearance in candidate order. A missing preference
// uses the median off-diagonal similarity.
inline TopicTypeMatrix build_topic_type_matrix(std::span<const std::vector<double>> meaning_vectors,
                                               std::span<const std::vector<double>> type_vectors,
                                               const ApParams& params = {},
                                               std::optional<double> meaning_preference = std::nullopt,
                                               std::optional<double> type_preference = std::nullopt) {
  if (meaning_vectors.size() != type_vectors.size()) {
    throw Error("topic-type matrix: meaning and type vector counts differ");
  }
  auto check_dims = [](std::span<const std::vector<double>> vs, const char* what) {
    for (const auto& v : vs) {
      if (v.size() != vs.front().size()) throw Error(std::string("topic-type matrix: inconsistent ") + what + " vector dimension");
    }
  };
  check_dims(meaning_vectors, "meaning");
  check_dims(type_vectors, "type");
  const std::size_t n = meaning_vectors.size();
  if (n == 0) return {};

  auto cluster = [&](std::span<const std::vector<double>> vs, std::optional<double> preference) {
    auto s = SimilarityMatrix::cosine(vs);
    if (preference) s.set_preference(*preference);
    return canonical_labels(affinity_propagation(s, params).labels);
  };
  const auto cols = cluster(meaning_vectors, meaning_preference);
  const auto rows = cluster(type_vectors, type_preference);
  TopicTypeMatrix m(*std::max_element(rows.begin(), rows.end()) + 1, *std::max_element(cols.begin(), cols.end()) + 1);
  for (std::size_t c = 0; c < n; ++c) m(rows[c], cols[c]) = 1;
  m.meaning_labels = cols;
  m.type_labels = rows;
  return m;
}

inline std::size_t default_bicluster_count(const TopicTypeMatrix& m) {
  return std::min({m.rows, m.cols, 2 + m.cols / 3});
}

struct BiclusterAssignment {
  std::vector<std::size_t> row_labels;
  std::vector<std::size_t> col_labels;
  std::size_t k = 0;
};

namespace detail {

// Lloyd's k-means with k-means++ seeding; best of `restarts` by inertia.
inline std::vector<std::size_t> kmeans(const Eigen::MatrixXd& points, std::size_t k, std::uint64_t seed,
                                       std::size_t restarts, std::size_t max_iter = 300) {
  const auto n = static_cast<std::size_t>(points.rows());
  const auto dim = points.cols();
  std::vector<std::size_t> best_labels(n, 0);
  if (k <= 1 || n == 0) return best_labels;
  double best_inertia = std::numeric_limits<double>::infinity();
  Rng rng(seed);
  for (std::size_t run = 0; run < restarts; ++run) {
    Eigen::MatrixXd centers(static_cast<Eigen::Index>(k), dim);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    std::size_t first = uniform_index(rng, n);
    centers.row(0) = points.row(static_cast<Eigen::Index>(first));
    for (std::size_t c = 1; c < k; ++c) {
      double total = 0;
      for (std::size_t i = 0; i < n; ++i) {
        d2[i] = std::min(d2[i], (points.row(static_cast<Eigen::Index>(i)) - centers.row(static_cast<Eigen::Index>(c - 1))).squaredNorm());
        total += d2[i];
      }
      std::size_t pick = 0;
      if (total > 0) {
        double u = uniform_unit(rng) * total;
        for (pick = 0; pick + 1 < n; ++pick) {
          if (d2[pick] > 0 && u < d2[pick]) break;
          u -= d2[pick];
        }
        while (d2[pick] == 0 && pick > 0) --pick;
      } else {
        pick = uniform_index(rng, n);
      }
      centers.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(pick));
    }

    std::vector<std::size_t> labels(n, 0);
    double inertia = 0;
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
      bool changed = iter == 0;
      inertia = 0;
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t arg = 0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
          const double d = (points.row(static_cast<Eigen::Index>(i)) - centers.row(static_cast<Eigen::Index>(c))).squaredNorm();
          if (d < best) {
            best = d;
            arg = c;
          }
        }
        if (labels[i] != arg) changed = true;
        labels[i] = arg;
        inertia += best;
      }
      if (!changed) break;
      Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), dim);
      std::vector<std::size_t> counts(k, 0);
      for (std::size_t i = 0; i < n; ++i) {
        sums.row(static_cast<Eigen::Index>(labels[i])) += points.row(static_cast<Eigen::Index>(i));
        ++counts[labels[i]];
      }
      for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] > 0) centers.row(static_cast<Eigen::Index>(c)) = sums.row(static_cast<Eigen::Index>(c)) / static_cast<double>(counts[c]);
      }
    }
    if (inertia < best_inertia - 1e-12) {
      best_inertia = inertia;
      best_labels = labels;
    }
  }
  return best_labels;
}

}  // namespace detail

struct CoclusterOptions {
  std::uint64_t seed = 0;
  std::size_t restarts = 10;
};

// Spectral co-clustering of the bipartite row/column graph. The normalized
// matrix D_r^-1/2 M D_c^-1/2 always has the trivial singular pair
// (D_r^1/2 1, D_c^1/2 1) with value 1; it is deflated first, then the next
// ceil(log2 k) singular vectors (extended over ties at the cut) embed rows and
// columns for k-means.
inline BiclusterAssignment cocluster(const TopicTypeMatrix& m, std::size_t k, const CoclusterOptions& options = {}) {
  if (m.rows == 0 || m.cols == 0 || m.nonzeros() == 0) throw Error("co-clustering needs a matrix with a nonzero entry");
  if (k < 1 || k > std::min(m.rows, m.cols)) throw Error("co-clustering k must be in [1, min(rows, cols)]");
  BiclusterAssignment out;
  out.k = k;
  out.row_labels.assign(m.rows, 0);
  out.col_labels.assign(m.cols, 0);
  if (k == 1) return out;

  const auto R = static_cast<Eigen::Index>(m.rows);
  const auto C = static_cast<Eigen::Index>(m.cols);
  Eigen::MatrixXd a(R, C);
  for (Eigen::Index i = 0; i < R; ++i) {
    for (Eigen::Index j = 0; j < C; ++j) a(i, j) = m(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  }
  Eigen::VectorXd dr = a.rowwise().sum(), dc = a.colwise().sum().transpose();
  Eigen::VectorXd u1 = Eigen::VectorXd::Zero(R), v1 = Eigen::VectorXd::Zero(C);
  for (Eigen::Index i = 0; i < R; ++i) {
    if (dr(i) > 0) u1(i) = std::sqrt(dr(i));
    dr(i) = dr(i) > 0 ? 1.0 / std::sqrt(dr(i)) : 1.0;
  }
  for (Eigen::Index j = 0; j < C; ++j) {
    if (dc(j) > 0) v1(j) = std::sqrt(dc(j));
    dc(j) = dc(j) > 0 ? 1.0 / std::sqrt(dc(j)) : 1.0;
  }
  Eigen::MatrixXd an = dr.asDiagonal() * a * dc.asDiagonal();
  an -= (u1 / u1.norm()) * (v1 / v1.norm()).transpose();

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(an, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  std::size_t take = static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(k))));
  take = std::min<std::size_t>(take, static_cast<std::size_t>(sv.size()));
  while (take < static_cast<std::size_t>(sv.size()) && take > 0 &&
         std::abs(sv(static_cast<Eigen::Index>(take)) - sv(static_cast<Eigen::Index>(take - 1))) < 1e-9 &&
         sv(static_cast<Eigen::Index>(take)) > 1e-9) {
    ++take;
  }
  const auto t = static_cast<Eigen::Index>(take);
  Eigen::MatrixXd z(R + C, t);
  z.topRows(R) = dr.asDiagonal() * svd.matrixU().leftCols(t);
  z.bottomRows(C) = dc.asDiagonal() * svd.matrixV().leftCols(t);

  const auto labels = detail::kmeans(z, k, options.seed, options.restarts);
  const auto canon = canonical_labels(labels);
  for (std::size_t i = 0; i < m.rows; ++i) out.row_labels[i] = canon[i];
  for (std::size_t j = 0; j < m.cols; ++j) out.col_labels[j] = canon[m.rows + j];
  return out;
}

// Filled fraction of the cells inside bicluster `cluster`; nullopt when the
// bicluster has no row or no column.
inline std::optional<double> consistency(const TopicTypeMatrix& m, const BiclusterAssignment& assignment,
                                         std::size_t cluster) {
  if (cluster >= assignment.k) throw Error("bicluster id out of range");
  std::size_t ones = 0, cells = 0;
  for (std::size_t i = 0; i < m.rows; ++i) {
    if (assignment.row_labels[i] != cluster) continue;
    for (std::size_t j = 0; j < m.cols; ++j) {
      if (assignment.col_labels[j] != cluster) continue;
      ++cells;
      ones += m(i, j);
    }
  }
  if (cells == 0) return std::nullopt;
  return static_cast<double>(ones) / static_cast<double>(cells);
}

struct RetainedBicluster {
  std::size_t cluster = 0;
  double consistency = 0;
  std::vector<std::size_t> columns;
};

// Biclusters whose consistency exceeds `threshold`, with their columns.
inline std::vector<RetainedBicluster> retained_biclusters(const TopicTypeMatrix& m, const BiclusterAssignment& assignment,
                                                          double threshold = kDefaultConsistencyThreshold) {
  std::vector<RetainedBicluster> out;
  for (std::size_t c = 0; c < assignment.k; ++c) {
    const auto score = consistency(m, assignment, c);
    if (!score || !(*score > threshold)) continue;
    RetainedBicluster r{c, *score, {}};
    for (std::size_t j = 0; j < m.cols; ++j) {
      if (assignment.col_labels[j] == c) r.columns.push_back(j);
    }
    out.push_back(std::move(r));
  }
  return out;
}

// TSV dump: "#"-prefixed provenance lines listing the candidate terms of every
// row and column, then one line of 0/1 cells per row.
inline void write_topic_type_tsv(const TopicTypeMatrix& m, std::span<const std::string> candidates, std::ostream& out) {
  for (std::size_t j = 0; j < m.cols; ++j) {
    out << "# col " << j << ':';
    for (std::size_t c = 0; c < m.meaning_labels.size(); ++c) {
      if (m.meaning_labels[c] == j) out << ' ' << candidates[c];
    }
    out << '\n';
  }
  for (std::size_t i = 0; i < m.rows; ++i) {
    out << "# row " << i << ':';
    for (std::size_t c = 0; c < m.type_labels.size(); ++c) {
      if (m.type_labels[c] == i) out << ' ' << candidates[c];
    }
    out << '\n';
  }
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.cols; ++j) out << (j ? "\t" : "") << int(m(i, j));
    out << '\n';
  }
}

}  // namespace taxoforge

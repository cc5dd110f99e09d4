#include "mlml/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "mlml/error.hpp"

namespace mlml {

using nlohmann::json;

Partition partition_by_label_set(std::span<const LabelSet> labels) {
  std::vector<LabelSet> distinct(labels.begin(), labels.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  Partition p;
  p.k = static_cast<int>(distinct.size());
  p.assignment.reserve(labels.size());
  for (const auto& ls : labels)
    p.assignment.push_back(static_cast<int>(
        std::lower_bound(distinct.begin(), distinct.end(), ls) - distinct.begin()));
  return p;
}

namespace {

double assign(const Matrix& x, const Matrix& centroids, std::vector<int>& labels,
              std::vector<double>& d2) {
  double total = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.rows(); ++c) {
      const double d = squared_distance(x.row(i), centroids.row(c));
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    labels[i] = best;
    d2[i] = best_d;
    total += best_d;
  }
  return total;
}

}  // namespace

KMeansResult kmeans(const Matrix& points, int k, std::uint64_t seed, int max_iterations) {
  const std::size_t n = points.rows();
  if (k < 1) throw ContractError("kmeans: k must be >= 1");
  if (static_cast<std::size_t>(k) > n)
    throw ContractError("kmeans: k=" + std::to_string(k) + " exceeds " +
                        std::to_string(n) + " points");
  const std::size_t m = points.cols();
  Rng rng(seed);

  // k-means++ seeding.
  Matrix centroids(k, m);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t first = uniform_index(rng, n);
  std::copy(points.row(first).begin(), points.row(first).end(), centroids.row(0).begin());
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(points.row(i), centroids.row(c - 1)));
      total += d2[i];
    }
    std::size_t pick = n - 1;
    if (total > 0.0) {
      double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (std::size_t i = 0; i < n; ++i) {
        if (u < d2[i]) {
          pick = i;
          break;
        }
        u -= d2[i];
      }
    } else {
      pick = uniform_index(rng, n);
    }
    std::copy(points.row(pick).begin(), points.row(pick).end(), centroids.row(c).begin());
  }

  KMeansResult res;
  res.partition.k = k;
  auto& labels = res.partition.assignment;
  labels.assign(n, -1);
  std::vector<int> previous;
  std::vector<double> counts(k);
  for (int it = 0; it < max_iterations; ++it) {
    previous = labels;
    res.objective_history.push_back(assign(points, centroids, labels, d2));
    res.iterations = it + 1;
    if (labels == previous) break;

    centroids.fill(0.0);
    std::fill(counts.begin(), counts.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      auto c = centroids.row(labels[i]);
      auto x = points.row(i);
      for (std::size_t j = 0; j < m; ++j) c[j] += x[j];
      counts[labels[i]] += 1.0;
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0.0) {
        for (double& v : centroids.row(c)) v /= counts[c];
        continue;
      }
      // Empty cluster: move it onto the worst-fit point.
      const auto far = static_cast<std::size_t>(
          std::max_element(d2.begin(), d2.end()) - d2.begin());
      std::copy(points.row(far).begin(), points.row(far).end(), centroids.row(c).begin());
      d2[far] = 0.0;
    }
  }
  return res;
}

double nmi(const Partition& pred, const Partition& truth) {
  const std::size_t n = pred.assignment.size();
  if (truth.assignment.size() != n)
    throw ContractError("nmi: partitions cover " + std::to_string(n) + " and " +
                        std::to_string(truth.assignment.size()) + " items");
  if (n == 0) throw ContractError("nmi: empty partition");
  int ka = 0, kb = 0;
  for (int a : pred.assignment) {
    if (a < 0) throw ContractError("nmi: negative cluster id");
    ka = std::max(ka, a + 1);
  }
  for (int b : truth.assignment) {
    if (b < 0) throw ContractError("nmi: negative cluster id");
    kb = std::max(kb, b + 1);
  }
  Matrix joint(ka, kb);
  std::vector<double> pa(ka, 0.0), pb(kb, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    joint(pred.assignment[i], truth.assignment[i]) += 1.0;
    pa[pred.assignment[i]] += 1.0;
    pb[truth.assignment[i]] += 1.0;
  }
  const double dn = static_cast<double>(n);
  auto entropy = [dn](const std::vector<double>& counts) {
    double h = 0.0;
    for (double c : counts)
      if (c > 0.0) h -= (c / dn) * std::log(c / dn);
    return h;
  };
  const double ha = entropy(pa);
  const double hb = entropy(pb);
  double mi = 0.0;
  for (int a = 0; a < ka; ++a)
    for (int b = 0; b < kb; ++b) {
      const double c = joint(a, b);
      if (c > 0.0) mi += (c / dn) * std::log(c * dn / (pa[a] * pb[b]));
    }
  if (ha + hb <= 0.0) return 1.0;
  return std::clamp(2.0 * mi / (ha + hb), 0.0, 1.0);
}

std::map<int, double> recall_at_ks(const Matrix& embeddings,
                                   std::span<const LabelSet> labels,
                                   std::span<const int> ks) {
  const std::size_t n = embeddings.rows();
  if (labels.size() != n) throw ContractError("recall: label count mismatch");
  int kmax = 0;
  for (int k : ks) {
    if (k < 1) throw ContractError("recall: K must be >= 1");
    kmax = std::max(kmax, k);
  }
  if (n < static_cast<std::size_t>(kmax) + 1)
    throw ContractError("recall: need at least K+1 examples");

  std::vector<std::size_t> hits(ks.size(), 0);
  std::vector<double> d(n);
  for (std::size_t q = 0; q < n; ++q) {
    // The first relevant neighbour in (distance, position) order decides every K.
    std::size_t best = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == q) continue;
      d[j] = squared_distance(embeddings.row(q), embeddings.row(j));
      if (labels[j].intersects(labels[q]) && (best == n || d[j] < d[best])) best = j;
    }
    if (best == n) continue;
    std::size_t rank = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == q || j == best) continue;
      if (d[j] < d[best] || (d[j] == d[best] && j < best)) ++rank;
    }
    for (std::size_t t = 0; t < ks.size(); ++t)
      if (rank < static_cast<std::size_t>(ks[t])) ++hits[t];
  }
  std::map<int, double> out;
  for (std::size_t t = 0; t < ks.size(); ++t)
    out[ks[t]] = static_cast<double>(hits[t]) / static_cast<double>(n);
  return out;
}

double recall_at_k(const Matrix& embeddings, std::span<const LabelSet> labels, int k) {
  const int ks[] = {k};
  return recall_at_ks(embeddings, labels, ks).at(k);
}

ClassificationMetrics classification_metrics(std::span<const int> truth,
                                             std::span<const int> predicted) {
  if (truth.size() != predicted.size())
    throw ContractError("classification_metrics: size mismatch");
  ClassificationMetrics m;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool t = truth[i] != 0;
    const bool p = predicted[i] != 0;
    if (t && p) ++m.tp;
    else if (!t && p) ++m.fp;
    else if (!t && !p) ++m.tn;
    else ++m.fn;
  }
  auto ratio = [](std::size_t a, std::size_t b) {
    return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
  };
  m.precision = ratio(m.tp, m.tp + m.fp);
  m.sensitivity = ratio(m.tp, m.tp + m.fn);
  m.specificity = ratio(m.tn, m.tn + m.fp);
  const double s = m.precision + m.sensitivity;
  m.f1 = s > 0.0 ? 2.0 * m.precision * m.sensitivity / s : 0.0;
  return m;
}

ClassificationMetrics logistic_probe(const Matrix& train_x, std::span<const int> train_y,
                                     const Matrix& test_x, std::span<const int> test_y,
                                     const LogisticOptions& opts) {
  const std::size_t n = train_x.rows();
  const std::size_t d = train_x.cols();
  if (train_y.size() != n || test_y.size() != test_x.rows())
    throw ContractError("logistic_probe: label count mismatch");
  if (test_x.cols() != d) throw DimensionError("logistic_probe: feature width mismatch");
  const auto positives = std::count_if(train_y.begin(), train_y.end(),
                                       [](int y) { return y != 0; });
  if (positives == 0 || static_cast<std::size_t>(positives) == n)
    throw ContractError("logistic_probe: training labels contain a single class");

  std::vector<double> mean(d, 0.0), scale(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += train_x(i, j);
  for (double& v : mean) v /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double c = train_x(i, j) - mean[j];
      scale[j] += c * c;
    }
  for (double& v : scale) {
    v = std::sqrt(v / static_cast<double>(n));
    if (!(v > 1e-12)) v = 1.0;
  }
  auto standardize = [&](const Matrix& x) {
    Matrix z(x.rows(), d + 1);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < d; ++j) z(i, j) = (x(i, j) - mean[j]) / scale[j];
      z(i, d) = 1.0;
    }
    return z;
  };
  const Matrix z = standardize(train_x);

  // Step 1/L with L bounding the Hessian: 0.25 · mean ||z||² + λ.
  double sq = 0.0;
  for (double v : z.data()) sq += v * v;
  const double lipschitz = 0.25 * sq / static_cast<double>(n) + opts.l2;
  const double step = 1.0 / lipschitz;

  std::vector<double> w(d + 1, 0.0), grad(d + 1);
  for (int it = 0; it < opts.max_iterations; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double s = dot(z.row(i), w);
      const double p = 1.0 / (1.0 + std::exp(-s));
      const double r = p - (train_y[i] != 0 ? 1.0 : 0.0);
      auto zi = z.row(i);
      for (std::size_t j = 0; j <= d; ++j) grad[j] += r * zi[j];
    }
    double gmax = 0.0;
    for (std::size_t j = 0; j <= d; ++j) {
      grad[j] /= static_cast<double>(n);
      if (j < d) grad[j] += opts.l2 * w[j];
      gmax = std::max(gmax, std::abs(grad[j]));
    }
    if (gmax < opts.tolerance) break;
    for (std::size_t j = 0; j <= d; ++j) w[j] -= step * grad[j];
  }

  const Matrix zt = standardize(test_x);
  std::vector<int> predicted(zt.rows());
  for (std::size_t i = 0; i < zt.rows(); ++i) predicted[i] = dot(zt.row(i), w) > 0.0 ? 1 : 0;
  return classification_metrics(test_y, predicted);
}

std::vector<int> abnormal_targets(std::span<const LabelSet> labels) {
  std::vector<int> y;
  y.reserve(labels.size());
  for (const auto& ls : labels)
    y.push_back(ls.size() == 1 && ls.front() == kNormalLabel ? 0 : 1);
  return y;
}

Projection project_2d(const Matrix& points) {
  const std::size_t n = points.rows();
  const std::size_t m = points.cols();
  if (n < 2) throw ContractError("project_2d: need at least two points");
  Eigen::MatrixXd x(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) x(i, j) = points(i, j);
  x.rowwise() -= x.colwise().mean();
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);

  Projection out;
  out.coords = Matrix(n, 2);
  out.explained_variance_ratio.assign(2, 0.0);
  const double total = cov.trace();
  if (!(total > 1e-24)) {
    out.degenerate = true;
    return out;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const auto& values = eig.eigenvalues();  // ascending
  for (std::size_t c = 0; c < 2 && c < m; ++c) {
    const Eigen::Index col = static_cast<Eigen::Index>(m - 1 - c);
    Eigen::VectorXd axis = eig.eigenvectors().col(col);
    for (Eigen::Index j = 0; j < axis.size(); ++j) {
      if (std::abs(axis(j)) > 1e-12) {
        if (axis(j) < 0.0) axis = -axis;
        break;
      }
    }
    const Eigen::VectorXd proj = x * axis;
    for (std::size_t i = 0; i < n; ++i) out.coords(i, c) = proj(static_cast<Eigen::Index>(i));
    out.explained_variance_ratio[c] = std::max(0.0, values(col)) / total;
  }
  return out;
}

json to_json(const MetricsReport& r) {
  json j;
  j["nmi"] = r.nmi;
  j["clusters"] = r.clusters;
  json recall = json::object();
  for (const auto& [k, v] : r.recall_at) recall[std::to_string(k)] = v;
  j["recall_at"] = recall;
  if (r.has_classification) {
    const auto& c = r.classification;
    j["classification"] = {{"precision", c.precision},
                           {"sensitivity", c.sensitivity},
                           {"specificity", c.specificity},
                           {"f1", c.f1},
                           {"tp", c.tp},
                           {"fp", c.fp},
                           {"tn", c.tn},
                           {"fn", c.fn}};
  }
  return j;
}

double clustering_nmi(const Matrix& embeddings, std::span<const LabelSet> labels,
                      std::uint64_t seed, KMeansResult* details) {
  const Partition truth = partition_by_label_set(labels);
  const int k = std::min<int>(truth.k, static_cast<int>(embeddings.rows()));
  KMeansResult km = kmeans(embeddings, k, seed);
  const double v = nmi(km.partition, truth);
  if (details) *details = std::move(km);
  return v;
}

}  // namespace mlml

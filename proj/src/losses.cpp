#include "mlml/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mlml/error.hpp"

namespace mlml {

void LossConfig::validate() const {
  if (!(margin > 0.0)) throw ContractError("loss margin must be > 0");
  if (!(distance_epsilon > 0.0))
    throw ContractError("distance epsilon must be > 0");
}

double dist(std::span<const double> u, std::span<const double> v) {
  return std::sqrt(squared_distance(u, v));
}

namespace {

// gu += scale * ∂d/∂u, gv += scale * ∂d/∂v for d = ||u - v||.
void add_dist_grad(std::span<const double> u, std::span<const double> v, double d,
                   double scale, double eps, std::span<double> gu,
                   std::span<double> gv) {
  const double inv = scale / std::max(d, eps);
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double g = (u[k] - v[k]) * inv;
    gu[k] += g;
    gv[k] -= g;
  }
}

void require_group_shapes(const AnchorGroup& g, const GroupEmbedding& emb) {
  if (g.p() == 0 || g.n() == 0)
    throw DegenerateGroupError("group needs at least one positive and one negative");
  if (emb.positives.rows() != g.p() || emb.negatives.rows() != g.n())
    throw DimensionError("group embedding rows do not match the group");
  const std::size_t m = emb.anchor.size();
  if (emb.positives.cols() != m || emb.negatives.cols() != m)
    throw DimensionError("group embedding widths differ");
}

// Row layout for group outputs: anchor, positives, negatives.
Matrix group_grad_rows(const GroupEmbedding& emb) {
  return Matrix(1 + emb.positives.rows() + emb.negatives.rows(), emb.anchor.size());
}

LossOutput ml2_with_tau(const GroupEmbedding& emb, std::span<const double> tau,
                        const LossConfig& cfg) {
  const std::size_t p = emb.positives.rows();
  const std::size_t n = emb.negatives.rows();
  const LossOutput smooth = smooth_max_negative(emb.anchor, emb.negatives, cfg);

  LossOutput out;
  out.grads = group_grad_rows(emb);
  const double inv_p = 1.0 / static_cast<double>(p);
  std::size_t active = 0;
  for (std::size_t i = 0; i < p; ++i) {
    const double d = dist(emb.anchor, emb.positives.row(i));
    const double h = d - cfg.margin * tau[i] + smooth.value;
    if (h <= 0.0) continue;
    out.value += h * inv_p;
    ++active;
    add_dist_grad(emb.anchor, emb.positives.row(i), d, inv_p, cfg.distance_epsilon,
                  out.grads.row(0), out.grads.row(1 + i));
  }
  if (active > 0) {
    const double w = static_cast<double>(active) * inv_p;
    auto ga = out.grads.row(0);
    auto sa = smooth.grads.row(0);
    for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += w * sa[k];
    for (std::size_t j = 0; j < n; ++j) {
      auto gn = out.grads.row(1 + p + j);
      auto sn = smooth.grads.row(1 + j);
      for (std::size_t k = 0; k < gn.size(); ++k) gn[k] += w * sn[k];
    }
  }
  return out;
}

}  // namespace

LossOutput triplet_loss(std::span<const double> a, std::span<const double> pos,
                        std::span<const double> neg, const LossConfig& cfg) {
  LossOutput out;
  out.grads = Matrix(3, a.size());
  const double dp = dist(a, pos);
  const double dn = dist(a, neg);
  const double h = dp - dn + cfg.margin;
  if (h <= 0.0) return out;
  out.value = h;
  add_dist_grad(a, pos, dp, 1.0, cfg.distance_epsilon, out.grads.row(0),
                out.grads.row(1));
  add_dist_grad(a, neg, dn, -1.0, cfg.distance_epsilon, out.grads.row(0),
                out.grads.row(2));
  return out;
}

LossOutput group_loss(const AnchorGroup& g, const GroupEmbedding& emb,
                      const LossConfig& cfg) {
  require_group_shapes(g, emb);
  const std::size_t p = g.p();
  const std::size_t n = g.n();
  std::vector<double> dpos(p), dneg(n);
  for (std::size_t i = 0; i < p; ++i) dpos[i] = dist(emb.anchor, emb.positives.row(i));
  for (std::size_t j = 0; j < n; ++j) dneg[j] = dist(emb.anchor, emb.negatives.row(j));

  // Per-member hinge counts let each distance gradient be applied once.
  std::vector<double> cpos(p, 0.0), cneg(n, 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double h = dpos[i] - dneg[j] + cfg.margin;
      if (h <= 0.0) continue;
      sum += h;
      cpos[i] += 1.0;
      cneg[j] += 1.0;
    }
  }
  const double scale = 1.0 / static_cast<double>(p * n);
  LossOutput out;
  out.value = sum * scale;
  out.grads = group_grad_rows(emb);
  for (std::size_t i = 0; i < p; ++i)
    if (cpos[i] > 0.0)
      add_dist_grad(emb.anchor, emb.positives.row(i), dpos[i], cpos[i] * scale,
                    cfg.distance_epsilon, out.grads.row(0), out.grads.row(1 + i));
  for (std::size_t j = 0; j < n; ++j)
    if (cneg[j] > 0.0)
      add_dist_grad(emb.anchor, emb.negatives.row(j), dneg[j], -cneg[j] * scale,
                    cfg.distance_epsilon, out.grads.row(0), out.grads.row(1 + p + j));
  return out;
}

MaxNegative max_negative(std::span<const double> a, const Matrix& negatives,
                         const LossConfig& cfg) {
  if (negatives.rows() == 0) throw DegenerateGroupError("empty negative set");
  MaxNegative best{-std::numeric_limits<double>::infinity(), 0};
  for (std::size_t j = 0; j < negatives.rows(); ++j) {
    const double v = cfg.margin - dist(a, negatives.row(j));
    if (v > best.value) best = {v, j};
  }
  return best;
}

LossOutput smooth_max_negative(std::span<const double> a, const Matrix& negatives,
                               const LossConfig& cfg) {
  const std::size_t n = negatives.rows();
  if (n == 0) throw DegenerateGroupError("empty negative set");
  std::vector<double> d(n), t(n);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    d[j] = dist(a, negatives.row(j));
    t[j] = cfg.margin - d[j];
    top = std::max(top, t[j]);
  }
  double z = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    t[j] = std::exp(t[j] - top);
    z += t[j];
  }
  LossOutput out;
  out.value = top + std::log(z);
  out.grads = Matrix(1 + n, a.size());
  // ∂L/∂d_j = -w_j with w the softmax weights.
  for (std::size_t j = 0; j < n; ++j)
    add_dist_grad(a, negatives.row(j), d[j], -t[j] / z, cfg.distance_epsilon,
                  out.grads.row(0), out.grads.row(1 + j));
  return out;
}

double overlap_tau(const LabelSet& a, const LabelSet& b) {
  if (a.empty() || b.empty()) throw ContractError("overlap_tau: empty label set");
  const double uni = static_cast<double>(a.union_size(b));
  const double inter = static_cast<double>(a.intersection_size(b));
  return (uni - inter) / uni;
}

LossOutput ml2_loss(const AnchorGroup& g, const GroupEmbedding& emb,
                    const LossConfig& cfg) {
  require_group_shapes(g, emb);
  if (g.tau.size() != g.p()) throw ContractError("ml2_loss: one tau per positive required");
  return ml2_with_tau(emb, g.tau, cfg);
}

LossOutput ml2plus_loss(const AnchorGroup& g, const GroupEmbedding& emb,
                        const LossConfig& cfg) {
  require_group_shapes(g, emb);
  require_ml2plus_group(g);
  const double p = static_cast<double>(g.anchor_labels.size());
  const std::vector<double> tau(g.p(), (p - 1.0) / p);
  return ml2_with_tau(emb, tau, cfg);
}

LossOutput contrastive_loss(std::span<const double> x1, std::span<const double> x2,
                            bool same, const LossConfig& cfg) {
  LossOutput out;
  out.grads = Matrix(2, x1.size());
  const double d = dist(x1, x2);
  if (same) {
    out.value = d * d;
    for (std::size_t k = 0; k < x1.size(); ++k) {
      out.grads(0, k) = 2.0 * (x1[k] - x2[k]);
      out.grads(1, k) = -2.0 * (x1[k] - x2[k]);
    }
    return out;
  }
  const double slack = cfg.margin - d;
  if (slack <= 0.0) return out;
  out.value = slack * slack;
  add_dist_grad(x1, x2, d, -2.0 * slack, cfg.distance_epsilon, out.grads.row(0),
                out.grads.row(1));
  return out;
}

MinedGroup hard_class_mine(const AnchorGroup& g, const GroupEmbedding& emb,
                           const LossConfig& cfg, std::size_t k) {
  const std::size_t total = g.p() + g.n();
  if (k < 1) throw ContractError("hard_class_mine: k must be >= 1");
  if (k > total)
    throw ContractError("hard_class_mine: k=" + std::to_string(k) +
                        " exceeds group size " + std::to_string(total));
  if (emb.positives.rows() != g.p() || emb.negatives.rows() != g.n())
    throw DimensionError("group embedding rows do not match the group");

  struct Term {
    double contribution;
    int slot;
    bool positive;
    std::size_t index;
  };
  std::vector<Term> terms;
  terms.reserve(total);
  for (std::size_t i = 0; i < g.p(); ++i) {
    const double tau = i < g.tau.size() ? g.tau[i] : 0.0;
    const int slot = i < g.positive_slots.size() ? g.positive_slots[i] : static_cast<int>(i);
    terms.push_back({dist(emb.anchor, emb.positives.row(i)) - cfg.margin * tau, slot,
                     true, i});
  }
  for (std::size_t j = 0; j < g.n(); ++j) {
    const int slot = j < g.negative_slots.size() ? g.negative_slots[j]
                                                 : static_cast<int>(g.p() + j);
    terms.push_back({cfg.margin - dist(emb.anchor, emb.negatives.row(j)), slot, false, j});
  }
  std::stable_sort(terms.begin(), terms.end(), [](const Term& x, const Term& y) {
    if (x.contribution != y.contribution) return x.contribution > y.contribution;
    return x.slot < y.slot;
  });

  std::vector<bool> keep_pos(g.p(), false), keep_neg(g.n(), false);
  for (std::size_t t = 0; t < k; ++t)
    (terms[t].positive ? keep_pos : keep_neg)[terms[t].index] = true;

  MinedGroup out;
  AnchorGroup& m = out.group;
  m.anchor = g.anchor;
  m.anchor_labels = g.anchor_labels;
  out.embedding.anchor = emb.anchor;
  const std::size_t width = emb.anchor.size();
  std::vector<double> prow, nrow;
  std::size_t pk = 0, nk = 0;
  for (std::size_t i = 0; i < g.p(); ++i) {
    if (!keep_pos[i]) continue;
    m.positives.push_back(g.positives[i]);
    if (i < g.positive_labels.size()) m.positive_labels.push_back(g.positive_labels[i]);
    if (i < g.positive_slots.size()) m.positive_slots.push_back(g.positive_slots[i]);
    if (i < g.tau.size()) m.tau.push_back(g.tau[i]);
    auto r = emb.positives.row(i);
    prow.insert(prow.end(), r.begin(), r.end());
    ++pk;
  }
  for (std::size_t j = 0; j < g.n(); ++j) {
    if (!keep_neg[j]) continue;
    m.negatives.push_back(g.negatives[j]);
    if (j < g.negative_labels.size()) m.negative_labels.push_back(g.negative_labels[j]);
    if (j < g.negative_slots.size()) m.negative_slots.push_back(g.negative_slots[j]);
    auto r = emb.negatives.row(j);
    nrow.insert(nrow.end(), r.begin(), r.end());
    ++nk;
  }
  out.embedding.positives = Matrix(pk, width, std::move(prow));
  out.embedding.negatives = Matrix(nk, width, std::move(nrow));
  return out;
}

LossOutput pretrain_loss(const Matrix& log_probs, const LabelSet& y, int label_count) {
  const auto l = static_cast<std::size_t>(label_count);
  if (log_probs.rows() != l || log_probs.cols() != 2)
    throw ContractError("pretrain_loss: expected " + std::to_string(l) +
                        "x2 log-probabilities");
  LossOutput out;
  out.grads = Matrix(l, 2);
  const double inv_l = 1.0 / static_cast<double>(l);
  for (std::size_t i = 0; i < l; ++i) {
    const double p0 = std::exp(log_probs(i, 0));
    const double p1 = std::exp(log_probs(i, 1));
    if (!(std::abs(p0 + p1 - 1.0) <= 1e-9))
      throw ContractError("pretrain_loss: head " + std::to_string(i) +
                          " is not a log-softmax pair");
    const std::size_t state = y.contains(static_cast<int>(i)) ? 0 : 1;
    out.value -= log_probs(i, state) * inv_l;
    out.grads(i, 0) = (p0 - (state == 0 ? 1.0 : 0.0)) * inv_l;
    out.grads(i, 1) = (p1 - (state == 1 ? 1.0 : 0.0)) * inv_l;
  }
  return out;
}

LossOutput regime_group_loss(Regime regime, const AnchorGroup& g,
                             const GroupEmbedding& emb, const LossConfig& cfg) {
  switch (regime) {
    case Regime::kML2: return ml2_loss(g, emb, cfg);
    case Regime::kML2Plus: return ml2plus_loss(g, emb, cfg);
    default:
      throw ContractError("regime " + std::string(regime_name(regime)) +
                          " does not score anchor groups");
  }
}

}  // namespace mlml

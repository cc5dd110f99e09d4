#include "mlml/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "mlml/eval.hpp"
#include "mlml/losses.hpp"

namespace mlml {

using nlohmann::json;

TrainConfig TrainConfig::defaults_for(Regime regime) {
  TrainConfig c;
  c.regime = regime;
  c.batch_size =
      (regime == Regime::kML2 || regime == Regime::kML2Plus) ? 10 : 36;
  return c;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw ConfigError("train." + key + " " + why);
  };
  if (batch_size < 1) fail("batch_size", "must be >= 1");
  if (iterations < 0) fail("iterations", "must be >= 0");
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) fail("lr0", "must be a positive number");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum", "must be in [0, 1)");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay))
    fail("weight_decay", "must be >= 0");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0))
    fail("lr_decay_factor", "must be in (0, 1]");
  if (decay_period < 1) fail("decay_period", "must be >= 1");
  if (!(margin > 0.0) || !std::isfinite(margin)) fail("margin", "must be > 0");
  if (eval_every < 1) fail("eval_every", "must be >= 1");
  if (pretrain_iterations < 0) fail("pretrain_iterations", "must be >= 0");
  if (threads < 1) fail("threads", "must be >= 1");
  if (hard_class_k > 0 && regime != Regime::kML2 && regime != Regime::kML2Plus)
    fail("hard_class_k", "applies only to ml2 and ml2plus");
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"regime", std::string(regime_name(c.regime))},
           {"batch_size", c.batch_size},
           {"iterations", c.iterations},
           {"lr0", c.lr0},
           {"momentum", c.momentum},
           {"weight_decay", c.weight_decay},
           {"lr_decay_factor", c.lr_decay_factor},
           {"decay_period", c.decay_period},
           {"margin", c.margin},
           {"eval_every", c.eval_every},
           {"seed", c.seed},
           {"pretrain", c.pretrain},
           {"pretrain_iterations", c.pretrain_iterations},
           {"hard_class_k", c.hard_class_k},
           {"threads", c.threads}};
}

void from_json(const json& j, TrainConfig& c) {
  if (!j.is_object()) throw ConfigError("train: expected an object");
  if (j.contains("regime")) {
    // The regime also fixes the default batch size, so apply it first.
    const auto r = parse_regime(j.at("regime").get<std::string>());
    const auto d = TrainConfig::defaults_for(r);
    c.regime = r;
    c.batch_size = d.batch_size;
  }
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "regime") continue;
      else if (key == "batch_size") value.get_to(c.batch_size);
      else if (key == "iterations") value.get_to(c.iterations);
      else if (key == "lr0") value.get_to(c.lr0);
      else if (key == "momentum") value.get_to(c.momentum);
      else if (key == "weight_decay") value.get_to(c.weight_decay);
      else if (key == "lr_decay_factor") value.get_to(c.lr_decay_factor);
      else if (key == "decay_period") value.get_to(c.decay_period);
      else if (key == "margin") value.get_to(c.margin);
      else if (key == "eval_every") value.get_to(c.eval_every);
      else if (key == "seed") value.get_to(c.seed);
      else if (key == "pretrain") value.get_to(c.pretrain);
      else if (key == "pretrain_iterations") value.get_to(c.pretrain_iterations);
      else if (key == "hard_class_k") value.get_to(c.hard_class_k);
      else if (key == "threads") value.get_to(c.threads);
      else throw ConfigError("unknown key train." + key);
    } catch (const json::exception& e) {
      throw ConfigError("train." + key + ": " + e.what());
    }
  }
}

void sgd_step(ParamStore& params, double lr, double momentum, double weight_decay) {
  for (auto& p : params) {
    auto theta = p.value.data();
    auto g = p.grad.data();
    auto v = p.momentum.data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      if (!std::isfinite(g[i]))
        throw TrainingError("non-finite gradient in " + p.name + "[" + std::to_string(i) +
                            "]");
      v[i] = momentum * v[i] + (g[i] + weight_decay * theta[i]);
      theta[i] -= lr * v[i];
    }
  }
}

double lr_schedule(int iteration, const TrainConfig& cfg) {
  return cfg.lr0 * std::pow(cfg.lr_decay_factor, iteration / cfg.decay_period);
}

json to_json(const TrainReport& r) {
  json records = json::array();
  for (const auto& rec : r.records) {
    json j{{"phase", rec.phase},
           {"iteration", rec.iteration},
           {"lr", rec.lr},
           {"train_loss", rec.train_loss}};
    j["val_nmi"] = rec.val_nmi ? json(*rec.val_nmi) : json(nullptr);
    j["val_recall_at_1"] = rec.val_recall_at_1 ? json(*rec.val_recall_at_1) : json(nullptr);
    records.push_back(std::move(j));
  }
  json out{{"records", std::move(records)},
           {"best_iteration", r.best_iteration},
           {"skipped_groups", r.skipped_groups}};
  out["best_val_nmi"] = r.best_val_nmi ? json(*r.best_val_nmi) : json(nullptr);
  return out;
}

namespace {

// Runs fn(i) for i in [0, n). Work is split across threads but every result
// lands in its own slot, so callers reduce in index order.
template <class F>
void parallel_for(std::size_t n, int threads, F&& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

constexpr std::uint64_t kStreamMix = 0x9e3779b97f4a7c15ULL;

class Trainer {
 public:
  Trainer(const Dataset& train_set, const Dataset& validation, const TrainConfig& cfg,
          EncoderConfig encoder)
      : train_(train_set),
        cfg_(cfg),
        loss_cfg_{cfg.margin, kDistanceEpsilon},
        rng_(cfg.seed),
        val_features_(validation.feature_matrix()),
        val_labels_(validation.label_sets()) {
    if (encoder.input_dim != train_set.feature_dim())
      throw DimensionError("encoder input_dim " + std::to_string(encoder.input_dim) +
                           " does not match feature width " +
                           std::to_string(train_set.feature_dim()));
    if (!validation.empty() && validation.feature_dim() != train_set.feature_dim())
      throw DimensionError("validation feature width " +
                           std::to_string(validation.feature_dim()) + " differs from " +
                           std::to_string(train_set.feature_dim()));
    if (cfg.pretrain) encoder.head_count = train_set.label_count();
    model_ = EmbeddingModel(encoder);
    best_values_ = model_.params().snapshot_values();
  }

  TrainResult run() {
    const auto start = std::chrono::steady_clock::now();
    try {
      if (cfg_.pretrain && cfg_.iterations > 0) {
        for (int it = 0; it < cfg_.pretrain_iterations; ++it) {
          const double lr = lr_schedule(it, cfg_);
          note_loss(pretrain_step(lr));
          if ((it + 1) % cfg_.eval_every == 0 || it + 1 == cfg_.pretrain_iterations)
            record("pretrain", it + 1, lr, false);
        }
        model_.reinitialize_projection(cfg_.seed ^ kStreamMix);
        model_.params().zero_momentum();
        best_values_ = model_.params().snapshot_values();
      }
      for (int it = 0; it < cfg_.iterations; ++it) {
        const double lr = lr_schedule(it, cfg_);
        note_loss(metric_step(lr));
        if ((it + 1) % cfg_.eval_every == 0 || it + 1 == cfg_.iterations)
          record("metric", it + 1, lr, true);
      }
    } catch (const Error& e) {
      report_.wall_clock_seconds = elapsed(start);
      throw TrainingAborted(e.what(), report_);
    }
    report_.wall_clock_seconds = elapsed(start);

    TrainResult result;
    result.last = model_;
    model_.params().restore_values(best_values_);
    result.best = std::move(model_);
    result.report = std::move(report_);
    return result;
  }

 private:
  static double elapsed(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }

  void note_loss(double value) {
    if (!std::isfinite(value)) throw EvaluationError("non-finite training loss");
    loss_sum_ += value;
    ++loss_count_;
  }

  void record(const char* phase, int iteration, double lr, bool evaluate) {
    EvalRecord rec;
    rec.phase = phase;
    rec.iteration = iteration;
    rec.lr = lr;
    rec.train_loss = loss_count_ > 0 ? loss_sum_ / static_cast<double>(loss_count_) : 0.0;
    loss_sum_ = 0.0;
    loss_count_ = 0;
    if (evaluate && !val_labels_.empty()) {
      const Matrix emb = model_.embed_all(val_features_);
      rec.val_nmi = clustering_nmi(emb, val_labels_, cfg_.seed);
      if (emb.rows() >= 2) rec.val_recall_at_1 = recall_at_k(emb, val_labels_, 1);
      if (!report_.best_val_nmi || *rec.val_nmi > *report_.best_val_nmi) {
        report_.best_val_nmi = rec.val_nmi;
        report_.best_iteration = iteration;
        best_values_ = model_.params().snapshot_values();
      }
    }
    report_.records.push_back(std::move(rec));
  }

  // Draws b distinct training positions.
  std::vector<std::size_t> draw_examples(std::size_t b) {
    if (b > train_.size())
      throw SamplingError("batch size " + std::to_string(b) + " exceeds split size " +
                          std::to_string(train_.size()));
    std::vector<std::size_t> pool(train_.size());
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < b; ++i)
      std::swap(pool[i], pool[i + uniform_index(rng_, pool.size() - i)]);
    pool.resize(b);
    return pool;
  }

  void apply_step(double lr) {
    sgd_step(model_.params(), lr, cfg_.momentum, cfg_.weight_decay);
    model_.params().zero_grad();
  }

  // Adds per-example buffers to the store in a fixed order.
  void reduce(const std::vector<GradBuffer>& buffers) {
    for (const auto& b : buffers) model_.params().accumulate(b);
  }

  double pretrain_step(double lr) {
    const auto idx = draw_examples(cfg_.batch_size);
    const double scale = 1.0 / static_cast<double>(idx.size());
    std::vector<double> losses(idx.size());
    std::vector<GradBuffer> buffers(idx.size());
    parallel_for(idx.size(), cfg_.threads, [&](std::size_t i) {
      const Example& ex = train_[idx[i]];
      ForwardCache cache;
      const Matrix lp = model_.forward_classify(ex.features, cache);
      LossOutput out = pretrain_loss(lp, ex.labels, train_.label_count());
      for (double& g : out.grads.data()) g *= scale;
      buffers[i] = model_.params().make_grad_buffer();
      model_.backward_classify(cache, out.grads, buffers[i]);
      losses[i] = out.value;
    });
    reduce(buffers);
    apply_step(lr);
    return std::accumulate(losses.begin(), losses.end(), 0.0) * scale;
  }

  // One loss term: its value, its gradient rows, and the dataset position
  // each row belongs to.
  struct Term {
    double value = 0.0;
    Matrix grads;
    std::vector<std::size_t> rows;
    bool skipped = false;
  };

  double metric_step(double lr) {
    const MiniBatch batch = build_minibatch(train_, cfg_.batch_size, cfg_.regime, rng_);

    // Embed each distinct example once.
    std::vector<std::size_t> members;
    std::vector<int> slot_of(train_.size(), -1);
    auto add_member = [&](std::size_t pos) {
      if (slot_of[pos] < 0) {
        slot_of[pos] = static_cast<int>(members.size());
        members.push_back(pos);
      }
    };
    for (const auto& g : batch.groups) {
      add_member(g.anchor);
      for (auto p : g.positives) add_member(p);
      for (auto n : g.negatives) add_member(n);
    }
    for (const auto& t : batch.triplets) {
      add_member(t.anchor);
      add_member(t.positive);
      add_member(t.negative);
    }
    for (const auto& p : batch.pairs) {
      add_member(p.first);
      add_member(p.second);
    }

    std::vector<ForwardCache> caches(members.size());
    std::vector<std::vector<double>> emb(members.size());
    parallel_for(members.size(), cfg_.threads, [&](std::size_t i) {
      emb[i] = model_.forward_embed(train_[members[i]].features, caches[i]);
    });
    auto embedding_of = [&](std::size_t pos) -> const std::vector<double>& {
      return emb[static_cast<std::size_t>(slot_of[pos])];
    };
    auto stack = [&](const std::vector<std::size_t>& positions) {
      const std::size_t m = model_.config().embedding_dim;
      Matrix out(positions.size(), m);
      for (std::size_t r = 0; r < positions.size(); ++r) {
        const auto& e = embedding_of(positions[r]);
        std::copy(e.begin(), e.end(), out.row(r).begin());
      }
      return out;
    };

    std::size_t unit_count = 0;
    std::vector<Term> terms;
    switch (cfg_.regime) {
      case Regime::kML2:
      case Regime::kML2Plus: {
        unit_count = batch.groups.size();
        terms.resize(unit_count);
        parallel_for(unit_count, cfg_.threads, [&](std::size_t i) {
          const AnchorGroup* g = &batch.groups[i];
          GroupEmbedding ge{embedding_of(g->anchor), stack(g->positives), stack(g->negatives)};
          MinedGroup mined;
          if (cfg_.hard_class_k > 0) {
            mined = hard_class_mine(*g, ge, loss_cfg_,
                                    std::min(cfg_.hard_class_k, g->p() + g->n()));
            if (mined.group.p() == 0 || mined.group.n() == 0) {
              terms[i].skipped = true;
              return;
            }
            g = &mined.group;
            ge = std::move(mined.embedding);
          }
          LossOutput out = regime_group_loss(cfg_.regime, *g, ge, loss_cfg_);
          terms[i].value = out.value;
          terms[i].grads = std::move(out.grads);
          terms[i].rows.push_back(g->anchor);
          terms[i].rows.insert(terms[i].rows.end(), g->positives.begin(), g->positives.end());
          terms[i].rows.insert(terms[i].rows.end(), g->negatives.begin(), g->negatives.end());
        });
        break;
      }
      case Regime::kTriplet: {
        unit_count = batch.triplets.size();
        terms.resize(unit_count);
        parallel_for(unit_count, cfg_.threads, [&](std::size_t i) {
          const auto& t = batch.triplets[i];
          LossOutput out = triplet_loss(embedding_of(t.anchor), embedding_of(t.positive),
                                        embedding_of(t.negative), loss_cfg_);
          terms[i] = {out.value, std::move(out.grads), {t.anchor, t.positive, t.negative}};
        });
        break;
      }
      case Regime::kContrastive: {
        unit_count = batch.pairs.size();
        terms.resize(unit_count);
        parallel_for(unit_count, cfg_.threads, [&](std::size_t i) {
          const auto& p = batch.pairs[i];
          LossOutput out = contrastive_loss(embedding_of(p.first), embedding_of(p.second),
                                            p.same, loss_cfg_);
          terms[i] = {out.value, std::move(out.grads), {p.first, p.second}};
        });
        break;
      }
    }

    const double scale = 1.0 / static_cast<double>(unit_count);
    const std::size_t m = model_.config().embedding_dim;
    Matrix upstream(members.size(), m);
    double loss = 0.0;
    for (const auto& t : terms) {
      if (t.skipped) {
        ++report_.skipped_groups;
        continue;
      }
      loss += t.value * scale;
      for (std::size_t r = 0; r < t.rows.size(); ++r) {
        auto dst = upstream.row(static_cast<std::size_t>(slot_of[t.rows[r]]));
        auto src = t.grads.row(r);
        for (std::size_t c = 0; c < m; ++c) dst[c] += scale * src[c];
      }
    }

    std::vector<GradBuffer> buffers(members.size());
    parallel_for(members.size(), cfg_.threads, [&](std::size_t i) {
      buffers[i] = model_.params().make_grad_buffer();
      model_.backward_embed(caches[i], upstream.row(i), buffers[i]);
    });
    reduce(buffers);
    apply_step(lr);
    return loss;
  }

  const Dataset& train_;
  TrainConfig cfg_;
  LossConfig loss_cfg_;
  Rng rng_;
  Matrix val_features_;
  std::vector<LabelSet> val_labels_;
  EmbeddingModel model_;
  std::vector<Matrix> best_values_;
  TrainReport report_;
  double loss_sum_ = 0.0;
  std::size_t loss_count_ = 0;
};

}  // namespace

TrainResult train(const Dataset& train_set, const Dataset& validation,
                  const TrainConfig& cfg, EncoderConfig encoder) {
  cfg.validate();
  encoder.validate();
  Trainer trainer(train_set, validation, cfg, std::move(encoder));
  return trainer.run();
}

}  // namespace mlml

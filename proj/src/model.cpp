#include "mlml/model.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>

#include "mlml/error.hpp"

namespace mlml {

using nlohmann::json;

void EncoderConfig::validate() const {
  if (input_dim < 1) throw ConfigError("encoder.input_dim must be >= 1");
  if (embedding_dim < 2) throw ConfigError("encoder.embedding_dim must be >= 2");
  for (std::size_t h : hidden)
    if (h < 1) throw ConfigError("encoder.hidden sizes must be >= 1");
  if (head_count < 0) throw ConfigError("encoder.head_count must be >= 0");
}

void to_json(json& j, const EncoderConfig& c) {
  j = json{{"input_dim", c.input_dim},
           {"hidden", c.hidden},
           {"embedding_dim", c.embedding_dim},
           {"head_count", c.head_count},
           {"seed", c.seed}};
}

void from_json(const json& j, EncoderConfig& c) {
  if (!j.is_object()) throw ConfigError("encoder: expected an object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "input_dim") value.get_to(c.input_dim);
      else if (key == "hidden") value.get_to(c.hidden);
      else if (key == "embedding_dim") value.get_to(c.embedding_dim);
      else if (key == "head_count") value.get_to(c.head_count);
      else if (key == "seed") value.get_to(c.seed);
      else throw ConfigError("unknown key encoder." + key);
    } catch (const json::exception& e) {
      throw ConfigError("encoder." + key + ": " + e.what());
    }
  }
}

namespace {

Matrix glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Matrix w(fan_in, fan_out);
  for (double& v : w.data()) v = u(rng);
  return w;
}

// out = x · W + b
void affine(std::span<const double> x, const Matrix& w, const Matrix& b,
            std::vector<double>& out) {
  out.assign(b.data().begin(), b.data().end());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    auto row = w.row(i);
    for (std::size_t j = 0; j < w.cols(); ++j) out[j] += xi * row[j];
  }
}

// dW += x ⊗ g, db += g, returns Wᵀ g when want_input.
std::vector<double> affine_backward(std::span<const double> x, const Matrix& w,
                                    std::span<const double> g, Matrix& dw, Matrix& db,
                                    bool want_input) {
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    auto row = dw.row(i);
    for (std::size_t j = 0; j < w.cols(); ++j) row[j] += xi * g[j];
  }
  auto bias = db.data();
  for (std::size_t j = 0; j < g.size(); ++j) bias[j] += g[j];
  std::vector<double> dx;
  if (want_input) {
    dx.assign(w.rows(), 0.0);
    for (std::size_t i = 0; i < w.rows(); ++i) {
      auto row = w.row(i);
      double s = 0.0;
      for (std::size_t j = 0; j < w.cols(); ++j) s += row[j] * g[j];
      dx[i] = s;
    }
  }
  return dx;
}

}  // namespace

EmbeddingModel::EmbeddingModel(EncoderConfig config) : config_(std::move(config)) {
  config_.validate();
  Rng rng(config_.seed);
  std::size_t in = config_.input_dim;
  for (std::size_t i = 0; i < config_.hidden.size(); ++i) {
    const std::size_t out = config_.hidden[i];
    params_.add("hidden" + std::to_string(i) + ".weight", glorot(in, out, rng));
    params_.add("hidden" + std::to_string(i) + ".bias", Matrix(1, out));
    in = out;
  }
  proj_w_ = params_.add("proj.weight", glorot(in, config_.embedding_dim, rng));
  params_.add("proj.bias", Matrix(1, config_.embedding_dim));
  for (int h = 0; h < config_.head_count; ++h) {
    const std::size_t slot =
        params_.add("head" + std::to_string(h) + ".weight", glorot(in, 2, rng));
    params_.add("head" + std::to_string(h) + ".bias", Matrix(1, 2));
    if (h == 0) head_w_ = slot;
  }
}

void EmbeddingModel::trunk_forward(std::span<const double> x, ForwardCache& cache) const {
  if (x.size() != config_.input_dim)
    throw DimensionError("encoder input width " + std::to_string(x.size()) +
                         ", expected " + std::to_string(config_.input_dim));
  cache.input.assign(x.begin(), x.end());
  cache.hidden_pre.resize(config_.hidden.size());
  cache.hidden_post.resize(config_.hidden.size());
  std::span<const double> cur = cache.input;
  for (std::size_t i = 0; i < config_.hidden.size(); ++i) {
    affine(cur, params_[2 * i].value, params_[2 * i + 1].value, cache.hidden_pre[i]);
    auto& post = cache.hidden_post[i];
    post = cache.hidden_pre[i];
    for (double& v : post) v = v > 0.0 ? v : 0.0;
    cur = post;
  }
}

std::vector<double> EmbeddingModel::forward_embed(std::span<const double> x,
                                                  ForwardCache& cache) const {
  trunk_forward(x, cache);
  std::span<const double> trunk =
      config_.hidden.empty() ? std::span<const double>(cache.input)
                             : std::span<const double>(cache.hidden_post.back());
  affine(trunk, params_[proj_w_].value, params_[proj_w_ + 1].value, cache.raw);
  cache.raw_norm = norm2(cache.raw);
  if (!(cache.raw_norm >= kNormEpsilon))
    throw DegenerateInputError("projection norm below guard");
  cache.output = cache.raw;
  for (double& v : cache.output) v /= cache.raw_norm;
  return cache.output;
}

std::vector<double> EmbeddingModel::embed(std::span<const double> x) const {
  ForwardCache cache;
  return forward_embed(x, cache);
}

Matrix EmbeddingModel::forward_classify(std::span<const double> x,
                                        ForwardCache& cache) const {
  if (!has_heads()) throw ConfigError("model has no classification heads");
  trunk_forward(x, cache);
  std::span<const double> trunk =
      config_.hidden.empty() ? std::span<const double>(cache.input)
                             : std::span<const double>(cache.hidden_post.back());
  const auto l = static_cast<std::size_t>(config_.head_count);
  cache.log_probs = Matrix(l, 2);
  std::vector<double> logits;
  for (std::size_t h = 0; h < l; ++h) {
    affine(trunk, params_[head_w_ + 2 * h].value, params_[head_w_ + 2 * h + 1].value,
           logits);
    const double top = std::max(logits[0], logits[1]);
    const double lse = top + std::log(std::exp(logits[0] - top) + std::exp(logits[1] - top));
    cache.log_probs(h, 0) = logits[0] - lse;
    cache.log_probs(h, 1) = logits[1] - lse;
  }
  return cache.log_probs;
}

Matrix EmbeddingModel::classify(std::span<const double> x) const {
  ForwardCache cache;
  return forward_classify(x, cache);
}

void EmbeddingModel::trunk_backward(const ForwardCache& cache,
                                    std::vector<double> grad_trunk,
                                    GradBuffer& grads) const {
  for (std::size_t i = config_.hidden.size(); i-- > 0;) {
    const auto& pre = cache.hidden_pre[i];
    for (std::size_t j = 0; j < grad_trunk.size(); ++j)
      if (!(pre[j] > 0.0)) grad_trunk[j] = 0.0;
    std::span<const double> in =
        i == 0 ? std::span<const double>(cache.input)
               : std::span<const double>(cache.hidden_post[i - 1]);
    grad_trunk = affine_backward(in, params_[2 * i].value, grad_trunk, grads[2 * i],
                                 grads[2 * i + 1], i > 0);
  }
}

void EmbeddingModel::backward_embed(const ForwardCache& cache,
                                    std::span<const double> upstream,
                                    GradBuffer& grads) const {
  if (cache.output.empty() || cache.raw_norm <= 0.0)
    throw ContractError("backward_embed: no cached embedding pass");
  if (upstream.size() != cache.output.size())
    throw DimensionError("backward_embed: upstream width mismatch");
  if (grads.size() != params_.size())
    throw DimensionError("backward_embed: gradient buffer slot mismatch");

  // d(r/||r||)/dr = (I - f fᵀ) / ||r||
  const double proj = dot(cache.output, upstream);
  std::vector<double> g_raw(upstream.size());
  for (std::size_t k = 0; k < g_raw.size(); ++k)
    g_raw[k] = (upstream[k] - cache.output[k] * proj) / cache.raw_norm;

  std::span<const double> trunk =
      config_.hidden.empty() ? std::span<const double>(cache.input)
                             : std::span<const double>(cache.hidden_post.back());
  auto g_trunk = affine_backward(trunk, params_[proj_w_].value, g_raw, grads[proj_w_],
                                 grads[proj_w_ + 1], !config_.hidden.empty());
  if (!config_.hidden.empty()) trunk_backward(cache, std::move(g_trunk), grads);
}

void EmbeddingModel::backward_classify(const ForwardCache& cache, const Matrix& upstream,
                                       GradBuffer& grads) const {
  if (!has_heads()) throw ConfigError("model has no classification heads");
  if (cache.log_probs.empty())
    throw ContractError("backward_classify: no cached classification pass");
  const auto l = static_cast<std::size_t>(config_.head_count);
  if (upstream.rows() != l || upstream.cols() != 2)
    throw DimensionError("backward_classify: upstream must be l x 2");

  std::span<const double> trunk =
      config_.hidden.empty() ? std::span<const double>(cache.input)
                             : std::span<const double>(cache.hidden_post.back());
  std::vector<double> g_trunk(trunk.size(), 0.0);
  for (std::size_t h = 0; h < l; ++h) {
    const std::size_t w = head_w_ + 2 * h;
    auto dx = affine_backward(trunk, params_[w].value, upstream.row(h), grads[w],
                              grads[w + 1], !config_.hidden.empty());
    for (std::size_t k = 0; k < dx.size(); ++k) g_trunk[k] += dx[k];
  }
  if (!config_.hidden.empty()) trunk_backward(cache, std::move(g_trunk), grads);
}

namespace {

GradBuffer grads_view(ParamStore& ps) {
  GradBuffer g;
  g.reserve(ps.size());
  for (auto& p : ps) g.push_back(p.grad);
  return g;
}

void write_back(ParamStore& ps, GradBuffer& g) {
  for (std::size_t i = 0; i < ps.size(); ++i) ps[i].grad = std::move(g[i]);
}

}  // namespace

void EmbeddingModel::backward_embed(const ForwardCache& cache,
                                    std::span<const double> upstream) {
  GradBuffer g = grads_view(params_);
  backward_embed(cache, upstream, g);
  write_back(params_, g);
}

void EmbeddingModel::backward_classify(const ForwardCache& cache, const Matrix& upstream) {
  GradBuffer g = grads_view(params_);
  backward_classify(cache, upstream, g);
  write_back(params_, g);
}

void EmbeddingModel::reinitialize_projection(std::uint64_t seed) {
  Rng rng(seed);
  Param& w = params_[proj_w_];
  w.value = glorot(w.value.rows(), w.value.cols(), rng);
  w.momentum.fill(0.0);
  params_[proj_w_ + 1].value.fill(0.0);
  params_[proj_w_ + 1].momentum.fill(0.0);
}

Matrix EmbeddingModel::embed_all(const Matrix& features) const {
  Matrix out(features.rows(), config_.embedding_dim);
  ForwardCache cache;
  for (std::size_t i = 0; i < features.rows(); ++i) {
    auto e = forward_embed(features.row(i), cache);
    std::copy(e.begin(), e.end(), out.row(i).begin());
  }
  return out;
}

// --- checkpoint I/O -------------------------------------------------------

namespace {

constexpr std::array<char, 8> kMagic = {'M', 'L', 'M', 'L', 'C', 'K', 'P', 'T'};

template <class T>
void put_le(std::ostream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(bytes.begin(), bytes.end());
  out.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

template <class T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size()))
    throw FormatError("checkpoint truncated");
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(bytes.begin(), bytes.end());
  T v;
  std::memcpy(&v, bytes.data(), sizeof(T));
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, std::size_t limit) {
  const auto n = get_le<std::uint32_t>(in);
  if (n > limit) throw FormatError("checkpoint string length out of range");
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw FormatError("checkpoint truncated");
  return s;
}

}  // namespace

void save_checkpoint(const EmbeddingModel& model, const std::filesystem::path& path,
                     const json& extra) {
  json meta = extra.is_object() ? extra : json::object();
  meta["encoder"] = model.config();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_string(out, meta.dump());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.params().size()));
  for (const auto& p : model.params()) {
    put_string(out, p.name);
    put_le<std::uint64_t>(out, p.value.rows());
    put_le<std::uint64_t>(out, p.value.cols());
    for (double v : p.value.data()) put_le<double>(out, v);
  }
  if (!out) throw FormatError("write failed: " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic)
    throw FormatError(path.string() + ": not a checkpoint file");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw FormatError(path.string() + ": unsupported checkpoint version " +
                      std::to_string(version));
  LoadedCheckpoint ck;
  try {
    ck.metadata = json::parse(get_string(in, 1u << 26));
    ck.model = EmbeddingModel(ck.metadata.at("encoder").get<EncoderConfig>());
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": bad metadata: " + e.what());
  }
  const auto slots = get_le<std::uint32_t>(in);
  ParamStore& ps = ck.model.params();
  if (slots != ps.size())
    throw FormatError(path.string() + ": slot count " + std::to_string(slots) +
                      " does not match encoder config");
  for (std::size_t s = 0; s < slots; ++s) {
    const std::string name = get_string(in, 4096);
    if (name != ps[s].name)
      throw FormatError(path.string() + ": slot " + name + " where " + ps[s].name +
                        " expected");
    const auto rows = get_le<std::uint64_t>(in);
    const auto cols = get_le<std::uint64_t>(in);
    if (rows != ps[s].value.rows() || cols != ps[s].value.cols())
      throw FormatError(path.string() + ": shape mismatch in " + name);
    for (double& v : ps[s].value.data()) v = get_le<double>(in);
  }
  return ck;
}

}  // namespace mlml

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mlml/numeric.hpp"

namespace mlml {

struct EncoderConfig {
  std::size_t input_dim = 32;
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t embedding_dim = 64;
  /// Number of per-label binary heads; 0 builds the encoder without heads.
  int head_count = 0;
  std::uint64_t seed = 1;

  /// Throws ConfigError.
  void validate() const;
  std::size_t trunk_width() const {
    return hidden.empty() ? input_dim : hidden.back();
  }
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);

/// Activations kept from a forward pass for the matching backward pass.
struct ForwardCache {
  std::vector<double> input;
  std::vector<std::vector<double>> hidden_pre;   // before the rectifier
  std::vector<std::vector<double>> hidden_post;  // after the rectifier
  std::vector<double> raw;                        // trunk · β + b
  double raw_norm = 0.0;
  std::vector<double> output;                     // raw / ||raw||
  Matrix log_probs;                               // heads only, l × 2
};

/// Fully connected rectifier trunk followed by a normalized linear projection,
/// plus optional per-label two-way heads on the trunk output.
///
/// Parameter slots, in order: hidden{i}.weight (in × out), hidden{i}.bias
/// (1 × out), proj.weight (trunk × m), proj.bias (1 × m), then
/// head{i}.weight (trunk × 2), head{i}.bias (1 × 2).
class EmbeddingModel {
 public:
  EmbeddingModel() = default;
  /// Glorot-uniform weights, zero biases, deterministic in config.seed.
  explicit EmbeddingModel(EncoderConfig config);

  const EncoderConfig& config() const noexcept { return config_; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }
  bool has_heads() const noexcept { return config_.head_count > 0; }

  /// Unit-norm embedding. Throws DimensionError on a wrong input width and
  /// DegenerateInputError when the projection has norm < kNormEpsilon.
  std::vector<double> embed(std::span<const double> x) const;
  std::vector<double> forward_embed(std::span<const double> x, ForwardCache& cache) const;

  /// Per-label log-probability pairs (column 0 = present). Throws
  /// ConfigError when the model has no heads.
  Matrix classify(std::span<const double> x) const;
  Matrix forward_classify(std::span<const double> x, ForwardCache& cache) const;

  /// Adds ∂L/∂θ to `grads` given ∂L/∂output. Throws ContractError if the
  /// cache holds no embedding pass.
  void backward_embed(const ForwardCache& cache, std::span<const double> upstream,
                      GradBuffer& grads) const;
  /// Adds ∂L/∂θ to `grads` given ∂L/∂logits (l × 2).
  void backward_classify(const ForwardCache& cache, const Matrix& upstream,
                         GradBuffer& grads) const;
  /// Convenience overloads accumulating into params().grad.
  void backward_embed(const ForwardCache& cache, std::span<const double> upstream);
  void backward_classify(const ForwardCache& cache, const Matrix& upstream);

  /// Re-draws proj.weight and proj.bias from `seed`, leaving the trunk intact.
  void reinitialize_projection(std::uint64_t seed);

  /// Embeds every row of a feature matrix.
  Matrix embed_all(const Matrix& features) const;

 private:
  void trunk_forward(std::span<const double> x, ForwardCache& cache) const;
  void trunk_backward(const ForwardCache& cache, std::vector<double> grad_trunk,
                      GradBuffer& grads) const;

  EncoderConfig config_;
  ParamStore params_;
  std::size_t proj_w_ = 0;
  std::size_t head_w_ = 0;  // slot of head0.weight
};

/// Current checkpoint format version.
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary checkpoint:
///   magic "MLMLCKPT" | u32 version | u32 n + n bytes of metadata JSON
///   (holds the encoder config under "encoder") | u32 slot count |
///   per slot: u32 n + name, u64 rows, u64 cols, rows·cols f64.
/// All integers and floats little-endian.
void save_checkpoint(const EmbeddingModel& model, const std::filesystem::path& path,
                     const nlohmann::json& extra = nlohmann::json::object());

struct LoadedCheckpoint {
  EmbeddingModel model;
  nlohmann::json metadata;
};

/// Throws FormatError on a bad magic, unknown version, or slot mismatch.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mlml

#pragma once

// Desk-scale residual attention network: a single-channel spatial softmax
// attention map gates the input image, which then flows through strided
// residual blocks, global average pooling and a sigmoid head.

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "json.hpp"
#include "lesionattn/attention_guidance.hpp"
#include "lesionattn/types.hpp"

namespace lesionattn::model {

struct ModelConfig {
  int input_resolution = 64;
  int attention_conv_kernel_size = 3;
  std::vector<int> channels_per_block = {16, 32, 64};  // one stride-2 block each
  int head_hidden_units = 32;
  /// Multiply A (.) X by H*W so a uniform map leaves the image unchanged.
  bool rescale_attention = true;
  std::uint64_t seed = 0;

  [[nodiscard]] int n_residual_blocks() const { return static_cast<int>(channels_per_block.size()); }
  void validate() const;
  /// Exact number of trainable scalars implied by the configuration.
  [[nodiscard]] std::int64_t expected_parameter_count() const;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Softmax over all H*W positions of a [B,1,H,W] (or [B,H,W]) logit map,
/// returned as [B,H,W].
torch::Tensor spatial_softmax(const torch::Tensor& logits);

/// x: [B,C,H,W], attention: [B,H,W]; broadcast over channels.
torch::Tensor apply_attention(const torch::Tensor& x, const torch::Tensor& attention);

/// x: [B,C,H,W], mask: [B,H,W] in {0,1}. Throws if any mask is all zero.
torch::Tensor lesion_only_input(const torch::Tensor& x, const torch::Tensor& mask);

/// Batched 1 - cos(rho + (1 - rho) * mask, attention) per sample, [B].
torch::Tensor attention_loss(const torch::Tensor& attention, const torch::Tensor& mask, double rho);

class ResidualBlockImpl : public torch::nn::Module {
 public:
  ResidualBlockImpl(int in_channels, int out_channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr};
  torch::nn::Conv2d conv2_{nullptr};
  torch::nn::Conv2d skip_{nullptr};
};
TORCH_MODULE(ResidualBlock);

struct BatchOutput {
  torch::Tensor logits;     // [B]
  torch::Tensor scores;     // [B], sigmoid(logits)
  torch::Tensor attention;  // [B,H,W], each slice sums to 1
};

class RannImpl : public torch::nn::Module {
 public:
  explicit RannImpl(ModelConfig config);

  /// Spatial attention map for a batch, [B,H,W].
  torch::Tensor attention_block(const torch::Tensor& x);
  BatchOutput forward(const torch::Tensor& x);

  [[nodiscard]] const ModelConfig& config() const { return config_; }
  torch::nn::Conv2d& attention_conv() { return attention_conv_; }
  [[nodiscard]] std::int64_t parameter_count() const;

 private:
  void check_input(const torch::Tensor& x) const;
  void initialize();

  ModelConfig config_;
  torch::nn::Conv2d attention_conv_{nullptr};
  torch::nn::Sequential blocks_{nullptr};
  torch::nn::Linear hidden_{nullptr};
  torch::nn::Linear output_{nullptr};
};
TORCH_MODULE(Rann);

struct ForwardOutput {
  double score = 0.0;
  guidance::AttentionMap attention;
};

torch::Tensor to_tensor(const Image& image);                  // [3,H,W]
torch::Tensor to_tensor(const LesionMask& mask);              // [H,W] float
guidance::AttentionMap to_attention_map(const torch::Tensor& map);  // [H,W]

/// Single-image inference without gradient tracking. Throws if `model` is
/// empty.
ForwardOutput forward(Rann& model, const Image& image);

}  // namespace lesionattn::model

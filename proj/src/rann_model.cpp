#include "lesionattn/rann_model.hpp"

#include <cmath>
#include <cstring>

#include <string>

namespace lesionattn::model {

namespace nn = torch::nn;

void ModelConfig::validate() const {
  if (input_resolution <= 0) throw Error("input_resolution must be positive");
  if (attention_conv_kernel_size <= 0 || attention_conv_kernel_size % 2 == 0) {
    throw Error("attention_conv_kernel_size must be a positive odd integer");
  }
  if (channels_per_block.empty()) throw Error("at least one residual block is required");
  for (int c : channels_per_block) {
    if (c <= 0) throw Error("channels_per_block entries must be positive");
  }
  if (head_hidden_units < 0) throw Error("head_hidden_units must be >= 0");
  const int factor = 1 << n_residual_blocks();
  if (input_resolution % factor != 0) {
    throw Error("input_resolution " + std::to_string(input_resolution) +
                " is not divisible by the downsampling factor " + std::to_string(factor));
  }
}

std::int64_t ModelConfig::expected_parameter_count() const {
  const std::int64_t k = attention_conv_kernel_size;
  std::int64_t total = 3 * k * k + 1;
  std::int64_t in = 3;
  for (int c : channels_per_block) {
    const std::int64_t out = c;
    total += in * out * 9 + out;   // conv1
    total += out * out * 9 + out;  // conv2
    total += in * out + out;       // 1x1 projection
    in = out;
  }
  if (head_hidden_units > 0) {
    total += in * head_hidden_units + head_hidden_units + head_hidden_units + 1;
  } else {
    total += in + 1;
  }
  return total;
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"input_resolution", c.input_resolution},
          {"attention_conv_kernel_size", c.attention_conv_kernel_size},
          {"channels_per_block", c.channels_per_block},
          {"head_hidden_units", c.head_hidden_units},
          {"rescale_attention", c.rescale_attention},
          {"seed", c.seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.input_resolution = j.value("input_resolution", c.input_resolution);
  c.attention_conv_kernel_size = j.value("attention_conv_kernel_size", c.attention_conv_kernel_size);
  c.channels_per_block = j.value("channels_per_block", c.channels_per_block);
  c.head_hidden_units = j.value("head_hidden_units", c.head_hidden_units);
  c.rescale_attention = j.value("rescale_attention", c.rescale_attention);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

torch::Tensor spatial_softmax(const torch::Tensor& logits) {
  const auto b = logits.size(0);
  const auto h = logits.size(-2), w = logits.size(-1);
  return torch::softmax(logits.reshape({b, h * w}), 1).reshape({b, h, w});
}

torch::Tensor apply_attention(const torch::Tensor& x, const torch::Tensor& attention) {
  if (x.dim() != 4 || attention.dim() != 3 || x.size(0) != attention.size(0) || x.size(2) != attention.size(1) ||
      x.size(3) != attention.size(2)) {
    throw Error("apply_attention: expected x [B,C,H,W] and attention [B,H,W] with matching B, H, W");
  }
  return x * attention.unsqueeze(1);
}

torch::Tensor lesion_only_input(const torch::Tensor& x, const torch::Tensor& mask) {
  if (x.dim() != 4 || mask.dim() != 3 || x.size(0) != mask.size(0) || x.size(2) != mask.size(1) ||
      x.size(3) != mask.size(2)) {
    throw Error("lesion_only_input: expected x [B,C,H,W] and mask [B,H,W] with matching B, H, W");
  }
  const auto per_sample = mask.reshape({mask.size(0), -1}).sum(1);
  if ((per_sample <= 0).any().item<bool>()) throw Error("lesion_only_input: all-zero lesion mask (no lesion to keep)");
  return x * mask.unsqueeze(1).to(x.dtype());
}

torch::Tensor attention_loss(const torch::Tensor& attention, const torch::Tensor& mask, double rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw Error("rho must lie in [0,1]");
  const auto b = attention.size(0);
  const auto a = attention.reshape({b, -1});
  const auto soft = (rho + (1.0 - rho) * mask.to(attention.dtype())).reshape({b, -1});
  const auto cos = (a * soft).sum(1) / (a.norm(2, 1) * soft.norm(2, 1));
  return 1.0 - cos;
}

ResidualBlockImpl::ResidualBlockImpl(int in_channels, int out_channels) {
  conv1_ = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(in_channels, out_channels, 3).stride(2).padding(1)));
  conv2_ = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(out_channels, out_channels, 3).padding(1)));
  skip_ = register_module("skip", nn::Conv2d(nn::Conv2dOptions(in_channels, out_channels, 1).stride(2)));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  auto h = torch::relu(conv1_->forward(x));
  h = conv2_->forward(h);
  return torch::relu(h + skip_->forward(x));
}

RannImpl::RannImpl(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const int k = config_.attention_conv_kernel_size;
  attention_conv_ = register_module("attention", nn::Conv2d(nn::Conv2dOptions(3, 1, k).padding(k / 2)));
  blocks_ = register_module("blocks", nn::Sequential());
  int in = 3;
  for (int c : config_.channels_per_block) {
    blocks_->push_back(ResidualBlock(in, c));
    in = c;
  }
  if (config_.head_hidden_units > 0) {
    hidden_ = register_module("hidden", nn::Linear(in, config_.head_hidden_units));
    output_ = register_module("output", nn::Linear(config_.head_hidden_units, 1));
  } else {
    output_ = register_module("output", nn::Linear(in, 1));
  }
  initialize();
}

void RannImpl::initialize() {
  // Fan-in uniform bound 1/sqrt(fan_in) for weights and their biases (the
  // torch layer default), drawn from a generator seeded by the run seed.
  auto gen = at::detail::createCPUGenerator(config_.seed);
  torch::NoGradGuard no_grad;
  double bound = 0.0;
  for (auto& p : named_parameters()) {
    auto& t = p.value();
    if (t.dim() >= 2) bound = 1.0 / std::sqrt(static_cast<double>(t.numel() / t.size(0)));
    t.uniform_(-bound, bound, gen);
  }
}

void RannImpl::check_input(const torch::Tensor& x) const {
  const int r = config_.input_resolution;
  if (x.dim() != 4 || x.size(1) != 3 || x.size(2) != r || x.size(3) != r) {
    std::string got;
    for (auto s : x.sizes()) got += (got.empty() ? "" : "x") + std::to_string(s);
    throw Error("input must be [B,3," + std::to_string(r) + "," + std::to_string(r) + "], got " + got);
  }
}

torch::Tensor RannImpl::attention_block(const torch::Tensor& x) {
  check_input(x);
  return spatial_softmax(attention_conv_->forward(x));
}

BatchOutput RannImpl::forward(const torch::Tensor& x) {
  BatchOutput out;
  out.attention = attention_block(x);
  auto h = apply_attention(x, out.attention);
  if (config_.rescale_attention) h = h * static_cast<double>(x.size(2) * x.size(3));
  h = blocks_->forward(h);
  h = h.mean({2, 3});
  if (hidden_) h = torch::relu(hidden_->forward(h));
  out.logits = output_->forward(h).squeeze(1);
  out.scores = torch::sigmoid(out.logits);
  return out;
}

std::int64_t RannImpl::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : parameters()) n += p.numel();
  return n;
}

torch::Tensor to_tensor(const Image& image) {
  auto t = torch::empty({image.channels, image.height, image.width}, torch::kFloat32);
  std::memcpy(t.data_ptr<float>(), image.data.data(), image.data.size() * sizeof(float));
  return t;
}

torch::Tensor to_tensor(const LesionMask& mask) {
  auto t = torch::empty({mask.rows, mask.cols}, torch::kFloat32);
  auto* p = t.data_ptr<float>();
  for (std::size_t i = 0; i < mask.size(); ++i) p[i] = mask.values[i] ? 1.0f : 0.0f;
  return t;
}

guidance::AttentionMap to_attention_map(const torch::Tensor& map) {
  if (map.dim() != 2) throw Error("attention map tensor must be [H,W]");
  const auto m = map.to(torch::kFloat64).contiguous();
  guidance::AttentionMap out(static_cast<int>(m.size(0)), static_cast<int>(m.size(1)));
  std::memcpy(out.values.data(), m.data_ptr<double>(), out.values.size() * sizeof(double));
  return out;
}

ForwardOutput forward(Rann& model, const Image& image) {
  if (model.is_empty()) throw Error("model is not initialized");
  torch::NoGradGuard no_grad;
  const auto out = model->forward(to_tensor(image).unsqueeze(0));
  return {out.scores[0].item<double>(), to_attention_map(out.attention[0])};
}

}  // namespace lesionattn::model

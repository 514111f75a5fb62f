#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "json.hpp"
#include "ugan/image_io.hpp"

namespace ugan::nets {

// U-Net generator hyperparameters. Encoder layer i (1-based) is a
// kernel x kernel, stride-2 convolution followed by batch normalization
// (skipped on layer 1 unless first_layer_norm) and a leaky rectifier.
// Decoder layer j receives decoder layer j-1's output concatenated with
// encoder layer n-j+1's activation; decoder layers use a rectifier except
// the last, which uses tanh.
struct GeneratorSpec {
  int image_size = 256;
  int in_channels = 3;
  int kernel = 4;
  int stride = 2;
  std::vector<int> encoder_channels{64, 128, 256, 512, 512, 512, 512, 512};
  bool first_layer_norm = false;
  double leaky_slope = 0.2;

  int depth() const { return static_cast<int>(encoder_channels.size()); }

  // Throws ContractError when the depth does not divide the image size.
  void validate() const;

  static GeneratorSpec paper();
  // 64 x 64 inputs, five encoder layers of width <= 128.
  static GeneratorSpec desk();

  friend bool operator==(const GeneratorSpec&, const GeneratorSpec&) = default;
};

// PatchGAN critic: stride-2 blocks over downsample_channels, then
// stride-1 blocks over same_channels, then a stride-1 convolution to one
// channel. Every convolution uses the same kernel size; the stride-1
// layers pad asymmetrically (1 before, 2 after) to keep resolution. No
// normalization layers and no output nonlinearity.
struct CriticSpec {
  int image_size = 256;
  int in_channels = 3;
  int kernel = 4;
  std::vector<int> downsample_channels{64, 128, 256};
  std::vector<int> same_channels{512};
  double leaky_slope = 0.2;

  int output_size() const;
  void validate() const;

  static CriticSpec paper();
  static CriticSpec desk();

  friend bool operator==(const CriticSpec&, const CriticSpec&) = default;
};

void to_json(nlohmann::json& j, const GeneratorSpec& spec);
void from_json(const nlohmann::json& j, GeneratorSpec& spec);
void to_json(nlohmann::json& j, const CriticSpec& spec);
void from_json(const nlohmann::json& j, CriticSpec& spec);

// One row per convolution: the channel counts the layer was built with.
struct LayerChannels {
  std::string name;
  int in = 0;
  int out = 0;

  friend bool operator==(const LayerChannels&, const LayerChannels&) = default;
};

class UNetGeneratorImpl : public torch::nn::Module {
 public:
  explicit UNetGeneratorImpl(GeneratorSpec spec);

  torch::Tensor forward(const torch::Tensor& x);

  const GeneratorSpec& spec() const { return spec_; }

  // Channel counts read back from the built weights.
  std::vector<LayerChannels> channel_ledger() const;

  torch::nn::Conv2d encoder_conv(int layer) const { return encoder_convs_[layer]; }
  torch::nn::ConvTranspose2d decoder_conv(int layer) const { return decoder_convs_[layer]; }

 private:
  GeneratorSpec spec_;
  std::vector<torch::nn::Conv2d> encoder_convs_;
  std::vector<torch::nn::BatchNorm2d> encoder_norms_;  // empty holder when absent
  std::vector<torch::nn::ConvTranspose2d> decoder_convs_;
};
TORCH_MODULE(UNetGenerator);

class PatchCriticImpl : public torch::nn::Module {
 public:
  explicit PatchCriticImpl(CriticSpec spec);

  // [N, 3, H, W] -> [N, 1, H / 2^k, W / 2^k] for k downsampling blocks.
  torch::Tensor forward(const torch::Tensor& x);

  const CriticSpec& spec() const { return spec_; }

 private:
  CriticSpec spec_;
  torch::nn::Sequential body_;
};
TORCH_MODULE(PatchCritic);

// Expected channel ledger computed from the GeneratorSpec alone.
std::vector<LayerChannels> expected_channel_ledger(const GeneratorSpec& spec);

// Throws ContractError when the built generator's ledger differs from the
// GeneratorSpec-derived one.
void check_channel_ledger(const UNetGeneratorImpl& generator);

// True when any submodule is a batch, instance, layer or group norm.
bool has_normalization(const torch::nn::Module& module);

// Validates [N, 3, H, W] with N >= 1 and H, W divisible by 2^depth, then runs
// the generator.
torch::Tensor forward_generator(UNetGenerator& generator, const torch::Tensor& x);
torch::Tensor forward_critic(PatchCritic& critic, const torch::Tensor& x);

// Convolution weights ~ N(0, 0.02), batch-norm scales ~ N(1, 0.02), biases
// zero. Deterministic in seed.
void init_weights(torch::nn::Module& module, std::uint64_t seed);

// Debug preset: the outermost skip path carries the input through
// encoder layer 1 and the last decoder layer, so the generator computes
// tanh(x) exactly up to float rounding. Requires encoder_channels[0] >= 24.
void apply_identity_preset(UNetGeneratorImpl& generator);

// [N, 3, H, W] float tensor from images of equal size.
torch::Tensor to_batch(const std::vector<ImageTensor>& images);
torch::Tensor to_tensor(const ImageTensor& image);
ImageTensor from_batch(const torch::Tensor& batch, std::int64_t index);

}  // namespace ugan::nets

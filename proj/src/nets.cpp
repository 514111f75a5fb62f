#include "ugan/nets.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include "ugan/error.hpp"

namespace ugan::nets {

namespace {

bool divisible_by_power_of_two(int size, int power) {
  return power < 31 && size > 0 && size % (1 << power) == 0;
}

void require_positive(const std::vector<int>& channels, const char* what) {
  for (const int c : channels) {
    if (c <= 0) throw ContractError(std::string(what) + " channel counts must be positive");
  }
}

}  // namespace

void GeneratorSpec::validate() const {
  if (encoder_channels.empty()) throw ContractError("generator needs at least one encoder layer");
  require_positive(encoder_channels, "encoder");
  if (in_channels <= 0 || kernel != 4 || stride != 2) {
    throw ContractError("generator layers must use kernel 4 with stride 2");
  }
  if (!divisible_by_power_of_two(image_size, depth())) {
    throw ContractError("2^" + std::to_string(depth()) + " must divide image size " +
                        std::to_string(image_size));
  }
}

GeneratorSpec GeneratorSpec::paper() { return GeneratorSpec{}; }

GeneratorSpec GeneratorSpec::desk() {
  GeneratorSpec spec;
  spec.image_size = 64;
  spec.encoder_channels = {32, 64, 128, 128, 128};
  return spec;
}

int CriticSpec::output_size() const {
  return image_size >> static_cast<int>(downsample_channels.size());
}

void CriticSpec::validate() const {
  if (downsample_channels.empty()) throw ContractError("critic needs a downsampling block");
  require_positive(downsample_channels, "critic");
  require_positive(same_channels, "critic");
  if (in_channels <= 0 || kernel != 4) throw ContractError("critic layers must use kernel 4");
  if (!divisible_by_power_of_two(image_size, static_cast<int>(downsample_channels.size()))) {
    throw ContractError("critic downsampling does not divide image size " +
                        std::to_string(image_size));
  }
}

CriticSpec CriticSpec::paper() { return CriticSpec{}; }

CriticSpec CriticSpec::desk() {
  CriticSpec spec;
  spec.image_size = 64;
  spec.downsample_channels = {32, 64, 128};
  spec.same_channels = {128};
  return spec;
}

void to_json(nlohmann::json& j, const GeneratorSpec& s) {
  j = {{"image_size", s.image_size},       {"in_channels", s.in_channels},
       {"kernel", s.kernel},               {"stride", s.stride},
       {"encoder_channels", s.encoder_channels}, {"first_layer_norm", s.first_layer_norm},
       {"leaky_slope", s.leaky_slope}};
}

void from_json(const nlohmann::json& j, GeneratorSpec& s) {
  j.at("image_size").get_to(s.image_size);
  j.at("in_channels").get_to(s.in_channels);
  j.at("kernel").get_to(s.kernel);
  j.at("stride").get_to(s.stride);
  j.at("encoder_channels").get_to(s.encoder_channels);
  j.at("first_layer_norm").get_to(s.first_layer_norm);
  j.at("leaky_slope").get_to(s.leaky_slope);
}

void to_json(nlohmann::json& j, const CriticSpec& s) {
  j = {{"image_size", s.image_size},
       {"in_channels", s.in_channels},
       {"kernel", s.kernel},
       {"downsample_channels", s.downsample_channels},
       {"same_channels", s.same_channels},
       {"leaky_slope", s.leaky_slope}};
}

void from_json(const nlohmann::json& j, CriticSpec& s) {
  j.at("image_size").get_to(s.image_size);
  j.at("in_channels").get_to(s.in_channels);
  j.at("kernel").get_to(s.kernel);
  j.at("downsample_channels").get_to(s.downsample_channels);
  j.at("same_channels").get_to(s.same_channels);
  j.at("leaky_slope").get_to(s.leaky_slope);
}

UNetGeneratorImpl::UNetGeneratorImpl(GeneratorSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  const int n = spec_.depth();
  const auto& enc = spec_.encoder_channels;
  int in = spec_.in_channels;
  for (int i = 0; i < n; ++i) {
    const bool norm = i > 0 || spec_.first_layer_norm;
    auto conv = torch::nn::Conv2d(
        torch::nn::Conv2dOptions(in, enc[i], spec_.kernel).stride(spec_.stride).padding(1).bias(!norm));
    encoder_convs_.push_back(register_module("enc" + std::to_string(i + 1), conv));
    if (norm) {
      encoder_norms_.push_back(
          register_module("enc" + std::to_string(i + 1) + "_bn", torch::nn::BatchNorm2d(enc[i])));
    } else {
      encoder_norms_.emplace_back(nullptr);
    }
    in = enc[i];
  }
  for (int j = 0; j < n; ++j) {
    const int skip = j == 0 ? 0 : enc[n - 1 - j];
    const int upstream = j == 0 ? enc[n - 1] : enc[n - 1 - j];
    const int out = j == n - 1 ? spec_.in_channels : enc[n - 2 - j];
    auto conv = torch::nn::ConvTranspose2d(
        torch::nn::ConvTranspose2dOptions(upstream + skip, out, spec_.kernel)
            .stride(spec_.stride)
            .padding(1));
    decoder_convs_.push_back(register_module("dec" + std::to_string(j + 1), conv));
  }
  check_channel_ledger(*this);
}

torch::Tensor UNetGeneratorImpl::forward(const torch::Tensor& x) {
  const int n = spec_.depth();
  std::vector<torch::Tensor> skips;
  skips.reserve(n);
  torch::Tensor h = x;
  for (int i = 0; i < n; ++i) {
    h = encoder_convs_[i]->forward(h);
    if (!encoder_norms_[i].is_empty()) h = encoder_norms_[i]->forward(h);
    h = torch::leaky_relu(h, spec_.leaky_slope);
    skips.push_back(h);
  }
  for (int j = 0; j < n; ++j) {
    if (j > 0) h = torch::cat({h, skips[n - 1 - j]}, 1);
    h = decoder_convs_[j]->forward(h);
    h = j == n - 1 ? torch::tanh(h) : torch::relu(h);
  }
  return h;
}

std::vector<LayerChannels> UNetGeneratorImpl::channel_ledger() const {
  std::vector<LayerChannels> ledger;
  for (std::size_t i = 0; i < encoder_convs_.size(); ++i) {
    const auto& w = encoder_convs_[i]->weight;  // [out, in, k, k]
    ledger.push_back({"enc" + std::to_string(i + 1), static_cast<int>(w.size(1)),
                      static_cast<int>(w.size(0))});
  }
  for (std::size_t j = 0; j < decoder_convs_.size(); ++j) {
    const auto& w = decoder_convs_[j]->weight;  // [in, out, k, k]
    ledger.push_back({"dec" + std::to_string(j + 1), static_cast<int>(w.size(0)),
                      static_cast<int>(w.size(1))});
  }
  return ledger;
}

std::vector<LayerChannels> expected_channel_ledger(const GeneratorSpec& spec) {
  const int n = spec.depth();
  const auto& enc = spec.encoder_channels;
  std::vector<LayerChannels> ledger;
  int in = spec.in_channels;
  for (int i = 1; i <= n; ++i) {
    ledger.push_back({"enc" + std::to_string(i), in, enc[i - 1]});
    in = enc[i - 1];
  }
  // Decoder layer k takes decoder k-1's output plus encoder layer n-k+1,
  // and mirrors encoder layer n-k's width.
  for (int k = 1; k <= n; ++k) {
    const int from_decoder = k == 1 ? enc[n - 1] : ledger.back().out;
    const int from_skip = k == 1 ? 0 : enc[n - k];
    const int out = k == n ? spec.in_channels : enc[n - k - 1];
    ledger.push_back({"dec" + std::to_string(k), from_decoder + from_skip, out});
  }
  return ledger;
}

void check_channel_ledger(const UNetGeneratorImpl& generator) {
  const auto expected = expected_channel_ledger(generator.spec());
  const auto actual = generator.channel_ledger();
  if (expected.size() != actual.size()) throw ContractError("generator layer count mismatch");
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (expected[i] != actual[i]) {
      throw ContractError("channel ledger mismatch at " + expected[i].name + ": expected " +
                          std::to_string(expected[i].in) + "->" + std::to_string(expected[i].out) +
                          ", built " + std::to_string(actual[i].in) + "->" +
                          std::to_string(actual[i].out));
    }
  }
}

PatchCriticImpl::PatchCriticImpl(CriticSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  const auto leaky = [this] {
    return torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(spec_.leaky_slope));
  };
  // Even kernels cannot be centered; pad one row/column before, two after.
  const auto same_pad = [] { return torch::nn::ZeroPad2d(torch::nn::ZeroPad2dOptions({1, 2, 1, 2})); };
  int in = spec_.in_channels;
  for (const int out : spec_.downsample_channels) {
    body_->push_back(
        torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, spec_.kernel).stride(2).padding(1)));
    body_->push_back(leaky());
    in = out;
  }
  for (const int out : spec_.same_channels) {
    body_->push_back(same_pad());
    body_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, spec_.kernel).stride(1)));
    body_->push_back(leaky());
    in = out;
  }
  body_->push_back(same_pad());
  body_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, 1, spec_.kernel).stride(1)));
  register_module("body", body_);
}

torch::Tensor PatchCriticImpl::forward(const torch::Tensor& x) { return body_->forward(x); }

bool has_normalization(const torch::nn::Module& module) {
  for (const auto& child : module.modules(/*include_self=*/true)) {
    if (child->name().find("Norm") != std::string::npos) return true;
  }
  return false;
}

namespace {

void check_image_batch(const torch::Tensor& x, int channels, int power, const char* who) {
  if (x.dim() != 4 || x.size(0) < 1 || x.size(1) != channels) {
    throw DimensionError(std::string(who) + " expects a [N, " + std::to_string(channels) +
                         ", H, W] batch with N >= 1");
  }
  const auto h = x.size(2);
  const auto w = x.size(3);
  const std::int64_t factor = std::int64_t{1} << power;
  if (h % factor != 0 || w % factor != 0 || h == 0 || w == 0) {
    throw DimensionError(std::string(who) + " input " + std::to_string(h) + "x" +
                         std::to_string(w) + " is not divisible by " + std::to_string(factor));
  }
}

}  // namespace

torch::Tensor forward_generator(UNetGenerator& generator, const torch::Tensor& x) {
  const auto& spec = generator->spec();
  check_image_batch(x, spec.in_channels, spec.depth(), "generator");
  return generator->forward(x);
}

torch::Tensor forward_critic(PatchCritic& critic, const torch::Tensor& x) {
  const auto& spec = critic->spec();
  check_image_batch(x, spec.in_channels, static_cast<int>(spec.downsample_channels.size()),
                    "critic");
  return critic->forward(x);
}

void init_weights(torch::nn::Module& module, std::uint64_t seed) {
  torch::NoGradGuard no_grad;
  auto gen = at::detail::createCPUGenerator(seed);
  for (const auto& child : module.modules(/*include_self=*/true)) {
    const bool conv = child->as<torch::nn::Conv2d>() != nullptr ||
                      child->as<torch::nn::ConvTranspose2d>() != nullptr;
    const bool batch_norm = child->as<torch::nn::BatchNorm2d>() != nullptr;
    if (!conv && !batch_norm) continue;
    for (auto& param : child->named_parameters(/*recurse=*/false)) {
      if (param.key() == "weight") {
        param.value().normal_(batch_norm ? 1.0 : 0.0, 0.02, gen);
      } else if (param.key() == "bias") {
        param.value().zero_();
      }
    }
  }
}

void apply_identity_preset(UNetGeneratorImpl& generator) {
  const auto& spec = generator.spec();
  const int first = spec.encoder_channels.front();
  const int needed = spec.in_channels * 8;
  if (first < needed || spec.first_layer_norm) {
    throw ContractError("identity preset needs >= " + std::to_string(needed) +
                        " un-normalized channels in encoder layer 1");
  }
  torch::NoGradGuard no_grad;
  auto enc = generator.encoder_conv(0);
  auto dec = generator.decoder_conv(spec.depth() - 1);
  enc->weight.zero_();
  if (enc->bias.defined()) enc->bias.zero_();
  dec->weight.zero_();
  dec->bias.zero_();
  // Layer 1 is a space-to-depth: channel (c, dy, dx, sign) reads input pixel
  // (2y + dy, 2x + dx) times +-1. After the leaky rectifier,
  // lrelu(v) - lrelu(-v) = (1 + slope) v recovers the value, and the
  // transposed convolution scatters it back to its source pixel.
  const int skip_offset = static_cast<int>(dec->weight.size(0)) - first;
  const float restore = 1.0f / static_cast<float>(1.0 + spec.leaky_slope);
  auto enc_w = enc->weight.accessor<float, 4>();
  auto dec_w = dec->weight.accessor<float, 4>();
  for (int c = 0; c < spec.in_channels; ++c) {
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx) {
        for (int sign = 0; sign < 2; ++sign) {
          const int ch = ((c * 2 + dy) * 2 + dx) * 2 + sign;
          const float s = sign == 0 ? 1.0f : -1.0f;
          enc_w[ch][c][dy + 1][dx + 1] = s;
          dec_w[skip_offset + ch][c][dy + 1][dx + 1] = s * restore;
        }
      }
    }
  }
}

torch::Tensor to_tensor(const ImageTensor& image) {
  auto hwc = torch::from_blob(const_cast<float*>(image.data().data()),
                              {image.height(), image.width(), 3}, torch::kFloat32);
  return hwc.permute({2, 0, 1}).contiguous();
}

torch::Tensor to_batch(const std::vector<ImageTensor>& images) {
  if (images.empty()) throw DimensionError("empty image batch");
  std::vector<torch::Tensor> items;
  items.reserve(images.size());
  for (const auto& image : images) {
    if (image.size() != images.front().size()) {
      throw DimensionError("images in a batch must share one size");
    }
    items.push_back(to_tensor(image));
  }
  return torch::stack(items);
}

ImageTensor from_batch(const torch::Tensor& batch, std::int64_t index) {
  if (batch.dim() != 4 || batch.size(1) != 3 || index < 0 || index >= batch.size(0)) {
    throw DimensionError("from_batch expects [N, 3, H, W] and a valid index");
  }
  auto hwc = batch[index].detach().to(torch::kFloat32).permute({1, 2, 0}).contiguous();
  const auto* ptr = hwc.data_ptr<float>();
  std::vector<float> data(ptr, ptr + hwc.numel());
  return ImageTensor(static_cast<int>(batch.size(2)), static_cast<int>(batch.size(3)),
                     std::move(data));
}

}  // namespace ugan::nets

#include "ugan/losses.hpp"

#include <torch/autograd.h>
#include <torch/torch.h>

#include "ugan/error.hpp"
#include "ugan/nets.hpp"
#include "ugan/random.hpp"

namespace ugan::losses {

void LossWeights::validate() const {
  if (!(lambda_1 >= 0.0) || !(lambda_2 >= 0.0) || !(lambda_gp >= 0.0)) {
    throw ConfigError("loss weights must be non-negative");
  }
  if (alpha < 1) throw ConfigError("alpha must be >= 1");
}

LossWeights LossWeights::ugan() { return LossWeights{}; }

LossWeights LossWeights::ugan_p() {
  LossWeights w;
  w.lambda_2 = 1.0;
  return w;
}

void to_json(nlohmann::json& j, const LossWeights& w) {
  j = {{"lambda_1", w.lambda_1},
       {"lambda_2", w.lambda_2},
       {"lambda_gp", w.lambda_gp},
       {"alpha", w.alpha}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
  j.at("lambda_1").get_to(w.lambda_1);
  j.at("lambda_2").get_to(w.lambda_2);
  j.at("lambda_gp").get_to(w.lambda_gp);
  j.at("alpha").get_to(w.alpha);
}

namespace {

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* who) {
  if (!a.sizes().equals(b.sizes())) {
    throw DimensionError(std::string(who) + ": shape mismatch between clean and predicted");
  }
}

torch::Tensor power(const torch::Tensor& x, int alpha) {
  return alpha == 1 ? x : x.pow(alpha);
}

}  // namespace

torch::Tensor l1_loss(const torch::Tensor& clean, const torch::Tensor& predicted) {
  check_same_shape(clean, predicted, "l1_loss");
  return (clean - predicted).abs().mean();
}

torch::Tensor gdl_sum(const torch::Tensor& clean, const torch::Tensor& predicted, int alpha) {
  check_same_shape(clean, predicted, "gdl");
  if (alpha < 1) throw ConfigError("alpha must be >= 1");
  if (clean.dim() < 2) throw DimensionError("gdl needs two spatial dimensions");
  using torch::indexing::Slice;
  const int rows = static_cast<int>(clean.dim()) - 2;
  const int cols = static_cast<int>(clean.dim()) - 1;
  // I[i, j] - I[i-1, j] and I[i, j-1] - I[i, j].
  auto row_grad = [&](const torch::Tensor& t) {
    return (t.slice(rows, 1) - t.slice(rows, 0, -1)).abs();
  };
  auto col_grad = [&](const torch::Tensor& t) {
    return (t.slice(cols, 0, -1) - t.slice(cols, 1)).abs();
  };
  const auto row_term = power((row_grad(clean) - row_grad(predicted)).abs(), alpha).sum();
  const auto col_term = power((col_grad(clean) - col_grad(predicted)).abs(), alpha).sum();
  return row_term + col_term;
}

torch::Tensor gdl(const torch::Tensor& clean, const torch::Tensor& predicted, int alpha) {
  return gdl_sum(clean, predicted, alpha) / static_cast<double>(clean.numel());
}

double gdl_sum(const ImageTensor& clean, const ImageTensor& predicted, int alpha) {
  if (clean.size() != predicted.size()) throw DimensionError("gdl: image shape mismatch");
  const auto c = nets::to_tensor(clean).to(torch::kFloat64);
  const auto p = nets::to_tensor(predicted).to(torch::kFloat64);
  return gdl_sum(c, p, alpha).item<double>();
}

torch::Tensor interpolation_weights(std::int64_t batch, std::uint64_t epsilon_seed,
                                    torch::ScalarType dtype) {
  Rng rng(epsilon_seed);
  std::vector<double> u(static_cast<std::size_t>(batch));
  for (auto& v : u) v = rng.uniform();
  return torch::tensor(u, torch::kFloat64).to(dtype);
}

torch::Tensor gradient_penalty(const CriticFn& critic, const torch::Tensor& real,
                               const torch::Tensor& fake, double lambda_gp,
                               std::uint64_t epsilon_seed) {
  if (!real.sizes().equals(fake.sizes())) {
    throw DimensionError("gradient_penalty: real and fake batches differ in shape");
  }
  if (real.dim() < 1 || real.size(0) < 1) throw DimensionError("gradient_penalty: empty batch");
  if (lambda_gp == 0.0) return torch::zeros({}, real.options().requires_grad(false));

  std::vector<std::int64_t> shape(static_cast<std::size_t>(real.dim()), 1);
  shape[0] = real.size(0);
  const auto u = interpolation_weights(real.size(0), epsilon_seed, real.scalar_type())
                     .reshape(shape);
  auto x_hat = (u * real.detach() + (1.0 - u) * fake.detach()).requires_grad_(true);

  auto out = critic(x_hat);
  if (!out.defined() || !out.requires_grad() || out.size(0) != real.size(0)) {
    throw ContractError("gradient_penalty: critic output is not differentiable per sample");
  }
  const auto per_sample = out.dim() == 1 ? out : out.flatten(1).mean(1);
  auto grads = torch::autograd::grad({per_sample.sum()}, {x_hat}, /*grad_outputs=*/{},
                                     /*retain_graph=*/true, /*create_graph=*/true,
                                     /*allow_unused=*/true);
  if (grads.empty() || !grads[0].defined()) {
    throw ContractError("gradient_penalty: critic output does not depend on its input");
  }
  const auto norms = grads[0].flatten(1).norm(2, 1);
  return lambda_gp * (norms - 1.0).pow(2).mean();
}

torch::Tensor critic_loss(const torch::Tensor& d_real, const torch::Tensor& d_fake,
                          const torch::Tensor& gp) {
  if (d_real.dim() == 0 || d_fake.dim() == 0 || d_real.size(0) != d_fake.size(0)) {
    throw DimensionError("critic_loss: batch sizes differ");
  }
  return d_fake.mean() - d_real.mean() + gp;
}

GeneratorLossTerms generator_loss(const torch::Tensor& d_fake, const torch::Tensor& clean,
                                  const torch::Tensor& predicted, const LossWeights& weights) {
  weights.validate();
  GeneratorLossTerms terms;
  terms.adversarial = -d_fake.mean();
  terms.l1 = weights.lambda_1 * losses::l1_loss(clean, predicted);
  terms.gdl = weights.lambda_2 > 0.0
                  ? weights.lambda_2 * gdl(clean, predicted, weights.alpha)
                  : torch::zeros({}, predicted.options().requires_grad(false));
  terms.total = terms.adversarial + terms.l1 + terms.gdl;
  return terms;
}

}  // namespace ugan::losses

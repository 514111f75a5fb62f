#pragma once

#include <cstdint>
#include <functional>

#include <torch/types.h>

#include "json.hpp"
#include "ugan/image_io.hpp"

namespace ugan::losses {

// Objective weights. lambda_2 = 0 selects UGAN, lambda_2 > 0 UGAN-P.
struct LossWeights {
  double lambda_1 = 100.0;
  double lambda_2 = 0.0;
  double lambda_gp = 10.0;
  int alpha = 1;

  void validate() const;

  static LossWeights ugan();
  static LossWeights ugan_p();

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

// Scalar critic of one sample batch, e.g. a patch critic's forward. Output
// is [N] or [N, ...]; non-batch dimensions are averaged per sample.
using CriticFn = std::function<torch::Tensor(const torch::Tensor&)>;

// Mean absolute difference over batch and all elements.
torch::Tensor l1_loss(const torch::Tensor& clean, const torch::Tensor& predicted);

// Unnormalized gradient difference sum over the two trailing (spatial)
// dimensions and every leading dimension:
//   sum | |c[i,j] - c[i-1,j]| - |p[i,j] - p[i-1,j]| |^alpha
// + sum | |c[i,j-1] - c[i,j]| - |p[i,j-1] - p[i,j]| |^alpha
// over interior indices where both neighbours exist.
torch::Tensor gdl_sum(const torch::Tensor& clean, const torch::Tensor& predicted, int alpha);

// gdl_sum divided by the element count of the batch.
torch::Tensor gdl(const torch::Tensor& clean, const torch::Tensor& predicted, int alpha);

double gdl_sum(const ImageTensor& clean, const ImageTensor& predicted, int alpha);

// Interpolation weights u ~ U[0, 1), one per batch element.
torch::Tensor interpolation_weights(std::int64_t batch, std::uint64_t epsilon_seed,
                                    torch::ScalarType dtype);

// lambda_gp * mean_n (||grad_x D(x_hat_n)||_2 - 1)^2 with
// x_hat = u * real + (1 - u) * fake. The result keeps its graph so it can
// be backpropagated into the critic's parameters. Throws ContractError
// when the critic output does not depend differentiably on its input.
torch::Tensor gradient_penalty(const CriticFn& critic, const torch::Tensor& real,
                               const torch::Tensor& fake, double lambda_gp,
                               std::uint64_t epsilon_seed);

// mean(d_fake) - mean(d_real) + gp; the critic minimizes this.
torch::Tensor critic_loss(const torch::Tensor& d_real, const torch::Tensor& d_fake,
                          const torch::Tensor& gp);

struct GeneratorLossTerms {
  torch::Tensor total;
  torch::Tensor adversarial;  // -mean(d_fake)
  torch::Tensor l1;           // lambda_1 * l1_loss
  torch::Tensor gdl;          // lambda_2 * gdl (zero tensor when lambda_2 == 0)
};

// -mean(d_fake) + lambda_1 * l1 + lambda_2 * gdl.
GeneratorLossTerms generator_loss(const torch::Tensor& d_fake, const torch::Tensor& clean,
                                  const torch::Tensor& predicted, const LossWeights& weights);

}  // namespace ugan::losses

#include <random>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "oracles.hpp"
#include "ugan/error.hpp"
#include "ugan/losses.hpp"

using namespace ugan;
using namespace ugan::losses;

namespace {

torch::Tensor to_tensor(const oracle::Planes& p, int batch = 1) {
  auto t = torch::empty({batch, p.planes / batch, p.rows, p.cols}, torch::kFloat64);
  std::copy(p.v.begin(), p.v.end(), t.data_ptr<double>());
  return t;
}

}  // namespace

TEST(L1, Cases) {
  const auto a = torch::rand({2, 3, 5, 5});
  EXPECT_EQ(losses::l1_loss(a, a).item<double>(), 0.0);
  EXPECT_DOUBLE_EQ(losses::l1_loss(torch::ones({1, 3, 4, 4}), torch::zeros({1, 3, 4, 4})).item<double>(), 1.0);
}

TEST(L1, MatchesBruteForce) {
  std::mt19937 gen(1);
  for (int k = 0; k < 10; ++k) {
    const auto a = oracle::random_planes(6, 7, 9, gen);
    const auto b = oracle::random_planes(6, 7, 9, gen);
    EXPECT_NEAR(losses::l1_loss(to_tensor(a, 2), to_tensor(b, 2)).item<double>(), oracle::l1(a, b), 1e-12);
  }
}

TEST(Gdl, HandExpandedTwoByTwo) {
  const auto clean = torch::zeros({1, 1, 2, 2}, torch::kFloat64);
  const auto pred = torch::tensor({0.0, 1.0, 1.0, 0.0}, torch::kFloat64).reshape({1, 1, 2, 2});
  EXPECT_DOUBLE_EQ(gdl_sum(clean, pred, 1).item<double>(), 4.0);
  EXPECT_DOUBLE_EQ(gdl(clean, pred, 1).item<double>(), 1.0);
}

TEST(Gdl, IdentityAndConstants) {
  const auto a = torch::rand({2, 3, 6, 6});
  EXPECT_EQ(gdl(a, a, 1).item<double>(), 0.0);
  EXPECT_EQ(gdl_sum(torch::full({1, 3, 5, 5}, 0.3), torch::full({1, 3, 5, 5}, -0.8), 2).item<double>(), 0.0);
}

TEST(Gdl, MatchesBruteForceForBothExponents) {
  std::mt19937 gen(2);
  for (int alpha : {1, 2, 3}) {
    for (int k = 0; k < 10; ++k) {
      const auto a = oracle::random_planes(6, 8, 5, gen);
      const auto b = oracle::random_planes(6, 8, 5, gen);
      const auto ta = to_tensor(a, 2);
      const auto tb = to_tensor(b, 2);
      EXPECT_LT(oracle::relative_error(gdl_sum(ta, tb, alpha).item<double>(), oracle::gdl_sum(a, b, alpha)), 1e-12);
      EXPECT_LT(oracle::relative_error(gdl(ta, tb, alpha).item<double>(), oracle::gdl(a, b, alpha)), 1e-12);
    }
  }
}

TEST(Gdl, ImageOverloadMatchesTensorVersion) {
  std::mt19937 gen(3);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  ImageTensor a(6, 7);
  ImageTensor b(6, 7);
  for (auto& v : a.data()) v = dist(gen);
  for (auto& v : b.data()) v = dist(gen);
  oracle::Planes pa{3, 6, 7, {}};
  oracle::Planes pb{3, 6, 7, {}};
  for (int ch = 0; ch < 3; ++ch)
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < 7; ++c) {
        pa.v.push_back(a.at(r, c, ch));
        pb.v.push_back(b.at(r, c, ch));
      }
  EXPECT_LT(oracle::relative_error(gdl_sum(a, b, 1), oracle::gdl_sum(pa, pb, 1)), 1e-9);
}

TEST(Gdl, RejectsBadArguments) {
  EXPECT_THROW(gdl(torch::zeros({1, 3, 4, 4}), torch::zeros({1, 3, 4, 5}), 1), DimensionError);
  EXPECT_THROW(gdl(torch::zeros({1, 3, 4, 4}), torch::zeros({1, 3, 4, 4}), 0), ConfigError);
}

TEST(GradientPenalty, AnalyticLinearCritics) {
  const auto real = torch::randn({5, 4}, torch::kFloat64);
  const auto fake = torch::randn({5, 4}, torch::kFloat64);
  const CriticFn mean_critic = [](const torch::Tensor& x) { return x.mean(1); };
  const CriticFn sum_critic = [](const torch::Tensor& x) { return x.sum(1); };
  EXPECT_NEAR(gradient_penalty(mean_critic, real, fake, 10.0, 1).item<double>(), 2.5, 1e-9);
  EXPECT_NEAR(gradient_penalty(sum_critic, real, fake, 10.0, 1).item<double>(), 10.0, 1e-9);
  // Image-shaped input: d = 3 * 2 * 2 = 12 for the mean critic.
  const auto ri = torch::randn({2, 3, 2, 2}, torch::kFloat64);
  const CriticFn image_mean = [](const torch::Tensor& x) { return x.flatten(1).mean(1); };
  const double expected = 10.0 * std::pow(1.0 / std::sqrt(12.0) - 1.0, 2);
  EXPECT_NEAR(gradient_penalty(image_mean, ri, ri * 0.5, 10.0, 2).item<double>(), expected, 1e-9);
}

TEST(GradientPenalty, ZeroWeight) {
  const CriticFn critic = [](const torch::Tensor& x) { return (x * x).sum(1); };
  EXPECT_EQ(gradient_penalty(critic, torch::randn({3, 4}), torch::randn({3, 4}), 0.0, 1).item<double>(), 0.0);
}

TEST(GradientPenalty, InterpolationWeightsAreSeeded) {
  const auto a = interpolation_weights(8, 5, torch::kFloat64);
  EXPECT_TRUE(torch::equal(a, interpolation_weights(8, 5, torch::kFloat64)));
  EXPECT_FALSE(torch::equal(a, interpolation_weights(8, 6, torch::kFloat64)));
  EXPECT_TRUE((a >= 0).all().item<bool>());
  EXPECT_TRUE((a < 1).all().item<bool>());
}

TEST(GradientPenalty, QuadraticCriticMatchesManualInterpolation) {
  // D(x) = sum(x^2): grad = 2 x_hat, so the penalty follows from u.
  const auto real = torch::randn({3, 4}, torch::kFloat64);
  const auto fake = torch::randn({3, 4}, torch::kFloat64);
  const CriticFn critic = [](const torch::Tensor& x) { return (x * x).sum(1); };
  const auto u = interpolation_weights(3, 7, torch::kFloat64).reshape({3, 1});
  const auto x_hat = u * real + (1 - u) * fake;
  const auto expected = 10.0 * ((2 * x_hat).norm(2, 1) - 1).pow(2).mean();
  EXPECT_NEAR(gradient_penalty(critic, real, fake, 10.0, 7).item<double>(), expected.item<double>(), 1e-9);
}

TEST(GradientPenalty, BackpropagatesIntoCriticParameters) {
  auto w = torch::randn({4}, torch::kFloat64).requires_grad_(true);
  const CriticFn critic = [&](const torch::Tensor& x) { return (x * w).sum(1); };
  const auto gp = gradient_penalty(critic, torch::randn({2, 4}, torch::kFloat64),
                                   torch::randn({2, 4}, torch::kFloat64), 10.0, 3);
  gp.backward();
  ASSERT_TRUE(w.grad().defined());
  // d/dw 10 (|w| - 1)^2 = 20 (|w| - 1) w / |w|
  const auto n = w.detach().norm();
  const auto expected = 20.0 * (n - 1) * w.detach() / n;
  EXPECT_TRUE(torch::allclose(w.grad(), expected, 1e-9, 1e-9));
}

TEST(GradientPenalty, RejectsCriticIgnoringInput) {
  const CriticFn constant = [](const torch::Tensor& x) { return torch::zeros({x.size(0)}); };
  EXPECT_THROW(gradient_penalty(constant, torch::randn({2, 4}), torch::randn({2, 4}), 10.0, 1),
               ContractError);
  EXPECT_THROW(gradient_penalty(constant, torch::randn({2, 4}), torch::randn({3, 4}), 10.0, 1),
               DimensionError);
}

TEST(CriticLoss, Cases) {
  const auto zero = torch::zeros({});
  EXPECT_EQ(critic_loss(torch::full({2, 1, 4, 4}, 0.7), torch::full({2, 1, 4, 4}, 0.7), zero).item<double>(), 0.0);
  EXPECT_DOUBLE_EQ(critic_loss(torch::ones({2, 1, 4, 4}), torch::zeros({2, 1, 4, 4}), zero).item<double>(), -1.0);
  EXPECT_DOUBLE_EQ(critic_loss(torch::ones({2, 1, 4, 4}), torch::zeros({2, 1, 4, 4}), torch::full({}, 2.5))
                       .item<double>(),
                   1.5);
}

TEST(GeneratorLoss, Cases) {
  const auto d0 = torch::zeros({2, 1, 4, 4});
  const auto clean = torch::rand({2, 3, 8, 8});
  EXPECT_EQ(generator_loss(d0, clean, clean, LossWeights::ugan_p()).total.item<double>(), 0.0);

  const auto terms = generator_loss(d0, torch::full({2, 3, 8, 8}, 0.5), torch::zeros({2, 3, 8, 8}),
                                    LossWeights::ugan());
  EXPECT_DOUBLE_EQ(terms.total.item<double>(), 50.0);
  EXPECT_EQ(terms.gdl.item<double>(), 0.0);

  const auto adv = generator_loss(torch::full({2, 1, 4, 4}, 3.0), clean, clean, LossWeights::ugan());
  EXPECT_DOUBLE_EQ(adv.adversarial.item<double>(), -3.0);
}

TEST(GeneratorLoss, GdlComponentMatchesOracle) {
  std::mt19937 gen(4);
  for (int k = 0; k < 5; ++k) {
    const auto a = oracle::random_planes(6, 8, 8, gen);
    const auto b = oracle::random_planes(6, 8, 8, gen);
    const auto terms = generator_loss(torch::zeros({2, 1, 1, 1}, torch::kFloat64), to_tensor(a, 2),
                                      to_tensor(b, 2), LossWeights::ugan_p());
    EXPECT_LT(oracle::relative_error(terms.gdl.item<double>(), oracle::gdl(a, b, 1)), 1e-6);
    EXPECT_LT(oracle::relative_error(terms.l1.item<double>(), 100.0 * oracle::l1(a, b)), 1e-6);
  }
}

TEST(GeneratorLoss, GradientMatchesFiniteDifferences) {
  std::mt19937 gen(5);
  const auto a = oracle::random_planes(3, 6, 6, gen);
  const auto b = oracle::random_planes(3, 6, 6, gen);
  auto weights = LossWeights::ugan_p();
  weights.alpha = 2;
  const auto clean = to_tensor(a);
  auto pred = to_tensor(b).requires_grad_(true);
  generator_loss((pred * pred).mean({1, 2, 3}), clean, pred, weights).total.backward();
  const auto grad = pred.grad().flatten();
  auto f = [&](const std::vector<double>& v) {
    oracle::Planes p{3, 6, 6, v};
    auto t = to_tensor(p);
    return generator_loss((t * t).mean({1, 2, 3}), clean, t, weights).total.item<double>();
  };
  for (std::size_t i = 0; i < b.v.size(); i += 7) {
    EXPECT_LT(oracle::relative_error(grad[i].item<double>(), oracle::central_difference(f, b.v, i, 1e-6), 1e-6),
              1e-4);
  }
}

TEST(Weights, PresetsAndValidation) {
  EXPECT_EQ(LossWeights::ugan().lambda_2, 0.0);
  EXPECT_EQ(LossWeights::ugan_p().lambda_2, 1.0);
  EXPECT_EQ(LossWeights::ugan_p().alpha, 1);
  EXPECT_EQ(LossWeights::ugan().lambda_1, 100.0);
  EXPECT_EQ(LossWeights::ugan().lambda_gp, 10.0);
  LossWeights bad;
  bad.lambda_1 = -1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_EQ(nlohmann::json(LossWeights::ugan_p()).get<LossWeights>(), LossWeights::ugan_p());
}

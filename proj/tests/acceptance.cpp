// Acceptance run: prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.
//
// usage: acceptance [work_dir]

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "oracles.hpp"
#include "ugan/checkpoint.hpp"
#include "ugan/evalsuite.hpp"
#include "ugan/losses.hpp"
#include "ugan/nets.hpp"
#include "ugan/pairgen.hpp"
#include "ugan/random.hpp"
#include "ugan/trainer.hpp"

namespace fs = std::filesystem;
using namespace ugan;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

torch::Tensor planes_to_tensor(const oracle::Planes& p) {
  auto t = torch::empty({1, p.planes, p.rows, p.cols}, torch::kFloat64);
  std::copy(p.v.begin(), p.v.end(), t.data_ptr<double>());
  return t;
}

Outcome loss_oracles() {
  const auto t0 = Clock::now();
  std::mt19937 gen(11);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = oracle::random_planes(3, 8, 8, gen);
    const auto b = oracle::random_planes(3, 8, 8, gen);
    const auto ta = planes_to_tensor(a);
    const auto tb = planes_to_tensor(b);
    const double checks[][2] = {
        {losses::l1_loss(ta, tb).item<double>(), oracle::l1(a, b)},
        {losses::gdl(ta, tb, 1).item<double>(), oracle::gdl(a, b, 1)},
        {losses::gdl(ta, tb, 2).item<double>(), oracle::gdl(a, b, 2)},
        {losses::gdl_sum(ta, tb, 1).item<double>(), oracle::gdl_sum(a, b, 1)},
        {losses::gdl_sum(ta, tb, 2).item<double>(), oracle::gdl_sum(a, b, 2)},
    };
    for (const auto& c : checks) worst = std::max(worst, oracle::relative_error(c[0], c[1]));
  }
  const double elapsed = seconds_since(t0);
  std::ostringstream d;
  d << "max relative error " << worst << " over 50 pairs, " << elapsed << " s";
  return {worst < 1e-6 && elapsed < 10.0, d.str()};
}

Outcome gradient_penalty_cases() {
  const auto real = torch::randn({6, 4}, torch::kFloat64);
  const auto fake = torch::randn({6, 4}, torch::kFloat64);
  const double mean_gp =
      losses::gradient_penalty([](const torch::Tensor& x) { return x.mean(1); }, real, fake, 10.0, 3)
          .item<double>();
  const double sum_gp =
      losses::gradient_penalty([](const torch::Tensor& x) { return x.sum(1); }, real, fake, 10.0, 3)
          .item<double>();
  std::ostringstream d;
  d << "mean critic " << mean_gp << " (expect 2.5), sum critic " << sum_gp << " (expect 10)";
  return {std::abs(mean_gp - 2.5) < 1e-5 && std::abs(sum_gp - 10.0) < 1e-5, d.str()};
}

Outcome finite_difference() {
  torch::manual_seed(5);
  nets::CriticSpec spec = nets::CriticSpec::desk();
  spec.image_size = 16;
  nets::PatchCritic critic(spec);
  nets::init_weights(*critic, 9);
  critic->to(torch::kFloat64);
  const auto weights = losses::LossWeights::ugan_p();
  const auto clean = torch::rand({1, 3, 16, 16}, torch::kFloat64) * 2 - 1;
  const auto predicted = torch::rand({1, 3, 16, 16}, torch::kFloat64) * 2 - 1;

  auto loss_at = [&](const torch::Tensor& p) {
    return losses::generator_loss(critic->forward(p), clean, p, weights).total;
  };
  auto p = predicted.clone().requires_grad_(true);
  loss_at(p).backward();
  const auto analytic = p.grad().flatten();

  torch::NoGradGuard no_grad;
  std::mt19937 gen(17);
  std::uniform_int_distribution<std::int64_t> pick(0, predicted.numel() - 1);
  const double h = 1e-3;
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const auto i = pick(gen);
    auto plus = predicted.clone();
    auto minus = predicted.clone();
    plus.view(-1)[i] += h;
    minus.view(-1)[i] -= h;
    const double numeric =
        (loss_at(plus).item<double>() - loss_at(minus).item<double>()) / (2.0 * h);
    worst = std::max(worst, oracle::relative_error(analytic[i].item<double>(), numeric));
  }
  std::ostringstream d;
  d << "max relative error " << worst << " on 20 coordinates";
  return {worst < 1e-3, d.str()};
}

Outcome architecture() {
  const auto t0 = Clock::now();
  torch::NoGradGuard no_grad;
  nets::UNetGenerator generator(nets::GeneratorSpec::paper());
  nets::init_weights(*generator, 1);
  generator->eval();
  nets::PatchCritic critic(nets::CriticSpec::paper());
  nets::init_weights(*critic, 2);
  const auto x = torch::rand({1, 3, 256, 256}) * 2 - 1;
  const auto y = nets::forward_generator(generator, x);
  const auto d = nets::forward_critic(critic, x);
  const bool gen_shape = y.sizes() == x.sizes();
  const bool open_range = (y.abs() < 1.0).all().item<bool>();
  const bool critic_shape = d.sizes() == torch::IntArrayRef({1, 1, 32, 32});
  const bool no_norm = !nets::has_normalization(*critic);
  const double elapsed = seconds_since(t0);
  std::ostringstream msg;
  msg << "generator " << y.sizes() << (open_range ? " in (-1,1)" : " OUT OF RANGE") << ", critic "
      << d.sizes() << ", critic normalization layers: " << (no_norm ? "none" : "present") << ", "
      << elapsed << " s";
  return {gen_shape && open_range && critic_shape && no_norm && elapsed < 30.0, msg.str()};
}

// Synthetic clean scenes and their distorted counterparts on disk.
pairgen::DatasetManifest toy_dataset(const fs::path& dir, int count, int size, std::uint64_t seed,
                                     double test_fraction) {
  fs::create_directories(dir / "clean");
  for (int i = 0; i < count; ++i) {
    save_image(dir / "clean" / ("scene_" + std::to_string(100 + i) + ".png"),
               pairgen::synthetic_scene({size, size}, derive_seed(seed, i)));
  }
  pairgen::synth_distort_directory(dir / "clean", dir / "distorted",
                                   pairgen::DistortionParams::underwater_preset(), seed);
  auto manifest = pairgen::ingest_external_pairs(dir / "clean", dir / "distorted").manifest;
  return test_fraction > 0.0 ? pairgen::build_split(manifest, test_fraction, seed) : manifest;
}

Outcome update_ratio(const fs::path& work) {
  const auto manifest = toy_dataset(work / "ratio", 8, 64, 1, 0.0);
  auto config = trainer::TrainConfig::desk();
  config.max_iterations = 20;
  const auto result = trainer::train(manifest, config, {work / "ratio" / "run", {}, true});
  std::ostringstream d;
  d << result.state.iteration << " iterations: " << result.state.critic_updates
    << " critic updates, " << result.state.generator_updates << " generator updates";
  return {result.state.critic_updates == 100 && result.state.generator_updates == 20 &&
              result.state.iteration == 20,
          d.str()};
}

Outcome desk_overfit() {
  const auto t0 = Clock::now();
  auto config = trainer::TrainConfig::desk();
  const auto params = pairgen::DistortionParams::underwater_preset();
  std::vector<pairgen::ImagePair> pairs;
  for (int i = 0; i < 8; ++i) {
    auto clean = pairgen::synthetic_scene({64, 64}, derive_seed(21, i));
    auto distorted = pairgen::synth_distort(clean, params, derive_seed(22, i));
    pairs.emplace_back(std::move(clean), std::move(distorted));
  }
  trainer::PairSampler sampler(pairs, config.batch_size, 7);
  trainer::PairSampler eval_set(pairs, config.batch_size, 7);
  trainer::TrainState state(config);
  bool finite = true;
  double first = 0.0;
  double last = 0.0;
  double first_logged = 0.0;
  double last_logged = 0.0;
  for (int it = 1; it <= 200; ++it) {
    const auto r = trainer::train_iteration(state, sampler, config);
    for (double v : {r.critic_loss, r.gen_loss, r.l1, r.gdl, r.gp}) finite = finite && std::isfinite(v);
    if (it == 1) {
      first = trainer::evaluate_l1(state.generator, eval_set, config.batch_size);
      first_logged = r.l1;
    }
    last_logged = r.l1;
  }
  last = trainer::evaluate_l1(state.generator, eval_set, config.batch_size);
  const double elapsed = seconds_since(t0);
  const double ratio = last / first;
  std::ostringstream d;
  d << "training-set L1 " << first << " -> " << last << " (" << 100.0 * ratio
    << "% of iteration 1; logged weighted L1 " << first_logged << " -> " << last_logged
    << "), losses " << (finite ? "finite" : "NOT FINITE") << ", " << elapsed << " s";
  return {ratio < 0.25 && finite && elapsed <= 300.0, d.str()};
}

bool same_records(const std::vector<trainer::IterationRecord>& a,
                  const std::vector<trainer::IterationRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].iteration != b[i].iteration || a[i].critic_loss != b[i].critic_loss ||
        a[i].gen_loss != b[i].gen_loss || a[i].l1 != b[i].l1 || a[i].gdl != b[i].gdl ||
        a[i].gp != b[i].gp) {
      return false;
    }
  }
  return true;
}

bool same_weights(const fs::path& a, const fs::path& b) {
  const auto ca = nets::read_checkpoint(a);
  const auto cb = nets::read_checkpoint(b);
  if (ca.tensors.size() != cb.tensors.size()) return false;
  for (const auto& [name, t] : ca.tensors) {
    if (!cb.contains(name)) return false;
    // Optimizer and network state, compared bit for bit.
    if (!torch::equal(t, cb.tensor(name))) return false;
  }
  return true;
}

Outcome determinism(const fs::path& work) {
  const auto manifest = toy_dataset(work / "det", 8, 64, 2, 0.0);
  auto config = trainer::TrainConfig::desk();
  config.weights = losses::LossWeights::ugan_p();
  config.seed = 42;
  config.max_iterations = 10;
  const auto a = trainer::train(manifest, config, {work / "det" / "a", {}, true});
  const auto b = trainer::train(manifest, config, {work / "det" / "b", {}, true});
  const bool repeat = same_records(a.records, b.records);

  auto split = config;
  split.checkpoint_every = 5;
  const auto first_half = trainer::train(manifest, split, {work / "det" / "c", {}, true});
  const auto resumed =
      trainer::train(manifest, split, {work / "det" / "c", work / "det" / "c" / "ckpt-5.ugan", true});
  std::vector<trainer::IterationRecord> stitched(first_half.records.begin(),
                                                 first_half.records.begin() + 5);
  stitched.insert(stitched.end(), resumed.records.begin(), resumed.records.end());
  const bool resume_logs = same_records(a.records, stitched);
  const bool resume_weights =
      same_weights(work / "det" / "a" / "final.ugan", work / "det" / "c" / "final.ugan");
  std::ostringstream d;
  d << "repeat run logs " << (repeat ? "identical" : "DIFFER") << ", resumed logs "
    << (resume_logs ? "identical" : "DIFFER") << ", resumed final state "
    << (resume_weights ? "bit-identical" : "DIFFERS");
  return {repeat && resume_logs && resume_weights, d.str()};
}

Outcome metrics_suite() {
  bool identity = true;
  bool symmetric = true;
  for (int i = 0; i < 20; ++i) {
    const auto a = pairgen::synthetic_scene({48, 48}, derive_seed(90, i));
    const auto b = pairgen::synthetic_scene({48, 48}, derive_seed(91, i));
    identity = identity && eval::edge_distance(a, a) == 0.0;
    symmetric = symmetric && eval::edge_distance(a, b) == eval::edge_distance(b, a);
  }

  const eval::PatchSpec whole{"p", 0, 0, 64, 64};
  const auto constant = eval::patch_stats(ImageTensor(64, 64, 0.2f), whole);
  ImageTensor halves(64, 64, -1.0f);
  for (int r = 0; r < 64; ++r)
    for (int c = 32; c < 64; ++c)
      for (int ch = 0; ch < 3; ++ch) halves.at(r, c, ch) = 1.0f;
  const auto half = eval::patch_stats(halves, whole);
  const bool stats_ok = std::abs(constant.std) < 1e-9 && std::abs(half.mean - 0.5) < 1e-9 &&
                        std::abs(half.std - 0.5) < 1e-9;

  const auto edges = eval::canny_edges(halves);
  bool localized = edges.count() > 0;
  for (int r = 0; r < edges.height; ++r)
    for (int c = 0; c < edges.width; ++c)
      if (edges.at(r, c) && std::abs(c - 31.5) > 1.5) localized = false;

  eval::MetricsReport report;
  std::mt19937 gen(3);
  std::uniform_real_distribution<double> dist(0.0, 40.0);
  std::map<std::string, std::vector<double>> values;
  for (const std::string method : {"a", "b"}) {
    for (int i = 0; i < 7; ++i) {
      const double v = dist(gen);
      report.records.push_back({method, "img" + std::to_string(i), "edge_distance", "", v});
      values[method].push_back(v);
    }
  }
  const auto means = report.means();
  bool means_ok = true;
  for (const auto& [method, vs] : values) {
    double s = 0.0;
    for (double v : vs) s += v;
    means_ok = means_ok &&
               std::abs(means.at({method, "edge_distance", ""}) - s / vs.size()) < 1e-9;
  }
  std::ostringstream d;
  d << "identity " << (identity ? "ok" : "FAIL") << ", symmetry " << (symmetric ? "ok" : "FAIL")
    << ", patch stats constant std " << constant.std << " half-half " << half.mean << " +/- "
    << half.std << ", step edge " << (localized ? "within 1 column" : "MISPLACED")
    << ", report means " << (means_ok ? "ok" : "FAIL");
  return {identity && symmetric && stats_ok && localized && means_ok, d.str()};
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd =
      std::string("\"") + UGAN_CLI_PATH + "\" " + args + " >> \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

Outcome end_to_end(const fs::path& work) {
  const auto t0 = Clock::now();
  const auto dir = work / "e2e";
  const auto log = dir / "cli.log";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::vector<std::pair<std::string, std::string>> steps = {
      {"make-scenes", "make-scenes --count 64 --size 64 --seed 4 --out-dir " + q(dir / "clean")},
      {"synth-distort", "synth-distort --seed 4 --in-dir " + q(dir / "clean") + " --out-dir " +
                            q(dir / "distorted")},
      {"prepare-data", "prepare-data --clean-dir " + q(dir / "clean") + " --distorted-dir " +
                           q(dir / "distorted") + " --test-fraction 0.5 --seed 4 --out " +
                           q(dir / "manifest.tsv")},
      {"train", "train --manifest " + q(dir / "manifest.tsv") +
                    " --preset desk --variant ugan-p --out-dir " + q(dir / "run")},
  };
  for (const auto& [name, args] : steps) {
    if (const int code = run_cli(args, log); code != 0) {
      return {false, name + " exited with " + std::to_string(code)};
    }
  }
  const auto manifest = pairgen::read_manifest(dir / "manifest.tsv");
  const auto test = manifest.select(pairgen::Split::kTest);
  fs::create_directories(dir / "test_clean");
  fs::create_directories(dir / "test_distorted");
  std::string inputs;
  for (const auto& e : test) {
    fs::copy_file(e.clean, dir / "test_clean" / e.clean.filename(), fs::copy_options::overwrite_existing);
    fs::copy_file(e.distorted, dir / "test_distorted" / e.distorted.filename(),
                  fs::copy_options::overwrite_existing);
    inputs += " " + q(e.distorted);
  }
  if (const int code = run_cli("infer --checkpoint " + q(dir / "run" / "final.ugan") +
                                   " --out-dir " + q(dir / "restored") + inputs,
                               log);
      code != 0) {
    return {false, "infer exited with " + std::to_string(code)};
  }
  if (const int code = run_cli("evaluate --original-dir " + q(dir / "test_clean") +
                                   " --method restored=" + q(dir / "restored") +
                                   " --method distorted=" + q(dir / "test_distorted") +
                                   " --patch center:16,16,32,32 --out-dir " + q(dir / "report"),
                               log);
      code != 0) {
    return {false, "evaluate exited with " + std::to_string(code)};
  }
  std::ifstream in(dir / "report" / "report.tsv");
  std::stringstream text;
  text << in.rdbuf();
  const auto report = eval::parse_report(text.str());
  std::map<std::string, std::map<std::string, double>> dist;
  for (const auto& r : report.records) {
    if (r.metric == "edge_distance" && r.image != "<mean>") dist[r.method][r.image] = r.value;
  }
  int improved = 0;
  const int total = static_cast<int>(dist["distorted"].size());
  for (const auto& [image, d_dist] : dist["distorted"]) {
    const auto it = dist["restored"].find(image);
    if (it != dist["restored"].end() && it->second < d_dist) ++improved;
  }
  const bool enough = total > 0 && improved * 10 >= 6 * total;
  std::ostringstream d;
  d << "pipeline exit 0, " << report.records.size() << " report records, edge distance improved on "
    << improved << "/" << total << " test images, " << seconds_since(t0) << " s";
  return {!report.records.empty() && enough, d.str()};
}

std::vector<double> gdl_column(const fs::path& metrics) {
  std::vector<double> out;
  std::ifstream in(metrics);
  std::string line;
  while (std::getline(in, line)) out.push_back(nlohmann::json::parse(line).at("gdl").get<double>());
  return out;
}

Outcome variant_wiring(const fs::path& work) {
  const auto dir = work / "variant";
  const auto manifest = toy_dataset(dir, 8, 64, 5, 0.0);
  pairgen::write_manifest(dir / "manifest.tsv", manifest);
  std::map<std::string, std::vector<double>> gdl;
  for (const std::string variant : {"ugan", "ugan-p"}) {
    const int code = run_cli("train --manifest " + q(dir / "manifest.tsv") +
                                 " --preset desk --iterations 5 --variant " + variant +
                                 " --out-dir " + q(dir / variant),
                             dir / (variant + ".log"));
    if (code != 0) return {false, variant + " training exited with " + std::to_string(code)};
    gdl[variant] = gdl_column(dir / variant / "metrics.jsonl");
  }
  bool zero = gdl["ugan"].size() == 5;
  for (double v : gdl["ugan"]) zero = zero && v == 0.0;
  const bool nonzero = !gdl["ugan-p"].empty() && gdl["ugan-p"].front() > 0.0;
  std::ostringstream d;
  d << "ugan gdl " << (zero ? "0 on all 5 iterations" : "NONZERO") << ", ugan-p gdl at iteration 1 "
    << (gdl["ugan-p"].empty() ? 0.0 : gdl["ugan-p"].front());
  return {zero && nonzero, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "ugan_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);
  torch::set_num_threads(1);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"loss oracles", loss_oracles},
      {"gradient penalty analytic cases", gradient_penalty_cases},
      {"generator loss finite differences", finite_difference},
      {"architecture contracts", architecture},
      {"update ratio", [&] { return update_ratio(work); }},
      {"desk overfit trend", desk_overfit},
      {"determinism and resume", [&] { return determinism(work); }},
      {"metrics suite", metrics_suite},
      {"end-to-end pipeline", [&] { return end_to_end(work); }},
      {"variant wiring", [&] { return variant_wiring(work); }},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome outcome;
    try {
      outcome = criteria[i].second();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    failures += outcome.pass ? 0 : 1;
    std::cout << (outcome.pass ? "PASS" : "FAIL") << " criterion " << (i + 1) << " ("
              << criteria[i].first << "): " << outcome.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}

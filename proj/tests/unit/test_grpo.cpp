#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "support/oracles.hpp"
#include "ttavid/grpo.hpp"
#include "ttavid/reward.hpp"
#include "ttavid/sim_env.hpp"

using namespace ttavid;

namespace {

std::vector<double> flat(const Eigen::MatrixXd& m) {
  std::vector<double> v;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) v.push_back(m(r, c));
  }
  return v;
}

Eigen::MatrixXd unflat(const std::vector<double>& v, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = v[static_cast<std::size_t>(r * cols + c)];
  }
  return m;
}

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = scale * (2.0 * uniform01(rng) - 1.0);
  return m;
}

struct Instance {
  ToyPolicy policy;
  std::vector<PolicyRollout> rollouts;
  TrainConfig config;
};

Instance random_instance(Rng& rng, std::size_t dims, std::size_t answers, bool with_kl) {
  Instance in;
  in.policy = ToyPolicy(random_matrix(static_cast<Eigen::Index>(dims), static_cast<Eigen::Index>(answers), rng, 1.0),
                        0.5 + 1.5 * uniform01(rng));
  in.policy.reference = random_matrix(in.policy.theta.rows(), in.policy.theta.cols(), rng, 1.0);
  const std::size_t n = 1 + uniform_index(rng, 8);
  for (std::size_t i = 0; i < n; ++i) {
    PolicyRollout r;
    r.features = Eigen::VectorXd(static_cast<Eigen::Index>(dims));
    for (Eigen::Index j = 0; j < r.features.size(); ++j) r.features(j) = 2.0 * uniform01(rng) - 1.0;
    r.answer = uniform_index(rng, answers);
    r.advantage = 2.0 * uniform01(rng) - 1.0;
    in.rollouts.push_back(r);
  }
  in.config.kl_coeff = with_kl ? uniform01(rng) : 0.0;
  return in;
}

// Largest elementwise relative error between analytic and central-difference
// gradients; entries where both are below 1e-6 are compared absolutely.
double gradient_error(const Instance& in) {
  const Eigen::MatrixXd g = surrogate_gradient(in.policy, in.rollouts, in.config);
  const auto rows = in.policy.theta.rows(), cols = in.policy.theta.cols();
  auto f = [&](const std::vector<double>& x) {
    ToyPolicy p = in.policy;
    p.theta = unflat(x, rows, cols);
    return surrogate_objective(p, in.rollouts, in.config);
  };
  const auto fd = oracle::central_difference(f, flat(in.policy.theta), 1e-5);
  const auto ga = flat(g);
  double worst = 0.0;
  for (std::size_t i = 0; i < ga.size(); ++i) {
    const double scale = std::max({std::abs(ga[i]), std::abs(fd[i]), 1e-6});
    worst = std::max(worst, std::abs(ga[i] - fd[i]) / scale);
  }
  return worst;
}

}  // namespace

TEST_CASE("advantages") {
  const std::vector<double> r{1, 0, 0, 1};
  CHECK(compute_advantages(r, Grouping::WholePool, 0).advantages == std::vector<double>{1, -1, -1, 1});
  const std::vector<double> flat_r{0.7, 0.7, 0.7};
  CHECK(compute_advantages(flat_r, Grouping::WholePool, 0).advantages == std::vector<double>{0, 0, 0});

  // Per-subset groups are standardized separately; a flat group is zeroed.
  const std::vector<double> two{1, 0, 0.3, 0.3};
  const auto a = compute_advantages(two, Grouping::PerSubset, 2);
  CHECK(a.advantages == std::vector<double>{1, -1, 0, 0});
  CHECK_THROWS_AS(compute_advantages(two, Grouping::PerSubset, 3), std::invalid_argument);
  CHECK_THROWS_AS(compute_advantages(std::vector<double>{}, Grouping::WholePool, 1), std::invalid_argument);
}

TEST_CASE("property: advantages are standardized and affine invariant") {
  Rng rng(3);
  for (int it = 0; it < 1000; ++it) {
    const std::size_t group = 2 + uniform_index(rng, 8), groups = 1 + uniform_index(rng, 4);
    std::vector<double> r(group * groups);
    for (double& v : r) v = -1.0 + 2.0 * uniform01(rng);
    const auto a = compute_advantages(r, Grouping::PerSubset, group);
    for (std::size_t g = 0; g < groups; ++g) {
      double mean = 0.0, sq = 0.0;
      for (std::size_t i = 0; i < group; ++i) mean += a.advantages[g * group + i];
      mean /= static_cast<double>(group);
      for (std::size_t i = 0; i < group; ++i) sq += a.advantages[g * group + i] * a.advantages[g * group + i];
      REQUIRE(std::abs(mean) < 1e-6);
      REQUIRE(std::abs(sq / static_cast<double>(group) - 1.0) < 1e-6);
    }
    const double c = -5.0 + 10.0 * uniform01(rng), s = 0.1 + 10.0 * uniform01(rng);
    auto shifted = r;
    for (double& v : shifted) v = s * v + c;
    const auto b = compute_advantages(shifted, Grouping::PerSubset, group);
    for (std::size_t i = 0; i < r.size(); ++i) REQUIRE(std::abs(a.advantages[i] - b.advantages[i]) < 1e-9);
    auto only_shift = r;
    for (double& v : only_shift) v += c;
    const auto d = compute_advantages(only_shift, Grouping::PerSubset, group);
    for (std::size_t i = 0; i < r.size(); ++i) REQUIRE(std::abs(a.advantages[i] - d.advantages[i]) < 1e-12);
  }
}

TEST_CASE("policy step basics") {
  Rng rng(4);
  auto in = random_instance(rng, 4, 3, false);
  for (auto& r : in.rollouts) r.advantage = 0.0;
  CHECK(policy_step(in.policy, in.rollouts, in.config).theta == in.policy.theta);

  ToyPolicy two(Eigen::MatrixXd::Zero(1, 2), 1.0);
  PolicyRollout r{Eigen::VectorXd::Ones(1), 1, 1.0};
  const auto stepped = policy_step(two, std::span<const PolicyRollout>(&r, 1), TrainConfig{});
  CHECK(stepped.logits(r.features)(1) > two.logits(r.features)(1));
  CHECK(stepped.probabilities(r.features)(1) > 0.5);

  PolicyRollout bad{Eigen::VectorXd::Ones(1), 5, 1.0};
  CHECK_THROWS_AS(policy_step(two, std::span<const PolicyRollout>(&bad, 1), TrainConfig{}), std::invalid_argument);
  PolicyRollout nan{Eigen::VectorXd::Ones(1), 0, std::nan("")};
  CHECK_THROWS_AS(policy_step(two, std::span<const PolicyRollout>(&nan, 1), TrainConfig{}), std::domain_error);
  CHECK_THROWS_AS(ToyPolicy(Eigen::MatrixXd::Zero(2, 1), 1.0), std::invalid_argument);
}

TEST_CASE("surrogate matches an independent evaluation") {
  Rng rng(12);
  for (int it = 0; it < 200; ++it) {
    const auto in = random_instance(rng, 4, 3, false);
    std::vector<std::vector<double>> feats;
    std::vector<std::size_t> answers;
    std::vector<double> adv;
    for (const auto& r : in.rollouts) {
      feats.emplace_back(r.features.data(), r.features.data() + r.features.size());
      answers.push_back(r.answer);
      adv.push_back(r.advantage);
    }
    const double want = oracle::surrogate(flat(in.policy.theta), 4, 3, feats, answers, adv, in.policy.temperature);
    REQUIRE(surrogate_objective(in.policy, in.rollouts, in.config) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("gradient matches central differences on a 3-answer, 4-feature instance") {
  Rng rng(21);
  CHECK(gradient_error(random_instance(rng, 4, 3, false)) < 1e-5);
  CHECK(gradient_error(random_instance(rng, 4, 3, true)) < 1e-5);
}

TEST_CASE("property: gradient check over 100 random instances") {
  Rng rng(22);
  for (int it = 0; it < 100; ++it) {
    const auto in = random_instance(rng, 1 + uniform_index(rng, 6), 2 + uniform_index(rng, 5), it % 2 == 1);
    REQUIRE(gradient_error(in) < 1e-5);
  }
}

TEST_CASE("grouped step weighs questions equally and ignores order") {
  Rng rng(31);
  std::vector<std::vector<PolicyRollout>> groups;
  ToyPolicy base = random_instance(rng, 3, 4, false).policy;
  for (int q = 0; q < 6; ++q) groups.push_back(random_instance(rng, 3, 4, false).rollouts);
  TrainConfig cfg;
  const auto a = policy_step_grouped(base, groups, cfg);

  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(3, 4);
  for (const auto& g : groups) mean += surrogate_gradient(base, g, cfg);
  mean /= 6.0;
  CHECK((a.theta - (base.theta + cfg.eta * mean)).cwiseAbs().maxCoeff() < 1e-12);

  auto permuted = groups;
  std::reverse(permuted.begin(), permuted.end());
  std::swap(permuted[1], permuted[4]);
  const auto b = policy_step_grouped(base, permuted, cfg);
  CHECK((a.theta - b.theta).cwiseAbs().maxCoeff() <= 1e-9);

  groups.emplace_back();
  CHECK((policy_step_grouped(base, groups, cfg).theta - a.theta).cwiseAbs().maxCoeff() == 0.0);
  std::vector<std::vector<PolicyRollout>> none(2);
  CHECK(policy_step_grouped(base, none, cfg).theta == base.theta);
}

TEST_CASE("sampling from the policy") {
  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(2, 3);
  theta(1, 2) = 0.3;
  ToyPolicy greedy(theta, 1e-9);
  Eigen::VectorXd x(2);
  x << 1.0, 1.0;
  Rng rng(1);
  const auto g = rollout_policy(greedy, x, 50, rng);
  CHECK(std::all_of(g.begin(), g.end(), [](std::size_t a) { return a == 2; }));

  Rng a(77), b(77);
  ToyPolicy warm(theta, 1.0);
  CHECK(rollout_policy(warm, x, 100, a) == rollout_policy(warm, x, 100, b));
}

TEST_CASE("uniform logits sample uniformly (chi-square, p > 0.01)") {
  const std::size_t m = 10;
  ToyPolicy flat_policy(Eigen::MatrixXd::Zero(3, static_cast<Eigen::Index>(m)), 1.0);
  Rng rng(2718);
  const std::size_t n = 10000;
  const auto draws = rollout_policy(flat_policy, Eigen::VectorXd::Ones(3), n, rng);
  std::vector<double> counts(m, 0.0);
  for (auto d : draws) counts[d] += 1.0;
  const double expected = static_cast<double>(n) / static_cast<double>(m);
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < oracle::chi_square_critical_99(m - 1));
}

TEST_CASE("fifty steps under the frequency reward sharpen the policy toward its majority") {
  // Each seed: one sim question, pretrained toy policy, K=4 subsets of F=4
  // frames, N=8 rollouts, per-subset GRPO groups.
  std::vector<double> before, after;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    sim::SimParams params;
    params.answer_count = 4;
    params.frames_for_full_signal = 1;
    const auto env = sim::generate_env(params, std::nullopt, seed);
    ToyPolicy policy = sim::pretrained_policy(4, 1.0, 1.0);
    Rng rng(stream_seed(seed, {1}));
    std::vector<FrameSubset> probe;
    for (int i = 0; i < 64; ++i) probe.push_back(sample_without_replacement(std::vector<double>(40, 1.0), 4, rng));

    auto majority_prob = [&](const ToyPolicy& p) {
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(4);
      for (const auto& s : probe) mean += p.probabilities(sim::policy_features(env, s));
      mean /= static_cast<double>(probe.size());
      return mean.maxCoeff();
    };
    before.push_back(majority_prob(policy));
    TrainConfig cfg;
    for (int step = 0; step < 50; ++step) {
      std::vector<Eigen::VectorXd> feats;
      std::vector<ExtractedAnswer> answers;
      std::vector<std::size_t> picks;
      for (int k = 0; k < 4; ++k) {
        const auto subset = sample_without_replacement(std::vector<double>(40, 1.0), 4, rng);
        const auto x = sim::policy_features(env, subset);
        for (auto a : rollout_policy(policy, x, 8, rng)) {
          feats.push_back(x);
          picks.push_back(a);
          answers.push_back(ExtractedAnswer::of(std::string(1, sim::option_letter(a))));
        }
      }
      const auto report = compute_rewards(AnswerPool::from_grid(4, 8, answers), RewardParams{});
      const auto adv = compute_advantages(report.per_rollout, Grouping::PerSubset, 8);
      std::vector<PolicyRollout> rollouts;
      for (std::size_t i = 0; i < feats.size(); ++i) rollouts.push_back({feats[i], picks[i], adv.advantages[i]});
      policy = policy_step(policy, rollouts, cfg);
    }
    after.push_back(majority_prob(policy));
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return 0.5 * (v[4] + v[5]);
  };
  CHECK(median(after) > median(before));
}

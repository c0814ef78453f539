#include "ttavid/grpo.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ttavid {
namespace {

constexpr double kGreedyTemperature = 1e-6;

// Neumaier-compensated accumulation of a matrix sum; keeps batch-order
// effects on the aggregated gradient at the rounding level.
class CompensatedMatrixSum {
 public:
  CompensatedMatrixSum(Eigen::Index rows, Eigen::Index cols)
      : sum_(Eigen::MatrixXd::Zero(rows, cols)), comp_(Eigen::MatrixXd::Zero(rows, cols)) {}

  void add(const Eigen::MatrixXd& x) {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double s = sum_(i);
      const double v = x(i);
      const double t = s + v;
      comp_(i) += std::abs(s) >= std::abs(v) ? (s - t) + v : (v - t) + s;
      sum_(i) = t;
    }
  }

  Eigen::MatrixXd result() const { return sum_ + comp_; }

 private:
  Eigen::MatrixXd sum_;
  Eigen::MatrixXd comp_;
};

Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
  const double m = z.maxCoeff();
  Eigen::VectorXd e = (z.array() - m).exp();
  return e / e.sum();
}

double effective_temperature(const ToyPolicy& p) {
  return p.temperature < kGreedyTemperature ? kGreedyTemperature : p.temperature;
}

void check_features(const ToyPolicy& policy, const Eigen::VectorXd& x) {
  if (static_cast<std::size_t>(x.size()) != policy.feature_dim()) {
    throw std::invalid_argument("feature vector has dimension " + std::to_string(x.size()) +
                                ", policy expects " + std::to_string(policy.feature_dim()));
  }
}

}  // namespace

AdvantageGroup compute_advantages(std::span<const double> rewards, Grouping grouping,
                                  std::size_t group_size, double std_epsilon) {
  if (rewards.empty()) throw std::invalid_argument("advantages: empty reward vector");
  const std::size_t size = grouping == Grouping::WholePool ? rewards.size() : group_size;
  if (size == 0) throw std::invalid_argument("advantages: empty group");
  if (rewards.size() % size != 0) {
    throw std::invalid_argument("advantages: " + std::to_string(rewards.size()) +
                                " rewards do not split into groups of " + std::to_string(size));
  }

  AdvantageGroup out;
  out.grouping = grouping;
  out.rewards.assign(rewards.begin(), rewards.end());
  out.advantages.assign(rewards.size(), 0.0);
  for (std::size_t start = 0; start < rewards.size(); start += size) {
    double mean = 0.0;
    for (std::size_t i = start; i < start + size; ++i) mean += rewards[i];
    mean /= static_cast<double>(size);
    double var = 0.0;
    for (std::size_t i = start; i < start + size; ++i) var += (rewards[i] - mean) * (rewards[i] - mean);
    const double sd = std::sqrt(var / static_cast<double>(size));
    if (sd < std_epsilon) continue;
    for (std::size_t i = start; i < start + size; ++i) out.advantages[i] = (rewards[i] - mean) / sd;
  }
  return out;
}

ToyPolicy::ToyPolicy(Eigen::MatrixXd initial, double temp)
    : theta(std::move(initial)), reference(theta), temperature(temp) {
  if (theta.rows() == 0 || theta.cols() < 2) {
    throw std::invalid_argument("toy policy needs feature_dim >= 1 and >= 2 answers");
  }
}

Eigen::VectorXd ToyPolicy::logits(const Eigen::VectorXd& features) const {
  check_features(*this, features);
  return theta.transpose() * features;
}

Eigen::VectorXd ToyPolicy::probabilities(const Eigen::VectorXd& features) const {
  return softmax(logits(features) / effective_temperature(*this));
}

double surrogate_objective(const ToyPolicy& policy, std::span<const PolicyRollout> rollouts,
                           const TrainConfig& config) {
  if (rollouts.empty()) throw std::invalid_argument("surrogate: no rollouts");
  const double tau = effective_temperature(policy);
  double total = 0.0;
  for (const auto& r : rollouts) {
    const Eigen::VectorXd z = policy.logits(r.features) / tau;
    const double lse = z.maxCoeff() + std::log((z.array() - z.maxCoeff()).exp().sum());
    total += r.advantage * (z(static_cast<Eigen::Index>(r.answer)) - lse);
    if (config.kl_coeff != 0.0) {
      const Eigen::VectorXd p = softmax(z);
      const Eigen::VectorXd q = softmax(policy.reference.transpose() * r.features / tau);
      total -= config.kl_coeff * (p.array() * (p.array().log() - q.array().log())).sum();
    }
  }
  return total / static_cast<double>(rollouts.size());
}

Eigen::MatrixXd surrogate_gradient(const ToyPolicy& policy, std::span<const PolicyRollout> rollouts,
                                   const TrainConfig& config) {
  if (rollouts.empty()) throw std::invalid_argument("policy step: no rollouts");
  const double tau = effective_temperature(policy);
  CompensatedMatrixSum sum(policy.theta.rows(), policy.theta.cols());
  for (std::size_t i = 0; i < rollouts.size(); ++i) {
    const auto& r = rollouts[i];
    if (r.answer >= policy.answer_count()) {
      throw std::invalid_argument("rollout " + std::to_string(i) + ": answer index " +
                                  std::to_string(r.answer) + " out of range");
    }
    const Eigen::VectorXd p = policy.probabilities(r.features);
    // d log pi(a) / d z_j = (1[j = a] - p_j) / tau, z = theta^T x
    Eigen::VectorXd dz = -p;
    dz(static_cast<Eigen::Index>(r.answer)) += 1.0;
    dz *= r.advantage / tau;
    if (config.kl_coeff != 0.0) {
      const Eigen::VectorXd q = softmax(policy.reference.transpose() * r.features / tau);
      const Eigen::ArrayXd log_ratio = p.array().log() - q.array().log();
      const double kl = (p.array() * log_ratio).sum();
      // d KL / d z_j = p_j (log(p_j / q_j) - KL) / tau
      dz.array() -= config.kl_coeff * p.array() * (log_ratio - kl) / tau;
    }
    Eigen::MatrixXd g = r.features * dz.transpose();
    if (!g.allFinite()) {
      throw std::domain_error("policy step: non-finite gradient from rollout " + std::to_string(i) +
                              " (answer " + std::to_string(r.answer) + ", advantage " +
                              std::to_string(r.advantage) + ")");
    }
    sum.add(g);
  }
  return sum.result() / static_cast<double>(rollouts.size());
}

ToyPolicy policy_step(const ToyPolicy& policy, std::span<const PolicyRollout> rollouts,
                      const TrainConfig& config) {
  if (!(config.eta > 0.0)) throw std::invalid_argument("learning rate must be > 0");
  ToyPolicy next = policy;
  next.theta += config.eta * surrogate_gradient(policy, rollouts, config);
  return next;
}

ToyPolicy policy_step_grouped(const ToyPolicy& policy, std::span<const std::vector<PolicyRollout>> groups,
                              const TrainConfig& config) {
  if (!(config.eta > 0.0)) throw std::invalid_argument("learning rate must be > 0");
  CompensatedMatrixSum sum(policy.theta.rows(), policy.theta.cols());
  std::size_t used = 0;
  for (const auto& g : groups) {
    if (g.empty()) continue;
    sum.add(surrogate_gradient(policy, g, config));
    ++used;
  }
  ToyPolicy next = policy;
  if (used > 0) next.theta += config.eta * (sum.result() / static_cast<double>(used));
  return next;
}

std::size_t sample_categorical(std::span<const double> probs, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (probs[j] <= 0.0) continue;
    acc += probs[j];
    last = j;
    if (u < acc) return j;
  }
  return last;
}

std::vector<std::size_t> rollout_policy(const ToyPolicy& policy, const Eigen::VectorXd& features,
                                        std::size_t count, Rng& rng) {
  if (count == 0) throw std::invalid_argument("rollout count must be >= 1");
  std::vector<std::size_t> out;
  out.reserve(count);
  if (policy.temperature < kGreedyTemperature) {
    Eigen::Index best = 0;
    policy.logits(features).maxCoeff(&best);
    out.assign(count, static_cast<std::size_t>(best));
    return out;
  }
  const Eigen::VectorXd p = policy.probabilities(features);
  const std::span<const double> probs(p.data(), static_cast<std::size_t>(p.size()));
  for (std::size_t i = 0; i < count; ++i) out.push_back(sample_categorical(probs, rng));
  return out;
}

}  // namespace ttavid

#include "ttavid/sim_env.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>

#include "ttavid/errors.hpp"
#include "ttavid/json_text.hpp"

namespace ttavid::sim {
namespace {

using Counts = std::vector<int>;

// Multinomial distribution of `trials` draws over probs, as count vectors.
std::map<Counts, double> multinomial(std::span<const double> probs, int trials) {
  std::map<Counts, double> out;
  Counts c(probs.size(), 0);
  const double log_trials_fact = std::lgamma(trials + 1.0);
  // log_p accumulates sum_a (x_a log q_a - log x_a!)
  std::function<void(std::size_t, int, double)> rec = [&](std::size_t a, int left, double log_p) {
    const bool last = a + 1 == probs.size();
    for (int x = last ? left : 0; x <= left; ++x) {
      if (x > 0 && probs[a] <= 0.0) break;
      c[a] = x;
      const double lp = log_p + (x > 0 ? x * std::log(probs[a]) : 0.0) - std::lgamma(x + 1.0);
      if (last) {
        out[c] += std::exp(log_trials_fact + lp);
      } else {
        rec(a + 1, left - x, lp);
      }
    }
  };
  rec(0, trials, 0.0);
  return out;
}

std::map<Counts, double> convolve(const std::map<Counts, double>& a, const std::map<Counts, double>& b) {
  std::map<Counts, double> out;
  for (const auto& [ca, pa] : a) {
    for (const auto& [cb, pb] : b) {
      Counts c(ca.size());
      for (std::size_t i = 0; i < c.size(); ++i) c[i] = ca[i] + cb[i];
      out[c] += pa * pb;
    }
  }
  return out;
}

double entropy_norm_of_counts(const Counts& counts) {
  int total = 0;
  int support = 0;
  for (int c : counts) {
    total += c;
    support += c > 0 ? 1 : 0;
  }
  if (support <= 1) return 0.0;
  double h = 0.0;
  for (int c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    h -= p * std::log(p);
  }
  return h / std::log(static_cast<double>(support));
}

void validate_subset(const SimEnvironment& env, std::span<const std::size_t> subset) {
  for (std::size_t t : subset) {
    if (t >= env.num_frames) {
      throw std::invalid_argument("frame index " + std::to_string(t) + " outside grid of T = " +
                                  std::to_string(env.num_frames));
    }
  }
}

}  // namespace

char option_letter(std::size_t index) {
  if (index >= 26) throw std::invalid_argument("option index out of letter range");
  return static_cast<char>('A' + index);
}

void SimEnvironment::validate() const {
  if (answer_count < 2 || answer_count > 26) throw std::invalid_argument("sim: answer count M must be in [2, 26]");
  if (informative.size() > num_frames) throw std::invalid_argument("sim: more informative frames than T");
  if (truth >= answer_count) throw std::invalid_argument("sim: truth index out of range");
  if (frames_for_full_signal == 0) throw std::invalid_argument("sim: m must be >= 1");
  for (std::size_t i = 0; i < informative.size(); ++i) {
    if (informative[i] >= num_frames || (i > 0 && informative[i] <= informative[i - 1])) {
      throw std::invalid_argument("sim: informative indices must be sorted, distinct and inside the grid");
    }
  }
  if (p_base < 0.0 || p_base > 1.0 || p_base + gain > 1.0 + 1e-12 || p_base + gain < -1e-12) {
    throw std::invalid_argument("sim: p_base + gain * coverage must stay inside [0, 1]");
  }
}

SimEnvironment generate_env(const SimParams& params, std::optional<std::span<const double>> shared_prior,
                            std::uint64_t seed) {
  if (params.answer_count < 2) throw std::invalid_argument("sim: answer count M must be >= 2");
  if (params.informative_count > params.num_frames) {
    throw std::invalid_argument("sim: informative_count " + std::to_string(params.informative_count) +
                                " exceeds T = " + std::to_string(params.num_frames));
  }
  if (shared_prior && shared_prior->size() != params.num_frames) {
    throw std::invalid_argument("sim: shared prior length differs from T");
  }
  SimEnvironment env;
  env.num_frames = params.num_frames;
  env.answer_count = params.answer_count;
  env.seed = seed;
  env.frames_for_full_signal = params.frames_for_full_signal > 0 ? params.frames_for_full_signal
                                                                 : std::max<std::size_t>(params.informative_count, 1);
  env.p_base = params.p_base >= 0.0 ? params.p_base : 1.0 / static_cast<double>(params.answer_count);
  env.gain = params.gain >= 0.0 ? params.gain : 0.9 - env.p_base;

  Rng rng(seed);
  const std::vector<double> uniform(params.num_frames, 1.0);
  const std::span<const double> prior = shared_prior ? *shared_prior : std::span<const double>(uniform);
  env.informative = sample_without_replacement(prior, params.informative_count, rng);
  env.truth = static_cast<std::size_t>(uniform_index(rng, params.answer_count));
  env.validate();
  return env;
}

SimBatch generate_batch(const SimParams& params, std::size_t count,
                        std::optional<std::span<const double>> shared_prior, std::uint64_t seed) {
  SimBatch batch;
  batch.environments.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    batch.environments.push_back(generate_env(params, shared_prior, stream_seed(seed, {i})));
  }
  return batch;
}

double coverage(const SimEnvironment& env, std::span<const std::size_t> subset) {
  validate_subset(env, subset);
  std::size_t hits = 0;
  for (std::size_t t : subset) {
    if (std::binary_search(env.informative.begin(), env.informative.end(), t)) ++hits;
  }
  return std::min(1.0, static_cast<double>(hits) / static_cast<double>(env.frames_for_full_signal));
}

double p_correct(const SimEnvironment& env, std::span<const std::size_t> subset) {
  return std::clamp(env.p_base + env.gain * coverage(env, subset), 0.0, 1.0);
}

std::vector<double> answer_distribution(const SimEnvironment& env, std::span<const std::size_t> subset) {
  const double pc = p_correct(env, subset);
  std::vector<double> q(env.answer_count, (1.0 - pc) / static_cast<double>(env.answer_count - 1));
  q[env.truth] = pc;
  return q;
}

std::size_t oracle_answer(const SimEnvironment& env, std::span<const std::size_t> subset, Rng& rng) {
  const double pc = p_correct(env, subset);
  if (uniform01(rng) < pc) return env.truth;
  std::size_t wrong = static_cast<std::size_t>(uniform_index(rng, env.answer_count - 1));
  return wrong >= env.truth ? wrong + 1 : wrong;
}

PoolRewards exact_pool_rewards(const std::vector<std::vector<std::size_t>>& answers, double alpha) {
  PoolRewards out;
  std::size_t max_answer = 0;
  std::size_t total = 0;
  for (const auto& row : answers) {
    for (std::size_t a : row) max_answer = std::max(max_answer, a);
    total += row.size();
  }
  Counts counts(max_answer + 1, 0);
  for (const auto& row : answers) {
    for (std::size_t a : row) ++counts[a];
  }
  out.entropy_norm = entropy_norm_of_counts(counts);
  for (const auto& row : answers) {
    std::vector<double> r;
    double sum = 0.0;
    for (std::size_t a : row) {
      r.push_back(static_cast<double>(counts[a]) / static_cast<double>(total) - alpha * out.entropy_norm);
      sum += r.back();
    }
    out.per_subset.push_back(row.empty() ? 0.0 : sum / static_cast<double>(row.size()));
    out.per_rollout.push_back(std::move(r));
  }
  return out;
}

std::vector<double> expected_subset_reward(const SimEnvironment& env, std::span<const FrameSubset> subsets,
                                           std::size_t rollouts, const RewardParams& params) {
  const std::size_t k_count = subsets.size();
  if (k_count == 0 || rollouts == 0) throw std::invalid_argument("expected reward needs K, N >= 1");
  if (k_count * rollouts > 16 || env.answer_count > 4) {
    throw std::length_error("exact enumeration needs K*N <= 16 and M <= 4 (got K*N = " +
                            std::to_string(k_count * rollouts) + ", M = " + std::to_string(env.answer_count) +
                            "); use the Monte Carlo estimate");
  }
  const int n = static_cast<int>(rollouts);
  const double pool_size = static_cast<double>(k_count * rollouts);
  std::vector<std::map<Counts, double>> tables;
  for (const auto& s : subsets) tables.push_back(multinomial(answer_distribution(env, s), n));

  std::vector<double> expected(k_count, 0.0);
  for (std::size_t k = 0; k < k_count; ++k) {
    std::map<Counts, double> others{{Counts(env.answer_count, 0), 1.0}};
    for (std::size_t j = 0; j < k_count; ++j) {
      if (j != k) others = convolve(others, tables[j]);
    }
    double e = 0.0;
    for (const auto& [own, p_own] : tables[k]) {
      for (const auto& [rest, p_rest] : others) {
        Counts pooled(own.size());
        for (std::size_t a = 0; a < own.size(); ++a) pooled[a] = own[a] + rest[a];
        const double h = entropy_norm_of_counts(pooled);
        double rbar = 0.0;
        for (std::size_t a = 0; a < own.size(); ++a) {
          rbar += own[a] * (pooled[a] / pool_size - params.alpha * h);
        }
        e += p_own * p_rest * rbar / n;
      }
    }
    expected[k] = e;
  }
  return expected;
}

MonteCarloEstimate monte_carlo_subset_reward(const SimEnvironment& env, std::span<const FrameSubset> subsets,
                                             std::size_t rollouts, const RewardParams& params,
                                             std::size_t draws, Rng& rng) {
  const std::size_t k_count = subsets.size();
  if (k_count == 0 || rollouts == 0 || draws < 2) throw std::invalid_argument("monte carlo needs K, N >= 1, draws >= 2");
  std::vector<std::string> tokens;
  for (std::size_t a = 0; a < env.answer_count; ++a) tokens.emplace_back(1, option_letter(a));

  std::vector<double> sum(k_count, 0.0);
  std::vector<double> sum_sq(k_count, 0.0);
  std::vector<ExtractedAnswer> grid(k_count * rollouts);
  for (std::size_t d = 0; d < draws; ++d) {
    for (std::size_t k = 0; k < k_count; ++k) {
      for (std::size_t i = 0; i < rollouts; ++i) {
        grid[k * rollouts + i] = ExtractedAnswer::of(tokens[oracle_answer(env, subsets[k], rng)]);
      }
    }
    const RewardReport report = compute_rewards(AnswerPool::from_grid(k_count, rollouts, grid), params);
    for (std::size_t k = 0; k < k_count; ++k) {
      sum[k] += report.per_subset[k];
      sum_sq[k] += report.per_subset[k] * report.per_subset[k];
    }
  }
  MonteCarloEstimate est;
  const double dn = static_cast<double>(draws);
  for (std::size_t k = 0; k < k_count; ++k) {
    const double mean = sum[k] / dn;
    const double var = std::max(0.0, (sum_sq[k] - dn * mean * mean) / (dn - 1.0));
    est.mean.push_back(mean);
    est.std_error.push_back(std::sqrt(var / dn));
  }
  return est;
}

std::vector<double> window_prior(std::size_t num_frames, std::size_t start, std::size_t length,
                                 double inside_mass) {
  if (length == 0 || start + length > num_frames) throw std::invalid_argument("window prior outside the grid");
  if (inside_mass < 0.0 || inside_mass > 1.0) throw std::invalid_argument("window mass must be in [0, 1]");
  if (length == num_frames) return std::vector<double>(num_frames, 1.0 / static_cast<double>(num_frames));
  std::vector<double> p(num_frames, (1.0 - inside_mass) / static_cast<double>(num_frames - length));
  for (std::size_t t = start; t < start + length; ++t) p[t] = inside_mass / static_cast<double>(length);
  return p;
}

std::vector<double> synthetic_clip_scores(const SimEnvironment& env, double signal, double noise, Rng& rng) {
  std::vector<double> scores(env.num_frames);
  for (std::size_t t = 0; t < env.num_frames; ++t) scores[t] = 1.0 + noise * uniform01(rng);
  for (std::size_t t : env.informative) scores[t] += signal;
  return scores;
}

Eigen::VectorXd policy_features(const SimEnvironment& env, std::span<const std::size_t> subset) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(env.answer_count + 1));
  x(0) = 1.0;
  x(static_cast<Eigen::Index>(env.truth + 1)) = coverage(env, subset);
  return x;
}

ToyPolicy pretrained_policy(std::size_t answer_count, double evidence_weight, double temperature) {
  const auto m = static_cast<Eigen::Index>(answer_count);
  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(m + 1, m);
  for (Eigen::Index j = 0; j < m; ++j) theta(j + 1, j) = evidence_weight;
  return ToyPolicy(std::move(theta), temperature);
}

// --- simenv-v1 ------------------------------------------------------------

std::string serialize_simenv(const SimBatch& batch) {
  std::string envs = "[";
  for (std::size_t i = 0; i < batch.environments.size(); ++i) {
    const auto& e = batch.environments[i];
    json_text::ObjectWriter w;
    w.field("T", e.num_frames)
        .field("M", e.answer_count)
        .field("informative", std::span<const std::size_t>(e.informative))
        .field("truth", e.truth)
        .field("p_base", e.p_base)
        .field("gain", e.gain)
        .field("m", e.frames_for_full_signal)
        .raw("seed", std::to_string(e.seed));
    if (i) envs += ",\n  ";
    envs += w.str();
  }
  envs += "]";
  json_text::ObjectWriter top;
  top.field("version", "simenv-v1").raw("environments", envs);
  return top.str() + "\n";
}

SimBatch parse_simenv(std::string_view text) {
  const nlohmann::json j = json_text::parse(text, "simenv-v1");
  if (!j.is_object() || j.value("version", "") != "simenv-v1") {
    throw DataFormatError("simenv-v1: missing or unsupported version");
  }
  if (!j.contains("environments") || !j.at("environments").is_array()) {
    throw DataFormatError("simenv-v1: 'environments' must be an array");
  }
  SimBatch batch;
  for (const auto& e : j.at("environments")) {
    SimEnvironment env;
    try {
      env.num_frames = e.at("T").get<std::size_t>();
      env.answer_count = e.at("M").get<std::size_t>();
      env.informative = e.at("informative").get<std::vector<std::size_t>>();
      env.truth = e.at("truth").get<std::size_t>();
      env.p_base = e.at("p_base").get<double>();
      env.gain = e.at("gain").get<double>();
      env.frames_for_full_signal = e.at("m").get<std::size_t>();
      env.seed = e.at("seed").get<std::uint64_t>();
      env.validate();
    } catch (const nlohmann::json::exception& ex) {
      throw DataFormatError(std::string("simenv-v1: bad environment entry: ") + ex.what());
    } catch (const std::invalid_argument& ex) {
      throw DataFormatError(std::string("simenv-v1: ") + ex.what());
    }
    batch.environments.push_back(std::move(env));
  }
  if (batch.environments.empty()) throw DataFormatError("simenv-v1: batch is empty");
  return batch;
}

}  // namespace ttavid::sim

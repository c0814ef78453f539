#include "ttavid/frame_bandit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace ttavid {

void renormalize(FrameDistribution& dist) {
  const double total = std::accumulate(dist.weights.begin(), dist.weights.end(), 0.0);
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw std::invalid_argument("frame weights must have a positive finite sum");
  }
  dist.probs.resize(dist.weights.size());
  for (std::size_t t = 0; t < dist.weights.size(); ++t) dist.probs[t] = dist.weights[t] / total;
}

FrameDistribution init_distribution(std::size_t num_frames,
                                    std::optional<std::span<const double>> clip_scores) {
  if (num_frames == 0) throw std::invalid_argument("frame grid must have T >= 1");
  FrameDistribution dist;
  if (!clip_scores) {
    dist.init_kind = InitKind::Uniform;
    dist.weights.assign(num_frames, 1.0 / static_cast<double>(num_frames));
  } else {
    const auto scores = *clip_scores;
    if (scores.size() != num_frames) {
      throw std::invalid_argument("clip scores have length " + std::to_string(scores.size()) +
                                  ", frame grid has T = " + std::to_string(num_frames));
    }
    double total = 0.0;
    for (double s : scores) {
      if (!(s >= 0.0) || !std::isfinite(s)) {
        throw std::invalid_argument("clip scores must be finite and nonnegative");
      }
      total += s;
    }
    if (total <= 0.0) throw std::invalid_argument("clip scores are all zero");
    dist.init_kind = InitKind::ClipScores;
    dist.weights.resize(num_frames);
    for (std::size_t t = 0; t < num_frames; ++t) {
      dist.weights[t] = std::max(scores[t] / total, kWeightFloor);
    }
  }
  renormalize(dist);
  return dist;
}

std::vector<double> update_exponents(std::size_t num_frames, const BanditUpdateInput& input) {
  if (input.subsets.empty()) throw std::invalid_argument("bandit update needs K >= 1 subsets");
  if (input.subsets.size() != input.subset_rewards.size()) {
    throw std::invalid_argument("bandit update: " + std::to_string(input.subsets.size()) +
                                " subsets but " + std::to_string(input.subset_rewards.size()) +
                                " rewards");
  }
  const std::size_t subset_size = input.subsets.front().size();
  for (const auto& s : input.subsets) {
    if (s.size() != subset_size || s.empty()) {
      throw std::invalid_argument("bandit update: subsets must share a size F >= 1");
    }
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= num_frames) {
        throw std::invalid_argument("bandit update: frame index " + std::to_string(s[i]) +
                                    " outside grid of T = " + std::to_string(num_frames));
      }
      if (i > 0 && s[i] <= s[i - 1]) {
        throw std::invalid_argument("bandit update: subset indices must be sorted and distinct");
      }
    }
  }

  const double baseline = std::accumulate(input.subset_rewards.begin(), input.subset_rewards.end(), 0.0) /
                          static_cast<double>(input.subset_rewards.size());
  std::vector<double> exponents(num_frames, 0.0);
  for (std::size_t k = 0; k < input.subsets.size(); ++k) {
    const double advantage = input.subset_rewards[k] - baseline;
    for (std::size_t t : input.subsets[k]) exponents[t] += advantage;
  }
  for (double& e : exponents) e *= input.eta_fs;
  return exponents;
}

FrameDistribution update(const FrameDistribution& dist, const BanditUpdateInput& input) {
  const std::vector<double> exponents = update_exponents(dist.num_frames(), input);
  FrameDistribution next = dist;
  for (std::size_t t = 0; t < next.weights.size(); ++t) {
    const double e = std::clamp(exponents[t], -kExponentClamp, kExponentClamp);
    next.weights[t] = std::max(next.weights[t] * std::exp(e), kWeightFloor);
  }
  renormalize(next);
  next.weights = next.probs;
  ++next.step_count;
  return next;
}

FrameSubset sample_without_replacement(std::span<const double> probs, std::size_t count, Rng& rng) {
  if (count > probs.size()) {
    throw std::invalid_argument("cannot draw " + std::to_string(count) + " distinct frames from T = " +
                                std::to_string(probs.size()));
  }
  std::vector<double> remaining(probs.begin(), probs.end());
  for (double p : remaining) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw std::invalid_argument("sampling weights must be nonnegative");
  }
  FrameSubset chosen;
  chosen.reserve(count);
  for (std::size_t draw = 0; draw < count; ++draw) {
    const double total = std::accumulate(remaining.begin(), remaining.end(), 0.0);
    std::size_t pick = remaining.size();
    if (total > 0.0) {
      const double target = uniform01(rng) * total;
      double acc = 0.0;
      for (std::size_t t = 0; t < remaining.size(); ++t) {
        if (remaining[t] <= 0.0) continue;
        acc += remaining[t];
        pick = t;
        if (target < acc) break;
      }
    } else {
      // Only zero-mass indices remain; draw uniformly among the unchosen.
      std::vector<std::size_t> open;
      for (std::size_t t = 0; t < remaining.size(); ++t) {
        if (std::find(chosen.begin(), chosen.end(), t) == chosen.end()) open.push_back(t);
      }
      pick = open[uniform_index(rng, open.size())];
    }
    chosen.push_back(pick);
    remaining[pick] = 0.0;
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

FrameSubset sample_subset(const FrameDistribution& dist, std::size_t subset_size, Rng& rng) {
  if (subset_size == 0) throw std::invalid_argument("subset size F must be >= 1");
  return sample_without_replacement(dist.probs, subset_size, rng);
}

}  // namespace ttavid

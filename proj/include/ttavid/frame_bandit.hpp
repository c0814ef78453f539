#pragma once

// Multiplicative-weights bandit over a video's frame grid. Each frame is an
// arm; after a round of K subsets, every frame's weight is scaled by
// exp(eta_fs * sum_k (rbar_k - baseline) * [t in S_k]) and the sampling
// probabilities are renormalized.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "ttavid/random.hpp"

namespace ttavid {

inline constexpr double kWeightFloor = 1e-12;
inline constexpr double kExponentClamp = 50.0;

enum class InitKind { Uniform, ClipScores };

struct FrameDistribution {
  std::vector<double> weights;
  std::vector<double> probs;
  InitKind init_kind = InitKind::Uniform;
  std::size_t step_count = 0;

  std::size_t num_frames() const { return probs.size(); }
};

using FrameSubset = std::vector<std::size_t>;  // sorted, distinct frame indices

struct BanditUpdateInput {
  std::vector<FrameSubset> subsets;   // S_k, each of the same size F
  std::vector<double> subset_rewards; // rbar_k, aligned with subsets
  double eta_fs = 3.0;
};

// Uniform weights 1/T, or clip scores normalized to sum 1. Scores must be
// nonnegative, finite, length T and not all zero.
FrameDistribution init_distribution(std::size_t num_frames,
                                    std::optional<std::span<const double>> clip_scores = std::nullopt);

// One multiplicative-weights step. Weights are floored at kWeightFloor and
// rescaled to sum 1 afterwards, so weights and probs stay bounded.
FrameDistribution update(const FrameDistribution& dist, const BanditUpdateInput& input);

// Per-frame exponents before clamping; exposed for inspection and tests.
std::vector<double> update_exponents(std::size_t num_frames, const BanditUpdateInput& input);

// F distinct indices drawn one at a time, each proportional to `probs`
// restricted to the indices not yet chosen. Returned sorted ascending.
FrameSubset sample_without_replacement(std::span<const double> probs, std::size_t count, Rng& rng);

FrameSubset sample_subset(const FrameDistribution& dist, std::size_t subset_size, Rng& rng);

// Recomputes probs = weights / sum(weights).
void renormalize(FrameDistribution& dist);

}  // namespace ttavid

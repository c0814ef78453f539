#pragma once

// Operations on learned frame distributions after adaptation: averaging into
// a global prior, regridding, blending with CLIP scores, picking inference
// frames, and the fdist-v1 file format.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ttavid/frame_bandit.hpp"
#include "ttavid/random.hpp"

namespace ttavid {

struct GlobalPrior {
  std::vector<double> probs;
  std::size_t source_count = 0;

  std::size_t num_frames() const { return probs.size(); }
};

struct BlendSpec {
  double w_clip = 0.0;
  double w_dist = 1.0;
};

enum class SelectionMode { SampleWithoutReplacement, TopK };

GlobalPrior average_distributions(std::span<const FrameDistribution> dists);
GlobalPrior average_distributions(std::span<const std::vector<double>> probs);

// Piecewise-linear resampling on normalized positions i / (T - 1), then
// renormalized to sum 1.
std::vector<double> interpolate(std::span<const double> probs, std::size_t target_frames);

std::vector<double> blend(std::span<const double> clip_probs, std::span<const double> learned_probs,
                          const BlendSpec& spec);

FrameSubset select_inference_frames(std::span<const double> probs, std::size_t count, SelectionMode mode,
                                    Rng& rng);

std::vector<double> uniform_probs(std::size_t num_frames);

// --- fdist-v1 -------------------------------------------------------------

struct DistributionMeta {
  std::string video_id;
  std::string question_id;
  std::int64_t created_unix = 0;
};

struct DistributionFile {
  FrameDistribution dist;
  DistributionMeta meta;
  // Present only for global priors (kind "global").
  std::optional<std::size_t> source_count;
};

std::string serialize_fdist(const DistributionFile& file);
DistributionFile parse_fdist(std::string_view text);

DistributionFile global_prior_file(const GlobalPrior& prior, DistributionMeta meta);
GlobalPrior to_global_prior(const DistributionFile& file);

DistributionFile read_fdist(const std::filesystem::path& path);
void write_fdist(const std::filesystem::path& path, const DistributionFile& file);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

SelectionMode parse_selection_mode(std::string_view text);
std::string to_string(SelectionMode mode);

}  // namespace ttavid

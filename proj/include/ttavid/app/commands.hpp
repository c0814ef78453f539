#pragma once

// Command-line entry points and the sim-mode building blocks they share.

#include <iosfwd>
#include <string>
#include <vector>

#include "ttavid/app/config.hpp"
#include "ttavid/distribution.hpp"
#include "ttavid/orchestrator.hpp"

namespace ttavid::app {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitBackend = 3,
  kExitDataFormat = 4,
};

// argv-style entry point; args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::vector<VideoSample> sim_adaptation_samples(const RunConfig& config);
std::vector<VideoSample> sim_heldout_samples(const RunConfig& config);

// Unadapted toy policy for the configured answer count.
ToyPolicy initial_policy(const RunConfig& config);

// Adapts on the sim batch described by `config` (toy policy when enabled).
AdaptResult run_sim_adaptation(const RunConfig& config, const EpochCallback& on_epoch = {});

// Fraction of predictions equal to the sample's ground truth; absent
// predictions count as wrong.
double accuracy(const std::vector<Prediction>& predictions, const std::vector<VideoSample>& samples);

// Held-out sim accuracy under `prior`, answering with the oracle or, when
// given, the toy policy.
double evaluate_heldout(const RunConfig& config, const GlobalPrior& prior, const ToyPolicy* policy);

std::string serialize_policy(const ToyPolicy& policy);
ToyPolicy parse_policy(std::string_view text);

}  // namespace ttavid::app

#pragma once

#include <filesystem>
#include <string>

#include "iqtcfm/config.hpp"
#include "iqtcfm/nn/unet.hpp"
#include "iqtcfm/tensor.hpp"

namespace iqtcfm {

/// paths.output_dir/<run_config_digest>, created with a resolved.json
/// snapshot on first use.
std::filesystem::path prepare_run_dir(const RunConfig& cfg);

/// Advisory exclusive lock on a run directory (lock file created O_EXCL,
/// removed on destruction). Throws RuntimeFailure when already held.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& run_dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

/// Per-subject CFM reconstruction: subject-seeded noise, ODE integration
/// conditioned on `low`, then crop and clamp back to the input geometry.
Tensor reconstruct_cfm(const UNet& net, const Tensor& low, const SamplerConfig& sampler,
                       uint64_t run_seed, const std::string& subject_id);

/// The five CLI commands. Each validates its inputs, takes the run-dir
/// lock, and throws (ConfigError / IoError / RuntimeFailure) on failure;
/// logs go to stderr, machine outputs to files under the run directory.
void cmd_simulate(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg);
void cmd_infer(const RunConfig& cfg);
void cmd_evaluate(const RunConfig& cfg);
void cmd_report(const RunConfig& cfg);

}  // namespace iqtcfm

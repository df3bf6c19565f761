#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "raoc/evaluation.hpp"
#include "raoc/ingestion.hpp"

namespace raoc {

// Everything a CLI run needs. Every field has a default, so "{}" is a valid
// configuration; unknown keys are rejected with their dotted path.
//
//   {
//     "data": "<manifest>", "output_dir": "out", "user": "", "users": [],
//     "attackers": ["<manifest>", ...],
//     "preprocess":   {peak_mad_k, median_window, flat_window_s, flat_var_eps,
//                      rate_hz, window_s},
//     "architecture": {latent_dim, base_channels},
//     "attention":    {neighborhood, projection_kernel},
//     "train":        {epochs, batch_size, lr_encoder, lr_decoder,
//                      lr_latent_disc, lr_sample_disc, lambda_rec, noise_std,
//                      seed, adversarial_weight, max_steps,
//                      log_constant_terms},
//     "evaluation":   {target_tpr, origin, train_fraction,
//                      calibration_fraction, split_seed, max_impostor_windows,
//                      folds, sweep_sizes_s}
//   }
struct RunConfig {
  std::string data;
  std::string output_dir = "out";
  std::string user;                    // empty: the first user of the manifest
  std::vector<std::string> users;      // evaluation subset; empty: all users
  std::vector<std::string> attackers;  // attacker manifests for the attack mode
  EvaluationConfig evaluation;

  void validate() const;
  // Seeds both training and the data split.
  void set_seed(std::uint64_t seed);

  bool operator==(const RunConfig&) const = default;
};

// Relative data and attacker paths are resolved against base_dir.
RunConfig parse_run_config(const std::string& json_text,
                           const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
// All defaults expanded; parsing the result reproduces the configuration.
std::string run_config_to_json(const RunConfig& config);

SyntheticFamilySpec parse_family_spec(const std::string& json_text);
SyntheticFamilySpec load_family_spec(const std::filesystem::path& path);
std::string family_spec_to_json(const SyntheticFamilySpec& spec);

}  // namespace raoc

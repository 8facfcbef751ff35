#pragma once

#include "sbf/beamforming.hpp"
#include "sbf/channel.hpp"
#include "sbf/config.hpp"
#include "sbf/td3.hpp"

#include <complex>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sbf {

// One module's training problem: its channel slice and the power used to
// normalize its learning curve.
struct ModuleProblem {
  int module = 0;
  ChannelVector channel;
  double target_power = 1.0;
};

struct ModuleResult {
  int module = 0;
  BeamVector best;
  double best_power = 0.0;
  // Mean measured power over the last tenth of the steps taken.
  double final_power = 0.0;
  std::int64_t steps = 0;
  bool converged = false;
  std::vector<double> powers;  // per step, filled when requested
};

struct TrainOptions {
  PhaseCodebook codebook{4};
  TD3Hyper hyper;
  Variant variant = Variant::TD3;
  SignalModel signal;
  std::uint64_t seed = 1;
  TrainingSchedule schedule;
  bool keep_powers = false;
  // When set, module m streams its curve to <curve_dir>/<curve_prefix><m>.csv.
  std::filesystem::path curve_dir;
  std::string curve_prefix = "module_";
};

inline constexpr const char* kCurveHeader =
    "step,power_w,power_frac_of_target,reward,loss_q1,loss_q2,sigma_explore\n";

// Runs one agent until convergence or max_steps. Writes curve rows to `curve`
// when non-null.
ModuleResult train_module(const ModuleProblem& problem, const TrainOptions& options,
                          std::ostream* curve = nullptr);

// Trains every problem, on worker threads when schedule.parallel is set.
// Each agent is seeded from (seed, module), so results do not depend on the
// scheduling. Returned in the order of `problems`.
std::vector<ModuleResult> train_all(const std::vector<ModuleProblem>& problems,
                                    const TrainOptions& options);

// Module output signal w_m^H h_m sqrt(P_s) with the module's own normalization.
std::complex<double> module_output(const BeamVector& w, const ChannelVector& h, const SignalModel& sig);

// Weights are unit-modulus phasors per element; zero entries are switched
// off. Every module is rotated so its signal takes the reference phase, the
// reference being the first module with any non-zero weight.
std::vector<Eigen::VectorXcd> align_phases_continuous(const std::vector<std::complex<double>>& signals,
                                                      const std::vector<Eigen::VectorXcd>& weights);

// Same with each rotation rounded to the nearest codebook level and applied
// as a modular index shift.
std::vector<BeamVector> align_phases_quantized(const std::vector<std::complex<double>>& signals,
                                               const std::vector<BeamVector>& beams,
                                               const PhaseCodebook& codebook);

struct FusionResult {
  std::vector<BeamVector> modules;  // aligned per-module vectors
  BeamVector full;
  double fused_power = 0.0;
};

// Concatenates the module vectors in module order and evaluates the full
// beam on `full_channel`.
FusionResult fuse(const std::vector<BeamVector>& aligned, const ChannelVector& full_channel,
                  const SignalModel& sig);

// Concatenation of continuous module weights, scaled by 1/sqrt(active count).
Eigen::VectorXcd fuse_continuous(const std::vector<Eigen::VectorXcd>& aligned);

enum class RunMode { Oracle, Train, Compare };

const char* to_string(RunMode mode);

struct ExperimentReport {
  std::string summary_json;
  std::vector<std::string> artifacts;  // relative to the output dir
  double fused_power = 0.0;
  double target_power = 0.0;
  double bfr = 0.0;
};

// Builds the scene from `config`, trains or solves each active module,
// aligns, fuses and writes curves, the focal-plane map, beam.json and
// summary.json below config.output_dir. manifest.json is left to the caller.
ExperimentReport run_experiment(const ExperimentConfig& config, RunMode mode);

// Sampling plane centred on the UE for the configured map settings.
PlaneSpec focal_plane(const ExperimentConfig& config);

struct FocalMap {
  PowerField field;
  FocusMetrics metrics;
};

// Power field of a full-array beam on the focal plane, with its focus radius
// around the UE.
FocalMap focal_map(const ExperimentConfig& config, const BeamVector& beam);

// Quantized matched phases per active module, aligned and concatenated.
BeamVector oracle_beam(const ExperimentConfig& config);

std::string beam_json(const BeamVector& beam);
BeamVector parse_beam_json(const std::string& text);

}  // namespace sbf

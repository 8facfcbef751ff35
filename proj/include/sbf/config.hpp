#pragma once

#include "sbf/beamforming.hpp"
#include "sbf/channel.hpp"
#include "sbf/geometry.hpp"
#include "sbf/td3.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sbf {

struct TrainingSchedule {
  std::int64_t max_steps = 100000;
  std::int64_t window = 5000;  // convergence window in steps
  double threshold = 0.01;     // relative best-power improvement over the window
  bool parallel = true;

  void validate() const;
};

enum class PlaneKind {
  Horizontal,  // parallel to the floor through the UE
  Transverse,  // parallel to the aperture through the UE
};

const char* to_string(PlaneKind kind);
PlaneKind plane_kind_from_string(const std::string& name);

struct MapSettings {
  PlaneKind plane = PlaneKind::Transverse;
  int points = 81;        // nodes per side, odd keeps the UE on a node
  double extent = 0.8;    // side length in meters
  double bfr_eta = 0.8;   // power fraction for the focus radius

  void validate() const;
  double spacing() const { return extent / (points - 1); }
};

struct ArraySettings {
  int module_rows = 10;
  int module_cols = 10;
  int sub_rows = 6;
  int sub_cols = 6;
  double spacing_wavelengths = 0.5;
  Vec3 origin{1.0, 0.0, 1.5};
};

struct ExperimentConfig {
  double frequency_hz = 28e9;
  ArraySettings array;
  RoomEnv room;
  ChannelParams channel;  // wavelength is derived from frequency_hz
  int bits = 4;
  SignalModel signal;
  std::optional<double> ue_x;  // unset: centred on the aperture
  double ue_y = 1.4;
  double ue_z = 1.4;
  ZonePolicy zone_policy = ZonePolicy::Extended;
  TD3Hyper agent;
  Variant variant = Variant::TD3;
  TrainingSchedule schedule;
  MapSettings map;
  std::uint64_t seed = 1;
  std::string output_dir = "out";

  double wavelength() const { return wavelength_for(frequency_hz); }
  ArrayLayout layout() const;
  ChannelParams channel_params() const;
  Vec3 ue() const;
  PhaseCodebook codebook() const { return PhaseCodebook(bits); }

  // Throws std::invalid_argument naming the offending field, or
  // std::domain_error for a UE outside the allowed zone.
  void validate() const;
};

// Parses JSON text. Empty or whitespace-only input yields the defaults.
// Unknown keys are rejected. Parse errors carry line and column.
ExperimentConfig parse_config(const std::string& text,
                              const std::vector<std::string>& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides = {});

// Sorted-key serialization of every field; parse_config inverts it.
std::string canonical_dump(const ExperimentConfig& config, bool with_output_dir = true);

// FNV-1a of the canonical dump without the output directory, in hex.
std::string config_hash(const ExperimentConfig& config);

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::string code_version;
  std::uint64_t seed = 0;
  std::string started_utc;
  std::string finished_utc;
  double wall_time_s = 0.0;
  std::string canonical_config;
  std::vector<std::string> artifacts;  // paths relative to the output dir

  std::string to_json() const;
};

inline constexpr const char* kCodeVersion = "0.1.0";

std::string utc_timestamp();

}  // namespace sbf

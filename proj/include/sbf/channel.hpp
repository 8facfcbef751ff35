#pragma once

#include "sbf/geometry.hpp"

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <cstdint>
#include <iosfwd>
#include <vector>

namespace sbf {

using cd = std::complex<double>;
using ChannelVector = Eigen::VectorXcd;

// Order of the six room surfaces in RoomEnv::reflection / phase_shift.
enum class Surface : int { XMin = 0, XMax, YMin, YMax, ZMin, ZMax };

// Axis-aligned box room [0, W] x [0, L] x [0, H].
struct RoomEnv {
  Vec3 dimensions{4.0, 4.0, 3.0};
  std::array<double, 6> reflection{0.1, 0.1, 0.1, 0.1, 0.1, 0.1};
  std::array<double, 6> phase_shift{0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  bool enabled = true;

  void validate() const;
  bool contains(const Vec3& p, double tol = 1e-9) const;

  // Draws every surface phase shift uniformly in [0, 2 pi).
  void randomize_phase_shifts(std::uint64_t seed);
};

struct ReflectedPath {
  Surface surface;
  double length;
  double amplitude;
  double extra_phase;
};

using PathSet = std::vector<ReflectedPath>;

struct ChannelParams {
  double wavelength = kSpeedOfLight / 28e9;
  double path_loss_exponent = 2.7;
  double tx_gain = 1.0;
  double rx_gain = 1.0;
  double direct_phase_offset = 0.0;

  void validate() const;
  double wavenumber() const;
  // (lambda / 4 pi)^(alpha / 2), so that |h| = (lambda / (4 pi d))^(alpha / 2).
  double attenuation() const;
};

// eta * d^(-alpha/2) * exp(-j (k d + dtheta)). Throws on coincident points.
cd direct_path_gain(const Vec3& element, const Vec3& ue, const ChannelParams& params);

// First-order image paths, one per surface whose reflection point lies on
// the finite wall. Surfaces containing either endpoint are skipped since the
// image collapses onto the direct path.
PathSet image_reflection_paths(const RoomEnv& room, const Vec3& element, const Vec3& ue);

cd channel_gain(int n, const Vec3& ue, const ArrayLayout& layout, const RoomEnv& room,
                const ChannelParams& params);

cd channel_gain_at(const Vec3& element, const Vec3& ue, const RoomEnv& room,
                   const ChannelParams& params);

// gains[n] = channel_gain(n) * g_tx * g_rx for every element.
ChannelVector effective_channel(const Vec3& ue, const ArrayLayout& layout, const RoomEnv& room,
                                const ChannelParams& params);

// Only the elements listed in `elements`, in that order.
ChannelVector effective_channel(const Vec3& ue, const ArrayLayout& layout, const RoomEnv& room,
                                const ChannelParams& params, const std::vector<int>& elements);

// Columns: element,real,imag
void write_channel_csv(std::ostream& os, const ChannelVector& h);

}  // namespace sbf

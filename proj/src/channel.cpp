#include "sbf/channel.hpp"

#include "sbf/io.hpp"

#include <cmath>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>

namespace sbf {

void RoomEnv::validate() const {
  if (!(dimensions.array() > 0.0).all())
    throw std::invalid_argument("room: dimensions must be positive");
  for (double b : reflection)
    if (!(b >= 0.0 && b <= 1.0)) throw std::invalid_argument("room: reflection must lie in [0, 1]");
}

bool RoomEnv::contains(const Vec3& p, double tol) const {
  return (p.array() >= -tol).all() && (p.array() <= dimensions.array() + tol).all();
}

void RoomEnv::randomize_phase_shifts(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
  for (double& p : phase_shift) p = u(rng);
}

void ChannelParams::validate() const {
  if (!(wavelength > 0.0)) throw std::invalid_argument("channel: wavelength must be positive");
  if (!(path_loss_exponent > 0.0))
    throw std::invalid_argument("channel: path-loss exponent must be positive");
  if (!(tx_gain > 0.0) || !(rx_gain > 0.0))
    throw std::invalid_argument("channel: antenna gains must be positive");
}

double ChannelParams::wavenumber() const { return 2.0 * std::numbers::pi / wavelength; }

double ChannelParams::attenuation() const {
  return std::pow(wavelength / (4.0 * std::numbers::pi), 0.5 * path_loss_exponent);
}

namespace {

struct PathConstants {
  double eta;
  double k;
  double half_alpha;

  explicit PathConstants(const ChannelParams& p)
      : eta(p.attenuation()), k(p.wavenumber()), half_alpha(0.5 * p.path_loss_exponent) {}

  cd term(double length, double amplitude, double extra_phase) const {
    const double mag = amplitude * eta * std::pow(length, -half_alpha);
    return std::polar(mag, -(k * length + extra_phase));
  }
};

}  // namespace

cd direct_path_gain(const Vec3& element, const Vec3& ue, const ChannelParams& params) {
  const double d = (element - ue).norm();
  if (!(d > 0.0)) throw std::domain_error("direct_path_gain: element and UE coincide");
  return PathConstants(params).term(d, 1.0, params.direct_phase_offset);
}

PathSet image_reflection_paths(const RoomEnv& room, const Vec3& element, const Vec3& ue) {
  PathSet paths;
  if (!room.enabled) return paths;
  if (!room.contains(element) || !room.contains(ue))
    throw std::domain_error("image_reflection_paths: point outside the room");

  constexpr double kOnWall = 1e-12;
  for (int s = 0; s < 6; ++s) {
    const int axis = s / 2;
    const double plane = (s % 2 == 0) ? 0.0 : room.dimensions[axis];
    const double de = element[axis] - plane;
    const double du = ue[axis] - plane;
    if (std::abs(de) < kOnWall || std::abs(du) < kOnWall) continue;

    Vec3 image = element;
    image[axis] = 2.0 * plane - element[axis];
    // Reflection point: where the image->UE segment crosses the wall plane.
    const double t = (plane - image[axis]) / (ue[axis] - image[axis]);
    const Vec3 hit = image + t * (ue - image);
    bool on_wall = true;
    for (int a = 0; a < 3; ++a) {
      if (a == axis) continue;
      if (hit[a] < -1e-9 || hit[a] > room.dimensions[a] + 1e-9) on_wall = false;
    }
    if (!on_wall) continue;
    paths.push_back({static_cast<Surface>(s), (image - ue).norm(), room.reflection[s],
                     room.phase_shift[s]});
  }
  return paths;
}

cd channel_gain_at(const Vec3& element, const Vec3& ue, const RoomEnv& room,
                   const ChannelParams& params) {
  const PathConstants pc(params);
  cd h = direct_path_gain(element, ue, params);
  for (const ReflectedPath& p : image_reflection_paths(room, element, ue))
    h += pc.term(p.length, p.amplitude, p.extra_phase);
  return h;
}

cd channel_gain(int n, const Vec3& ue, const ArrayLayout& layout, const RoomEnv& room,
                const ChannelParams& params) {
  return channel_gain_at(element_position(layout, n), ue, room, params);
}

ChannelVector effective_channel(const Vec3& ue, const ArrayLayout& layout, const RoomEnv& room,
                                const ChannelParams& params) {
  ChannelVector h(layout.element_count());
  const double g = params.tx_gain * params.rx_gain;
  for (int n = 0; n < layout.element_count(); ++n)
    h[n] = g * channel_gain(n, ue, layout, room, params);
  return h;
}

ChannelVector effective_channel(const Vec3& ue, const ArrayLayout& layout, const RoomEnv& room,
                                const ChannelParams& params, const std::vector<int>& elements) {
  ChannelVector h(static_cast<Eigen::Index>(elements.size()));
  const double g = params.tx_gain * params.rx_gain;
  for (std::size_t i = 0; i < elements.size(); ++i)
    h[static_cast<Eigen::Index>(i)] = g * channel_gain(elements[i], ue, layout, room, params);
  return h;
}

void write_channel_csv(std::ostream& os, const ChannelVector& h) {
  os << "element,real,imag\n";
  for (Eigen::Index n = 0; n < h.size(); ++n)
    os << n << ',' << format_double(h[n].real()) << ',' << format_double(h[n].imag()) << '\n';
}

}  // namespace sbf

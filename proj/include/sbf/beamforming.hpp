#pragma once

#include "sbf/channel.hpp"
#include "sbf/geometry.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <iosfwd>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace sbf {

// Uniform r-bit phase quantizer: level k has phase 2 pi k / 2^r.
struct PhaseCodebook {
  int bits = 4;

  explicit PhaseCodebook(int r = 4) : bits(r) {
    if (r < 1 || r > 16) throw std::invalid_argument("r must be >= 1 (and <= 16)");
  }

  int levels() const { return 1 << bits; }
  double step() const { return 2.0 * std::numbers::pi / levels(); }
  double phase(int k) const { return step() * k; }
  // Same level expressed in [-pi, pi).
  double signed_phase(int k) const {
    const double p = phase(k);
    return p >= std::numbers::pi ? p - 2.0 * std::numbers::pi : p;
  }
};

// Quantized beam: one codebook index per element, -1 marks a switched-off
// element. Realized weights are exp(j phase) / sqrt(active element count).
struct BeamVector {
  int bits = 1;
  Eigen::VectorXi indices;

  BeamVector() = default;
  BeamVector(int r, Eigen::VectorXi idx) : bits(r), indices(std::move(idx)) {}

  Eigen::Index size() const { return indices.size(); }
  int active_count() const { return static_cast<int>((indices.array() >= 0).count()); }
  bool operator==(const BeamVector& o) const {
    return bits == o.bits && indices.size() == o.indices.size() && indices == o.indices;
  }
};

struct SignalModel {
  double signal_power = 1.0;
  double noise_power = 1e-12;

  void validate() const {
    if (!(signal_power > 0.0)) throw std::invalid_argument("signal power must be positive");
    if (!(noise_power >= 0.0)) throw std::invalid_argument("noise power must be non-negative");
  }
};

// (1/sqrt(N)) exp(j phases).
Eigen::VectorXcd weights_from_phases(const Eigen::VectorXd& phases);

Eigen::VectorXcd realize(const BeamVector& w);

// Phases of each active element in [-pi, pi); switched-off elements map to 0.
Eigen::VectorXd signed_phases(const BeamVector& w);

// |w^H h|^2 P_s + sigma^2 for any pair of complex vector expressions.
template <typename DerivedW, typename DerivedH>
double received_power(const Eigen::MatrixBase<DerivedW>& w, const Eigen::MatrixBase<DerivedH>& h,
                      const SignalModel& sig) {
  if (w.size() != h.size())
    throw std::invalid_argument("received_power: beam length " + std::to_string(w.size()) +
                                " != channel length " + std::to_string(h.size()));
  return std::norm(w.dot(h)) * sig.signal_power + sig.noise_power;
}

double received_power(const BeamVector& w, const ChannelVector& h, const SignalModel& sig);

// Noiseless complex amplitude w^H h sqrt(P_s).
template <typename DerivedW, typename DerivedH>
std::complex<double> module_signal(const Eigen::MatrixBase<DerivedW>& w,
                                   const Eigen::MatrixBase<DerivedH>& h, const SignalModel& sig) {
  if (w.size() != h.size()) throw std::invalid_argument("module_signal: length mismatch");
  return w.dot(h) * std::sqrt(sig.signal_power);
}

std::complex<double> module_signal(const BeamVector& w, const ChannelVector& h,
                                   const SignalModel& sig);

// Nearest codebook level on the circle; exact ties go to the lower index.
int quantize_phase(double phase, const PhaseCodebook& codebook);
BeamVector quantize_phases(const Eigen::VectorXd& phases, const PhaseCodebook& codebook);

// Matched phases arg(h_i): the unit-modulus maximizer of |w^H h|.
Eigen::VectorXd conjugate_oracle(const ChannelVector& h);

// Exact maximizer of |w^H h| over the codebook lattice. Plain per-element
// rounding of the matched phases can lose to rounding them after a common
// rotation, so every distinct rounding over one level step of rotation is
// scored; O(N^2). Ties keep the plain rounding.
BeamVector quantized_oracle(const ChannelVector& h, const PhaseCodebook& codebook);

// Sampling grid on a plane: node (i, j) sits at center + u_i * u_axis + v_j * v_axis
// with u_i = (i - (n_u - 1) / 2) * spacing (same for v). Odd counts put the
// center on a node.
struct PlaneSpec {
  Vec3 center = Vec3::Zero();
  Vec3 u_axis = Vec3::UnitX();
  Vec3 v_axis = Vec3::UnitY();
  int n_u = 1;
  int n_v = 1;
  double spacing = 0.01;

  void validate() const;
  double u(int i) const { return (i - 0.5 * (n_u - 1)) * spacing; }
  double v(int j) const { return (j - 0.5 * (n_v - 1)) * spacing; }
  Vec3 point(int i, int j) const { return center + u(i) * u_axis + v(j) * v_axis; }
};

struct PowerField {
  PlaneSpec plane;
  Eigen::MatrixXd values;  // values(i, j) at plane.point(i, j), watts

  Eigen::Index size() const { return values.size(); }
};

struct FocusMetrics {
  double bfr = 0.0;
  double eta = 0.0;
  double peak_power = 0.0;
  Vec3 peak_location = Vec3::Zero();
};

// values(i, j) = received_power(weights, effective_channel(point(i, j))).
PowerField power_map(const Eigen::VectorXcd& weights, const PlaneSpec& plane,
                     const ArrayLayout& layout, const RoomEnv& room, const ChannelParams& params,
                     const SignalModel& sig);

// One field per weight column; the channel at each node is computed once.
std::vector<PowerField> power_maps(const Eigen::MatrixXcd& weights, const PlaneSpec& plane,
                                   const ArrayLayout& layout, const RoomEnv& room,
                                   const ChannelParams& params, const SignalModel& sig);

// Smallest radius around `focal_point` whose enclosed cell power reaches `eta` of the
// plane total. Cells are equal-area, so sums of values stand in for integrals.
FocusMetrics bfr(const PowerField& field, const Vec3& focal_point, double eta);

// Same, over explicit sample positions (rows of `points`) and powers.
FocusMetrics bfr_samples(const Eigen::MatrixX3d& points, const Eigen::VectorXd& values,
                         const Vec3& focal_point, double eta);

enum class ZonePolicy {
  Strict,    // UE must be in the full-aperture Fresnel band
  Extended,  // single-module lower bound up to the far-field onset
  Wpt,       // no lower bound, no upper bound
};

const char* to_string(ZonePolicy policy);
ZonePolicy zone_policy_from_string(const std::string& name);

// Throws std::domain_error naming the violated constraint.
void check_zone(const Vec3& ue, const ArrayLayout& layout, double wavelength, ZonePolicy policy);

// Power of the full concatenated beam at the UE after the zone check.
double full_power_objective(const BeamVector& w, const Vec3& ue, const ArrayLayout& layout,
                            const RoomEnv& room, const ChannelParams& params,
                            const SignalModel& sig, ZonePolicy policy = ZonePolicy::Strict);

// CSV header u_m,v_m,x_m,y_m,z_m,power_w,power_dbm; rows ordered v-major.
void write_field_csv(std::ostream& os, const PowerField& field);

struct FieldSamples {
  Eigen::MatrixX3d points;
  Eigen::VectorXd values;
};

FieldSamples read_field_csv(std::istream& is);

std::string focus_metrics_json(const FocusMetrics& metrics);

}  // namespace sbf

#include "sbf/beamforming.hpp"

#include "sbf/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

namespace sbf {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_2pi(double phase) {
  double x = std::fmod(phase, kTwoPi);
  if (x < 0.0) x += kTwoPi;
  return x;
}

template <typename Fn>
void parallel_for(Eigen::Index count, Fn&& fn) {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const auto workers = static_cast<Eigen::Index>(std::min<Eigen::Index>(hw, count));
  if (workers <= 1) {
    for (Eigen::Index i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (Eigen::Index w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (Eigen::Index i = w; i < count; i += workers) fn(i);
    });
  }
}

}  // namespace

Eigen::VectorXcd weights_from_phases(const Eigen::VectorXd& phases) {
  const double a = 1.0 / std::sqrt(static_cast<double>(phases.size()));
  return phases.unaryExpr([a](double p) { return std::polar(a, p); });
}

Eigen::VectorXcd realize(const BeamVector& w) {
  const PhaseCodebook codebook(w.bits);
  const int active = w.active_count();
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(w.size());
  if (active == 0) return out;
  const double a = 1.0 / std::sqrt(static_cast<double>(active));
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const int k = w.indices[i];
    if (k < 0) continue;
    if (k >= codebook.levels()) throw std::out_of_range("beam index outside the codebook");
    out[i] = std::polar(a, codebook.phase(k));
  }
  return out;
}

Eigen::VectorXd signed_phases(const BeamVector& w) {
  const PhaseCodebook codebook(w.bits);
  Eigen::VectorXd out(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i)
    out[i] = w.indices[i] < 0 ? 0.0 : codebook.signed_phase(w.indices[i]);
  return out;
}

double received_power(const BeamVector& w, const ChannelVector& h, const SignalModel& sig) {
  return received_power(realize(w), h, sig);
}

std::complex<double> module_signal(const BeamVector& w, const ChannelVector& h,
                                   const SignalModel& sig) {
  return module_signal(realize(w), h, sig);
}

int quantize_phase(double phase, const PhaseCodebook& codebook) {
  if (!std::isfinite(phase)) throw std::invalid_argument("quantize_phase: non-finite phase");
  const int levels = codebook.levels();
  const double x = wrap_2pi(phase);
  int lo = static_cast<int>(std::floor(x / codebook.step()));
  lo = std::clamp(lo, 0, levels - 1);
  const double d_lo = x - codebook.phase(lo);
  const double d_hi = codebook.phase(lo + 1) - x;
  constexpr double kTie = 1e-12;
  if (std::abs(d_hi - d_lo) <= kTie) {
    // Between the top level and level 0 the lower index is 0.
    return lo + 1 == levels ? 0 : lo;
  }
  return d_hi < d_lo ? (lo + 1) % levels : lo;
}

BeamVector quantize_phases(const Eigen::VectorXd& phases, const PhaseCodebook& codebook) {
  BeamVector w(codebook.bits, Eigen::VectorXi(phases.size()));
  for (Eigen::Index i = 0; i < phases.size(); ++i) w.indices[i] = quantize_phase(phases[i], codebook);
  return w;
}

Eigen::VectorXd conjugate_oracle(const ChannelVector& h) {
  Eigen::VectorXd phases(h.size());
  for (Eigen::Index i = 0; i < h.size(); ++i) {
    if (h[i] == std::complex<double>(0.0, 0.0))
      throw std::domain_error("conjugate_oracle: zero channel entry " + std::to_string(i));
    phases[i] = std::arg(h[i]);
  }
  return phases;
}

BeamVector quantized_oracle(const ChannelVector& h, const PhaseCodebook& codebook) {
  // The optimum quantizes arg(h_i) - psi for some common rotation psi (psi
  // being the phase of the optimal w^H h). Quantization only changes where
  // some arg(h_i) - psi crosses a decision boundary, so one psi per interval
  // between those crossings covers every candidate within one level step.
  const Eigen::VectorXd phases = conjugate_oracle(h);
  const double step = codebook.step();
  BeamVector best = quantize_phases(phases, codebook);
  double best_gain = std::norm(realize(best).dot(h));

  std::vector<double> cuts(static_cast<std::size_t>(phases.size()));
  for (Eigen::Index i = 0; i < phases.size(); ++i) {
    double c = std::fmod(phases[i] - 0.5 * step, step);
    cuts[static_cast<std::size_t>(i)] = c < 0 ? c + step : c;
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  for (std::size_t i = 0; i < cuts.size(); ++i) {
    const double next = i + 1 < cuts.size() ? cuts[i + 1] : cuts.front() + step;
    const double psi = 0.5 * (cuts[i] + next);
    const Eigen::VectorXd shifted = phases.array() - psi;
    BeamVector candidate = quantize_phases(shifted, codebook);
    const double gain = std::norm(realize(candidate).dot(h));
    if (gain > best_gain * (1.0 + 1e-12)) {
      best_gain = gain;
      best = std::move(candidate);
    }
  }
  return best;
}

void PlaneSpec::validate() const {
  if (n_u < 1 || n_v < 1) throw std::invalid_argument("plane: grid counts must be >= 1");
  if (!(spacing > 0.0)) throw std::invalid_argument("plane: spacing must be positive");
  if (std::abs(u_axis.norm() - 1.0) > 1e-9 || std::abs(v_axis.norm() - 1.0) > 1e-9 ||
      std::abs(u_axis.dot(v_axis)) > 1e-9)
    throw std::invalid_argument("plane: axes must be orthonormal");
}

std::vector<PowerField> power_maps(const Eigen::MatrixXcd& weights, const PlaneSpec& plane,
                                   const ArrayLayout& layout, const RoomEnv& room,
                                   const ChannelParams& params, const SignalModel& sig) {
  plane.validate();
  if (weights.rows() != layout.element_count())
    throw std::invalid_argument("power_maps: weight rows must equal the element count");
  const Eigen::Index nodes = static_cast<Eigen::Index>(plane.n_u) * plane.n_v;
  Eigen::MatrixXd flat(nodes, weights.cols());

  parallel_for(nodes, [&](Eigen::Index node) {
    const int i = static_cast<int>(node % plane.n_u);
    const int j = static_cast<int>(node / plane.n_u);
    const ChannelVector h = effective_channel(plane.point(i, j), layout, room, params);
    const Eigen::VectorXcd x = weights.adjoint() * h;
    flat.row(node) = (x.array().abs2() * sig.signal_power + sig.noise_power).matrix().transpose();
  });

  std::vector<PowerField> fields(static_cast<std::size_t>(weights.cols()));
  for (Eigen::Index c = 0; c < weights.cols(); ++c) {
    PowerField& f = fields[static_cast<std::size_t>(c)];
    f.plane = plane;
    f.values = Eigen::Map<const Eigen::MatrixXd>(flat.col(c).data(), plane.n_u, plane.n_v);
  }
  return fields;
}

PowerField power_map(const Eigen::VectorXcd& weights, const PlaneSpec& plane,
                     const ArrayLayout& layout, const RoomEnv& room, const ChannelParams& params,
                     const SignalModel& sig) {
  return std::move(power_maps(weights, plane, layout, room, params, sig).front());
}

FocusMetrics bfr_samples(const Eigen::MatrixX3d& points, const Eigen::VectorXd& values,
                         const Vec3& focal_point, double eta) {
  if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("bfr: eta must lie in (0, 1]");
  if (points.rows() != values.size() || values.size() == 0)
    throw std::invalid_argument("bfr: empty or mismatched field");

  const Eigen::VectorXd dist = (points.rowwise() - focal_point.transpose()).rowwise().norm();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return dist[a] < dist[b]; });

  // Accumulate the total in the same order as the scan so the last nonzero
  // cell reaches it exactly.
  double total = 0.0;
  for (Eigen::Index k : order) total += values[k];
  if (!(total > 0.0)) throw std::domain_error("bfr: total power is zero");

  FocusMetrics m;
  m.eta = eta;
  Eigen::Index peak = 0;
  m.peak_power = values.maxCoeff(&peak);
  m.peak_location = points.row(peak).transpose();

  const double target = eta * total;
  double acc = 0.0;
  for (Eigen::Index k : order) {
    acc += values[k];
    if (acc >= target) {
      m.bfr = dist[k];
      return m;
    }
  }
  m.bfr = dist[order.back()];
  return m;
}

FocusMetrics bfr(const PowerField& field, const Vec3& focal_point, double eta) {
  const PlaneSpec& p = field.plane;
  Eigen::MatrixX3d points(field.size(), 3);
  Eigen::VectorXd values(field.size());
  Eigen::Index r = 0;
  for (int j = 0; j < p.n_v; ++j)
    for (int i = 0; i < p.n_u; ++i, ++r) {
      points.row(r) = p.point(i, j).transpose();
      values[r] = field.values(i, j);
    }
  return bfr_samples(points, values, focal_point, eta);
}

const char* to_string(ZonePolicy policy) {
  switch (policy) {
    case ZonePolicy::Strict:
      return "strict";
    case ZonePolicy::Extended:
      return "extended";
    case ZonePolicy::Wpt:
      return "wpt";
  }
  return "unknown";
}

ZonePolicy zone_policy_from_string(const std::string& name) {
  if (name == "strict") return ZonePolicy::Strict;
  if (name == "extended") return ZonePolicy::Extended;
  if (name == "wpt") return ZonePolicy::Wpt;
  throw std::invalid_argument("unknown zone policy '" + name + "' (strict|extended|wpt)");
}

void check_zone(const Vec3& ue, const ArrayLayout& layout, double wavelength, ZonePolicy policy) {
  if (policy == ZonePolicy::Wpt) return;
  const FresnelBounds b = fresnel_bounds(layout, wavelength);
  const double d = (aperture_center(layout) - ue).norm();
  const double lower = policy == ZonePolicy::Strict ? b.lower : b.sub_lower;
  if (d < lower || d > b.upper) {
    std::ostringstream msg;
    msg << "zone constraint violated (Fresnel band |r_a - r_U| in [" << lower << ", " << b.upper
        << "] m): UE distance " << d << " m";
    throw std::domain_error(msg.str());
  }
}

double full_power_objective(const BeamVector& w, const Vec3& ue, const ArrayLayout& layout,
                            const RoomEnv& room, const ChannelParams& params,
                            const SignalModel& sig, ZonePolicy policy) {
  check_zone(ue, layout, params.wavelength, policy);
  return received_power(w, effective_channel(ue, layout, room, params), sig);
}

void write_field_csv(std::ostream& os, const PowerField& field) {
  const PlaneSpec& p = field.plane;
  os << "u_m,v_m,x_m,y_m,z_m,power_w,power_dbm\n";
  for (int j = 0; j < p.n_v; ++j)
    for (int i = 0; i < p.n_u; ++i) {
      const Vec3 x = p.point(i, j);
      const double w = field.values(i, j);
      os << format_double(p.u(i)) << ',' << format_double(p.v(j)) << ',' << format_double(x.x())
         << ',' << format_double(x.y()) << ',' << format_double(x.z()) << ',' << format_double(w)
         << ',' << format_double(10.0 * std::log10(w * 1000.0)) << '\n';
    }
}

FieldSamples read_field_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("u_m,v_m,x_m,y_m,z_m,power_w", 0) != 0)
    throw std::runtime_error("field csv: missing or unexpected header");
  std::vector<std::array<double, 4>> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::array<double, 7> cols{};
    std::size_t pos = 0;
    for (int c = 0; c < 7; ++c) {
      const std::size_t next = line.find(',', pos);
      const std::string cell = line.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
      try {
        cols[c] = std::stod(cell);
      } catch (const std::exception&) {
        throw std::runtime_error("field csv: bad number at line " + std::to_string(lineno) +
                                 ", column " + std::to_string(c + 1));
      }
      if (next == std::string::npos && c < 6)
        throw std::runtime_error("field csv: short row at line " + std::to_string(lineno));
      pos = next + 1;
    }
    rows.push_back({cols[2], cols[3], cols[4], cols[5]});
  }
  FieldSamples s;
  s.points.resize(static_cast<Eigen::Index>(rows.size()), 3);
  s.values.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto e = static_cast<Eigen::Index>(r);
    s.points.row(e) << rows[r][0], rows[r][1], rows[r][2];
    s.values[e] = rows[r][3];
  }
  return s;
}

std::string focus_metrics_json(const FocusMetrics& m) {
  nlohmann::ordered_json j;
  j["bfr_m"] = m.bfr;
  j["eta"] = m.eta;
  j["peak_w"] = m.peak_power;
  j["peak_xyz"] = {m.peak_location.x(), m.peak_location.y(), m.peak_location.z()};
  return j.dump(2);
}

}  // namespace sbf

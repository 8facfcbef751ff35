#include <doctest.h>

#include "sbf/beamforming.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace sbf;

namespace {

const double kPi = std::numbers::pi;

ChannelVector random_channel(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  ChannelVector h(n);
  for (auto& v : h) v = {g(rng), g(rng)};
  return h;
}

// |sum conj(w_i) h_i|^2 written out term by term.
double brute_power(const Eigen::VectorXd& phases, const ChannelVector& h) {
  cd acc = 0;
  for (Eigen::Index i = 0; i < h.size(); ++i) acc += std::polar(1.0, -phases[i]) * h[i];
  return std::norm(acc) / static_cast<double>(h.size());
}

}  // namespace

TEST_CASE("codebook levels are uniform from zero") {
  const PhaseCodebook cb(3);
  CHECK(cb.levels() == 8);
  CHECK(cb.phase(0) == 0.0);
  CHECK(cb.phase(2) == doctest::Approx(kPi / 2));
  CHECK(cb.signed_phase(7) == doctest::Approx(-kPi / 4));
  CHECK(cb.signed_phase(4) == doctest::Approx(-kPi));
  CHECK_THROWS_WITH_AS(PhaseCodebook(0), doctest::Contains("r must be >= 1"), std::invalid_argument);
}

TEST_CASE("quantization picks the nearest level on the circle") {
  const PhaseCodebook r2(2), r3(3);
  CHECK(quantize_phase(0.1, r2) == 0);
  CHECK(quantize_phase(6.2, r2) == 0);
  CHECK(quantize_phase(-0.083, r2) == 0);
  CHECK(quantize_phase(1.5 * r3.step(), r3) == 1);
  CHECK(quantize_phase(kPi / 2 + 0.2, r2) == 1);
  CHECK(quantize_phase(-kPi / 2, r2) == 3);
  CHECK_THROWS(quantize_phase(std::nan(""), r2));
}

TEST_CASE("received power is |w^H h|^2 Ps + noise") {
  SignalModel sig{1.0, 0.0};
  ChannelVector one(1);
  one << 1.0;
  CHECK(received_power(BeamVector(2, Eigen::VectorXi::Zero(1)), one, sig) == doctest::Approx(1.0));
  CHECK(received_power(BeamVector(2, Eigen::VectorXi::Zero(3)), ChannelVector::Zero(3), sig) == 0.0);

  ChannelVector h(2);
  h << cd(1, 0), cd(0, 1);
  Eigen::VectorXi idx(2);
  idx << 0, 1;
  CHECK(received_power(BeamVector(2, idx), h, sig) == doctest::Approx(2.0).epsilon(1e-14));

  SignalModel noisy{3.0, 0.5};
  CHECK(received_power(BeamVector(2, idx), h, noisy) == doctest::Approx(6.5).epsilon(1e-14));
  CHECK_THROWS_AS(received_power(BeamVector(2, idx), one, sig), std::invalid_argument);
}

TEST_CASE("module signal matches a term-by-term sum") {
  std::mt19937_64 rng(9);
  const ChannelVector h = random_channel(4, rng);
  Eigen::VectorXi idx(4);
  idx << 0, 3, 1, 2;
  const BeamVector w(2, idx);
  const SignalModel sig{4.0, 0.0};
  cd expected = 0;
  for (int i = 0; i < 4; ++i) expected += std::polar(0.5, -kPi / 2 * idx[i]) * h[i];
  expected *= 2.0;
  CHECK(std::abs(module_signal(w, h, sig) - expected) < 1e-14);
  CHECK(module_signal(w, ChannelVector::Zero(4), sig) == cd(0, 0));

  const Eigen::VectorXcd matched = weights_from_phases(conjugate_oracle(h));
  const cd x = module_signal(matched, h, SignalModel{1.0, 0.0});
  CHECK(std::abs(x.imag()) < 1e-14);
  CHECK(x.real() == doctest::Approx(h.cwiseAbs().sum() / 2.0).epsilon(1e-14));
}

TEST_CASE("matched phases maximize power over unit-modulus vectors") {
  std::mt19937_64 rng(10);
  ChannelVector pos(3);
  pos << 1.0, 2.0, 0.5;
  CHECK(conjugate_oracle(pos).isZero());

  ChannelVector single(1);
  single << std::polar(0.7, 0.4);
  CHECK(conjugate_oracle(single)[0] == doctest::Approx(0.4));
  CHECK(received_power(weights_from_phases(conjugate_oracle(single)), single, SignalModel{1, 0.1}) ==
        doctest::Approx(0.49 + 0.1));

  const ChannelVector h = random_channel(8, rng);
  const double best = brute_power(conjugate_oracle(h), h);
  std::uniform_real_distribution<double> u(-kPi, kPi);
  for (int i = 0; i < 1000; ++i) {
    Eigen::VectorXd phases(8);
    for (auto& p : phases) p = u(rng);
    CHECK(brute_power(phases, h) <= best * (1 + 1e-12));
  }
  ChannelVector with_zero = h;
  with_zero[2] = 0.0;
  CHECK_THROWS_AS(conjugate_oracle(with_zero), std::domain_error);
}

TEST_CASE("quantized oracle equals exhaustive search on small instances") {
  std::mt19937_64 rng(11);
  const SignalModel sig{1.0, 0.0};
  for (int bits = 1; bits <= 2; ++bits) {
    const PhaseCodebook cb(bits);
    for (int trial = 0; trial < 100; ++trial) {
      const ChannelVector h = random_channel(3, rng);
      double best = 0;
      const int levels = cb.levels();
      Eigen::VectorXi idx(3);
      for (int code = 0; code < levels * levels * levels; ++code) {
        for (int i = 0, c = code; i < 3; ++i, c /= levels) idx[i] = c % levels;
        best = std::max(best, received_power(BeamVector(bits, idx), h, sig));
      }
      CHECK(received_power(quantized_oracle(h, cb), h, sig) == doctest::Approx(best).epsilon(1e-12));
    }
  }
  ChannelVector pos(4);
  pos << 1.0, 0.3, 2.0, 0.9;
  CHECK(quantized_oracle(pos, PhaseCodebook(3)).indices.isZero());
}

TEST_CASE("quantized oracle keeps within the half-step bound and approaches continuous") {
  std::mt19937_64 rng(12);
  const SignalModel sig{1.0, 0.0};
  for (int bits = 1; bits <= 6; ++bits) {
    const PhaseCodebook cb(bits);
    for (int trial = 0; trial < 50; ++trial) {
      const ChannelVector h = random_channel(16, rng);
      const double amp = std::sqrt(received_power(quantized_oracle(h, cb), h, sig));
      CHECK(amp >= std::cos(kPi / cb.levels()) * h.cwiseAbs().sum() / 4.0 - 1e-12);
    }
  }
  const ChannelVector h = random_channel(16, rng);
  const double continuous = brute_power(conjugate_oracle(h), h);
  CHECK(received_power(quantized_oracle(h, PhaseCodebook(14)), h, sig) == doctest::Approx(continuous).epsilon(1e-6));
}

TEST_CASE("a common codebook rotation leaves power unchanged") {
  std::mt19937_64 rng(13);
  const ChannelVector h = random_channel(6, rng);
  const PhaseCodebook cb(3);
  std::uniform_int_distribution<int> level(0, 7);
  Eigen::VectorXi idx(6);
  for (auto& v : idx) v = level(rng);
  const double p0 = received_power(BeamVector(3, idx), h, SignalModel{});
  for (int shift = 1; shift < 8; ++shift) {
    Eigen::VectorXi rotated = idx.unaryExpr([shift](int k) { return (k + shift) % 8; });
    CHECK(received_power(BeamVector(3, rotated), h, SignalModel{}) == doctest::Approx(p0).epsilon(1e-12));
  }
}

TEST_CASE("switched-off elements carry no amplitude") {
  Eigen::VectorXi idx(4);
  idx << 0, -1, 2, -1;
  const Eigen::VectorXcd w = realize(BeamVector(2, idx));
  CHECK(w[1] == cd(0, 0));
  CHECK(w[3] == cd(0, 0));
  CHECK(std::abs(w[0]) == doctest::Approx(1 / std::sqrt(2.0)));
}

TEST_CASE("focus radius on synthetic fields") {
  PlaneSpec plane;
  plane.n_u = plane.n_v = 101;
  plane.spacing = 0.01;
  plane.center = Vec3(0, 1, 0);
  plane.u_axis = Vec3::UnitX();
  plane.v_axis = Vec3::UnitZ();

  PowerField spike{plane, Eigen::MatrixXd::Zero(101, 101)};
  spike.values(50, 50) = 1.0;
  CHECK(bfr(spike, plane.center, 0.8).bfr == 0.0);
  CHECK(bfr(spike, plane.center, 1.0).bfr == 0.0);

  PowerField ring = spike;
  ring.values(50, 80) = 1.0;
  CHECK(bfr(ring, plane.center, 1.0).bfr == doctest::Approx(0.30));

  // Radially symmetric Gaussian: the 80 % radius is sigma * sqrt(-2 ln 0.2).
  const double sigma = 0.07;
  PowerField gauss{plane, Eigen::MatrixXd(101, 101)};
  for (int i = 0; i < 101; ++i)
    for (int j = 0; j < 101; ++j) {
      const double r2 = plane.u(i) * plane.u(i) + plane.v(j) * plane.v(j);
      gauss.values(i, j) = std::exp(-r2 / (2 * sigma * sigma));
    }
  const auto m = bfr(gauss, plane.center, 0.8);
  CHECK(std::abs(m.bfr - sigma * std::sqrt(-2 * std::log(0.2))) <= plane.spacing);
  CHECK((m.peak_location - plane.center).norm() < 1e-12);

  double prev = 0;
  for (double eta = 0.05; eta <= 1.0; eta += 0.05) {
    const double r = bfr(gauss, plane.center, eta).bfr;
    CHECK(r >= prev);
    prev = r;
  }
  CHECK_THROWS(bfr(PowerField{plane, Eigen::MatrixXd::Zero(101, 101)}, plane.center, 0.8));
  CHECK_THROWS(bfr(gauss, plane.center, 0.0));
}

TEST_CASE("power map agrees with point evaluation and is symmetric") {
  const double lambda = ChannelParams{}.wavelength;
  const auto layout = make_layout(1, 1, 8, 8, lambda / 2, {1, 0, 1.5});
  RoomEnv free_space;
  free_space.enabled = false;
  const ChannelParams params;
  const SignalModel sig{1.0, 0.0};
  const Vec3 center = aperture_center(layout) + 1.0 * layout.normal;
  const ChannelVector h = effective_channel(center, layout, free_space, params);
  const Eigen::VectorXcd w = weights_from_phases(conjugate_oracle(h));

  PlaneSpec single;
  single.center = center;
  single.u_axis = Vec3::UnitX();
  single.v_axis = Vec3::UnitZ();
  const PowerField one = power_map(w, single, layout, free_space, params, sig);
  CHECK(one.values(0, 0) == doctest::Approx(received_power(w, h, sig)).epsilon(1e-14));

  PlaneSpec grid = single;
  grid.n_u = grid.n_v = 21;
  grid.spacing = 0.02;
  const PowerField f = power_map(w, grid, layout, free_space, params, sig);
  for (int i = 0; i < 21; ++i)
    for (int j = 0; j < 21; ++j) {
      CHECK(f.values(i, j) == doctest::Approx(f.values(20 - i, j)).epsilon(1e-9));
      CHECK(f.values(i, j) == doctest::Approx(f.values(i, 20 - j)).epsilon(1e-9));
    }
  Eigen::Index pi = 0, pj = 0;
  f.values.maxCoeff(&pi, &pj);
  CHECK(pi == 10);
  CHECK(pj == 10);

  SignalModel doubled{2.0, 0.0};
  CHECK((power_map(w, grid, layout, free_space, params, doubled).values - 2 * f.values).norm() <
        1e-12 * f.values.norm());

  PlaneSpec bad = grid;
  bad.v_axis = Vec3::UnitX();
  CHECK_THROWS(power_map(w, bad, layout, free_space, params, sig));
}

TEST_CASE("field CSV round-trips and focus metrics serialize") {
  PlaneSpec plane;
  plane.n_u = 3;
  plane.n_v = 2;
  plane.spacing = 0.5;
  PowerField f{plane, Eigen::MatrixXd(3, 2)};
  f.values << 1e-3, 2e-3, 3e-3, 4e-3, 5e-3, 6e-3;
  std::ostringstream os;
  write_field_csv(os, f);
  const std::string text = os.str();
  CHECK(text.rfind("u_m,v_m,x_m,y_m,z_m,power_w,power_dbm\n", 0) == 0);
  CHECK(text.find(",0.001,0\n") != std::string::npos);

  std::istringstream is(text);
  const FieldSamples s = read_field_csv(is);
  REQUIRE(s.values.size() == 6);
  CHECK(s.values[1] == f.values(1, 0));  // v-major: (i=1, j=0) second
  CHECK((s.points.row(1).transpose() - plane.point(1, 0)).norm() < 1e-15);

  FocusMetrics m;
  m.bfr = 0.05;
  m.eta = 0.8;
  m.peak_power = 1e-6;
  m.peak_location = Vec3(1, 2, 3);
  CHECK(focus_metrics_json(m).find("\"bfr_m\": 0.05") != std::string::npos);
}

TEST_CASE("zone policies gate the full-array objective") {
  const double lambda = ChannelParams{}.wavelength;
  const auto layout = make_layout(10, 10, 6, 6, lambda / 2, {1, 0, 1.5});
  const Vec3 c = aperture_center(layout);
  RoomEnv room;
  room.enabled = false;
  const ChannelParams params;
  const SignalModel sig;
  const BeamVector zeros(4, Eigen::VectorXi::Zero(3600));
  const Vec3 far = c + 60.0 * layout.normal;
  CHECK_THROWS_AS(full_power_objective(zeros, far, layout, room, params, sig, ZonePolicy::Strict), std::domain_error);
  CHECK_NOTHROW(full_power_objective(zeros, far, layout, room, params, sig, ZonePolicy::Wpt));

  const Vec3 in_band = c + 3.0 * layout.normal;
  const ChannelVector h = effective_channel(in_band, layout, room, params);
  const BeamVector oracle = quantized_oracle(h, PhaseCodebook(4));
  const double target = received_power(oracle, h, sig);
  CHECK(full_power_objective(oracle, in_band, layout, room, params, sig) == doctest::Approx(target));
  CHECK(full_power_objective(zeros, in_band, layout, room, params, sig) < target);

  const Vec3 close = c + 1.4 * layout.normal;
  CHECK_THROWS_AS(check_zone(close, layout, lambda, ZonePolicy::Strict), std::domain_error);
  CHECK_NOTHROW(check_zone(close, layout, lambda, ZonePolicy::Extended));
  CHECK_THROWS_AS(check_zone(c + 0.001 * layout.normal, layout, lambda, ZonePolicy::Extended), std::domain_error);
  CHECK(zone_policy_from_string(to_string(ZonePolicy::Wpt)) == ZonePolicy::Wpt);
}

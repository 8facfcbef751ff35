// Quick self-checks behind `sbf_cli check`. Each one compares a library
// routine against an independent computation on small random instances.
#include "checks.hpp"

#include "sbf/beamforming.hpp"
#include "sbf/knn.hpp"
#include "sbf/nn.hpp"
#include "sbf/orchestrator.hpp"
#include "sbf/seeding.hpp"

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <ostream>
#include <random>
#include <set>

namespace {

using sbf::BeamVector;
using sbf::PhaseCodebook;

bool gradient_matches_finite_differences() {
  std::mt19937_64 rng(11);
  sbf::nn::Net net(3);
  net.normalize(-std::numbers::pi, std::numbers::pi).dense(5).tanh().dense(4).relu().dense(2);
  net.initialize(rng);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 4) * 3.0;
  Eigen::MatrixXd upstream = Eigen::MatrixXd::Random(2, 4);
  auto loss = [&] { return (net.forward(x).array() * upstream.array()).sum(); };
  sbf::nn::Net::Tape tape;
  net.forward(x, tape);
  Eigen::VectorXd grad;
  net.backward(tape, upstream, grad);
  for (Eigen::Index i = 0; i < net.param_count(); ++i) {
    const double keep = net.params()[i];
    const double h = 1e-6;
    net.params()[i] = keep + h;
    const double up = loss();
    net.params()[i] = keep - h;
    const double down = loss();
    net.params()[i] = keep;
    const double fd = (up - down) / (2 * h);
    if (std::abs(fd - grad[i]) > 1e-6 * std::max(1.0, std::abs(fd))) return false;
  }
  return true;
}

bool oracle_matches_exhaustive_search() {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g;
  const PhaseCodebook cb(2);
  const sbf::SignalModel sig{1.0, 0.0};
  for (int trial = 0; trial < 20; ++trial) {
    sbf::ChannelVector h(3);
    for (auto& v : h) v = {g(rng), g(rng)};
    double best = 0;
    Eigen::VectorXi idx(3);
    for (int code = 0; code < 64; ++code) {
      for (int i = 0, c = code; i < 3; ++i, c /= 4) idx[i] = c % 4;
      best = std::max(best, sbf::received_power(BeamVector(2, idx), h, sig));
    }
    const double got = sbf::received_power(sbf::quantized_oracle(h, cb), h, sig);
    if (std::abs(got - best) > 1e-12 * best) return false;
  }
  return true;
}

bool knn_matches_bruteforce() {
  const PhaseCodebook cb(2);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> level(0, 3);
    Eigen::VectorXi c(3);
    for (auto& v : c) v = level(rng);
    const BeamVector center(2, c);
    const auto fast = sbf::knn(center, 26, cb, seed);
    const auto slow = sbf::knn_bruteforce(center, 26, cb);
    if (fast.size() != slow.size()) return false;
    std::set<std::vector<int>> a, b;
    for (const auto& n : fast.items) a.insert({n.beam.indices.begin(), n.beam.indices.end()});
    for (const auto& n : slow.items) b.insert({n.beam.indices.begin(), n.beam.indices.end()});
    if (a != b) return false;
  }
  return true;
}

bool continuous_alignment_is_coherent() {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.1, 1.0), ph(-std::numbers::pi, std::numbers::pi);
  std::vector<std::complex<double>> x(6);
  std::vector<Eigen::VectorXcd> w(6, Eigen::VectorXcd::Ones(1));
  double magnitude_sum = 0;
  for (auto& v : x) {
    v = std::polar(u(rng), ph(rng));
    magnitude_sum += std::abs(v);
  }
  const auto aligned = sbf::align_phases_continuous(x, w);
  std::complex<double> total = 0;
  for (std::size_t m = 0; m < x.size(); ++m) total += std::conj(aligned[m][0]) * x[m];
  return std::abs(std::abs(total) - magnitude_sum) < 1e-12;
}

bool fresnel_bounds_match_formulas() {
  const double lambda = sbf::wavelength_for(28e9);
  const double d = 0.4468;
  const auto b = sbf::fresnel_bounds(d, lambda);
  return std::abs(b.lower - 0.62 * std::sqrt(d * d * d / lambda)) < 1e-12 &&
         std::abs(b.upper - 2 * d * d / lambda) < 1e-12;
}

bool seed_streams_are_reproducible() {
  auto a = sbf::SeedStreams::for_module(7, 3);
  auto b = sbf::SeedStreams::for_module(7, 3);
  auto c = sbf::SeedStreams::for_module(7, 4);
  return a.exploration() == b.exploration() && a.knn() != c.knn();
}

}  // namespace

int run_checks(std::ostream& os) {
  const std::pair<const char*, std::function<bool()>> checks[] = {
      {"network gradients vs finite differences", gradient_matches_finite_differences},
      {"quantized oracle vs exhaustive search", oracle_matches_exhaustive_search},
      {"knn vs brute-force enumeration", knn_matches_bruteforce},
      {"continuous alignment coherence", continuous_alignment_is_coherent},
      {"fresnel bounds", fresnel_bounds_match_formulas},
      {"seed stream reproducibility", seed_streams_are_reproducible},
  };
  int failures = 0;
  for (const auto& [name, fn] : checks) {
    const bool ok = fn();
    failures += ok ? 0 : 1;
    os << (ok ? "PASS " : "FAIL ") << name << '\n';
  }
  return failures;
}

// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails. Pass criterion numbers as
// arguments to run a subset.

#include "sbf/beamforming.hpp"
#include "sbf/config.hpp"
#include "sbf/io.hpp"
#include "sbf/knn.hpp"
#include "sbf/nn.hpp"
#include "sbf/orchestrator.hpp"
#include "sbf/td3.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace sbf;
namespace fs = std::filesystem;

namespace {

const double kPi = std::numbers::pi;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

ChannelVector random_channel(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  ChannelVector h(n);
  for (auto& v : h) v = {g(rng), g(rng)};
  return h;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("sbf_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// 1. Backward pass against central differences on random actor and critic nets.
Outcome gradients() {
  std::mt19937_64 rng(101);
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> phase(-kPi, kPi);
  double worst = 0.0;
  std::size_t compared = 0;
  for (int net_index = 0; net_index < 50; ++net_index) {
    const int dims = 1 + net_index % 4;
    TD3Hyper h;
    h.actor_width = 3;
    h.critic_width = 4;
    nn::Net net = net_index % 2 ? make_critic(dims, h) : make_actor(dims, h);
    net.initialize(rng);
    Eigen::MatrixXd x(net.input_dim(), 3);
    for (auto& v : x.reshaped()) v = phase(rng);
    Eigen::MatrixXd c(net.output_dim(), 3);
    for (auto& v : c.reshaped()) v = n01(rng);

    nn::Net::Tape tape;
    net.forward(x, tape);
    Eigen::VectorXd grad;
    net.backward(tape, c, grad);
    const double step = 1e-6;
    for (Eigen::Index p = 0; p < net.param_count(); ++p) {
      const double keep = net.params()[p];
      net.params()[p] = keep + step;
      const double up = (net.forward(x).array() * c.array()).sum();
      net.params()[p] = keep - step;
      const double down = (net.forward(x).array() * c.array()).sum();
      net.params()[p] = keep;
      const double fd = (up - down) / (2 * step);
      const double scale = std::max({std::abs(fd), std::abs(grad[p]), 1e-6});
      worst = std::max(worst, std::abs(fd - grad[p]) / scale);
      ++compared;
    }
  }
  return {worst <= 1e-4, std::to_string(compared) + " parameters, max relative error " + fmt(worst)};
}

// 2. Quantized oracle against exhaustive search.
Outcome oracle_exactness() {
  std::mt19937_64 rng(202);
  const SignalModel sig{1.0, 0.0};
  int matched = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + trial % 4;
    const int bits = 1 + (trial / 4) % 2;
    const PhaseCodebook cb(bits);
    const ChannelVector h = random_channel(n, rng);
    const int levels = cb.levels();
    int total = 1;
    for (int i = 0; i < n; ++i) total *= levels;
    double best = 0.0;
    Eigen::VectorXi idx(n);
    for (int code = 0; code < total; ++code) {
      for (int i = 0, c = code; i < n; ++i, c /= levels) idx[i] = c % levels;
      best = std::max(best, received_power(BeamVector(bits, idx), h, sig));
    }
    const double got = received_power(quantized_oracle(h, cb), h, sig);
    if (std::abs(got - best) <= 1e-12 * best) ++matched;
  }
  return {matched == 200, std::to_string(matched) + "/200 instances match the exhaustive optimum"};
}

// 3. knn against brute-force level sets, plus the cost counter.
Outcome knn_fidelity() {
  std::mt19937_64 rng(303);
  int bad = 0;
  double worst_ratio = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = std::uniform_int_distribution<int>(1, 4)(rng);
    const int bits = std::uniform_int_distribution<int>(1, 3)(rng);
    const int k = std::uniform_int_distribution<int>(1, 20)(rng);
    const PhaseCodebook cb(bits);
    Eigen::VectorXi idx(n);
    for (auto& v : idx) v = std::uniform_int_distribution<int>(0, cb.levels() - 1)(rng);
    const BeamVector center(bits, idx);
    const auto fast = knn(center, k, cb, rng());
    const auto slow = knn_bruteforce(center, k, cb);

    bool ok = fast.size() == slow.size() && fast.exhausted == slow.exhausted;
    std::map<int, std::set<std::vector<int>>> fast_sets, slow_sets;
    std::set<std::vector<int>> seen;
    int prev = 1;
    for (const auto& nb : fast.items) {
      std::vector<int> key(nb.beam.indices.begin(), nb.beam.indices.end());
      ok = ok && seen.insert(key).second && nb.level >= prev;
      prev = nb.level;
      int changed = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const int v = nb.beam.indices[i];
        const int d = std::abs(v - idx[i]);
        ok = ok && v >= 0 && v < cb.levels() && d <= 1;
        changed += d;
      }
      ok = ok && changed == nb.level;
      fast_sets[nb.level].insert(key);
    }
    for (const auto& nb : slow.items)
      slow_sets[nb.level].insert(std::vector<int>(nb.beam.indices.begin(), nb.beam.indices.end()));
    // Every level but the last emitted one is complete and must match as a set;
    // the last one must be a subset of the full level.
    const auto full = knn_bruteforce(center, 1 << 20, cb);
    std::map<int, std::set<std::vector<int>>> full_sets;
    for (const auto& nb : full.items)
      full_sets[nb.level].insert(std::vector<int>(nb.beam.indices.begin(), nb.beam.indices.end()));
    const int last = fast.items.empty() ? 0 : fast.items.back().level;
    for (const auto& [level, members] : fast_sets) {
      if (level < last) {
        ok = ok && members == slow_sets[level] && members == full_sets[level];
      } else {
        ok = ok && members.size() == slow_sets[level].size() &&
             std::includes(full_sets[level].begin(), full_sets[level].end(), members.begin(), members.end());
      }
    }
    if (!ok) ++bad;
    worst_ratio = std::max(worst_ratio, static_cast<double>(fast.coord_ops) / (static_cast<double>(k) * n));
  }

  // Cost at larger sizes, where the per-level counts matter.
  for (int n : {16, 64, 256})
    for (int k : {1, 8, 64}) {
      Eigen::VectorXi idx(n);
      for (auto& v : idx) v = std::uniform_int_distribution<int>(0, 15)(rng);
      const auto list = knn(BeamVector(4, idx), k, PhaseCodebook(4), rng());
      worst_ratio = std::max(worst_ratio, static_cast<double>(list.coord_ops) / (static_cast<double>(k) * n));
    }
  const double bound = 16.0;
  return {bad == 0 && worst_ratio <= bound, std::to_string(1000 - bad) + "/1000 instances match; coord_ops <= " +
                                                fmt(worst_ratio, 3) + " k N' (bound " + fmt(bound) + ")"};
}

// 4. Fresnel bounds at the reference aperture.
Outcome fresnel() {
  const double lambda = wavelength_for(28e9);
  const double d = 0.4468;
  const double lower = 0.62 * std::sqrt(d * d * d / lambda);
  const double upper = 2 * d * d / lambda;
  const auto b = fresnel_bounds(d, lambda);
  const bool ok = std::abs(b.lower / lower - 1) < 0.01 && std::abs(b.upper / upper - 1) < 0.01 &&
                  std::abs(b.lower / 1.79 - 1) < 0.01 && std::abs(b.upper / 37.3 - 1) < 0.01;
  return {ok, "(" + fmt(b.lower) + " m, " + fmt(b.upper) + " m)"};
}

// 5. Alignment identities on random module signals.
Outcome alignment() {
  std::mt19937_64 rng(505);
  double worst_continuous = 0.0;
  double worst_margin = 1.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int modules = std::uniform_int_distribution<int>(1, 16)(rng);
    const int n = std::uniform_int_distribution<int>(1, 6)(rng);
    const int bits = std::uniform_int_distribution<int>(1, 4)(rng);
    const PhaseCodebook cb(bits);
    std::vector<ChannelVector> hs;
    std::vector<Eigen::VectorXcd> ws;
    std::vector<BeamVector> bs;
    std::vector<cd> xs, xq;
    double sum_c = 0.0, sum_q = 0.0;
    std::uniform_int_distribution<int> level(0, cb.levels() - 1);
    for (int m = 0; m < modules; ++m) {
      hs.push_back(random_channel(n, rng));
      Eigen::VectorXi idx(n);
      for (auto& v : idx) v = level(rng);
      bs.emplace_back(bits, idx);
      ws.push_back(realize(bs.back()));
      xs.push_back(module_signal(ws.back(), hs.back(), SignalModel{}));
      xq.push_back(module_output(bs.back(), hs.back(), SignalModel{}));
      sum_c += std::abs(xs.back());
      sum_q += std::abs(xq.back());
    }
    const auto wc = align_phases_continuous(xs, ws);
    const auto wq = align_phases_quantized(xq, bs, cb);
    cd total_c = 0, total_q = 0;
    for (int m = 0; m < modules; ++m) {
      total_c += module_signal(wc[static_cast<std::size_t>(m)], hs[static_cast<std::size_t>(m)], SignalModel{});
      total_q += module_output(wq[static_cast<std::size_t>(m)], hs[static_cast<std::size_t>(m)], SignalModel{});
    }
    worst_continuous = std::max(worst_continuous, std::abs(std::abs(total_c) - sum_c) / sum_c);
    worst_margin = std::min(worst_margin, std::abs(total_q) / sum_q - std::cos(kPi / cb.levels()));
  }
  const bool ok = worst_continuous <= 1e-12 && worst_margin >= -1e-12;
  return {ok, "continuous max relative gap " + fmt(worst_continuous) + ", quantized min margin over bound " +
                  fmt(worst_margin)};
}

// 6. Fused power of a 4x4-module array against the mean single-module power.
Outcome modular_gain() {
  ExperimentConfig c;
  c.array.module_rows = 4;
  c.array.module_cols = 4;
  c.bits = 4;
  c.zone_policy = ZonePolicy::Strict;
  c.validate();
  const ArrayLayout layout = c.layout();
  const ChannelVector h = effective_channel(c.ue(), layout, c.room, c.channel_params());
  const PhaseCodebook cb = c.codebook();
  const int n = layout.module_size();
  std::vector<BeamVector> beams;
  std::vector<cd> xs;
  double single = 0.0;
  for (int m = 0; m < layout.module_count(); ++m) {
    const ChannelVector slice = h.segment(Eigen::Index{m} * n, n);
    beams.push_back(quantized_oracle(slice, cb));
    xs.push_back(module_output(beams.back(), slice, c.signal));
    single += received_power(beams.back(), slice, c.signal);
  }
  single /= layout.module_count();
  const auto fused = fuse(align_phases_quantized(xs, beams, cb), h, c.signal);
  const double ratio = fused.fused_power / single;
  const double m = layout.module_count();
  return {ratio >= 0.8 * m && ratio <= 1.05 * m, "fused / mean module power = " + fmt(ratio) + " for M = 16"};
}

// Shared setup for the learning criteria: one 4x4 sub-array in free space.
struct LearningRun {
  double best = 0.0;
  double final_power = 0.0;
};

struct LearningSetup {
  ChannelVector channel;
  SignalModel signal;
  double target = 0.0;  // quantized-oracle power at four bits
  TD3Hyper hyper;
  std::int64_t steps = 5000;
};

LearningSetup learning_setup() {
  ExperimentConfig c;
  c.array.module_rows = 1;
  c.array.module_cols = 1;
  c.array.sub_rows = 4;
  c.array.sub_cols = 4;
  c.room.enabled = false;
  c.zone_policy = ZonePolicy::Wpt;
  c.validate();
  LearningSetup s;
  s.channel = effective_channel(c.ue(), c.layout(), c.room, c.channel_params());
  s.signal = c.signal;
  s.target = received_power(quantized_oracle(s.channel, PhaseCodebook(4)), s.channel, s.signal);
  s.hyper = c.agent;
  return s;
}

LearningRun learn(const LearningSetup& s, int bits, Variant variant, std::uint64_t seed) {
  TrainOptions o;
  o.codebook = PhaseCodebook(bits);
  o.hyper = s.hyper;
  o.variant = variant;
  o.signal = s.signal;
  o.seed = seed;
  o.schedule.max_steps = s.steps;
  o.schedule.window = s.steps - 1;
  o.schedule.threshold = 0.0;  // run the whole budget
  o.schedule.parallel = false;
  const ModuleResult r = train_module(ModuleProblem{0, s.channel, s.target}, o);
  return {r.best_power, r.final_power};
}

struct LearningResults {
  bool ready = false;
  std::map<std::pair<int, Variant>, std::vector<LearningRun>> runs;
  LearningSetup setup;
};

LearningResults& learning_results(bool need_quantization) {
  static LearningResults cache;
  static bool have_quantization = false;
  if (!cache.ready) {
    cache.setup = learning_setup();
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      cache.runs[{4, Variant::TD3}].push_back(learn(cache.setup, 4, Variant::TD3, seed));
      cache.runs[{4, Variant::DDPG}].push_back(learn(cache.setup, 4, Variant::DDPG, seed));
    }
    cache.ready = true;
  }
  if (need_quantization && !have_quantization) {
    for (int bits : {3, 2})
      for (std::uint64_t seed = 1; seed <= 5; ++seed)
        cache.runs[{bits, Variant::TD3}].push_back(learn(cache.setup, bits, Variant::TD3, seed));
    have_quantization = true;
  }
  return cache;
}

std::vector<double> pick(const std::vector<LearningRun>& runs, double LearningRun::*field) {
  std::vector<double> out;
  for (const auto& r : runs) out.push_back(r.*field);
  return out;
}

// 7. TD3 reaches most of the oracle power and ends above DDPG.
Outcome learning() {
  auto& res = learning_results(false);
  const double target = res.setup.target;
  const double td3_best = median(pick(res.runs[{4, Variant::TD3}], &LearningRun::best)) / target;
  const double td3_final = median(pick(res.runs[{4, Variant::TD3}], &LearningRun::final_power)) / target;
  const double ddpg_final = median(pick(res.runs[{4, Variant::DDPG}], &LearningRun::final_power)) / target;
  const bool ok = td3_best >= 0.7 && td3_final >= ddpg_final;
  return {ok, std::to_string(res.setup.steps) + " steps x 5 seeds: TD3 median best " + fmt(td3_best, 3) +
                  " of oracle; median final TD3 " + fmt(td3_final, 3) + " vs DDPG " + fmt(ddpg_final, 3)};
}

// 8. Coarser phase resolution learns less power.
Outcome quantization() {
  auto& res = learning_results(true);
  const double target = res.setup.target;
  std::map<int, double> best;
  for (int bits : {4, 3, 2}) best[bits] = median(pick(res.runs[{bits, Variant::TD3}], &LearningRun::best)) / target;
  const double r2_oracle = received_power(quantized_oracle(res.setup.channel, PhaseCodebook(2)), res.setup.channel,
                                          res.setup.signal) /
                           target;
  const bool ok = best[4] >= best[3] && best[3] >= best[2] && best[2] <= 0.5;
  return {ok, "median best / four-bit oracle: r=4 " + fmt(best[4], 3) + ", r=3 " + fmt(best[3], 3) + ", r=2 " +
                  fmt(best[2], 3) + " (two-bit oracle reaches " + fmt(r2_oracle, 3) + ")"};
}

// Focal setup: a 40x40 aperture focused 1.4 m in front, room reflections on.
ExperimentConfig focal_config() {
  ExperimentConfig c;
  c.array.module_rows = 1;
  c.array.module_cols = 1;
  c.array.sub_rows = 40;
  c.array.sub_cols = 40;
  c.zone_policy = ZonePolicy::Strict;
  c.map.plane = PlaneKind::Transverse;
  c.map.points = 81;
  c.map.extent = 0.8;
  c.validate();
  return c;
}

// 9. Continuous matched phases concentrate power around the focal point.
Outcome focal_concentration() {
  const ExperimentConfig c = focal_config();
  const ArrayLayout layout = c.layout();
  const ChannelParams params = c.channel_params();
  const ChannelVector h = effective_channel(c.ue(), layout, c.room, params);
  const Eigen::VectorXcd w = weights_from_phases(conjugate_oracle(h));
  const PlaneSpec plane = focal_plane(c);
  const PowerField field = power_map(w, plane, layout, c.room, params, c.signal);
  const FocusMetrics m = bfr(field, c.ue(), 0.8);

  Eigen::Index pi = 0, pj = 0;
  const double peak = field.values.maxCoeff(&pi, &pj);
  const int mid = plane.n_u / 2;
  const bool peak_on_focus = pi == mid && pj == mid;
  const int offset = static_cast<int>(std::lround(0.3 / plane.spacing));
  const double side = std::max(field.values(mid - offset, mid), field.values(mid + offset, mid));
  const double drop_db = 10 * std::log10(peak / side);
  const bool ok = peak_on_focus && drop_db >= 10.0 && m.bfr <= 0.12;
  return {ok, std::string("peak ") + (peak_on_focus ? "on" : "off") + " the focal-point cell; 0.3 m lateral drop " +
                  fmt(drop_db, 3) + " dB; BFR(0.8) " + fmt(m.bfr, 3) + " m"};
}

// 10. The strongest vector at the focal point also has the tightest focus.
Outcome power_vs_focus() {
  const ExperimentConfig c = focal_config();
  const ArrayLayout layout = c.layout();
  const ChannelParams params = c.channel_params();
  const ChannelVector h = effective_channel(c.ue(), layout, c.room, params);
  const PhaseCodebook cb = c.codebook();
  std::mt19937_64 rng(1010);
  std::uniform_int_distribution<int> level(0, cb.levels() - 1);

  std::vector<BeamVector> beams;
  for (int i = 0; i < 50; ++i) {
    Eigen::VectorXi idx(layout.element_count());
    for (auto& v : idx) v = level(rng);
    beams.emplace_back(cb.bits, idx);
  }
  beams.push_back(quantized_oracle(h, cb));

  Eigen::MatrixXcd weights(layout.element_count(), static_cast<Eigen::Index>(beams.size()));
  for (std::size_t i = 0; i < beams.size(); ++i) weights.col(static_cast<Eigen::Index>(i)) = realize(beams[i]);
  const auto fields = power_maps(weights, focal_plane(c), layout, c.room, params, c.signal);

  std::size_t strongest = 0, tightest = 0;
  std::vector<double> power(beams.size()), radius(beams.size());
  for (std::size_t i = 0; i < beams.size(); ++i) {
    power[i] = received_power(beams[i], h, c.signal);
    radius[i] = bfr(fields[i], c.ue(), 0.8).bfr;
    if (power[i] > power[strongest]) strongest = i;
    if (radius[i] < radius[tightest]) tightest = i;
  }
  const bool ok = radius[strongest] <= radius[tightest];
  return {ok, "max-power vector #" + std::to_string(strongest) + " BFR " + fmt(radius[strongest], 3) +
                  " m; smallest BFR in sample " + fmt(radius[tightest], 3) + " m; median random BFR " +
                  fmt(median(std::vector<double>(radius.begin(), radius.end() - 1)), 3) + " m"};
}

// 11. Two identical CLI training runs write identical results.
Outcome determinism() {
  const fs::path dir = scratch("determinism");
  const fs::path config = dir / "config.json";
  write_text_file(config, R"({
  "array": {"module_rows": 1, "module_cols": 2, "sub_rows": 2, "sub_cols": 2},
  "zone_policy": "wpt",
  "agent": {"batch_size": 16, "buffer_capacity": 256},
  "schedule": {"max_steps": 400, "window": 200, "threshold": 0.0},
  "map": {"points": 21, "extent": 0.2}
}
)");
  auto run = [&](const std::string& name) {
    const std::string cmd = std::string("\"") + SBF_CLI_PATH + "\" train --config \"" + config.string() +
                            "\" --seed 7 --out \"" + (dir / name).string() + "\" > \"" +
                            (dir / (name + ".log")).string() + "\" 2>&1";
    return std::system(cmd.c_str());
  };
  if (run("a") != 0 || run("b") != 0) return {false, "sbf_cli train exited with an error; see " + dir.string()};

  std::vector<std::string> files{"summary.json", "beam.json", "maps/focal_plane.csv"};
  for (const auto& entry : fs::directory_iterator(dir / "a" / "curves"))
    files.push_back("curves/" + entry.path().filename().string());
  std::sort(files.begin(), files.end());
  int curves = 0;
  for (const auto& f : files) {
    if (!fs::exists(dir / "b" / f)) return {false, f + " missing from the second run"};
    if (read_text_file(dir / "a" / f) != read_text_file(dir / "b" / f)) return {false, f + " differs between runs"};
    if (f.rfind("curves/", 0) == 0) ++curves;
  }
  return {curves == 2, std::to_string(files.size()) + " files identical (" + std::to_string(curves) + " curves)"};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 128 << 20);
#endif
  const std::vector<Criterion> criteria{
      {1, "gradient correctness", gradients},
      {2, "oracle exactness", oracle_exactness},
      {3, "knn fidelity", knn_fidelity},
      {4, "fresnel bounds", fresnel},
      {5, "alignment identities", alignment},
      {6, "modular gain", modular_gain},
      {7, "learning reproduction", learning},
      {8, "quantization ordering", quantization},
      {9, "focal concentration", focal_concentration},
      {10, "max power has min focus radius", power_vs_focus},
      {11, "determinism", determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << o.detail << " ["
              << fmt(secs, 3) << " s]" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}

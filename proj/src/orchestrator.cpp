#include "sbf/orchestrator.hpp"

#include "sbf/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace sbf {

using ordered_json = nlohmann::ordered_json;

ModuleResult train_module(const ModuleProblem& problem, const TrainOptions& options, std::ostream* curve) {
  const auto dims = static_cast<int>(problem.channel.size());
  const TrainingSchedule& sched = options.schedule;
  sched.validate();
  Agent agent(dims, options.codebook, options.hyper, options.variant, options.seed,
              static_cast<std::uint64_t>(problem.module));
  const PowerMeter meter = [&](const BeamVector& w) {
    return received_power(w, problem.channel, options.signal);
  };

  ModuleResult result;
  result.module = problem.module;
  std::vector<double> powers;
  std::vector<double> best_history;
  powers.reserve(static_cast<std::size_t>(std::min<std::int64_t>(sched.max_steps, 1 << 20)));
  best_history.reserve(powers.capacity());
  double best = -1.0;

  if (curve) *curve << kCurveHeader;
  for (std::int64_t step = 0; step < sched.max_steps; ++step) {
    const StepReport r = agent.train_step(meter, step);
    if (r.power > best) {
      best = r.power;
      result.best = r.action;
    }
    powers.push_back(r.power);
    best_history.push_back(best);
    if (curve) {
      *curve << step << ',' << format_double(r.power) << ','
             << format_double(r.power / problem.target_power) << ',' << r.reward << ','
             << format_double(r.loss_q1) << ',' << format_double(r.loss_q2) << ','
             << format_double(std::sqrt(r.explore_var)) << '\n';
      if ((step + 1) % 1000 == 0) curve->flush();
    }
    if (step >= sched.window) {
      const double then = best_history[static_cast<std::size_t>(step - sched.window)];
      if (best - then < sched.threshold * then) {
        result.converged = true;
        break;
      }
    }
  }
  if (curve) curve->flush();

  result.steps = static_cast<std::int64_t>(powers.size());
  result.best_power = best;
  const std::size_t tail = std::max<std::size_t>(1, powers.size() / 10);
  result.final_power =
      std::accumulate(powers.end() - static_cast<std::ptrdiff_t>(tail), powers.end(), 0.0) /
      static_cast<double>(tail);
  if (options.keep_powers) result.powers = std::move(powers);
  return result;
}

std::vector<ModuleResult> train_all(const std::vector<ModuleProblem>& problems, const TrainOptions& options) {
  if (problems.empty()) throw std::invalid_argument("train_all: no active modules");
  std::vector<ModuleResult> results(problems.size());
  std::vector<std::exception_ptr> errors(problems.size());

  auto run_one = [&](std::size_t i) {
    try {
      if (options.curve_dir.empty()) {
        results[i] = train_module(problems[i], options);
      } else {
        std::filesystem::create_directories(options.curve_dir);
        const auto path = options.curve_dir / (options.curve_prefix + std::to_string(problems[i].module) + ".csv");
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + path.string());
        results[i] = train_module(problems[i], options, &out);
      }
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const auto workers = options.schedule.parallel ? std::min<std::size_t>(hw, problems.size()) : 1;
  if (workers <= 1) {
    for (std::size_t i = 0; i < problems.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < problems.size(); i = next++) run_one(i);
      });
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

std::complex<double> module_output(const BeamVector& w, const ChannelVector& h, const SignalModel& sig) {
  return module_signal(w, h, sig);
}

namespace {

template <typename Vec, typename IsActive>
std::size_t reference_module(const std::vector<std::complex<double>>& signals, const std::vector<Vec>& vecs,
                             IsActive&& active) {
  if (signals.size() != vecs.size()) throw std::invalid_argument("alignment: signal/vector count mismatch");
  for (std::size_t m = 0; m < vecs.size(); ++m) {
    if (!active(vecs[m])) continue;
    if (signals[m] == std::complex<double>(0.0, 0.0))
      throw std::domain_error("alignment: reference module signal is zero");
    return m;
  }
  throw std::domain_error("alignment: no active module");
}

}  // namespace

std::vector<Eigen::VectorXcd> align_phases_continuous(const std::vector<std::complex<double>>& signals,
                                                      const std::vector<Eigen::VectorXcd>& weights) {
  const std::size_t ref =
      reference_module(signals, weights, [](const Eigen::VectorXcd& w) { return !w.isZero(0.0); });
  const double ref_phase = std::arg(signals[ref]);
  std::vector<Eigen::VectorXcd> out = weights;
  for (std::size_t m = 0; m < out.size(); ++m) {
    if (m == ref || signals[m] == std::complex<double>(0.0, 0.0)) continue;
    // Rotating the weights by +d rotates w^H h by -d.
    out[m] *= std::polar(1.0, std::arg(signals[m]) - ref_phase);
  }
  return out;
}

std::vector<BeamVector> align_phases_quantized(const std::vector<std::complex<double>>& signals,
                                               const std::vector<BeamVector>& beams,
                                               const PhaseCodebook& codebook) {
  const std::size_t ref = reference_module(signals, beams, [](const BeamVector& b) { return b.active_count() > 0; });
  const double ref_phase = std::arg(signals[ref]);
  const int levels = codebook.levels();
  std::vector<BeamVector> out = beams;
  for (std::size_t m = 0; m < out.size(); ++m) {
    if (out[m].bits != codebook.bits) throw std::invalid_argument("alignment: beam resolution mismatch");
    if (m == ref || signals[m] == std::complex<double>(0.0, 0.0)) continue;
    const int shift = quantize_phase(std::arg(signals[m]) - ref_phase, codebook);
    for (auto& k : out[m].indices)
      if (k >= 0) k = (k + shift) % levels;
  }
  return out;
}

FusionResult fuse(const std::vector<BeamVector>& aligned, const ChannelVector& full_channel,
                  const SignalModel& sig) {
  if (aligned.empty()) throw std::invalid_argument("fuse: no module vectors");
  Eigen::Index total = 0;
  for (const auto& b : aligned) {
    if (b.bits != aligned.front().bits) throw std::invalid_argument("fuse: mixed phase resolutions");
    total += b.size();
  }
  if (total != full_channel.size())
    throw std::invalid_argument("fuse: concatenated length " + std::to_string(total) + " != channel length " +
                                std::to_string(full_channel.size()));
  FusionResult r;
  r.modules = aligned;
  r.full = BeamVector(aligned.front().bits, Eigen::VectorXi(total));
  Eigen::Index at = 0;
  for (const auto& b : aligned) {
    r.full.indices.segment(at, b.size()) = b.indices;
    at += b.size();
  }
  r.fused_power = received_power(r.full, full_channel, sig);
  return r;
}

Eigen::VectorXcd fuse_continuous(const std::vector<Eigen::VectorXcd>& aligned) {
  Eigen::Index total = 0;
  for (const auto& w : aligned) total += w.size();
  Eigen::VectorXcd full(total);
  Eigen::Index at = 0;
  for (const auto& w : aligned) {
    full.segment(at, w.size()) = w;
    at += w.size();
  }
  const auto active = (full.array() != std::complex<double>(0.0, 0.0)).count();
  if (active == 0) throw std::invalid_argument("fuse_continuous: every element is off");
  return full / std::sqrt(static_cast<double>(active));
}

const char* to_string(RunMode mode) {
  switch (mode) {
    case RunMode::Oracle:
      return "oracle";
    case RunMode::Train:
      return "train";
    case RunMode::Compare:
      return "compare";
  }
  return "unknown";
}

PlaneSpec focal_plane(const ExperimentConfig& config) {
  const ArrayLayout layout = config.layout();
  PlaneSpec p;
  p.center = config.ue();
  p.u_axis = layout.row_axis.normalized();
  p.v_axis = config.map.plane == PlaneKind::Horizontal ? layout.normal.normalized() : layout.up_axis();
  p.n_u = config.map.points;
  p.n_v = config.map.points;
  p.spacing = config.map.spacing();
  return p;
}

std::string beam_json(const BeamVector& beam) {
  ordered_json doc;
  doc["bits"] = beam.bits;
  doc["indices"] = std::vector<int>(beam.indices.data(), beam.indices.data() + beam.indices.size());
  return doc.dump() + "\n";
}

BeamVector parse_beam_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("beam file: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("bits") || !doc.contains("indices") || !doc["indices"].is_array())
    throw std::invalid_argument("beam file: expected {\"bits\": r, \"indices\": [...]}");
  const PhaseCodebook codebook(doc["bits"].get<int>());
  const auto idx = doc["indices"].get<std::vector<int>>();
  BeamVector b(codebook.bits, Eigen::Map<const Eigen::VectorXi>(idx.data(), static_cast<Eigen::Index>(idx.size())));
  for (int k : idx)
    if (k < -1 || k >= codebook.levels())
      throw std::invalid_argument("beam file: index " + std::to_string(k) + " outside the codebook");
  return b;
}

namespace {

struct Scene {
  ArrayLayout layout;
  ChannelParams params;
  RoomEnv room;
  SignalModel signal;
  PhaseCodebook codebook{1};
  Vec3 ue;
  std::vector<int> active;
  ChannelVector full_channel;
  std::vector<ModuleProblem> problems;  // active modules only
};

Scene build_scene(const ExperimentConfig& config) {
  Scene s;
  s.layout = config.layout();
  s.params = config.channel_params();
  s.room = config.room;
  s.signal = config.signal;
  s.codebook = config.codebook();
  s.ue = config.ue();
  check_zone(s.ue, s.layout, config.wavelength(), config.zone_policy);
  if (config.zone_policy == ZonePolicy::Extended) {
    s.active = effective_module_set(s.ue, s.layout, config.wavelength());
  } else {
    s.active.resize(static_cast<std::size_t>(s.layout.module_count()));
    std::iota(s.active.begin(), s.active.end(), 0);
  }
  s.full_channel = effective_channel(s.ue, s.layout, s.room, s.params);
  const int n = s.layout.module_size();
  for (int m : s.active) {
    ModuleProblem p;
    p.module = m;
    p.channel = s.full_channel.segment(Eigen::Index{m} * n, n);
    p.target_power = received_power(quantized_oracle(p.channel, s.codebook), p.channel, s.signal);
    s.problems.push_back(std::move(p));
  }
  return s;
}

TrainOptions train_options(const ExperimentConfig& config, const Scene& scene, Variant variant) {
  TrainOptions o;
  o.codebook = scene.codebook;
  o.hyper = config.agent;
  o.variant = variant;
  o.signal = scene.signal;
  o.seed = config.seed;
  o.schedule = config.schedule;
  o.keep_powers = false;
  o.curve_dir = std::filesystem::path(config.output_dir) / "curves";
  return o;
}

// Matched-phase power of the active aperture, the ideal reference.
double continuous_target(const Scene& s) {
  const int n = s.layout.module_size();
  Eigen::VectorXcd w = Eigen::VectorXcd::Zero(s.full_channel.size());
  for (int m : s.active)
    for (int i = 0; i < n; ++i) {
      const Eigen::Index e = Eigen::Index{m} * n + i;
      w[e] = std::polar(1.0, std::arg(s.full_channel[e]));
    }
  const double active = static_cast<double>(s.active.size()) * n;
  return received_power(w / std::sqrt(active), s.full_channel, s.signal);
}

ordered_json vec_json(const Vec3& v) { return ordered_json::array({v.x(), v.y(), v.z()}); }

void write_comparison(const std::filesystem::path& path, const ModuleResult& td3, const ModuleResult& ddpg,
                      double target) {
  std::ostringstream os;
  os << "step,td3_power_frac,ddpg_power_frac\n";
  const std::size_t rows = std::max(td3.powers.size(), ddpg.powers.size());
  for (std::size_t i = 0; i < rows; ++i) {
    os << i << ',';
    if (i < td3.powers.size()) os << format_double(td3.powers[i] / target);
    os << ',';
    if (i < ddpg.powers.size()) os << format_double(ddpg.powers[i] / target);
    os << '\n';
  }
  write_text_file(path, os.str());
}

std::vector<std::complex<double>> module_outputs(const Scene& s, const std::vector<BeamVector>& beams) {
  const int n = s.layout.module_size();
  std::vector<std::complex<double>> signals(beams.size());
  for (int m : s.active)
    signals[static_cast<std::size_t>(m)] = module_output(
        beams[static_cast<std::size_t>(m)], s.full_channel.segment(Eigen::Index{m} * n, n), s.signal);
  return signals;
}

std::vector<BeamVector> inactive_beams(const Scene& s) {
  return std::vector<BeamVector>(static_cast<std::size_t>(s.layout.module_count()),
                                 BeamVector(s.codebook.bits, Eigen::VectorXi::Constant(s.layout.module_size(), -1)));
}

}  // namespace

FocalMap focal_map(const ExperimentConfig& config, const BeamVector& beam) {
  const ArrayLayout layout = config.layout();
  if (beam.size() != layout.element_count())
    throw std::invalid_argument("beam has " + std::to_string(beam.size()) + " elements, array has " +
                                std::to_string(layout.element_count()));
  FocalMap out;
  out.field = power_map(realize(beam), focal_plane(config), layout, config.room, config.channel_params(),
                        config.signal);
  out.metrics = bfr(out.field, config.ue(), config.map.bfr_eta);
  return out;
}

BeamVector oracle_beam(const ExperimentConfig& config) {
  const Scene scene = build_scene(config);
  auto beams = inactive_beams(scene);
  for (const auto& p : scene.problems)
    beams[static_cast<std::size_t>(p.module)] = quantized_oracle(p.channel, scene.codebook);
  return fuse(align_phases_quantized(module_outputs(scene, beams), beams, scene.codebook), scene.full_channel,
              scene.signal)
      .full;
}

ExperimentReport run_experiment(const ExperimentConfig& config, RunMode mode) {
  config.validate();
  const Scene scene = build_scene(config);
  const std::filesystem::path out(config.output_dir);
  std::filesystem::create_directories(out);
  ExperimentReport report;

  ordered_json summary;
  summary["mode"] = to_string(mode);
  summary["config_hash"] = config_hash(config);
  summary["seed"] = config.seed;
  summary["bits"] = config.bits;
  summary["ue_xyz"] = vec_json(scene.ue);
  summary["active_modules"] = scene.active;

  if (mode == RunMode::Compare) {
    // Both variants on the first active module, sharing seed and budget.
    const ModuleProblem& problem = scene.problems.front();
    ordered_json variants = ordered_json::object();
    std::array<ModuleResult, 2> results;
    for (Variant v : {Variant::TD3, Variant::DDPG}) {
      TrainOptions o = train_options(config, scene, v);
      o.keep_powers = true;
      o.curve_prefix = std::string(to_string(v)) + "_module_";
      auto r = train_all({problem}, o).front();
      variants[to_string(v)] = {{"best_power_w", r.best_power},
                                {"final_power_w", r.final_power},
                                {"best_frac_of_target", r.best_power / problem.target_power},
                                {"final_frac_of_target", r.final_power / problem.target_power},
                                {"steps", r.steps},
                                {"converged", r.converged}};
      report.artifacts.push_back("curves/" + o.curve_prefix + std::to_string(problem.module) + ".csv");
      results[v == Variant::TD3 ? 0 : 1] = std::move(r);
    }
    write_comparison(out / "comparison.csv", results[0], results[1], problem.target_power);
    report.artifacts.push_back("comparison.csv");
    summary["module"] = problem.module;
    summary["target_power_w"] = problem.target_power;
    summary["variants"] = variants;
    report.target_power = problem.target_power;
    report.summary_json = summary.dump(2) + "\n";
    write_text_file(out / "summary.json", report.summary_json);
    report.artifacts.push_back("summary.json");
    return report;
  }

  std::vector<BeamVector> beams = inactive_beams(scene);
  ordered_json modules = ordered_json::array();
  if (mode == RunMode::Oracle) {
    for (const auto& p : scene.problems) {
      beams[static_cast<std::size_t>(p.module)] = quantized_oracle(p.channel, scene.codebook);
      modules.push_back({{"module", p.module}, {"best_power_w", p.target_power}, {"target_power_w", p.target_power}});
    }
  } else {
    const TrainOptions o = train_options(config, scene, config.variant);
    const auto results = train_all(scene.problems, o);
    for (std::size_t i = 0; i < results.size(); ++i) {
      const auto& r = results[i];
      beams[static_cast<std::size_t>(r.module)] = r.best;
      modules.push_back({{"module", r.module},
                         {"best_power_w", r.best_power},
                         {"target_power_w", scene.problems[i].target_power},
                         {"final_power_w", r.final_power},
                         {"steps", r.steps},
                         {"converged", r.converged}});
      report.artifacts.push_back("curves/module_" + std::to_string(r.module) + ".csv");
    }
    summary["variant"] = to_string(config.variant);
  }

  const auto aligned = align_phases_quantized(module_outputs(scene, beams), beams, scene.codebook);
  const FusionResult fusion = fuse(aligned, scene.full_channel, scene.signal);

  const auto [field, metrics] = focal_map(config, fusion.full);
  std::ostringstream csv;
  write_field_csv(csv, field);
  write_text_file(out / "maps" / "focal_plane.csv", csv.str());
  write_text_file(out / "beam.json", beam_json(fusion.full));
  report.artifacts.push_back("maps/focal_plane.csv");
  report.artifacts.push_back("beam.json");

  report.fused_power = fusion.fused_power;
  report.target_power = continuous_target(scene);
  report.bfr = metrics.bfr;
  summary["modules"] = modules;
  summary["fused_power_w"] = fusion.fused_power;
  summary["target_power_w"] = report.target_power;
  summary["power_fraction"] = fusion.fused_power / report.target_power;
  summary["bfr_m"] = metrics.bfr;
  summary["bfr_eta"] = metrics.eta;
  summary["map_plane"] = to_string(config.map.plane);
  summary["peak_power_w"] = metrics.peak_power;
  summary["peak_xyz"] = vec_json(metrics.peak_location);
  report.summary_json = summary.dump(2) + "\n";
  write_text_file(out / "summary.json", report.summary_json);
  report.artifacts.push_back("summary.json");
  return report;
}

}  // namespace sbf

#include "checks.hpp"

#include "sbf/config.hpp"
#include "sbf/io.hpp"
#include "sbf/knn.hpp"
#include "sbf/orchestrator.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::int64_t> max_steps;
  std::string variant;
  std::string parallel;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "JSON config file (defaults when omitted)");
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--max-steps", f.max_steps, "training step budget per module");
  cmd->add_option("--variant", f.variant, "td3|ddpg")->check(CLI::IsMember({"td3", "ddpg"}));
  cmd->add_option("--parallel", f.parallel, "on|off")->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--override", f.overrides, "dotted KEY=VALUE config override (repeatable)");
}

sbf::ExperimentConfig resolve_config(const CommonFlags& f) {
  std::vector<std::string> overrides = f.overrides;
  if (f.seed) overrides.push_back("seed=" + std::to_string(*f.seed));
  if (!f.out.empty()) overrides.push_back("output_dir=" + nlohmann::json(f.out).dump());
  if (f.max_steps) overrides.push_back("schedule.max_steps=" + std::to_string(*f.max_steps));
  if (!f.variant.empty()) overrides.push_back("agent.variant=\"" + f.variant + "\"");
  if (!f.parallel.empty()) overrides.push_back(std::string("schedule.parallel=") + (f.parallel == "on" ? "true" : "false"));
  return f.config.empty() ? sbf::parse_config("", overrides) : sbf::load_config(f.config, overrides);
}

class ManifestWriter {
 public:
  ManifestWriter(std::string command, const sbf::ExperimentConfig& config)
      : config_(config), start_(std::chrono::steady_clock::now()) {
    m_.command = std::move(command);
    m_.config_hash = sbf::config_hash(config);
    m_.code_version = sbf::kCodeVersion;
    m_.seed = config.seed;
    m_.started_utc = sbf::utc_timestamp();
    m_.canonical_config = sbf::canonical_dump(config);
  }

  void finish(std::vector<std::string> artifacts) {
    m_.finished_utc = sbf::utc_timestamp();
    m_.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    m_.artifacts = std::move(artifacts);
    m_.artifacts.push_back("manifest.json");
    sbf::write_text_file(std::filesystem::path(config_.output_dir) / "manifest.json", m_.to_json());
  }

 private:
  sbf::ExperimentConfig config_;
  std::chrono::steady_clock::time_point start_;
  sbf::RunManifest m_;
};

std::string joined(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) s += (i ? " " : "") + std::string(argv[i]);
  return s;
}

void run_pipeline(const CommonFlags& f, sbf::RunMode mode, const std::string& command) {
  const auto config = resolve_config(f);
  ManifestWriter manifest(command, config);
  const auto report = sbf::run_experiment(config, mode);
  manifest.finish(report.artifacts);
  std::cout << report.summary_json;
}

std::vector<int> parse_index_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    const int v = std::stoi(item, &used);
    if (used != item.size()) throw std::invalid_argument("bad index '" + item + "' in --center");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("--center needs at least one index");
  return out;
}

int fail(const char* kind, const std::string& message, int code) {
  std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Training churns through same-sized temporaries of a few hundred KB; keep
  // them on the heap instead of mapping and unmapping pages every step.
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 128 << 20);
#endif
  CLI::App app{"Sub-array beam focusing simulator: oracle fusion, TD3/DDPG training, focal maps"};
  app.require_subcommand(1);
  const std::string command = joined(argc, argv);

  CommonFlags oracle_f, train_f, compare_f, map_f, bfr_f, knn_f;
  auto* oracle = app.add_subcommand("oracle", "perfect-CSI quantized beams per module, fused, with maps");
  add_common(oracle, oracle_f);
  auto* train = app.add_subcommand("train", "train one agent per active module, then align and fuse");
  add_common(train, train_f);
  auto* compare = app.add_subcommand("compare", "TD3 vs DDPG on the first active module");
  add_common(compare, compare_f);

  auto* map = app.add_subcommand("map", "focal-plane power field for a saved or oracle beam");
  add_common(map, map_f);
  std::string beam_path;
  map->add_option("--beam", beam_path, "beam.json (oracle beam when omitted)");

  auto* bfr = app.add_subcommand("bfr", "focus radius from a saved focal-plane CSV");
  add_common(bfr, bfr_f);
  std::string map_path;
  std::optional<double> eta;
  bfr->add_option("--map", map_path, "focal_plane.csv")->required();
  bfr->add_option("--eta", eta, "enclosed power fraction in (0, 1]");

  auto* knn_cmd = app.add_subcommand("knn-dump", "print lattice neighbors of a beam as JSON lines");
  add_common(knn_cmd, knn_f);
  std::string center_text;
  int k = 8;
  bool wrap = false;
  knn_cmd->add_option("--center", center_text, "comma-separated phase indices")->required();
  knn_cmd->add_option("--k", k, "neighbor count");
  knn_cmd->add_flag("--wrap", wrap, "allow steps across the codebook ends");

  auto* check = app.add_subcommand("check", "run the built-in invariant checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (*oracle) {
      run_pipeline(oracle_f, sbf::RunMode::Oracle, command);
    } else if (*train) {
      run_pipeline(train_f, sbf::RunMode::Train, command);
    } else if (*compare) {
      run_pipeline(compare_f, sbf::RunMode::Compare, command);
    } else if (*map) {
      const auto config = resolve_config(map_f);
      ManifestWriter manifest(command, config);
      const sbf::BeamVector beam =
          beam_path.empty() ? sbf::oracle_beam(config) : sbf::parse_beam_json(sbf::read_text_file(beam_path));
      const auto result = sbf::focal_map(config, beam);
      std::ostringstream csv;
      sbf::write_field_csv(csv, result.field);
      const std::filesystem::path out(config.output_dir);
      sbf::write_text_file(out / "maps" / "focal_plane.csv", csv.str());
      const std::string metrics = sbf::focus_metrics_json(result.metrics);
      sbf::write_text_file(out / "focus.json", metrics);
      manifest.finish({"maps/focal_plane.csv", "focus.json"});
      std::cout << metrics;
    } else if (*bfr) {
      const auto config = resolve_config(bfr_f);
      ManifestWriter manifest(command, config);
      std::ifstream in(map_path);
      if (!in) throw std::runtime_error("cannot open " + map_path);
      const auto samples = sbf::read_field_csv(in);
      const auto metrics = sbf::bfr_samples(samples.points, samples.values, config.ue(),
                                            eta ? *eta : config.map.bfr_eta);
      const std::string text = sbf::focus_metrics_json(metrics);
      sbf::write_text_file(std::filesystem::path(config.output_dir) / "bfr.json", text);
      manifest.finish({"bfr.json"});
      std::cout << text;
    } else if (*knn_cmd) {
      const auto config = resolve_config(knn_f);
      const auto idx = parse_index_list(center_text);
      const sbf::BeamVector center(config.bits,
                                   Eigen::Map<const Eigen::VectorXi>(idx.data(), static_cast<Eigen::Index>(idx.size())));
      const auto codebook = config.codebook();
      for (int v : idx)
        if (v < 0 || v >= codebook.levels())
          throw std::invalid_argument("--center index " + std::to_string(v) + " outside the codebook");
      const auto list = sbf::knn(center, k, codebook, sbf::derive_seed(config.seed, sbf::StreamId::Knn, 0), {wrap});
      for (const auto& n : list.items)
        std::cout << nlohmann::json{{"level", n.level},
                                    {"indices", std::vector<int>(n.beam.indices.begin(), n.beam.indices.end())}}
                         .dump()
                  << '\n';
      std::cout << nlohmann::json{{"exhausted", list.exhausted}, {"coord_ops", list.coord_ops}}.dump() << '\n';
    } else if (*check) {
      const int failures = run_checks(std::cout);
      if (failures) return fail("check", std::to_string(failures) + " invariant check(s) failed", 1);
    }
  } catch (const std::domain_error& e) {
    return fail("domain", e.what(), 3);
  } catch (const std::invalid_argument& e) {
    return fail("invalid_argument", e.what(), 2);
  } catch (const std::exception& e) {
    return fail("runtime", e.what(), 1);
  }
  return 0;
}

#include "sbf/config.hpp"

#include "sbf/io.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <ctime>
#include <set>
#include <stdexcept>

namespace sbf {

using nlohmann::json;

void TrainingSchedule::validate() const {
  if (max_steps < 1) throw std::invalid_argument("schedule.max_steps must be >= 1");
  if (window < 1 || window >= max_steps)
    throw std::invalid_argument("schedule.window must lie in [1, max_steps)");
  if (!(threshold >= 0.0)) throw std::invalid_argument("schedule.threshold must be >= 0");
}

const char* to_string(PlaneKind kind) {
  return kind == PlaneKind::Horizontal ? "horizontal" : "transverse";
}

PlaneKind plane_kind_from_string(const std::string& name) {
  if (name == "horizontal") return PlaneKind::Horizontal;
  if (name == "transverse") return PlaneKind::Transverse;
  throw std::invalid_argument("map.plane must be horizontal or transverse, got '" + name + "'");
}

void MapSettings::validate() const {
  if (points < 2) throw std::invalid_argument("map.points must be >= 2");
  if (!(extent > 0.0)) throw std::invalid_argument("map.extent must be positive");
  if (!(bfr_eta > 0.0 && bfr_eta <= 1.0)) throw std::invalid_argument("map.bfr_eta must lie in (0, 1]");
}

ArrayLayout ExperimentConfig::layout() const {
  return make_layout(array.module_rows, array.module_cols, array.sub_rows, array.sub_cols,
                     array.spacing_wavelengths * wavelength(), array.origin);
}

ChannelParams ExperimentConfig::channel_params() const {
  ChannelParams p = channel;
  p.wavelength = wavelength();
  return p;
}

Vec3 ExperimentConfig::ue() const {
  return {ue_x ? *ue_x : aperture_center(layout()).x(), ue_y, ue_z};
}

void ExperimentConfig::validate() const {
  if (!(frequency_hz > 0.0) || !std::isfinite(frequency_hz))
    throw std::invalid_argument("frequency_hz must be positive");
  if (array.module_rows < 1 || array.module_cols < 1 || array.sub_rows < 1 || array.sub_cols < 1)
    throw std::invalid_argument("array: module and sub-array counts must be >= 1");
  if (!(array.spacing_wavelengths > 0.0))
    throw std::invalid_argument("array.spacing_wavelengths must be positive");
  if (bits < 1) throw std::invalid_argument("r must be >= 1");
  if (bits > 16) throw std::invalid_argument("bits must be <= 16");
  layout().validate();
  room.validate();
  channel_params().validate();
  signal.validate();
  agent.validate();
  schedule.validate();
  map.validate();
  if (room.enabled && !room.contains(ue())) throw std::invalid_argument("ue: position lies outside the room");
  check_zone(ue(), layout(), wavelength(), zone_policy);
}

namespace {

// Walks one JSON object, remembering which keys were consumed so leftovers
// can be reported as unknown.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw std::invalid_argument(where() + " must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    const json* v = find(key);
    if (!v) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v->is_boolean()) throw std::invalid_argument("expected true or false");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v->is_number_integer()) throw std::invalid_argument("expected an integer");
        if (std::is_unsigned_v<T> && v->is_number_integer() && !v->is_number_unsigned())
          throw std::invalid_argument("expected a non-negative integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v->is_number()) throw std::invalid_argument("expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v->is_string()) throw std::invalid_argument("expected a string");
      }
      out = v->get<T>();
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(field(key) + ": " + e.what());
    } catch (const json::exception& e) {
      throw std::invalid_argument(field(key) + ": " + e.what());
    }
  }

  void read_optional(const char* key, std::optional<double>& out) {
    const json* v = find(key);
    if (!v) return;
    if (v->is_null()) {
      out.reset();
      return;
    }
    double x = 0;
    read(key, x);
    out = x;
  }

  template <std::size_t N>
  void read_array(const char* key, std::array<double, N>& out, bool allow_scalar) {
    const json* v = find(key);
    if (!v) return;
    if (allow_scalar && v->is_number()) {
      out.fill(v->get<double>());
      return;
    }
    if (!v->is_array() || v->size() != N)
      throw std::invalid_argument(field(key) + ": expected an array of " + std::to_string(N) + " numbers");
    for (std::size_t i = 0; i < N; ++i) {
      if (!(*v)[i].is_number()) throw std::invalid_argument(field(key) + ": expected numbers");
      out[i] = (*v)[i].get<double>();
    }
  }

  void read_vec3(const char* key, Vec3& out) {
    std::array<double, 3> a{out.x(), out.y(), out.z()};
    read_array(key, a, false);
    out = Vec3(a[0], a[1], a[2]);
  }

  template <typename Fn>
  void read_enum(const char* key, Fn&& convert) {
    std::string s;
    const json* v = find(key);
    if (!v) return;
    read(key, s);
    try {
      convert(s);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(field(key) + ": " + e.what());
    }
  }

  std::optional<Section> child(const char* key) {
    const json* v = find(key);
    if (!v) return std::nullopt;
    return Section(*v, field(key));
  }

  void finish() const {
    for (const auto& [k, v] : node_.items())
      if (!seen_.count(k)) throw std::invalid_argument("unknown key '" + field(k) + "'");
  }

 private:
  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }
  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::invalid_argument("override '" + assignment + "' is not KEY=VALUE");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;  // bare words are strings
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw std::invalid_argument("override key '" + key + "' has an empty segment");
    if (!node->is_object()) throw std::invalid_argument("override key '" + key + "' descends into a value");
    if (dot == std::string::npos) {
      (*node)[part] = std::move(value);
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

ExperimentConfig from_json(const json& doc) {
  ExperimentConfig c;
  Section top(doc, "");
  top.read("frequency_hz", c.frequency_hz);
  top.read("bits", c.bits);
  top.read("seed", c.seed);
  top.read("output_dir", c.output_dir);
  top.read_enum("zone_policy", [&](const std::string& s) { c.zone_policy = zone_policy_from_string(s); });

  if (auto s = top.child("array")) {
    s->read("module_rows", c.array.module_rows);
    s->read("module_cols", c.array.module_cols);
    s->read("sub_rows", c.array.sub_rows);
    s->read("sub_cols", c.array.sub_cols);
    s->read("spacing_wavelengths", c.array.spacing_wavelengths);
    s->read_vec3("origin", c.array.origin);
    s->finish();
  }
  if (auto s = top.child("room")) {
    s->read_vec3("dimensions", c.room.dimensions);
    s->read_array("reflection", c.room.reflection, true);
    s->read_array("phase_shift", c.room.phase_shift, true);
    s->read("enabled", c.room.enabled);
    s->finish();
  }
  if (auto s = top.child("channel")) {
    s->read("path_loss_exponent", c.channel.path_loss_exponent);
    s->read("tx_gain", c.channel.tx_gain);
    s->read("rx_gain", c.channel.rx_gain);
    s->read("direct_phase_offset", c.channel.direct_phase_offset);
    s->finish();
  }
  if (auto s = top.child("signal")) {
    s->read("signal_power_w", c.signal.signal_power);
    s->read("noise_power_w", c.signal.noise_power);
    s->finish();
  }
  if (auto s = top.child("ue")) {
    s->read_optional("x", c.ue_x);
    s->read("y", c.ue_y);
    s->read("z", c.ue_z);
    s->finish();
  }
  if (auto s = top.child("agent")) {
    TD3Hyper& h = c.agent;
    s->read_enum("variant", [&](const std::string& v) { c.variant = variant_from_string(v); });
    s->read("gamma", h.gamma);
    s->read("tau", h.tau);
    s->read("batch_size", h.batch_size);
    s->read("actor_period", h.actor_period);
    s->read("target_period", h.target_period);
    s->read("explore_var", h.explore_var);
    s->read("explore_decay", h.explore_decay);
    s->read("explore_min", h.explore_min);
    s->read("target_var", h.target_var);
    s->read("target_decay", h.target_decay);
    s->read("target_min", h.target_min);
    s->read("knn_k", h.knn_k);
    s->read("knn_wrap", h.knn_wrap);
    s->read("buffer_capacity", h.buffer_capacity);
    s->read("actor_lr", h.actor_lr);
    s->read("critic_lr", h.critic_lr);
    s->read("actor_width", h.actor_width);
    s->read("critic_width", h.critic_width);
    s->finish();
  }
  if (auto s = top.child("schedule")) {
    s->read("max_steps", c.schedule.max_steps);
    s->read("window", c.schedule.window);
    s->read("threshold", c.schedule.threshold);
    s->read("parallel", c.schedule.parallel);
    s->finish();
  }
  if (auto s = top.child("map")) {
    s->read_enum("plane", [&](const std::string& v) { c.map.plane = plane_kind_from_string(v); });
    s->read("points", c.map.points);
    s->read("extent", c.map.extent);
    s->read("bfr_eta", c.map.bfr_eta);
    s->finish();
  }
  top.finish();
  return c;
}

json to_json(const ExperimentConfig& c, bool with_output_dir) {
  auto vec3 = [](const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); };
  const TD3Hyper& h = c.agent;
  json doc = {
      {"frequency_hz", c.frequency_hz},
      {"bits", c.bits},
      {"seed", c.seed},
      {"zone_policy", to_string(c.zone_policy)},
      {"array",
       {{"module_rows", c.array.module_rows},
        {"module_cols", c.array.module_cols},
        {"sub_rows", c.array.sub_rows},
        {"sub_cols", c.array.sub_cols},
        {"spacing_wavelengths", c.array.spacing_wavelengths},
        {"origin", vec3(c.array.origin)}}},
      {"room",
       {{"dimensions", vec3(c.room.dimensions)},
        {"reflection", c.room.reflection},
        {"phase_shift", c.room.phase_shift},
        {"enabled", c.room.enabled}}},
      {"channel",
       {{"path_loss_exponent", c.channel.path_loss_exponent},
        {"tx_gain", c.channel.tx_gain},
        {"rx_gain", c.channel.rx_gain},
        {"direct_phase_offset", c.channel.direct_phase_offset}}},
      {"signal", {{"signal_power_w", c.signal.signal_power}, {"noise_power_w", c.signal.noise_power}}},
      {"ue", {{"x", c.ue_x ? json(*c.ue_x) : json(nullptr)}, {"y", c.ue_y}, {"z", c.ue_z}}},
      {"agent",
       {{"variant", to_string(c.variant)},
        {"gamma", h.gamma},
        {"tau", h.tau},
        {"batch_size", h.batch_size},
        {"actor_period", h.actor_period},
        {"target_period", h.target_period},
        {"explore_var", h.explore_var},
        {"explore_decay", h.explore_decay},
        {"explore_min", h.explore_min},
        {"target_var", h.target_var},
        {"target_decay", h.target_decay},
        {"target_min", h.target_min},
        {"knn_k", h.knn_k},
        {"knn_wrap", h.knn_wrap},
        {"buffer_capacity", h.buffer_capacity},
        {"actor_lr", h.actor_lr},
        {"critic_lr", h.critic_lr},
        {"actor_width", h.actor_width},
        {"critic_width", h.critic_width}}},
      {"schedule",
       {{"max_steps", c.schedule.max_steps},
        {"window", c.schedule.window},
        {"threshold", c.schedule.threshold},
        {"parallel", c.schedule.parallel}}},
      {"map",
       {{"plane", to_string(c.map.plane)},
        {"points", c.map.points},
        {"extent", c.map.extent},
        {"bfr_eta", c.map.bfr_eta}}},
  };
  if (with_output_dir) doc["output_dir"] = c.output_dir;
  return doc;
}

std::string strip_exception_prefix(const std::string& what) {
  const auto close = what.find("] ");
  return what.rfind("[json.exception", 0) == 0 && close != std::string::npos ? what.substr(close + 2) : what;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
  json doc = json::object();
  if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
    try {
      doc = json::parse(text);
    } catch (const json::parse_error& e) {
      throw std::invalid_argument("config " + strip_exception_prefix(e.what()));
    }
  }
  for (const auto& o : overrides) apply_override(doc, o);
  ExperimentConfig c = from_json(doc);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  return parse_config(read_text_file(path), overrides);
}

std::string canonical_dump(const ExperimentConfig& config, bool with_output_dir) {
  return to_json(config, with_output_dir).dump(2) + "\n";
}

std::string config_hash(const ExperimentConfig& config) {
  return hex64(fnv1a64(canonical_dump(config, false)));
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json doc;
  doc["command"] = command;
  doc["config_hash"] = config_hash;
  doc["code_version"] = code_version;
  doc["seed"] = seed;
  doc["started_utc"] = started_utc;
  doc["finished_utc"] = finished_utc;
  doc["wall_time_s"] = wall_time_s;
  doc["artifacts"] = artifacts;
  doc["config"] = json::parse(canonical_config);
  return doc.dump(2) + "\n";
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace sbf

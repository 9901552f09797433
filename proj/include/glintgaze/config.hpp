#pragma once

// Run configuration: an INI file with sections [camera], [rig], [eye],
// [noise], [solver], [mapper], [run]. Unknown sections or keys are errors.
// Lengths take an optional mm, cm or m suffix and default to mm.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "glintgaze/cornea.hpp"
#include "glintgaze/error.hpp"
#include "glintgaze/eye_sim.hpp"
#include "glintgaze/gaze_mapper.hpp"
#include "glintgaze/raster.hpp"
#include "glintgaze/serialize.hpp"

namespace glintgaze {

enum class DetectionSource { Oracle, NoisyOracle, RasterClassical };
enum class MapperKind { Polynomial, Network };

inline std::string to_string(DetectionSource s) {
  switch (s) {
    case DetectionSource::Oracle: return "oracle";
    case DetectionSource::NoisyOracle: return "noisy-oracle";
    case DetectionSource::RasterClassical: return "raster-classical";
  }
  return "?";
}

inline DetectionSource detection_source_from_string(const std::string& s) {
  if (s == "oracle") return DetectionSource::Oracle;
  if (s == "noisy-oracle") return DetectionSource::NoisyOracle;
  if (s == "raster-classical") return DetectionSource::RasterClassical;
  throw Error(ErrorCode::Config, "unknown detection source '" + s + "'");
}

inline std::string to_string(MapperKind m) { return m == MapperKind::Polynomial ? "polynomial" : "network"; }

inline MapperKind mapper_kind_from_string(const std::string& s) {
  if (s == "polynomial") return MapperKind::Polynomial;
  if (s == "network") return MapperKind::Network;
  throw Error(ErrorCode::Config, "unknown mapper '" + s + "'");
}

/// One pipeline variant: where detections come from, how the cornea is
/// estimated and which mapper is calibrated.
struct Variant {
  std::string name = "custom";
  DetectionSource detection = DetectionSource::NoisyOracle;
  CorneaMode cornea_mode = CorneaMode::SvdLift;
  MapperKind mapper = MapperKind::Polynomial;
};

inline const std::vector<Variant>& variant_presets() {
  static const std::vector<Variant> presets{
      {"classical", DetectionSource::RasterClassical, CorneaMode::SvdLift, MapperKind::Polynomial},
      {"classical-deepmapper", DetectionSource::RasterClassical, CorneaMode::SvdLift, MapperKind::Network},
      {"svd-cornea-deepmapper", DetectionSource::NoisyOracle, CorneaMode::SvdLift, MapperKind::Network},
      {"opt-deepmapper", DetectionSource::NoisyOracle, CorneaMode::RefineLift, MapperKind::Network},
      {"direct-deepmapper", DetectionSource::NoisyOracle, CorneaMode::RawLift, MapperKind::Network},
      {"svd-cornea-poly", DetectionSource::NoisyOracle, CorneaMode::SvdLift, MapperKind::Polynomial},
      {"opt-poly", DetectionSource::NoisyOracle, CorneaMode::RefineLift, MapperKind::Polynomial},
      {"direct-poly", DetectionSource::NoisyOracle, CorneaMode::RawLift, MapperKind::Polynomial},
      {"oracle-poly", DetectionSource::Oracle, CorneaMode::SvdLift, MapperKind::Polynomial},
  };
  return presets;
}

struct RunConfig {
  SimulationSetup sim;
  int subjects = 20;
  DetectionSource detection = DetectionSource::NoisyOracle;
  CorneaSolverConfig solver;
  DetectConfig detect;
  RenderConfig render;
  MapperKind mapper = MapperKind::Polynomial;
  NetTrainingConfig net;
  std::vector<std::string> variants;  // preset names; empty runs the fields above as "custom"
  int workers = 1;
  double histogram_bin_arcmin = 5.0;

  RunConfig() {
    sim.protocol.frames_per_target = 10;
    sim.noise.keypoint_sigma = 0.5;
  }

  std::uint64_t seed() const { return sim.noise.seed; }
  void set_seed(std::uint64_t s) { sim.noise.seed = s; }

  void validate() const;
};

inline Variant resolve_variant(const RunConfig& cfg, const std::string& name) {
  if (name == "custom") return {"custom", cfg.detection, cfg.solver.mode, cfg.mapper};
  for (const auto& v : variant_presets()) {
    if (v.name == name) return v;
  }
  throw Error(ErrorCode::Config, "unknown variant '" + name + "'");
}

inline std::vector<Variant> resolve_variants(const RunConfig& cfg) {
  std::vector<Variant> out;
  if (cfg.variants.empty()) {
    out.push_back(resolve_variant(cfg, "custom"));
  } else {
    for (const auto& n : cfg.variants) out.push_back(resolve_variant(cfg, n));
  }
  return out;
}

inline void RunConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::Config, msg); };
  try {
    sim.camera.validate();
    sim.rig.validate();
  } catch (const Error& e) {
    fail(e.what());
  }
  if (subjects < 1) fail("run.subjects must be at least 1");
  if (sim.protocol.frames_per_target < 1) fail("run.frames_per_target must be at least 1");
  if (workers < 1) fail("run.workers must be at least 1");
  if (!(histogram_bin_arcmin > 0.0)) fail("run.histogram_bin_arcmin must be positive");
  if (sim.protocol.depths_m.empty()) fail("run.depths_m is empty");
  bool has_calib = false;
  for (double d : sim.protocol.depths_m) {
    if (!(d > 0.0)) fail("run.depths_m entries must be positive");
    if (std::abs(d - sim.protocol.calibration_depth_m) < 1e-12) has_calib = true;
  }
  if (!has_calib) fail("run.calibration_depth_m is not one of run.depths_m");
  if (sim.noise.keypoint_sigma < 0.0 || sim.noise.cornea_sigma < 0.0) fail("noise sigmas must be non-negative");
  if (sim.noise.glint_dropout_prob < 0.0 || sim.noise.glint_dropout_prob > 1.0) fail("noise.glint_dropout must lie in [0, 1]");
  if (sim.noise.distractor_count_mean < 0.0) fail("noise.distractor_mean must be non-negative");
  const auto& a = sim.subjects.anatomy;
  if (!(a.cornea_radius > 0.0) || !(a.eyeball_to_cornea >= 0.0) || !(a.pupil_radius > 0.0) || !(a.iris_radius > a.pupil_radius)) {
    fail("eye anatomy lengths are inconsistent");
  }
  const auto& l = solver.lift;
  if (!(l.radius > 0.0) || !(l.z_step > 0.0) || !(l.z_max > l.z_min)) fail("solver lift range is invalid");
  if (solver.refinement.steps < 0 || !(solver.refinement.step_size > 0.0) || solver.refinement.tether_weight < 0.0) {
    fail("solver refinement settings are invalid");
  }
  if (net.iterations < 0 || !(net.learning_rate > 0.0) || net.hidden.empty()) fail("mapper network settings are invalid");
  for (int h : net.hidden) {
    if (h < 1) fail("mapper.hidden widths must be positive");
  }
  for (const auto& name : variants) resolve_variant(*this, name);
}

// ---------------------------------------------------------------------------
// Value parsing.

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline double parse_number(const std::string& raw, const std::string& key, std::string* rest = nullptr) {
  const std::string s = trim(raw);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr == s.data()) throw Error(ErrorCode::Config, key + ": expected a number, got '" + s + "'");
  const std::string tail = trim(std::string(ptr, s.data() + s.size()));
  if (rest) {
    *rest = tail;
  } else if (!tail.empty()) {
    throw Error(ErrorCode::Config, key + ": unexpected trailing text '" + tail + "'");
  }
  return v;
}

inline double parse_length_mm(const std::string& raw, const std::string& key) {
  std::string unit;
  const double v = parse_number(raw, key, &unit);
  if (unit.empty() || unit == "mm") return v;
  if (unit == "cm") return v * 10.0;
  if (unit == "m") return v * 1000.0;
  throw Error(ErrorCode::Config, key + ": unknown length unit '" + unit + "'");
}

inline std::int64_t parse_integer(const std::string& raw, const std::string& key) {
  const std::string s = trim(raw);
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw Error(ErrorCode::Config, key + ": expected an integer, got '" + s + "'");
  }
  return v;
}

inline std::uint64_t parse_u64(const std::string& raw, const std::string& key) {
  const std::string s = trim(raw);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw Error(ErrorCode::Config, key + ": expected an unsigned integer, got '" + s + "'");
  }
  return v;
}

inline bool parse_bool(const std::string& raw, const std::string& key) {
  const std::string s = trim(raw);
  if (s == "true" || s == "on" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "off" || s == "no" || s == "0") return false;
  throw Error(ErrorCode::Config, key + ": expected a boolean, got '" + s + "'");
}

inline Vec3 parse_length_vec3(const std::string& raw, const std::string& key) {
  const auto parts = split(raw, ',');
  if (parts.size() != 3) throw Error(ErrorCode::Config, key + ": expected three comma-separated lengths");
  return {parse_length_mm(parts[0], key), parse_length_mm(parts[1], key), parse_length_mm(parts[2], key)};
}

inline Vec3 parse_vec3(const std::string& raw, const std::string& key) {
  const auto parts = split(raw, ',');
  if (parts.size() != 3) throw Error(ErrorCode::Config, key + ": expected three comma-separated numbers");
  return {parse_number(parts[0], key), parse_number(parts[1], key), parse_number(parts[2], key)};
}

inline int parse_int(const std::string& raw, const std::string& key) {
  const auto v = parse_integer(raw, key);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw Error(ErrorCode::Config, key + ": integer out of range");
  }
  return static_cast<int>(v);
}

}  // namespace detail

/// Applies one INI document to `cfg`.
inline void apply_ini(RunConfig& cfg, const boost::property_tree::ptree& tree) {
  using Setter = std::function<void(const std::string&, const std::string&)>;
  using Section = std::map<std::string, Setter>;
  using namespace detail;

  bool explicit_cx = false, explicit_cy = false;
  std::optional<double> rig_side, rig_z;
  auto& cam = cfg.sim.camera;
  auto& anat = cfg.sim.subjects.anatomy;
  auto& ranges = cfg.sim.subjects;
  auto& noise = cfg.sim.noise;
  auto& proto = cfg.sim.protocol;
  auto& ref = cfg.solver.refinement;
  auto& lift = cfg.solver.lift;
  auto& det = cfg.detect;

  const std::map<std::string, Section> sections{
      {"camera",
       {{"focal_px", [&](auto& k, auto& v) { cam.focal_px = parse_number(v, k); }},
        {"cx", [&](auto& k, auto& v) { cam.principal.u = parse_number(v, k); explicit_cx = true; }},
        {"cy", [&](auto& k, auto& v) { cam.principal.v = parse_number(v, k); explicit_cy = true; }},
        {"width", [&](auto& k, auto& v) { cam.width = parse_int(v, k); }},
        {"height", [&](auto& k, auto& v) { cam.height = parse_int(v, k); }}}},
      {"rig",
       {{"side", [&](auto& k, auto& v) { rig_side = parse_length_mm(v, k); }},
        {"z", [&](auto& k, auto& v) { rig_z = parse_length_mm(v, k); }},
        {"leds",
         [&](auto& k, auto& v) {
           cfg.sim.rig.leds.clear();
           for (const auto& p : split(v, ';')) {
             if (!p.empty()) cfg.sim.rig.leds.push_back(parse_length_vec3(p, k));
           }
         }}}},
      {"eye",
       {{"cornea_radius", [&](auto& k, auto& v) { anat.cornea_radius = parse_length_mm(v, k); }},
        {"eyeball_to_cornea", [&](auto& k, auto& v) { anat.eyeball_to_cornea = parse_length_mm(v, k); }},
        {"pupil_radius", [&](auto& k, auto& v) { anat.pupil_radius = parse_length_mm(v, k); }},
        {"iris_radius", [&](auto& k, auto& v) { anat.iris_radius = parse_length_mm(v, k); }},
        {"eyeball_radius", [&](auto& k, auto& v) { anat.eyeball_radius = parse_length_mm(v, k); }},
        {"pupil_placement",
         [&](auto& k, auto& v) {
           const auto s = trim(v);
           if (s == "on-cornea") {
             anat.pupil_placement = PupilPlacement::OnCornea;
           } else if (s == "anatomical") {
             anat.pupil_placement = PupilPlacement::Anatomical;
           } else {
             throw Error(ErrorCode::Config, k + ": expected on-cornea or anatomical");
           }
         }},
        {"anatomical_pupil_depth", [&](auto& k, auto& v) { anat.anatomical_pupil_depth = parse_length_mm(v, k); }},
        {"eyeball_center", [&](auto& k, auto& v) { ranges.nominal_eyeball_center = parse_length_vec3(v, k); }},
        {"eyeball_jitter", [&](auto& k, auto& v) { ranges.eyeball_jitter_mm = parse_length_vec3(v, k); }},
        {"kappa_h_deg", [&](auto& k, auto& v) { ranges.kappa_mean.horizontal_deg = parse_number(v, k); }},
        {"kappa_v_deg", [&](auto& k, auto& v) { ranges.kappa_mean.vertical_deg = parse_number(v, k); }},
        {"kappa_jitter_deg", [&](auto& k, auto& v) { ranges.kappa_jitter_deg = parse_number(v, k); }},
        {"cornea_radius_jitter", [&](auto& k, auto& v) { ranges.cornea_radius_jitter_mm = parse_length_mm(v, k); }}}},
      {"noise",
       {{"keypoint_sigma", [&](auto& k, auto& v) { noise.keypoint_sigma = parse_number(v, k); }},
        {"glint_dropout", [&](auto& k, auto& v) { noise.glint_dropout_prob = parse_number(v, k); }},
        {"distractor_mean", [&](auto& k, auto& v) { noise.distractor_count_mean = parse_number(v, k); }},
        {"cornea_sigma", [&](auto& k, auto& v) { noise.cornea_sigma = parse_number(v, k); }}}},
      {"solver",
       {{"cornea_mode", [&](auto&, auto& v) { cfg.solver.mode = cornea_mode_from_string(trim(v)); }},
        {"refine_steps", [&](auto& k, auto& v) { ref.steps = parse_int(v, k); }},
        {"refine_step_size", [&](auto& k, auto& v) { ref.step_size = parse_number(v, k); }},
        {"glint_freedom", [&](auto& k, auto& v) { ref.glint_freedom = parse_bool(v, k); }},
        {"tether_weight", [&](auto& k, auto& v) { ref.tether_weight = parse_number(v, k); }},
        {"lift_radius", [&](auto& k, auto& v) { lift.radius = parse_length_mm(v, k); }},
        {"lift_z_min", [&](auto& k, auto& v) { lift.z_min = parse_length_mm(v, k); }},
        {"lift_z_max", [&](auto& k, auto& v) { lift.z_max = parse_length_mm(v, k); }},
        {"lift_z_step", [&](auto& k, auto& v) { lift.z_step = parse_length_mm(v, k); }},
        {"lift_coarse_to_fine", [&](auto& k, auto& v) { lift.coarse_to_fine = parse_bool(v, k); }},
        {"lift_extent",
         [&](auto& k, auto& v) {
           const auto s = trim(v);
           if (s == "line") {
             lift.extent = RayExtent::Line;
           } else if (s == "half-line") {
             lift.extent = RayExtent::HalfLine;
           } else {
             throw Error(ErrorCode::Config, k + ": expected line or half-line");
           }
         }},
        {"detect_bright_fraction", [&](auto& k, auto& v) { det.bright_fraction = det.pupil.bright_fraction = parse_number(v, k); }},
        {"detect_blob_min_area", [&](auto& k, auto& v) { det.blobs.min_area = static_cast<std::size_t>(parse_u64(v, k)); }},
        {"detect_blob_max_area", [&](auto& k, auto& v) { det.blobs.max_area = static_cast<std::size_t>(parse_u64(v, k)); }},
        {"detect_pupil_dark_offset", [&](auto& k, auto& v) { det.pupil.dark_offset = parse_int(v, k); }},
        {"detect_pupil_min_area", [&](auto& k, auto& v) { det.pupil.min_area = static_cast<std::size_t>(parse_u64(v, k)); }},
        {"detect_glint_exclusion_px", [&](auto& k, auto& v) { det.pupil.glint_exclusion_px = parse_number(v, k); }},
        {"detect_absent_penalty_mm", [&](auto& k, auto& v) { det.labeling.absent_penalty_mm = parse_length_mm(v, k); }},
        {"detect_max_candidates", [&](auto& k, auto& v) { det.labeling.max_candidates = static_cast<std::size_t>(parse_u64(v, k)); }}}},
      {"mapper",
       {{"type", [&](auto&, auto& v) { cfg.mapper = mapper_kind_from_string(trim(v)); }},
        {"hidden",
         [&](auto& k, auto& v) {
           cfg.net.hidden.clear();
           for (const auto& p : split(v, ',')) cfg.net.hidden.push_back(parse_int(p, k));
         }},
        {"iterations", [&](auto& k, auto& v) { cfg.net.iterations = parse_int(v, k); }},
        {"learning_rate", [&](auto& k, auto& v) { cfg.net.learning_rate = parse_number(v, k); }},
        {"beta1", [&](auto& k, auto& v) { cfg.net.beta1 = parse_number(v, k); }},
        {"beta2", [&](auto& k, auto& v) { cfg.net.beta2 = parse_number(v, k); }},
        {"epsilon", [&](auto& k, auto& v) { cfg.net.epsilon = parse_number(v, k); }},
        {"seed", [&](auto& k, auto& v) { cfg.net.seed = parse_u64(v, k); }}}},
      {"run",
       {{"subjects", [&](auto& k, auto& v) { cfg.subjects = parse_int(v, k); }},
        {"frames_per_target", [&](auto& k, auto& v) { proto.frames_per_target = parse_int(v, k); }},
        {"seed", [&](auto& k, auto& v) { cfg.set_seed(parse_u64(v, k)); }},
        {"detection", [&](auto&, auto& v) { cfg.detection = detection_source_from_string(trim(v)); }},
        {"variants",
         [&](auto&, auto& v) {
           cfg.variants.clear();
           for (const auto& p : split(v, ',')) {
             if (!p.empty()) cfg.variants.push_back(p);
           }
         }},
        {"workers", [&](auto& k, auto& v) { cfg.workers = parse_int(v, k); }},
        {"histogram_bin_arcmin", [&](auto& k, auto& v) { cfg.histogram_bin_arcmin = parse_number(v, k); }},
        {"depths_m",
         [&](auto& k, auto& v) {
           proto.depths_m.clear();
           for (const auto& p : split(v, ',')) proto.depths_m.push_back(parse_number(p, k));
         }},
        {"calibration_depth_m", [&](auto& k, auto& v) { proto.calibration_depth_m = parse_number(v, k); }},
        {"near_grid_h_deg", [&](auto& k, auto& v) { proto.near_grid_h_deg = parse_number(v, k); }},
        {"near_grid_v_deg", [&](auto& k, auto& v) { proto.near_grid_v_deg = parse_number(v, k); }},
        {"far_grid_h_deg", [&](auto& k, auto& v) { proto.far_grid_h_deg = parse_number(v, k); }},
        {"far_grid_v_deg", [&](auto& k, auto& v) { proto.far_grid_v_deg = parse_number(v, k); }},
        {"far_grid_v_offset_deg", [&](auto& k, auto& v) { proto.far_grid_v_offset_deg = parse_number(v, k); }},
        {"far_from_m", [&](auto& k, auto& v) { proto.far_from_m = parse_number(v, k); }},
        {"viewpoint", [&](auto& k, auto& v) { proto.viewpoint = parse_length_vec3(v, k); }},
        {"device_rotation_deg",
         [&](auto& k, auto& v) {
           const Vec3 ypr = parse_vec3(v, k);
           proto.extrinsics = DeviceExtrinsics::from_euler_deg(ypr.x(), ypr.y(), ypr.z(), proto.extrinsics.translation);
         }},
        {"device_translation", [&](auto& k, auto& v) { proto.extrinsics.translation = parse_length_vec3(v, k); }}}},
  };

  for (const auto& [section_name, section] : tree) {
    if (section.data().size() > 0 && section.empty()) {
      throw Error(ErrorCode::Config, "key '" + section_name + "' outside of any section");
    }
    const auto it = sections.find(section_name);
    if (it == sections.end()) throw Error(ErrorCode::Config, "unknown section [" + section_name + "]");
    for (const auto& [key, value] : section) {
      const auto setter = it->second.find(key);
      if (setter == it->second.end()) {
        throw Error(ErrorCode::Config, "unknown key '" + key + "' in section [" + section_name + "]");
      }
      setter->second(section_name + "." + key, value.data());
    }
  }

  if (rig_side || rig_z) cfg.sim.rig = LedRig::square(rig_side.value_or(30.0), rig_z.value_or(0.0));
  if (!explicit_cx) cam.principal.u = cam.width / 2.0;
  if (!explicit_cy) cam.principal.v = cam.height / 2.0;
}

inline RunConfig parse_config_string(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(ErrorCode::Config, std::string("config syntax: ") + e.what());
  }
  RunConfig cfg;
  apply_ini(cfg, tree);
  cfg.validate();
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Config, "cannot open config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config_string(ss.str());
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Canonical form and hash.

inline Json config_to_json(const RunConfig& cfg) {
  const auto& cam = cfg.sim.camera;
  const auto& a = cfg.sim.subjects.anatomy;
  const auto& r = cfg.sim.subjects;
  const auto& n = cfg.sim.noise;
  const auto& p = cfg.sim.protocol;
  const auto& ref = cfg.solver.refinement;
  const auto& l = cfg.solver.lift;
  const auto& d = cfg.detect;
  Json leds = Json::array();
  for (const auto& led : cfg.sim.rig.leds) leds.push_back(to_json(led));
  Json rotation = Json::array();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) rotation.push_back(p.extrinsics.rotation(i, j));
  }
  return Json{
      {"camera", {{"focal_px", cam.focal_px}, {"cx", cam.principal.u}, {"cy", cam.principal.v}, {"width", cam.width}, {"height", cam.height}}},
      {"rig", {{"leds", leds}}},
      {"eye",
       {{"cornea_radius", a.cornea_radius},
        {"eyeball_to_cornea", a.eyeball_to_cornea},
        {"pupil_radius", a.pupil_radius},
        {"iris_radius", a.iris_radius},
        {"eyeball_radius", a.eyeball_radius},
        {"pupil_placement", a.pupil_placement == PupilPlacement::OnCornea ? "on-cornea" : "anatomical"},
        {"anatomical_pupil_depth", a.anatomical_pupil_depth},
        {"eyeball_center", to_json(r.nominal_eyeball_center)},
        {"eyeball_jitter", to_json(r.eyeball_jitter_mm)},
        {"kappa_h_deg", r.kappa_mean.horizontal_deg},
        {"kappa_v_deg", r.kappa_mean.vertical_deg},
        {"kappa_jitter_deg", r.kappa_jitter_deg},
        {"cornea_radius_jitter", r.cornea_radius_jitter_mm}}},
      {"noise",
       {{"keypoint_sigma", n.keypoint_sigma},
        {"glint_dropout", n.glint_dropout_prob},
        {"distractor_mean", n.distractor_count_mean},
        {"cornea_sigma", n.cornea_sigma}}},
      {"solver",
       {{"cornea_mode", to_string(cfg.solver.mode)},
        {"refine_steps", ref.steps},
        {"refine_step_size", ref.step_size},
        {"glint_freedom", ref.glint_freedom},
        {"tether_weight", ref.tether_weight},
        {"lift_radius", l.radius},
        {"lift_z_min", l.z_min},
        {"lift_z_max", l.z_max},
        {"lift_z_step", l.z_step},
        {"lift_coarse_to_fine", l.coarse_to_fine},
        {"lift_extent", l.extent == RayExtent::Line ? "line" : "half-line"},
        {"detect_bright_fraction", d.bright_fraction},
        {"detect_blob_min_area", d.blobs.min_area},
        {"detect_blob_max_area", d.blobs.max_area},
        {"detect_pupil_dark_offset", d.pupil.dark_offset},
        {"detect_pupil_min_area", d.pupil.min_area},
        {"detect_glint_exclusion_px", d.pupil.glint_exclusion_px},
        {"detect_absent_penalty_mm", d.labeling.absent_penalty_mm},
        {"detect_max_candidates", d.labeling.max_candidates}}},
      {"mapper",
       {{"type", to_string(cfg.mapper)},
        {"hidden", cfg.net.hidden},
        {"iterations", cfg.net.iterations},
        {"learning_rate", cfg.net.learning_rate},
        {"beta1", cfg.net.beta1},
        {"beta2", cfg.net.beta2},
        {"epsilon", cfg.net.epsilon},
        {"seed", cfg.net.seed}}},
      {"run",
       {{"subjects", cfg.subjects},
        {"frames_per_target", p.frames_per_target},
        {"seed", cfg.seed()},
        {"detection", to_string(cfg.detection)},
        {"variants", cfg.variants},
        {"histogram_bin_arcmin", cfg.histogram_bin_arcmin},
        {"depths_m", p.depths_m},
        {"calibration_depth_m", p.calibration_depth_m},
        {"near_grid_h_deg", p.near_grid_h_deg},
        {"near_grid_v_deg", p.near_grid_v_deg},
        {"far_grid_h_deg", p.far_grid_h_deg},
        {"far_grid_v_deg", p.far_grid_v_deg},
        {"far_grid_v_offset_deg", p.far_grid_v_offset_deg},
        {"far_from_m", p.far_from_m},
        {"viewpoint", to_json(p.viewpoint)},
        {"device_rotation", rotation},
        {"device_translation", to_json(p.extrinsics.translation)}}},
  };
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Hash of the canonical configuration. The worker count is excluded because
/// it does not affect results.
inline std::string config_hash(const RunConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(config_to_json(cfg).dump())));
  return buf;
}

/// Process exit code for an error escaping a CLI command.
inline int exit_code_for(ErrorCode code) { return code == ErrorCode::Config ? 1 : 2; }

}  // namespace glintgaze

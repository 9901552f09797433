#pragma once

// JSON encodings. Lengths are millimetres, angles degrees. Every top-level
// record carries "schema" and "version".

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "glintgaze/cornea.hpp"
#include "glintgaze/error.hpp"
#include "glintgaze/eye_sim.hpp"
#include "glintgaze/gaze_mapper.hpp"

namespace glintgaze {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

inline Json to_json(Point2 p) { return Json::array({p.u, p.v}); }
inline Json to_json(const Vec3& p) { return Json::array({p.x(), p.y(), p.z()}); }
inline Json to_json(const UnitVec3& p) { return to_json(p.vec()); }

inline Point2 point2_from_json(const Json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }
inline Vec3 vec3_from_json(const Json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

/// Stored unit vectors are kept bit-exact; anything else is normalized.
inline UnitVec3 unit_from_json(const Json& j) {
  const Vec3 v = vec3_from_json(j);
  if (std::abs(v.norm() - 1.0) < 1e-12) return UnitVec3::trusted(v);
  return UnitVec3(v);
}

inline Json glints_to_json(const std::vector<GlintObservation>& glints) {
  Json arr = Json::array();
  for (const auto& g : glints) {
    Json e{{"led", g.led}, {"present", g.present}};
    if (g.present) e["position"] = to_json(g.position);
    arr.push_back(std::move(e));
  }
  return arr;
}

inline std::vector<GlintObservation> glints_from_json(const Json& j) {
  std::vector<GlintObservation> out;
  for (const auto& e : j) {
    GlintObservation g;
    g.led = e.at("led").get<int>();
    g.present = e.at("present").get<bool>();
    if (g.present) g.position = point2_from_json(e.at("position"));
    out.push_back(g);
  }
  return out;
}

inline Json to_json(const FrameTruth& t) {
  return Json{{"cornea_2d", to_json(t.cornea_2d)},     {"cornea_3d", to_json(t.cornea_3d)},
              {"pupil_2d", to_json(t.pupil_2d)},       {"pupil_3d", to_json(t.pupil_3d)},
              {"optical_axis", to_json(t.optical_axis)}, {"visual_axis", to_json(t.visual_axis)},
              {"glints", glints_to_json(t.glints)}};
}

inline FrameTruth frame_truth_from_json(const Json& j) {
  FrameTruth t;
  t.cornea_2d = point2_from_json(j.at("cornea_2d"));
  t.cornea_3d = vec3_from_json(j.at("cornea_3d"));
  t.pupil_2d = point2_from_json(j.at("pupil_2d"));
  t.pupil_3d = vec3_from_json(j.at("pupil_3d"));
  t.optical_axis = unit_from_json(j.at("optical_axis"));
  t.visual_axis = unit_from_json(j.at("visual_axis"));
  t.glints = glints_from_json(j.at("glints"));
  return t;
}

inline Json to_json(const FrameObservation& obs) {
  Json pupil{{"present", obs.pupil_present}};
  if (obs.pupil_present) pupil["position"] = to_json(obs.pupil_2d);
  Json distractors = Json::array();
  for (const auto& d : obs.distractors) distractors.push_back(to_json(d));
  Json j{{"pupil", pupil}, {"glints", glints_to_json(obs.glints)}, {"distractors", distractors}};
  if (obs.cornea_2d_estimate) j["cornea_2d_estimate"] = to_json(*obs.cornea_2d_estimate);
  if (obs.truth) j["truth"] = to_json(*obs.truth);
  return j;
}

inline FrameObservation frame_observation_from_json(const Json& j) {
  FrameObservation obs;
  const Json& pupil = j.at("pupil");
  obs.pupil_present = pupil.at("present").get<bool>();
  if (obs.pupil_present) obs.pupil_2d = point2_from_json(pupil.at("position"));
  obs.glints = glints_from_json(j.at("glints"));
  if (j.contains("distractors")) {
    for (const auto& d : j.at("distractors")) obs.distractors.push_back(point2_from_json(d));
  }
  if (j.contains("cornea_2d_estimate")) obs.cornea_2d_estimate = point2_from_json(j.at("cornea_2d_estimate"));
  if (j.contains("truth")) obs.truth = frame_truth_from_json(j.at("truth"));
  return obs;
}

inline Json to_json(const EyeState& e) {
  return Json{{"eyeball_center", to_json(e.eyeball_center)},
              {"optical_axis", to_json(e.optical_axis)},
              {"visual_axis", to_json(e.visual_axis)},
              {"kappa_deg", Json::array({e.kappa.horizontal_deg, e.kappa.vertical_deg})},
              {"cornea_center", to_json(e.cornea.center)},
              {"cornea_radius", e.cornea.radius},
              {"pupil_center_3d", to_json(e.pupil_center_3d)}};
}

inline EyeState eye_state_from_json(const Json& j) {
  EyeState e;
  e.eyeball_center = vec3_from_json(j.at("eyeball_center"));
  e.optical_axis = unit_from_json(j.at("optical_axis"));
  e.visual_axis = unit_from_json(j.at("visual_axis"));
  e.kappa = {j.at("kappa_deg").at(0).get<double>(), j.at("kappa_deg").at(1).get<double>()};
  e.cornea = Sphere(vec3_from_json(j.at("cornea_center")), j.at("cornea_radius").get<double>());
  e.pupil_center_3d = vec3_from_json(j.at("pupil_center_3d"));
  return e;
}

inline Json to_json(const ProtocolFrame& f) {
  return Json{{"schema", "glintgaze.frame"},
              {"version", kSchemaVersion},
              {"subject", f.subject},
              {"target", f.target},
              {"frame", f.frame},
              {"calibration", f.calibration},
              {"target_position", to_json(f.gaze_target.position)},
              {"depth_m", f.gaze_target.depth_m},
              {"row", f.gaze_target.row},
              {"col", f.gaze_target.col},
              {"eye", to_json(f.eye)},
              {"observation", to_json(f.observation)}};
}

inline void check_schema(const Json& j, const std::string& schema) {
  if (!j.contains("schema") || j.at("schema") != schema) {
    throw Error(ErrorCode::Parse, "expected a '" + schema + "' record");
  }
  if (j.at("version").get<int>() != kSchemaVersion) {
    throw Error(ErrorCode::Parse, "unsupported " + schema + " version " + j.at("version").dump());
  }
}

inline ProtocolFrame protocol_frame_from_json(const Json& j) {
  check_schema(j, "glintgaze.frame");
  ProtocolFrame f;
  f.subject = j.at("subject").get<int>();
  f.target = j.at("target").get<int>();
  f.frame = j.at("frame").get<int>();
  f.calibration = j.at("calibration").get<bool>();
  f.gaze_target.index = f.target;
  f.gaze_target.position = vec3_from_json(j.at("target_position"));
  f.gaze_target.depth_m = j.at("depth_m").get<double>();
  f.gaze_target.row = j.at("row").get<int>();
  f.gaze_target.col = j.at("col").get<int>();
  f.eye = eye_state_from_json(j.at("eye"));
  f.observation = frame_observation_from_json(j.at("observation"));
  return f;
}

inline Json to_json(const CorneaEstimate& est) {
  Json glints = Json::array();
  for (const auto& g : est.glints) glints.push_back(Json{{"led", g.led}, {"position", to_json(g.position)}});
  Json j{{"cornea_2d", to_json(est.cornea_2d)},
         {"cornea_3d", to_json(est.cornea_3d)},
         {"led_loss", est.led_loss},
         {"glints", glints}};
  if (est.cornea_ray) j["cornea_ray_direction"] = to_json(est.cornea_ray->direction);
  if (!est.refinement_trace.empty()) j["refinement_trace"] = est.refinement_trace;
  return j;
}

inline Json to_json(const SubjectParams& s) {
  const EyeAnatomy& a = s.anatomy;
  return Json{{"id", s.id},
              {"eyeball_center", to_json(s.eyeball_center)},
              {"kappa_deg", Json::array({s.kappa.horizontal_deg, s.kappa.vertical_deg})},
              {"cornea_radius", a.cornea_radius},
              {"eyeball_to_cornea", a.eyeball_to_cornea},
              {"pupil_radius", a.pupil_radius},
              {"iris_radius", a.iris_radius},
              {"eyeball_radius", a.eyeball_radius},
              {"pupil_placement", a.pupil_placement == PupilPlacement::OnCornea ? "on-cornea" : "anatomical"},
              {"anatomical_pupil_depth", a.anatomical_pupil_depth}};
}

inline SubjectParams subject_from_json(const Json& j) {
  SubjectParams s;
  s.id = j.at("id").get<int>();
  s.eyeball_center = vec3_from_json(j.at("eyeball_center"));
  s.kappa = {j.at("kappa_deg").at(0).get<double>(), j.at("kappa_deg").at(1).get<double>()};
  EyeAnatomy& a = s.anatomy;
  a.cornea_radius = j.at("cornea_radius").get<double>();
  a.eyeball_to_cornea = j.at("eyeball_to_cornea").get<double>();
  a.pupil_radius = j.at("pupil_radius").get<double>();
  a.iris_radius = j.at("iris_radius").get<double>();
  a.eyeball_radius = j.at("eyeball_radius").get<double>();
  a.pupil_placement = j.at("pupil_placement") == "on-cornea" ? PupilPlacement::OnCornea : PupilPlacement::Anatomical;
  a.anatomical_pupil_depth = j.at("anatomical_pupil_depth").get<double>();
  return s;
}

/// Dataset as JSON lines: one header with the subjects, then one line per frame.
inline std::vector<Json> dataset_to_jsonl(const Dataset& ds, const std::string& config_hash) {
  Json subjects = Json::array();
  for (const auto& s : ds.subjects) subjects.push_back(to_json(s));
  std::vector<Json> lines{Json{{"schema", "glintgaze.dataset"},
                               {"version", kSchemaVersion},
                               {"config_hash", config_hash},
                               {"frames", ds.frames.size()},
                               {"subjects", subjects}}};
  for (const auto& f : ds.frames) lines.push_back(to_json(f));
  return lines;
}

inline Dataset dataset_from_jsonl(const std::vector<Json>& lines) {
  if (lines.empty()) throw Error(ErrorCode::Parse, "empty dataset");
  check_schema(lines.front(), "glintgaze.dataset");
  Dataset ds;
  for (const auto& s : lines.front().at("subjects")) ds.subjects.push_back(subject_from_json(s));
  for (std::size_t i = 1; i < lines.size(); ++i) {
    ProtocolFrame f = protocol_frame_from_json(lines[i]);
    if (f.subject < 0 || static_cast<std::size_t>(f.subject) >= ds.subjects.size()) {
      throw Error(ErrorCode::Parse, "frame references unknown subject " + std::to_string(f.subject));
    }
    const auto t = static_cast<std::size_t>(f.target);
    if (ds.targets.size() <= t) ds.targets.resize(t + 1);
    ds.targets[t] = f.gaze_target;
    ds.frames.push_back(std::move(f));
  }
  if (ds.frames.size() != lines.front().at("frames").get<std::size_t>()) {
    throw Error(ErrorCode::Parse, "dataset frame count does not match its header");
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Mappers.

inline Json to_json(const PolyMapper& m) {
  Json coeffs = Json::array();
  for (int out = 0; out < 2; ++out) {
    Json row = Json::array();
    for (int k = 0; k < 6; ++k) row.push_back(m.coefficients()(k, out));
    coeffs.push_back(row);
  }
  return Json{{"schema", "glintgaze.mapper"}, {"version", kSchemaVersion}, {"type", "polynomial"},
              {"basis", Json::array({"1", "x", "y", "x^2", "xy", "y^2"})}, {"coefficients", coeffs},
              {"residual_rms", m.residual_rms()}};
}

inline Json to_json(const NetMapper& m) {
  Json layers = Json::array();
  for (std::size_t l = 0; l < m.layer_count(); ++l) {
    const auto& w = m.weights()[l];
    const auto& b = m.biases()[l];
    layers.push_back(Json{{"rows", w.rows()},
                          {"cols", w.cols()},
                          {"weights", std::vector<double>(w.data(), w.data() + w.size())},
                          {"bias", std::vector<double>(b.data(), b.data() + b.size())}});
  }
  return Json{{"schema", "glintgaze.mapper"}, {"version", kSchemaVersion}, {"type", "network"},
              {"activation", "tanh"}, {"output", "input-plus-correction"}, {"layers", layers},
              {"final_training_loss", m.final_training_loss}};
}

inline Json to_json(const GazeMapper& m) {
  return std::visit([](const auto& x) { return to_json(x); }, m);
}

inline GazeMapper gaze_mapper_from_json(const Json& j) {
  check_schema(j, "glintgaze.mapper");
  const std::string type = j.at("type").get<std::string>();
  if (type == "polynomial") {
    PolyMapper::Coefficients c;
    for (int out = 0; out < 2; ++out) {
      for (int k = 0; k < 6; ++k) c(k, out) = j.at("coefficients").at(out).at(k).get<double>();
    }
    return PolyMapper(c, j.value("residual_rms", 0.0));
  }
  if (type == "network") {
    NetMapper m;
    for (const auto& layer : j.at("layers")) {
      const auto rows = layer.at("rows").get<Eigen::Index>();
      const auto cols = layer.at("cols").get<Eigen::Index>();
      const auto w = layer.at("weights").get<std::vector<double>>();
      const auto b = layer.at("bias").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(w.size()) != rows * cols || static_cast<Eigen::Index>(b.size()) != rows) {
        throw Error(ErrorCode::Parse, "network layer shape mismatch");
      }
      m.weights().push_back(Eigen::Map<const Eigen::MatrixXd>(w.data(), rows, cols));
      m.biases().push_back(Eigen::Map<const Eigen::VectorXd>(b.data(), rows));
    }
    m.final_training_loss = j.value("final_training_loss", 0.0);
    return m;
  }
  throw Error(ErrorCode::Parse, "unknown mapper type '" + type + "'");
}

// ---------------------------------------------------------------------------
// JSON lines.

inline void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
  for (const auto& r : records) out << r.dump() << '\n';
  if (!out) throw Error(ErrorCode::Io, "failed writing '" + path.string() + "'");
}

inline std::vector<Json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
  std::vector<Json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(Json::parse(line));
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::Parse, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::Io, "failed writing '" + path.string() + "'");
}

inline Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
  }
}

}  // namespace glintgaze

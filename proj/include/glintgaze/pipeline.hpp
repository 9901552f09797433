#pragma once

// Experiment runner: per-frame detection, cornea estimation and optical axis,
// per-subject mapper calibration, evaluation and metric aggregation.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "glintgaze/config.hpp"
#include "glintgaze/cornea.hpp"
#include "glintgaze/error.hpp"
#include "glintgaze/eye_sim.hpp"
#include "glintgaze/gaze_mapper.hpp"
#include "glintgaze/metrics.hpp"
#include "glintgaze/raster.hpp"
#include "glintgaze/serialize.hpp"

namespace glintgaze {

struct FrameRecord {
  int subject = 0;
  int target = 0;
  int frame = 0;
  bool calibration = false;
  double depth_m = 0.0;
  int row = 0;
  int col = 0;
  std::string status = "ok";  // "ok" or the rejecting error code

  std::size_t glints_used = 0;
  std::optional<Point2> cornea_2d;
  std::optional<Point3> cornea_3d;
  std::optional<double> cornea_2d_error_px;
  std::optional<double> cornea_3d_error_mm;
  std::optional<double> led_loss;
  std::optional<bool> refinement_monotone;
  std::optional<Vec3> optical_axis;
  std::optional<double> optical_error_arcmin;
  std::optional<Vec3> gaze;
  std::optional<double> angular_error_arcmin;

  // Detection quality against the simulator's truth.
  std::optional<double> pupil_error_px;
  double lee_px = 0.0;
  std::size_t lee_pairs = 0;
  std::size_t presence_correct = 0;
  std::size_t presence_total = 0;
  bool labels_correct = true;

  bool ok() const { return status == "ok"; }
};

/// Builds the observation a detection source delivers for one frame.
inline FrameObservation observe(const ProtocolFrame& f, const SubjectParams& subject, DetectionSource source,
                                const RunConfig& cfg) {
  const FrameObservation& noisy = f.observation;
  switch (source) {
    case DetectionSource::NoisyOracle: return noisy;
    case DetectionSource::Oracle: {
      const FrameTruth truth = noisy.truth ? *noisy.truth : frame_truth(f.eye, cfg.sim.rig, cfg.sim.camera);
      FrameObservation obs;
      obs.pupil_present = cfg.sim.camera.contains(truth.pupil_2d);
      obs.pupil_2d = truth.pupil_2d;
      obs.glints = truth.glints;
      obs.cornea_2d_estimate = truth.cornea_2d;
      obs.truth = truth;
      return obs;
    }
    case DetectionSource::RasterClassical: {
      const GrayImage img = render_frame(f.eye, subject.anatomy, cfg.sim.rig, cfg.sim.camera, noisy.distractors, cfg.render);
      FrameObservation obs = detect_frame(img, cfg.sim.rig, cfg.sim.camera, cfg.detect);
      obs.truth = noisy.truth ? *noisy.truth : frame_truth(f.eye, cfg.sim.rig, cfg.sim.camera);
      return obs;
    }
  }
  throw Error(ErrorCode::InvalidArgument, "unknown detection source");
}

namespace detail {

inline void score_detection(FrameRecord& rec, const FrameObservation& obs) {
  if (!obs.truth) return;
  const FrameTruth& t = *obs.truth;
  if (obs.pupil_present) rec.pupil_error_px = distance(obs.pupil_2d, t.pupil_2d);
  const LeeResult lee = labeled_euclidean_error(t.glints, obs.glints);
  rec.lee_px = lee.sum_px;
  rec.lee_pairs = lee.pairs;
  for (const auto& tg : t.glints) {
    const auto it = std::find_if(obs.glints.begin(), obs.glints.end(), [&](const auto& g) { return g.led == tg.led; });
    const bool detected = it != obs.glints.end() && it->present;
    ++rec.presence_total;
    if (detected == tg.present) ++rec.presence_correct;
    if (detected != tg.present) rec.labels_correct = false;
  }
  // A present glint is correctly labeled when its own LED's true glint is the
  // nearest true glint.
  for (const auto& g : obs.glints) {
    if (!g.present) continue;
    int nearest = -1;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& tg : t.glints) {
      if (!tg.present) continue;
      const double d = distance(g.position, tg.position);
      if (d < best) {
        best = d;
        nearest = tg.led;
      }
    }
    if (nearest != g.led) rec.labels_correct = false;
  }
}

}  // namespace detail

/// Detection, cornea estimate, pupil lift and optical axis for one frame.
/// Library errors become the record's rejection status.
inline FrameRecord process_frame(const ProtocolFrame& f, const SubjectParams& subject, const Variant& variant,
                                 const RunConfig& cfg) {
  FrameRecord rec;
  rec.subject = f.subject;
  rec.target = f.target;
  rec.frame = f.frame;
  rec.calibration = f.calibration;
  rec.depth_m = f.gaze_target.depth_m;
  rec.row = f.gaze_target.row;
  rec.col = f.gaze_target.col;
  try {
    const FrameObservation obs = observe(f, subject, variant.detection, cfg);
    detail::score_detection(rec, obs);
    CorneaSolverConfig solver = cfg.solver;
    solver.mode = variant.cornea_mode;
    const CorneaEstimate est = estimate_cornea(obs, cfg.sim.rig, cfg.sim.camera, solver);
    rec.glints_used = est.glints.size();
    rec.cornea_2d = est.cornea_2d;
    rec.cornea_3d = est.cornea_3d;
    rec.led_loss = est.led_loss;
    if (obs.truth) rec.cornea_2d_error_px = distance(est.cornea_2d, obs.truth->cornea_2d);
    rec.cornea_3d_error_mm = (est.cornea_3d - f.eye.cornea.center).norm();
    if (!est.refinement_trace.empty()) rec.refinement_monotone = is_non_increasing(est.refinement_trace);
    if (!obs.pupil_present) throw Error(ErrorCode::PupilNotFound, "no pupil observation");
    const Point3 pupil = lift_pupil_to_3d(obs.pupil_2d, est.cornea_3d, cfg.sim.camera, cfg.solver.lift.radius);
    const Axis axis = optical_axis(est.cornea_3d, pupil);
    rec.optical_axis = axis.direction.vec();
    rec.optical_error_arcmin = angular_error_arcmin(axis.direction, f.eye.optical_axis);
  } catch (const Error& e) {
    rec.status = std::string(to_string(e.code()));
  }
  return rec;
}

/// Runs `fn(i)` for i in [0, n) on `workers` threads. Each index is handled by
/// exactly one thread, so results written by index are order independent.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex m;
  std::vector<std::thread> pool;
  const auto w = static_cast<std::size_t>(workers);
  for (std::size_t t = 0; t < w; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += w) fn(i);
      } catch (...) {
        std::lock_guard lock(m);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

/// Calibration pairs for one subject: estimated optical axis against the unit
/// direction from the estimated cornea centre to the fixation target.
inline CalibrationSet calibration_set(std::span<const FrameRecord> records, const Dataset& ds, int subject) {
  CalibrationSet calib;
  for (const auto& r : records) {
    if (r.subject != subject || !r.calibration || !r.ok()) continue;
    const Point3& target = ds.targets[static_cast<std::size_t>(r.target)].position;
    calib.add(UnitVec3(*r.optical_axis), UnitVec3(target - *r.cornea_3d));
  }
  return calib;
}

inline GazeMapper fit_mapper(const CalibrationSet& calib, MapperKind kind, const NetTrainingConfig& net, int subject) {
  if (kind == MapperKind::Polynomial) return fit_poly_mapper(calib);
  NetTrainingConfig c = net;
  c.seed = derive_seed(net.seed, {0x3A99ULL, static_cast<std::uint64_t>(subject)});
  if (calib.size() < 9) throw Error(ErrorCode::InsufficientConstraints, "network mapper needs at least nine calibration pairs");
  return fit_net_mapper(calib, c);
}

struct VariantRun {
  Variant variant;
  std::vector<FrameRecord> records;      // sorted by (subject, target, frame)
  std::vector<std::optional<GazeMapper>> mappers;  // per subject, empty when calibration failed
};

inline VariantRun run_variant(const RunConfig& cfg, const Variant& variant, const Dataset& ds) {
  VariantRun run;
  run.variant = variant;
  run.records.resize(ds.frames.size());
  parallel_for(ds.frames.size(), cfg.workers, [&](std::size_t i) {
    const ProtocolFrame& f = ds.frames[i];
    run.records[i] = process_frame(f, ds.subjects[static_cast<std::size_t>(f.subject)], variant, cfg);
  });

  const std::size_t n_subjects = ds.subjects.size();
  run.mappers.resize(n_subjects);
  std::vector<std::string> calib_failure(n_subjects);
  parallel_for(n_subjects, cfg.workers, [&](std::size_t s) {
    try {
      const CalibrationSet calib = calibration_set(run.records, ds, static_cast<int>(s));
      run.mappers[s] = fit_mapper(calib, variant.mapper, cfg.net, static_cast<int>(s));
    } catch (const Error& e) {
      calib_failure[s] = "Calibration" + std::string(to_string(e.code()));
    }
  });

  for (std::size_t i = 0; i < run.records.size(); ++i) {
    FrameRecord& r = run.records[i];
    if (r.calibration || !r.ok()) continue;
    const auto s = static_cast<std::size_t>(r.subject);
    if (!run.mappers[s]) {
      r.status = calib_failure[s];
      continue;
    }
    const Axis gaze = map_gaze(*run.mappers[s], Axis{UnitVec3(*r.optical_axis), *r.cornea_3d});
    r.gaze = gaze.direction.vec();
    r.angular_error_arcmin = angular_error_arcmin(gaze.direction, ds.frames[i].eye.visual_axis);
  }
  return run;
}

// ---------------------------------------------------------------------------
// Aggregation.

struct DirectionRow {
  int row = 0;
  int col = 0;
  SummaryStats ae;
};

struct DepthRow {
  double depth_m = 0.0;
  SummaryStats ae;
};

struct HistogramBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
};

struct MetricsReport {
  std::string variant;
  std::string detection;
  std::string cornea_mode;
  std::string mapper;
  std::string config_hash;
  std::uint64_t seed = 0;

  std::size_t total_frames = 0;
  std::size_t calibration_frames = 0;
  std::size_t calibration_rejected = 0;
  std::size_t evaluation_frames = 0;
  std::size_t evaluated = 0;
  std::size_t rejected = 0;
  std::map<std::string, std::size_t> rejections;  // evaluation frames, by reason

  SummaryStats angular_error;
  std::vector<DirectionRow> by_direction;  // row-major 3x3
  std::vector<DepthRow> by_depth;          // ascending depth

  double lee_mean_px = 0.0;  // mean per-frame LEE over frames with matched glints
  double presence_accuracy = 0.0;
  double labeling_accuracy = 0.0;
  SummaryStats pupil_error_px;
  SummaryStats cornea_2d_error_px;
  SummaryStats cornea_3d_error_mm;
  SummaryStats optical_error_arcmin;
  std::size_t refined_frames = 0;
  double refinement_monotone_fraction = 0.0;

  double histogram_bin_arcmin = 0.0;
  std::vector<HistogramBin> histogram;
};

inline std::vector<HistogramBin> histogram(std::span<const double> values, double bin) {
  std::vector<HistogramBin> bins;
  if (values.empty()) return bins;
  const double top = *std::max_element(values.begin(), values.end());
  const auto n = static_cast<std::size_t>(std::floor(top / bin)) + 1;
  bins.resize(n);
  for (std::size_t k = 0; k < n; ++k) bins[k] = {static_cast<double>(k) * bin, static_cast<double>(k + 1) * bin, 0};
  for (double v : values) {
    auto k = static_cast<std::size_t>(std::floor(v / bin));
    if (k >= n) k = n - 1;
    ++bins[k].count;
  }
  return bins;
}

inline MetricsReport aggregate(std::span<const FrameRecord> records, const Variant& variant, const std::string& hash,
                               std::uint64_t seed, double bin_arcmin) {
  MetricsReport rep;
  rep.variant = variant.name;
  rep.detection = to_string(variant.detection);
  rep.cornea_mode = to_string(variant.cornea_mode);
  rep.mapper = to_string(variant.mapper);
  rep.config_hash = hash;
  rep.seed = seed;
  rep.histogram_bin_arcmin = bin_arcmin;
  rep.total_frames = records.size();

  std::vector<double> ae, pupil, c2, c3, opt;
  std::map<int, std::vector<double>> by_dir;
  std::map<double, std::vector<double>> by_depth;
  double lee_sum = 0.0;
  std::size_t lee_frames = 0, presence_ok = 0, presence_all = 0, labels_ok = 0, monotone = 0;
  for (const auto& r : records) {
    if (r.calibration) {
      ++rep.calibration_frames;
      if (!r.ok()) ++rep.calibration_rejected;
    } else {
      ++rep.evaluation_frames;
      if (r.angular_error_arcmin) {
        ++rep.evaluated;
        ae.push_back(*r.angular_error_arcmin);
        by_dir[r.row * 3 + r.col].push_back(*r.angular_error_arcmin);
        by_depth[r.depth_m].push_back(*r.angular_error_arcmin);
      } else {
        ++rep.rejected;
        ++rep.rejections[r.status];
      }
    }
    if (r.pupil_error_px) pupil.push_back(*r.pupil_error_px);
    if (r.cornea_2d_error_px) c2.push_back(*r.cornea_2d_error_px);
    if (r.cornea_3d_error_mm) c3.push_back(*r.cornea_3d_error_mm);
    if (r.optical_error_arcmin) opt.push_back(*r.optical_error_arcmin);
    if (r.lee_pairs > 0) {
      lee_sum += r.lee_px;
      ++lee_frames;
    }
    presence_ok += r.presence_correct;
    presence_all += r.presence_total;
    if (r.labels_correct) ++labels_ok;
    if (r.refinement_monotone) {
      ++rep.refined_frames;
      if (*r.refinement_monotone) ++monotone;
    }
  }
  rep.angular_error = summarize(ae);
  for (int d = 0; d < 9; ++d) rep.by_direction.push_back({d / 3, d % 3, summarize(by_dir[d])});
  for (const auto& [depth, v] : by_depth) rep.by_depth.push_back({depth, summarize(v)});
  rep.lee_mean_px = lee_frames ? lee_sum / static_cast<double>(lee_frames) : 0.0;
  rep.presence_accuracy = presence_all ? static_cast<double>(presence_ok) / static_cast<double>(presence_all) : 0.0;
  rep.labeling_accuracy = records.empty() ? 0.0 : static_cast<double>(labels_ok) / static_cast<double>(records.size());
  rep.pupil_error_px = summarize(pupil);
  rep.cornea_2d_error_px = summarize(c2);
  rep.cornea_3d_error_mm = summarize(c3);
  rep.optical_error_arcmin = summarize(opt);
  rep.refinement_monotone_fraction =
      rep.refined_frames ? static_cast<double>(monotone) / static_cast<double>(rep.refined_frames) : 0.0;
  rep.histogram = histogram(ae, bin_arcmin);
  return rep;
}

struct PipelineResult {
  Dataset dataset;
  std::vector<VariantRun> runs;
  std::vector<MetricsReport> reports;
};

/// Full experiment: generate the dataset once, then run every variant on it.
inline PipelineResult run_pipeline(const RunConfig& cfg) {
  cfg.validate();
  PipelineResult out;
  out.dataset = generate_protocol_dataset(cfg.subjects, cfg.sim);
  const std::string hash = config_hash(cfg);
  for (const Variant& v : resolve_variants(cfg)) {
    out.runs.push_back(run_variant(cfg, v, out.dataset));
    out.reports.push_back(aggregate(out.runs.back().records, v, hash, cfg.seed(), cfg.histogram_bin_arcmin));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization of records and reports.

inline Json to_json(const FrameRecord& r) {
  Json j{{"subject", r.subject}, {"target", r.target},   {"frame", r.frame},   {"calibration", r.calibration},
         {"depth_m", r.depth_m}, {"row", r.row},         {"col", r.col},       {"status", r.status},
         {"glints_used", r.glints_used}, {"lee_px", r.lee_px}, {"lee_pairs", r.lee_pairs},
         {"presence_correct", r.presence_correct}, {"presence_total", r.presence_total},
         {"labels_correct", r.labels_correct}};
  if (r.cornea_2d) j["cornea_2d"] = to_json(*r.cornea_2d);
  if (r.cornea_3d) j["cornea_3d"] = to_json(*r.cornea_3d);
  if (r.cornea_2d_error_px) j["cornea_2d_error_px"] = *r.cornea_2d_error_px;
  if (r.cornea_3d_error_mm) j["cornea_3d_error_mm"] = *r.cornea_3d_error_mm;
  if (r.led_loss) j["led_loss"] = *r.led_loss;
  if (r.refinement_monotone) j["refinement_monotone"] = *r.refinement_monotone;
  if (r.optical_axis) j["optical_axis"] = to_json(*r.optical_axis);
  if (r.optical_error_arcmin) j["optical_error_arcmin"] = *r.optical_error_arcmin;
  if (r.gaze) j["gaze"] = to_json(*r.gaze);
  if (r.angular_error_arcmin) j["angular_error_arcmin"] = *r.angular_error_arcmin;
  if (r.pupil_error_px) j["pupil_error_px"] = *r.pupil_error_px;
  return j;
}

inline FrameRecord frame_record_from_json(const Json& j) {
  FrameRecord r;
  r.subject = j.at("subject").get<int>();
  r.target = j.at("target").get<int>();
  r.frame = j.at("frame").get<int>();
  r.calibration = j.at("calibration").get<bool>();
  r.depth_m = j.at("depth_m").get<double>();
  r.row = j.at("row").get<int>();
  r.col = j.at("col").get<int>();
  r.status = j.at("status").get<std::string>();
  r.glints_used = j.at("glints_used").get<std::size_t>();
  r.lee_px = j.at("lee_px").get<double>();
  r.lee_pairs = j.at("lee_pairs").get<std::size_t>();
  r.presence_correct = j.at("presence_correct").get<std::size_t>();
  r.presence_total = j.at("presence_total").get<std::size_t>();
  r.labels_correct = j.at("labels_correct").get<bool>();
  auto opt_double = [&](const char* key, std::optional<double>& out) {
    if (j.contains(key)) out = j.at(key).get<double>();
  };
  if (j.contains("cornea_2d")) r.cornea_2d = point2_from_json(j.at("cornea_2d"));
  if (j.contains("cornea_3d")) r.cornea_3d = vec3_from_json(j.at("cornea_3d"));
  opt_double("cornea_2d_error_px", r.cornea_2d_error_px);
  opt_double("cornea_3d_error_mm", r.cornea_3d_error_mm);
  opt_double("led_loss", r.led_loss);
  if (j.contains("refinement_monotone")) r.refinement_monotone = j.at("refinement_monotone").get<bool>();
  if (j.contains("optical_axis")) r.optical_axis = vec3_from_json(j.at("optical_axis"));
  opt_double("optical_error_arcmin", r.optical_error_arcmin);
  if (j.contains("gaze")) r.gaze = vec3_from_json(j.at("gaze"));
  opt_double("angular_error_arcmin", r.angular_error_arcmin);
  opt_double("pupil_error_px", r.pupil_error_px);
  return r;
}

/// Header line of a per-frame records file.
inline Json run_header(const Variant& v, const std::string& hash, std::uint64_t seed, double bin_arcmin) {
  return Json{{"schema", "glintgaze.run"},          {"version", kSchemaVersion},
              {"variant", v.name},                  {"detection", to_string(v.detection)},
              {"cornea_mode", to_string(v.cornea_mode)}, {"mapper", to_string(v.mapper)},
              {"config_hash", hash},                {"seed", seed},
              {"histogram_bin_arcmin", bin_arcmin}};
}

inline void write_records(const std::filesystem::path& path, const VariantRun& run, const std::string& hash,
                          std::uint64_t seed, double bin_arcmin) {
  std::vector<Json> lines{run_header(run.variant, hash, seed, bin_arcmin)};
  for (const auto& r : run.records) lines.push_back(to_json(r));
  write_jsonl(path, lines);
}

/// Re-aggregates a per-frame records file written by `write_records`.
inline MetricsReport report_from_records(const std::filesystem::path& path) {
  const auto lines = read_jsonl(path);
  if (lines.empty()) throw Error(ErrorCode::Parse, path.string() + ": empty records file");
  const Json& h = lines.front();
  check_schema(h, "glintgaze.run");
  Variant v;
  v.name = h.at("variant").get<std::string>();
  v.detection = detection_source_from_string(h.at("detection").get<std::string>());
  v.cornea_mode = cornea_mode_from_string(h.at("cornea_mode").get<std::string>());
  v.mapper = mapper_kind_from_string(h.at("mapper").get<std::string>());
  std::vector<FrameRecord> records;
  for (std::size_t i = 1; i < lines.size(); ++i) records.push_back(frame_record_from_json(lines[i]));
  return aggregate(records, v, h.at("config_hash").get<std::string>(), h.at("seed").get<std::uint64_t>(),
                   h.at("histogram_bin_arcmin").get<double>());
}

inline Json to_json(const SummaryStats& s) {
  return Json{{"count", s.count}, {"mean", s.mean}, {"std", s.std}, {"q1", s.q1}, {"q2", s.q2}, {"q3", s.q3}, {"max", s.max}};
}

inline Json to_json(const MetricsReport& r) {
  Json dirs = Json::array();
  for (const auto& d : r.by_direction) dirs.push_back(Json{{"row", d.row}, {"col", d.col}, {"angular_error_arcmin", to_json(d.ae)}});
  Json depths = Json::array();
  for (const auto& d : r.by_depth) depths.push_back(Json{{"depth_m", d.depth_m}, {"angular_error_arcmin", to_json(d.ae)}});
  Json hist = Json::array();
  for (const auto& b : r.histogram) hist.push_back(Json{{"lower", b.lower}, {"upper", b.upper}, {"count", b.count}});
  return Json{{"variant", r.variant},
              {"detection", r.detection},
              {"cornea_mode", r.cornea_mode},
              {"mapper", r.mapper},
              {"config_hash", r.config_hash},
              {"seed", r.seed},
              {"total_frames", r.total_frames},
              {"calibration_frames", r.calibration_frames},
              {"calibration_rejected", r.calibration_rejected},
              {"evaluation_frames", r.evaluation_frames},
              {"evaluated", r.evaluated},
              {"rejected", r.rejected},
              {"rejections", r.rejections},
              {"angular_error_arcmin", to_json(r.angular_error)},
              {"by_direction", dirs},
              {"by_depth", depths},
              {"lee_mean_px", r.lee_mean_px},
              {"presence_accuracy", r.presence_accuracy},
              {"labeling_accuracy", r.labeling_accuracy},
              {"pupil_error_px", to_json(r.pupil_error_px)},
              {"cornea_2d_error_px", to_json(r.cornea_2d_error_px)},
              {"cornea_3d_error_mm", to_json(r.cornea_3d_error_mm)},
              {"optical_error_arcmin", to_json(r.optical_error_arcmin)},
              {"refined_frames", r.refined_frames},
              {"refinement_monotone_fraction", r.refinement_monotone_fraction},
              {"histogram_bin_arcmin", r.histogram_bin_arcmin},
              {"histogram", hist}};
}

enum class ReportFormat { Csv, Json };

inline ReportFormat report_format_from_string(const std::string& s) {
  if (s == "csv") return ReportFormat::Csv;
  if (s == "json") return ReportFormat::Json;
  throw Error(ErrorCode::Config, "unknown report format '" + s + "'");
}

namespace detail {

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Error(ErrorCode::Io, "failed writing '" + path.string() + "'");
}

inline std::string rejection_text(const MetricsReport& r) {
  std::string s;
  for (const auto& [reason, n] : r.rejections) {
    if (!s.empty()) s += ";";
    s += reason + "=" + std::to_string(n);
  }
  return s;
}

}  // namespace detail

inline std::string summary_csv(std::span<const MetricsReport> reports) {
  std::ostringstream o;
  o << "variant,detection,cornea_mode,mapper,mean_ae_arcmin,std_ae_arcmin,q1_ae_arcmin,q2_ae_arcmin,q3_ae_arcmin,"
       "max_ae_arcmin,evaluation_frames,evaluated,rejected,rejections,lee_mean_px,presence_accuracy,labeling_accuracy,"
       "cornea_2d_mean_px,cornea_3d_mean_mm,refinement_monotone_fraction,config_hash,seed\n";
  for (const auto& r : reports) {
    const auto& a = r.angular_error;
    o << r.variant << ',' << r.detection << ',' << r.cornea_mode << ',' << r.mapper << ',' << detail::fmt(a.mean) << ','
      << detail::fmt(a.std) << ',' << detail::fmt(a.q1) << ',' << detail::fmt(a.q2) << ',' << detail::fmt(a.q3) << ','
      << detail::fmt(a.max) << ',' << r.evaluation_frames << ',' << r.evaluated << ',' << r.rejected << ','
      << detail::rejection_text(r) << ',' << detail::fmt(r.lee_mean_px) << ',' << detail::fmt(r.presence_accuracy) << ','
      << detail::fmt(r.labeling_accuracy) << ',' << detail::fmt(r.cornea_2d_error_px.mean) << ','
      << detail::fmt(r.cornea_3d_error_mm.mean) << ',' << detail::fmt(r.refinement_monotone_fraction) << ','
      << r.config_hash << ',' << r.seed << '\n';
  }
  return o.str();
}

/// Fixed-width text table of the headline columns.
inline std::string summary_text(std::span<const MetricsReport> reports) {
  std::ostringstream o;
  char line[256];
  std::snprintf(line, sizeof line, "%-24s %10s %10s %10s %10s %10s %9s %9s\n", "variant", "mean_ae", "std_ae", "q1", "q2",
                "q3", "evaluated", "rejected");
  o << line;
  for (const auto& r : reports) {
    const auto& a = r.angular_error;
    std::snprintf(line, sizeof line, "%-24s %10.3f %10.3f %10.3f %10.3f %10.3f %9zu %9zu\n", r.variant.c_str(), a.mean,
                  a.std, a.q1, a.q2, a.q3, r.evaluated, r.rejected);
    o << line;
  }
  if (!reports.empty()) o << "angular errors in arcmin; config " << reports.front().config_hash << '\n';
  return o.str();
}

inline std::string by_direction_csv(std::span<const MetricsReport> reports) {
  std::ostringstream o;
  o << "variant,row,col,count,mean_ae_arcmin,std_ae_arcmin,q1_ae_arcmin,q2_ae_arcmin,q3_ae_arcmin\n";
  for (const auto& r : reports) {
    for (const auto& d : r.by_direction) {
      o << r.variant << ',' << d.row << ',' << d.col << ',' << d.ae.count << ',' << detail::fmt(d.ae.mean) << ','
        << detail::fmt(d.ae.std) << ',' << detail::fmt(d.ae.q1) << ',' << detail::fmt(d.ae.q2) << ','
        << detail::fmt(d.ae.q3) << '\n';
    }
  }
  return o.str();
}

inline std::string by_depth_csv(std::span<const MetricsReport> reports) {
  std::ostringstream o;
  o << "variant,depth_m,count,mean_ae_arcmin,std_ae_arcmin,q1_ae_arcmin,q2_ae_arcmin,q3_ae_arcmin\n";
  for (const auto& r : reports) {
    for (const auto& d : r.by_depth) {
      o << r.variant << ',' << detail::fmt(d.depth_m) << ',' << d.ae.count << ',' << detail::fmt(d.ae.mean) << ','
        << detail::fmt(d.ae.std) << ',' << detail::fmt(d.ae.q1) << ',' << detail::fmt(d.ae.q2) << ','
        << detail::fmt(d.ae.q3) << '\n';
    }
  }
  return o.str();
}

inline std::string histogram_csv(std::span<const MetricsReport> reports) {
  std::ostringstream o;
  o << "variant,lower_arcmin,upper_arcmin,count\n";
  for (const auto& r : reports) {
    for (const auto& b : r.histogram) {
      o << r.variant << ',' << detail::fmt(b.lower) << ',' << detail::fmt(b.upper) << ',' << b.count << '\n';
    }
  }
  return o.str();
}

/// Writes the report files into `dir` and returns their paths. Plot data is
/// always CSV; `format` selects the summary table encoding.
inline std::vector<std::filesystem::path> emit_report(std::span<const MetricsReport> reports,
                                                      const std::filesystem::path& dir, ReportFormat format) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create '" + dir.string() + "': " + ec.message());
  std::vector<std::filesystem::path> written;
  auto put = [&](const std::string& name, const std::string& text) {
    detail::write_text(dir / name, text);
    written.push_back(dir / name);
  };
  if (format == ReportFormat::Csv) {
    put("summary.csv", summary_csv(reports));
  } else {
    Json arr = Json::array();
    for (const auto& r : reports) arr.push_back(to_json(r));
    put("summary.json", Json{{"schema", "glintgaze.report"}, {"version", kSchemaVersion}, {"variants", arr}}.dump(2) + "\n");
  }
  put("summary.txt", summary_text(reports));
  put("by_direction.csv", by_direction_csv(reports));
  put("by_depth.csv", by_depth_csv(reports));
  put("histogram.csv", histogram_csv(reports));
  return written;
}

}  // namespace glintgaze

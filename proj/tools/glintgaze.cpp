// glintgaze command line: simulate, detect, solve, calibrate, evaluate, report.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "glintgaze/config.hpp"
#include "glintgaze/pipeline.hpp"
#include "glintgaze/raster.hpp"
#include "glintgaze/serialize.hpp"

namespace fs = std::filesystem;
using namespace glintgaze;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string variant;
  std::string out;
  std::string format = "csv";
  std::vector<std::string> in;
};

RunConfig load_run_config(const CommonOptions& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (o.seed) cfg.set_seed(*o.seed);
  if (!o.variant.empty()) {
    cfg.variants.clear();
    for (const auto& v : detail::split(o.variant, ',')) {
      if (!v.empty()) cfg.variants.push_back(v);
    }
  }
  cfg.validate();
  return cfg;
}

fs::path require_out(const CommonOptions& o) {
  if (o.out.empty()) throw Error(ErrorCode::Config, "--out is required");
  return o.out;
}

fs::path require_single_in(const CommonOptions& o) {
  if (o.in.size() != 1) throw Error(ErrorCode::Config, "exactly one --in path is required");
  return o.in.front();
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create '" + dir.string() + "': " + ec.message());
}

std::string frame_stem(int subject, int target, int frame) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "s%03d_t%02d_f%03d", subject, target, frame);
  return buf;
}

int cmd_simulate(const CommonOptions& o, bool pgm) {
  const RunConfig cfg = load_run_config(o);
  const fs::path out = require_out(o);
  ensure_dir(out);
  const Dataset ds = generate_protocol_dataset(cfg.subjects, cfg.sim);
  write_jsonl(out / "dataset.jsonl", dataset_to_jsonl(ds, config_hash(cfg)));
  write_json(out / "config.json", config_to_json(cfg));
  if (pgm) {
    ensure_dir(out / "frames");
    for (const auto& f : ds.frames) {
      const auto& subject = ds.subjects[static_cast<std::size_t>(f.subject)];
      const GrayImage img =
          render_frame(f.eye, subject.anatomy, cfg.sim.rig, cfg.sim.camera, f.observation.distractors, cfg.render);
      write_pgm(img, out / "frames" / (frame_stem(f.subject, f.target, f.frame) + ".pgm"));
    }
  }
  std::cout << "wrote " << ds.frames.size() << " frames to " << (out / "dataset.jsonl").string() << '\n';
  return 0;
}

int cmd_detect(const CommonOptions& o) {
  const RunConfig cfg = load_run_config(o);
  std::vector<fs::path> images;
  for (const auto& p : o.in) {
    if (fs::is_directory(p)) {
      for (const auto& e : fs::directory_iterator(p)) {
        if (e.path().extension() == ".pgm") images.push_back(e.path());
      }
    } else {
      images.emplace_back(p);
    }
  }
  if (images.empty()) throw Error(ErrorCode::Config, "no input images");
  std::sort(images.begin(), images.end());
  std::vector<Json> lines;
  for (const auto& path : images) {
    Json rec{{"schema", "glintgaze.observation"}, {"version", kSchemaVersion}, {"source", path.filename().string()}};
    try {
      rec["observation"] = to_json(detect_frame(read_pgm(path), cfg.sim.rig, cfg.sim.camera, cfg.detect));
      rec["status"] = "ok";
    } catch (const Error& e) {
      if (e.code() == ErrorCode::Io || e.code() == ErrorCode::Parse) throw;
      rec["status"] = std::string(to_string(e.code()));
    }
    lines.push_back(std::move(rec));
  }
  write_jsonl(require_out(o), lines);
  std::cout << "detected " << lines.size() << " images\n";
  return 0;
}

std::map<int, GazeMapper> load_mappers(const fs::path& path) {
  const Json j = read_json(path);
  check_schema(j, "glintgaze.mappers");
  std::map<int, GazeMapper> out;
  for (const auto& e : j.at("subjects")) out.emplace(e.at("subject").get<int>(), gaze_mapper_from_json(e.at("mapper")));
  return out;
}

int cmd_solve(const CommonOptions& o, const std::string& mapper_path) {
  const RunConfig cfg = load_run_config(o);
  const Variant variant = resolve_variants(cfg).front();
  std::map<int, GazeMapper> mappers;
  if (!mapper_path.empty()) mappers = load_mappers(mapper_path);
  CorneaSolverConfig solver = cfg.solver;
  solver.mode = variant.cornea_mode;

  std::vector<Json> out;
  for (const Json& line : read_jsonl(require_single_in(o))) {
    const std::string schema = line.value("schema", "");
    if (schema == "glintgaze.dataset") continue;
    int subject = 0;
    Json rec{{"schema", "glintgaze.solution"}, {"version", kSchemaVersion}};
    std::optional<FrameObservation> obs;
    if (schema == "glintgaze.frame") {
      const ProtocolFrame f = protocol_frame_from_json(line);
      subject = f.subject;
      rec["subject"] = f.subject;
      rec["target"] = f.target;
      rec["frame"] = f.frame;
      obs = f.observation;
    } else if (schema == "glintgaze.observation") {
      check_schema(line, schema);
      rec["source"] = line.at("source");
      if (line.at("status") == "ok") {
        obs = frame_observation_from_json(line.at("observation"));
      } else {
        rec["status"] = line.at("status");
      }
    } else {
      throw Error(ErrorCode::Parse, "unexpected record schema '" + schema + "'");
    }
    if (obs) {
      try {
        const CorneaEstimate est = estimate_cornea(*obs, cfg.sim.rig, cfg.sim.camera, solver);
        rec["cornea"] = to_json(est);
        if (!obs->pupil_present) throw Error(ErrorCode::PupilNotFound, "no pupil observation");
        const Point3 pupil = lift_pupil_to_3d(obs->pupil_2d, est.cornea_3d, cfg.sim.camera, cfg.solver.lift.radius);
        const Axis axis = optical_axis(est.cornea_3d, pupil);
        rec["pupil_3d"] = to_json(pupil);
        rec["optical_axis"] = to_json(axis.direction);
        if (const auto it = mappers.find(subject); it != mappers.end()) {
          rec["gaze"] = to_json(map_gaze(it->second, axis).direction);
        }
        rec["status"] = "ok";
      } catch (const Error& e) {
        rec["status"] = std::string(to_string(e.code()));
      }
    }
    out.push_back(std::move(rec));
  }
  write_jsonl(require_out(o), out);
  std::cout << "solved " << out.size() << " records\n";
  return 0;
}

int cmd_calibrate(const CommonOptions& o) {
  const RunConfig cfg = load_run_config(o);
  const Variant variant = resolve_variants(cfg).front();
  const Dataset ds = dataset_from_jsonl(read_jsonl(require_single_in(o)));
  Dataset calib = ds;
  calib.frames.clear();
  for (const auto& f : ds.frames) {
    if (f.calibration) calib.frames.push_back(f);
  }
  std::vector<FrameRecord> records(calib.frames.size());
  parallel_for(calib.frames.size(), cfg.workers, [&](std::size_t i) {
    const auto& f = calib.frames[i];
    records[i] = process_frame(f, calib.subjects[static_cast<std::size_t>(f.subject)], variant, cfg);
  });
  Json doc{{"schema", "glintgaze.mappers"}, {"version", kSchemaVersion}, {"variant", variant.name},
           {"config_hash", config_hash(cfg)}, {"subjects", Json::array()}};
  for (std::size_t s = 0; s < ds.subjects.size(); ++s) {
    const CalibrationSet set = calibration_set(records, calib, static_cast<int>(s));
    try {
      const GazeMapper m = fit_mapper(set, variant.mapper, cfg.net, static_cast<int>(s));
      doc["subjects"].push_back(Json{{"subject", s}, {"pairs", set.size()}, {"mapper", to_json(m)}});
    } catch (const Error& err) {
      std::cerr << "subject " << s << ": calibration failed: " << err.what() << '\n';
    }
  }
  write_json(require_out(o), doc);
  std::cout << "calibrated " << doc["subjects"].size() << " of " << ds.subjects.size() << " subjects\n";
  return 0;
}

std::string records_name(const std::string& variant) { return "frames_" + variant + ".jsonl"; }

int cmd_evaluate(const CommonOptions& o) {
  const RunConfig cfg = load_run_config(o);
  const fs::path out = require_out(o);
  const ReportFormat format = report_format_from_string(o.format);
  const PipelineResult res = run_pipeline(cfg);
  ensure_dir(out);
  const std::string hash = config_hash(cfg);
  for (const auto& run : res.runs) write_records(out / records_name(run.variant.name), run, hash, cfg.seed(), cfg.histogram_bin_arcmin);
  write_json(out / "config.json", config_to_json(cfg));
  emit_report(res.reports, out, format);
  std::cout << summary_text(res.reports);
  return 0;
}

int cmd_report(const CommonOptions& o) {
  const ReportFormat format = report_format_from_string(o.format);
  std::vector<fs::path> files;
  for (const auto& p : o.in) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p)) {
        const auto name = e.path().filename().string();
        if (name.rfind("frames_", 0) == 0 && e.path().extension() == ".jsonl") found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.emplace_back(p);
    }
  }
  if (files.empty()) throw Error(ErrorCode::Config, "no records files given");
  std::vector<MetricsReport> reports;
  for (const auto& f : files) reports.push_back(report_from_records(f));
  emit_report(reports, require_out(o), format);
  std::cout << summary_text(reports);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Glint-based gaze estimation toolkit"};
  app.require_subcommand(1);
  CommonOptions opt;
  bool pgm = false;
  std::string mapper_path;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "INI configuration file");
    sub->add_option("--seed", opt.seed, "Seed overriding [run] seed");
    sub->add_option("--variant", opt.variant, "Variant name or comma-separated list");
    sub->add_option("--out", opt.out, "Output file or directory");
  };

  auto* simulate = app.add_subcommand("simulate", "Generate a protocol dataset as JSON lines");
  add_common(simulate);
  simulate->add_flag("--pgm", pgm, "Also render every frame as a PGM image");

  auto* detect = app.add_subcommand("detect", "Classical detection on PGM images");
  add_common(detect);
  detect->add_option("--in", opt.in, "PGM files or directories")->required();

  auto* solve = app.add_subcommand("solve", "Cornea, optical axis and gaze per observation");
  add_common(solve);
  solve->add_option("--in", opt.in, "Dataset or observation JSON lines")->required();
  solve->add_option("--mapper", mapper_path, "Mappers file from calibrate");

  auto* calibrate = app.add_subcommand("calibrate", "Fit per-subject mappers on calibration frames");
  add_common(calibrate);
  calibrate->add_option("--in", opt.in, "Dataset JSON lines")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Full experiment with report");
  add_common(evaluate);
  evaluate->add_option("--format", opt.format, "Summary format")->check(CLI::IsMember({"csv", "json"}));

  auto* report = app.add_subcommand("report", "Aggregate per-frame records into a report");
  add_common(report);
  report->add_option("--in", opt.in, "Records files or evaluate output directories")->required();
  report->add_option("--format", opt.format, "Summary format")->check(CLI::IsMember({"csv", "json"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*simulate) return cmd_simulate(opt, pgm);
    if (*detect) return cmd_detect(opt);
    if (*solve) return cmd_solve(opt, mapper_path);
    if (*calibrate) return cmd_calibrate(opt);
    if (*evaluate) return cmd_evaluate(opt);
    if (*report) return cmd_report(opt);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}

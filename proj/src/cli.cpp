#include "flexpose/cli.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>
#include <zlib.h>

#include "flexpose/pose_io.hpp"

namespace flexpose::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---- spec (de)serialization ------------------------------------------------

SkeletonTopology topology_from_json(const json& j) {
  SkeletonTopology t;
  t.joint_count = j.at("m").get<int>();
  t.joints = j.at("joints").get<std::vector<std::string>>();
  for (const auto& b : j.at("bones"))
    t.bones.emplace_back(b.at(0).get<int>(), b.at(1).get<int>());
  t.root_index = j.at("root").get<int>();
  for (const auto& c : j.at("colors"))
    t.bone_colors.push_back(Rgb{c.at(0).get<uint8_t>(), c.at(1).get<uint8_t>(),
                                c.at(2).get<uint8_t>()});
  t.validate();
  return t;
}

json topology_to_json(const SkeletonTopology& t) {
  json j;
  j["m"] = t.joint_count;
  j["joints"] = t.joints;
  j["bones"] = json::array();
  for (const auto& [p, c] : t.bones) j["bones"].push_back({p, c});
  j["root"] = t.root_index;
  j["colors"] = json::array();
  for (const auto& c : t.bone_colors) j["colors"].push_back({c[0], c[1], c[2]});
  return j;
}

synth::PoseDistributionSpec dist_spec_from_json(const json& j) {
  if (j.is_string() || j.contains("preset")) {
    const std::string preset = j.is_string() ? j.get<std::string>()
                                             : j.at("preset").get<std::string>();
    if (preset == "human13") return synth::default_human_spec();
    throw std::invalid_argument("unknown distribution preset: " + preset);
  }
  synth::PoseDistributionSpec s;
  s.tree.topology = topology_from_json(j.at("topology"));
  s.tree.bone_lengths = j.at("bone_lengths").get<std::vector<double>>();
  for (const auto& d : j.at("rest_directions"))
    s.tree.rest_directions.push_back({d.at(0).get<double>(), d.at(1).get<double>()});
  s.joint_angle_mean = j.at("joint_angle_mean").get<std::vector<double>>();
  s.joint_angle_std = j.at("joint_angle_std").get<std::vector<double>>();
  s.root_orientation_lo = j.at("root_orientation").at(0).get<double>();
  s.root_orientation_hi = j.at("root_orientation").at(1).get<double>();
  if (j.contains("root_position")) {
    s.root_position = {j.at("root_position").at(0).get<double>(),
                       j.at("root_position").at(1).get<double>()};
  }
  s.root_position_jitter = j.value("root_position_jitter", 0.0);
  s.bone_length_ratio_jitter = j.value("bone_length_ratio_jitter", 0.0);
  s.validate();
  return s;
}

json dist_spec_to_json(const synth::PoseDistributionSpec& s) {
  json j;
  j["topology"] = topology_to_json(s.tree.topology);
  j["bone_lengths"] = s.tree.bone_lengths;
  j["rest_directions"] = json::array();
  for (const auto& d : s.tree.rest_directions)
    j["rest_directions"].push_back({d.x, d.y});
  j["joint_angle_mean"] = s.joint_angle_mean;
  j["joint_angle_std"] = s.joint_angle_std;
  j["root_orientation"] = {s.root_orientation_lo, s.root_orientation_hi};
  j["root_position"] = {s.root_position.x, s.root_position.y};
  j["root_position_jitter"] = s.root_position_jitter;
  j["bone_length_ratio_jitter"] = s.bone_length_ratio_jitter;
  return j;
}

synth::ShiftSpec shift_from_json(const json& j) {
  synth::ShiftSpec s;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "global_rotation") {
    s.kind = synth::ShiftKind::global_rotation;
    s.theta_lo = j.at("theta_range").at(0).get<double>();
    s.theta_hi = j.at("theta_range").at(1).get<double>();
  } else if (kind == "local_rotation") {
    s.kind = synth::ShiftKind::local_rotation;
    s.gamma_lo = j.at("gamma_range").at(0).get<double>();
    s.gamma_hi = j.at("gamma_range").at(1).get<double>();
    s.subtree_root_joint = j.at("subtree_root_joint").get<int>();
  } else if (kind == "scale") {
    s.kind = synth::ShiftKind::scale;
    for (const auto& r : j.at("eta_ranges"))
      s.eta_ranges.emplace_back(r.at(0).get<double>(), r.at(1).get<double>());
  } else if (kind == "compose") {
    s.kind = synth::ShiftKind::compose;
    for (const auto& c : j.at("children")) s.children.push_back(shift_from_json(c));
  } else {
    throw std::invalid_argument("unknown shift kind: " + kind);
  }
  return s;
}

json shift_to_json(const synth::ShiftSpec& s) {
  json j;
  switch (s.kind) {
    case synth::ShiftKind::global_rotation:
      j["kind"] = "global_rotation";
      j["theta_range"] = {s.theta_lo, s.theta_hi};
      break;
    case synth::ShiftKind::local_rotation:
      j["kind"] = "local_rotation";
      j["gamma_range"] = {s.gamma_lo, s.gamma_hi};
      j["subtree_root_joint"] = s.subtree_root_joint;
      break;
    case synth::ShiftKind::scale: {
      j["kind"] = "scale";
      j["eta_ranges"] = json::array();
      for (const auto& [lo, hi] : s.eta_ranges) j["eta_ranges"].push_back({lo, hi});
      break;
    }
    case synth::ShiftKind::compose: {
      j["kind"] = "compose";
      j["children"] = json::array();
      for (const auto& c : s.children) j["children"].push_back(shift_to_json(c));
      break;
    }
  }
  return j;
}

json config_to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir;
  j["generator"] = {{"d_z", c.generator.d_z}, {"d_w", c.generator.d_w},
                    {"layers", c.generator.layers}, {"d_h", c.generator.d_h},
                    {"joints", c.generator.joints}, {"res", c.generator.res}};
  if (c.source_spec) j["source"]["spec"] = dist_spec_to_json(*c.source_spec);
  if (c.source_file) j["source"]["file"] = *c.source_file;
  if (c.target_shift) j["target"]["shift"] = shift_to_json(*c.target_shift);
  if (c.target_file) j["target"]["file"] = *c.target_file;
  j["data"] = {{"n_source", c.n_source}, {"n_holdout", c.n_holdout},
               {"shots", c.shots}};
  j["train"] = {{"batch", c.source_train.batch},
                {"iterations", c.source_train.iterations},
                {"lr", c.source_train.lr},
                {"bandwidth_multipliers", c.source_train.bandwidth_multipliers}};
  j["adapt"] = {{"layers", c.adapt.layer_set}, {"mixup", c.adapt.mixup_on},
                {"mixup_size", c.adapt.mixup_size},
                {"linear", c.adapt.linear_on}, {"low_rank", c.adapt.low_rank},
                {"lr", c.adapt.lr}, {"batch", c.adapt.batch},
                {"iterations", c.adapt.iterations},
                {"betas", {c.adapt.beta1, c.adapt.beta2}}};
  j["sample"] = {{"count", c.sample_count}, {"rasters", c.sample_rasters}};
  j["eval"] = {{"a", c.eval_a}, {"b", c.eval_b}, {"pck_rho", c.pck_rho},
               {"canvas_px", c.canvas_px}};
  j["render"] = {{"poses", c.render_poses}, {"width", c.render_w},
                 {"height", c.render_h}};
  j["sweep"] = {{"layer_sets", c.sweep_sets}};
  return j;
}

std::string now_iso() {
  const auto t = std::chrono::system_clock::to_time_t(
      std::chrono::system_clock::now());
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void atomic_write(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + tmp);
    out << content;
  }
  fs::rename(tmp, path);
}

// Collects stage outputs and writes the manifest atomically at stage end.
class Manifest {
 public:
  Manifest(const Artifacts& paths, std::string command, const RunConfig& cfg)
      : paths_(paths), command_(std::move(command)),
        config_(config_to_json(cfg)), started_(now_iso()) {}

  void output(const std::string& path) { outputs_.push_back(path); }

  void finish() {
    json j;
    j["tool_version"] = kToolVersion;
    j["command"] = command_;
    j["config"] = config_;
    j["started"] = started_;
    j["finished"] = now_iso();
    j["outputs"] = json::array();
    for (const auto& p : outputs_) {
      j["outputs"].push_back({{"path", p},
                              {"crc32", crc32_file(p)},
                              {"bytes", fs::file_size(p)}});
    }
    fs::create_directories(fs::path(paths_.manifest(command_)).parent_path());
    atomic_write(paths_.manifest(command_), j.dump(2) + "\n");
  }

 private:
  Artifacts paths_;
  std::string command_;
  json config_;
  std::string started_;
  std::vector<std::string> outputs_;
};

void ensure_parent(const std::string& path) {
  fs::create_directories(fs::path(path).parent_path());
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path))
    throw std::invalid_argument(what + " not found: " + path +
                                " (run the upstream stage first)");
}

PoseSet target_pool(const RunConfig& cfg, int n, uint64_t seed) {
  if (cfg.target_shift) {
    if (!cfg.source_spec)
      throw std::invalid_argument("target shift needs a source spec");
    return synth::make_shifted_dataset(*cfg.source_spec, *cfg.target_shift, n,
                                       seed);
  }
  require_file(*cfg.target_file, "target pose file");
  return load_poses(*cfg.target_file);
}

// ---- commands ---------------------------------------------------------------

void cmd_gen_data(const RunConfig& cfg, const Artifacts& paths) {
  Manifest manifest(paths, "gen-data", cfg);
  if (cfg.n_source < 1 || cfg.n_holdout < 1 || cfg.shots < 1)
    throw std::invalid_argument("n must be >= 1");
  if (!cfg.source_spec && !cfg.source_file)
    throw std::invalid_argument("config needs source.spec or source.file");
  if (!cfg.target_shift && !cfg.target_file)
    throw std::invalid_argument("config needs target.shift or target.file");

  // Disjoint seed streams per artifact.
  PoseSet source;
  if (cfg.source_spec) {
    source = synth::make_dataset(*cfg.source_spec, cfg.n_source,
                                 derive_seed(cfg.seed, 11));
  } else {
    require_file(*cfg.source_file, "source pose file");
    source = load_poses(*cfg.source_file);
  }
  ensure_parent(paths.source_poses());
  save_poses(source, paths.source_poses());
  manifest.output(paths.source_poses());

  PoseSet shots, holdout;
  if (cfg.target_shift) {
    shots = target_pool(cfg, cfg.shots, derive_seed(cfg.seed, 12));
    holdout = target_pool(cfg, cfg.n_holdout, derive_seed(cfg.seed, 13));
  } else {
    // File-backed target: a seeded sample becomes the shots, the rest the
    // holdout (capped at n_holdout).
    PoseSet pool = target_pool(cfg, 0, 0);
    if (static_cast<int>(pool.poses.size()) < cfg.shots + 2)
      throw std::invalid_argument("target file too small for requested shots");
    std::vector<int> order(pool.poses.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng rng(derive_seed(cfg.seed, 14));
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[rng.uniform_index(i + 1)]);
    shots.topology = holdout.topology = pool.topology;
    for (size_t i = 0; i < order.size(); ++i) {
      if (static_cast<int>(i) < cfg.shots)
        shots.poses.push_back(pool.poses[order[i]]);
      else if (static_cast<int>(holdout.poses.size()) < cfg.n_holdout)
        holdout.poses.push_back(pool.poses[order[i]]);
    }
  }
  ensure_parent(paths.target_shots());
  save_poses(shots, paths.target_shots());
  manifest.output(paths.target_shots());
  save_poses(holdout, paths.target_holdout());
  manifest.output(paths.target_holdout());
  manifest.finish();
}

void cmd_train_source(const RunConfig& cfg, const Artifacts& paths) {
  Manifest manifest(paths, "train-source", cfg);
  require_file(paths.source_poses(), "source poses");
  PoseSet source = load_poses(paths.source_poses());

  gen::GeneratorConfig gcfg = cfg.generator;
  gcfg.joints = source.topology.joint_count;
  gen::Generator g = gen::init_generator(gcfg, derive_seed(cfg.seed, 21));
  train::SourceTrainConfig tcfg = cfg.source_train;
  tcfg.seed = derive_seed(cfg.seed, 22);
  const auto trace = train::train_source(g, source, tcfg);

  ensure_parent(paths.source_checkpoint());
  gen::save_checkpoint(g, nullptr, paths.source_checkpoint());
  manifest.output(paths.source_checkpoint());
  ensure_parent(paths.train_loss());
  train::write_loss_csv(trace, paths.train_loss());
  manifest.output(paths.train_loss());
  manifest.finish();
}

void cmd_adapt(const RunConfig& cfg, const Artifacts& paths) {
  Manifest manifest(paths, "adapt", cfg);
  require_file(paths.source_checkpoint(), "source checkpoint");
  require_file(paths.target_shots(), "target shots");
  gen::Checkpoint ck = gen::load_checkpoint(paths.source_checkpoint());
  PoseSet shots = load_poses(paths.target_shots());

  train::Guidance guidance = train::build_guidance(
      shots, cfg.adapt, ck.generator.cfg.d_z, derive_seed(cfg.seed, 31));
  train::AdaptResult result = train::adapt(ck.generator, guidance, cfg.adapt,
                                           derive_seed(cfg.seed, 32));

  ensure_parent(paths.adapted_checkpoint());
  gen::save_checkpoint(ck.generator, &result.tau, paths.adapted_checkpoint());
  manifest.output(paths.adapted_checkpoint());
  ensure_parent(paths.adapt_loss());
  train::write_loss_csv(result.loss_trace, paths.adapt_loss());
  manifest.output(paths.adapt_loss());
  manifest.finish();
}

void cmd_sweep_layers(const RunConfig& cfg, const Artifacts& paths) {
  Manifest manifest(paths, "sweep-layers", cfg);
  require_file(paths.source_checkpoint(), "source checkpoint");
  require_file(paths.target_shots(), "target shots");
  gen::Checkpoint ck = gen::load_checkpoint(paths.source_checkpoint());
  PoseSet shots = load_poses(paths.target_shots());

  std::vector<std::vector<int>> sets = cfg.sweep_sets;
  if (sets.empty())
    for (int l = 1; l <= ck.generator.cfg.layers; ++l) sets.push_back({l});

  train::Guidance guidance = train::build_guidance(
      shots, cfg.adapt, ck.generator.cfg.d_z, derive_seed(cfg.seed, 31));
  const auto entries = train::layer_sweep(ck.generator, guidance, sets,
                                          cfg.adapt, derive_seed(cfg.seed, 32));
  ensure_parent(paths.sweep_csv());
  train::write_sweep_csv(entries, paths.sweep_csv());
  manifest.output(paths.sweep_csv());
  manifest.finish();
}

void cmd_sample(const RunConfig& cfg, const Artifacts& paths) {
  Manifest manifest(paths, "sample", cfg);
  require_file(paths.adapted_checkpoint(), "adapted checkpoint");
  gen::Checkpoint ck = gen::load_checkpoint(paths.adapted_checkpoint());
  if (!ck.tau)
    throw std::invalid_argument("adapted checkpoint has no tau section");
  if (cfg.sample_count < 1) throw std::invalid_argument("n must be >= 1");

  // Sampling needs the topology for the re-render filter.
  SkeletonTopology topo;
  if (fs::exists(paths.target_shots()))
    topo = load_poses(paths.target_shots()).topology;
  else if (cfg.source_spec)
    topo = cfg.source_spec->tree.topology;
  else
    throw std::invalid_argument("no topology available (need gen-data output)");

  train::SampleResult result = train::sample_target(
      ck.generator, *ck.tau, topo, cfg.sample_count, derive_seed(cfg.seed, 41),
      cfg.sample_rasters, cfg.render_w, cfg.render_h);
  ensure_parent(paths.samples());
  save_poses(result.poses, paths.samples());
  manifest.output(paths.samples());
  if (cfg.sample_rasters) {
    const std::string dir = cfg.out_dir + "/samples/rasters";
    fs::create_directories(dir);
    for (size_t i = 0; i < result.rasters.size(); ++i) {
      char name[64];
      std::snprintf(name, sizeof(name), "/sample_%05zu.png", i);
      render::write_png(result.rasters[i], dir + name);
    }
  }
  manifest.finish();
}

void cmd_eval(const RunConfig& cfg, const Artifacts& paths) {
  Manifest manifest(paths, "eval", cfg);
  if (cfg.eval_a.empty() || cfg.eval_b.empty())
    throw std::invalid_argument("eval needs config eval.a and eval.b paths");
  require_file(cfg.eval_a, "pose file");
  require_file(cfg.eval_b, "pose file");
  PoseSet a = load_poses(cfg.eval_a);
  PoseSet b = load_poses(cfg.eval_b);

  const auto xa = metrics::flatten_poses(a);
  const auto xb = metrics::flatten_poses(b);
  std::vector<metrics::MetricReport> reports;

  metrics::MetricReport mmd_report;
  mmd_report.metric = "mmd2";
  const double sigma = metrics::median_bandwidth(xa, xb);
  mmd_report.value = metrics::mmd2(xa, xb, sigma);
  mmd_report.params["sigma"] = sigma;
  mmd_report.n_a = xa.n;
  mmd_report.n_b = xb.n;
  mmd_report.seed = cfg.seed;
  reports.push_back(mmd_report);

  metrics::MetricReport fd_report;
  fd_report.metric = "frechet_distance";
  fd_report.value = metrics::frechet_distance(xa, xb);
  fd_report.params["regularization"] = 1e-9;
  fd_report.n_a = xa.n;
  fd_report.n_b = xb.n;
  fd_report.seed = cfg.seed;
  reports.push_back(fd_report);

  if (a.poses.size() == b.poses.size() &&
      a.topology.joint_count == b.topology.joint_count) {
    metrics::MetricReport pck_report;
    pck_report.metric = "pck";
    pck_report.value = metrics::pck(a, b, cfg.pck_rho);
    pck_report.params["rho"] = cfg.pck_rho;
    pck_report.n_a = xa.n;
    pck_report.n_b = xb.n;
    reports.push_back(pck_report);

    metrics::MetricReport mse_report;
    mse_report.metric = "mse";
    mse_report.value = metrics::mse(a, b, cfg.canvas_px);
    mse_report.params["canvas_px"] = cfg.canvas_px;
    mse_report.n_a = xa.n;
    mse_report.n_b = xb.n;
    reports.push_back(mse_report);
  }

  ensure_parent(paths.eval_csv());
  metrics::write_reports_csv(reports, paths.eval_csv());
  manifest.output(paths.eval_csv());
  metrics::write_reports_json(reports, paths.eval_json());
  manifest.output(paths.eval_json());
  manifest.finish();
}

void cmd_render(const RunConfig& cfg, const Artifacts& paths) {
  Manifest manifest(paths, "render", cfg);
  if (cfg.render_poses.empty())
    throw std::invalid_argument("render needs config render.poses");
  require_file(cfg.render_poses, "pose file");
  PoseSet set = load_poses(cfg.render_poses);
  const std::string dir = cfg.out_dir + "/renders";
  fs::create_directories(dir);
  for (size_t i = 0; i < set.poses.size(); ++i) {
    char base[64];
    std::snprintf(base, sizeof(base), "/pose_%05zu", i);
    const render::RasterImage img =
        render::rasterize(set.poses[i], set.topology, cfg.render_w, cfg.render_h);
    render::write_png(img, dir + base + ".png");
    render::write_pose_svg(set.poses[i], set.topology, cfg.render_w,
                           cfg.render_h, dir + base + ".svg");
    manifest.output(dir + base + ".png");
    manifest.output(dir + base + ".svg");
  }
  manifest.finish();
}

void cmd_report(const RunConfig& cfg, const Artifacts& paths) {
  json report;
  report["tool_version"] = kToolVersion;
  report["out_dir"] = cfg.out_dir;
  report["manifests"] = json::array();
  const std::string dir = cfg.out_dir + "/manifests";
  if (fs::exists(dir)) {
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(dir))
      names.push_back(entry.path().string());
    std::sort(names.begin(), names.end());
    for (const auto& name : names) {
      std::ifstream in(name);
      report["manifests"].push_back(json::parse(in));
    }
  }
  if (fs::exists(paths.eval_json())) {
    std::ifstream in(paths.eval_json());
    report["eval"] = json::parse(in);
  }
  atomic_write(paths.report_json(), report.dump(2) + "\n");
}

}  // namespace

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config parse error: ") + e.what());
  }

  RunConfig c;
  try {
    c.seed = j.value("seed", uint64_t{1});
    c.out_dir = j.value("out_dir", std::string("out"));
    if (j.contains("generator")) {
      const json& g = j["generator"];
      c.generator.d_z = g.value("d_z", c.generator.d_z);
      c.generator.d_w = g.value("d_w", c.generator.d_w);
      c.generator.layers = g.value("layers", c.generator.layers);
      c.generator.d_h = g.value("d_h", c.generator.d_h);
      c.generator.joints = g.value("joints", c.generator.joints);
      c.generator.res = g.value("res", c.generator.res);
      c.generator.validate();
    }
    if (j.contains("source")) {
      const json& s = j["source"];
      if (s.contains("spec") == s.contains("file"))
        throw std::invalid_argument("source needs exactly one of spec/file");
      if (s.contains("spec")) c.source_spec = dist_spec_from_json(s["spec"]);
      if (s.contains("file")) c.source_file = s["file"].get<std::string>();
    }
    if (j.contains("target")) {
      const json& t = j["target"];
      if (t.contains("shift") == t.contains("file"))
        throw std::invalid_argument("target needs exactly one of shift/file");
      if (t.contains("shift")) {
        c.target_shift = shift_from_json(t["shift"]);
        if (c.source_spec)
          c.target_shift->validate(c.source_spec->tree.topology);
      }
      if (t.contains("file")) c.target_file = t["file"].get<std::string>();
    }
    if (j.contains("data")) {
      const json& d = j["data"];
      c.n_source = d.value("n_source", c.n_source);
      c.n_holdout = d.value("n_holdout", c.n_holdout);
      c.shots = d.value("shots", c.shots);
    }
    if (j.contains("train")) {
      const json& t = j["train"];
      c.source_train.batch = t.value("batch", c.source_train.batch);
      c.source_train.iterations = t.value("iterations", c.source_train.iterations);
      c.source_train.lr = t.value("lr", c.source_train.lr);
      if (t.contains("bandwidth_multipliers"))
        c.source_train.bandwidth_multipliers =
            t["bandwidth_multipliers"].get<std::vector<double>>();
      c.source_train.validate();
    }
    if (j.contains("adapt")) {
      const json& a = j["adapt"];
      if (a.contains("layers")) {
        if (a["layers"].is_string() && a["layers"] == "ALL")
          c.adapt.layer_set = train::AdaptConfig::all_layers(c.generator.layers);
        else
          c.adapt.layer_set = a["layers"].get<std::vector<int>>();
      }
      c.adapt.mixup_on = a.value("mixup", c.adapt.mixup_on);
      c.adapt.mixup_size = a.value("mixup_size", c.adapt.mixup_size);
      c.adapt.linear_on = a.value("linear", c.adapt.linear_on);
      c.adapt.low_rank = a.value("low_rank", c.adapt.low_rank);
      c.adapt.lr = a.value("lr", c.adapt.lr);
      c.adapt.batch = a.value("batch", c.adapt.batch);
      c.adapt.iterations = a.value("iterations", c.adapt.iterations);
      if (a.contains("betas")) {
        c.adapt.beta1 = a["betas"].at(0).get<double>();
        c.adapt.beta2 = a["betas"].at(1).get<double>();
      }
    }
    if (j.contains("sample")) {
      c.sample_count = j["sample"].value("count", c.sample_count);
      c.sample_rasters = j["sample"].value("rasters", c.sample_rasters);
    }
    if (j.contains("eval")) {
      c.eval_a = j["eval"].value("a", std::string());
      c.eval_b = j["eval"].value("b", std::string());
      c.pck_rho = j["eval"].value("pck_rho", c.pck_rho);
      c.canvas_px = j["eval"].value("canvas_px", c.canvas_px);
    }
    if (j.contains("render")) {
      c.render_poses = j["render"].value("poses", std::string());
      c.render_w = j["render"].value("width", c.render_w);
      c.render_h = j["render"].value("height", c.render_h);
    }
    if (j.contains("sweep") && j["sweep"].contains("layer_sets"))
      c.sweep_sets = j["sweep"]["layer_sets"].get<std::vector<std::vector<int>>>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("bad config value: ") + e.what());
  }
  return c;
}

uint32_t crc32_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  uLong crc = crc32(0L, Z_NULL, 0);
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    crc = crc32(crc, reinterpret_cast<const Bytef*>(buf),
                static_cast<uInt>(in.gcount()));
    if (in.eof()) break;
  }
  return static_cast<uint32_t>(crc);
}

int run_command(const std::string& command, const std::string& config_path,
                std::optional<uint64_t> seed_override,
                std::optional<std::string> out_override) {
  try {
    RunConfig cfg = load_config(config_path);
    if (seed_override) cfg.seed = *seed_override;
    if (out_override) cfg.out_dir = *out_override;
    fs::create_directories(cfg.out_dir);
    Artifacts paths{cfg.out_dir};

    if (command == "gen-data") cmd_gen_data(cfg, paths);
    else if (command == "train-source") cmd_train_source(cfg, paths);
    else if (command == "adapt") cmd_adapt(cfg, paths);
    else if (command == "sweep-layers") cmd_sweep_layers(cfg, paths);
    else if (command == "sample") cmd_sample(cfg, paths);
    else if (command == "eval") cmd_eval(cfg, paths);
    else if (command == "render") cmd_render(cfg, paths);
    else if (command == "report") cmd_report(cfg, paths);
    else throw std::invalid_argument("unknown command: " + command);
    return 0;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace flexpose::cli

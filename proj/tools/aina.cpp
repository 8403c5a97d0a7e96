// aina CLI: synthesize or ingest demonstrations, align them into the robot
// frame, train the point policy, and roll it out in the kinematic simulator.
// Every command writes its outputs plus a resolved_config.json snapshot under
// --out; identical flags and seeds reproduce identical files.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "aina/aina.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

bool g_quiet = false;

void info(const std::string& msg) {
  if (!g_quiet) std::cout << msg << "\n";
}

void write_json(const fs::path& path, const ordered_json& j) {
  std::ofstream out(path);
  if (!out) throw aina::IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

void write_resolved_config(const fs::path& out_dir, ordered_json config) {
  fs::create_directories(out_dir);
  write_json(out_dir / "resolved_config.json", config);
}

aina::kin::KinematicChain load_chain_or_default(const std::string& path) {
  return path.empty() ? aina::kin::default_chain() : aina::kin::load_chain(path);
}

aina::TaskSpec load_task_or_preset(const std::string& task, const std::string& spec_path) {
  if (!spec_path.empty()) {
    aina::TaskSpec spec = aina::load_task_spec(spec_path);
    if (!task.empty() && aina::parse_task(task) != spec.task)
      throw aina::BadConfig("--task disagrees with the task spec file");
    return spec;
  }
  if (task.empty()) throw aina::BadConfig("either --task or --spec is required");
  return aina::TaskSpec::preset(aina::parse_task(task));
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int cmd_synth(const std::string& task, const std::string& spec_path, int count, uint64_t seed,
              const std::string& out, const std::string& chain_path) {
  const aina::TaskSpec spec = load_task_or_preset(task, spec_path);
  const aina::kin::KinematicChain chain = load_chain_or_default(chain_path);
  const aina::Dataset ds = aina::synth_generate(spec, count, seed, chain);
  const aina::ValidationReport report = aina::validate(ds);
  if (!report.ok()) throw aina::Error("generated dataset failed validation");
  aina::save_dataset(ds, out);
  write_json(fs::path(out) / "task_spec.json", aina::to_json(spec));
  write_resolved_config(out, ordered_json{{"command", "synth"},
                                          {"task", aina::task_name(spec.task)},
                                          {"spec", spec_path},
                                          {"count", count},
                                          {"seed", seed},
                                          {"chain", chain_path},
                                          {"out", out}});
  info("wrote dataset with 1 in-scene + " + std::to_string(ds.in_the_wild.size()) +
       " in-the-wild demos to " + out);
  return 0;
}

int cmd_ingest(const std::string& bundle_dir, const std::string& mode, const std::string& frame,
               const std::string& out) {
  aina::PerceptionBundle bundle = aina::load_bundle(bundle_dir);
  if (frame == "robot_base")
    bundle.reference = aina::FrameOfReference::robot_base;
  else if (frame == "world_gravity_aligned")
    bundle.reference = aina::FrameOfReference::world_gravity_aligned;
  else
    throw aina::BadConfig("unknown --frame '" + frame + "'");
  const aina::Trajectory traj = aina::ingest(bundle, aina::parse_depth_kind(mode));
  fs::create_directories(out);
  aina::save(traj, fs::path(out) / "ingested.traj");
  write_resolved_config(out, ordered_json{{"command", "ingest"},
                                          {"bundle", bundle_dir},
                                          {"mode", mode},
                                          {"frame", frame},
                                          {"out", out}});
  info("ingested " + std::to_string(traj.frames.size()) + " frames, N=" +
       std::to_string(traj.point_count()));
  return 0;
}

int cmd_align(const std::string& scene_path, const std::string& wild_dir, const std::string& mode,
              const std::string& out) {
  const aina::Trajectory scene = aina::load(scene_path);
  const aina::AlignMode align_mode = aina::parse_align_mode(mode);
  fs::create_directories(out);

  std::vector<fs::path> wild_files;
  if (!wild_dir.empty() && fs::exists(wild_dir))
    for (const auto& entry : fs::directory_iterator(wild_dir))
      if (entry.path().extension() == ".traj") wild_files.push_back(entry.path());
  std::sort(wild_files.begin(), wild_files.end());

  std::ofstream csv(fs::path(out) / "alignment.csv");
  csv << "trajectory,dx,dy,dz,theta_z,mode\n";
  aina::Dataset aligned_set;
  aligned_set.in_scene = scene;
  aligned_set.n = scene.point_count();
  int index = 0;
  for (const fs::path& file : wild_files) {
    const aina::Trajectory wild = aina::load(file);
    const aina::AlignmentResult res = aina::align_trajectory(wild, scene, align_mode);
    csv << file.filename().string() << "," << fmt(res.delta_o.x()) << "," << fmt(res.delta_o.y())
        << "," << fmt(res.delta_o.z()) << "," << fmt(res.theta_z) << "," << mode << "\n";
    aligned_set.in_the_wild.push_back(res.aligned);
    ++index;
  }
  aina::save_dataset(aligned_set, out);
  write_resolved_config(out, ordered_json{{"command", "align"},
                                          {"scene", scene_path},
                                          {"wild_dir", wild_dir},
                                          {"mode", mode},
                                          {"out", out}});
  info("aligned " + std::to_string(index) + " trajectories into " + out);
  return 0;
}

aina::policy::PolicyConfig resolve_policy_config(const std::string& preset,
                                                 const std::string& config_path, uint64_t seed,
                                                 bool seed_given) {
  aina::policy::PolicyConfig base;
  if (preset == "desk")
    base = aina::policy::PolicyConfig::desk();
  else if (preset != "paper")
    throw aina::BadConfig("--preset must be 'desk' or 'paper'");
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw aina::IoError("cannot open " + config_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw aina::BadConfig(std::string("config parse: ") + e.what());
    }
    base = aina::policy::config_from_json(j, base);
  }
  if (seed_given) base.seed = seed;
  return base;
}

int cmd_train(const std::string& data, const std::string& preset, const std::string& config_path,
              uint64_t seed, bool seed_given, const std::string& out) {
  const aina::policy::PolicyConfig config =
      resolve_policy_config(preset, config_path, seed, seed_given);
  const aina::Dataset ds = aina::load_dataset(data);
  info("training on " + std::to_string(1 + ds.in_the_wild.size()) + " trajectories, " +
       std::to_string(config.epochs) + " epochs");
  const aina::policy::TrainResult result = aina::policy::train(ds, config);
  fs::create_directories(out);
  aina::policy::save_model(result.model, fs::path(out) / "policy.ainm");
  ordered_json log;
  log["epochs"] = result.epoch_loss.size();
  log["final_loss"] = result.epoch_loss.back();
  log["epoch_loss"] = result.epoch_loss;
  write_json(fs::path(out) / "training_log.json", log);
  write_resolved_config(out, ordered_json{{"command", "train"},
                                          {"data", data},
                                          {"preset", preset},
                                          {"config", config_path},
                                          {"out", out},
                                          {"policy_config", aina::policy::to_json(config)}});
  info("final training loss " + fmt(result.epoch_loss.back()) + ", model written to " + out);
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data, const std::string& out) {
  const aina::policy::PolicyModel model = aina::policy::load_model(model_path);
  const aina::Dataset ds = aina::load_dataset(data);
  const double mse = aina::policy::evaluate_mse(model, ds.all());
  ordered_json report{{"model", model_path}, {"data", data}, {"mse", mse}};
  if (!out.empty()) {
    fs::create_directories(out);
    write_json(fs::path(out) / "eval_report.json", report);
    write_resolved_config(out, ordered_json{{"command", "eval"},
                                            {"model", model_path},
                                            {"data", data},
                                            {"out", out}});
  }
  std::cout << "mse=" << fmt(mse) << "\n";
  return 0;
}

int cmd_rollout(const std::string& model_path, const std::string& task,
                const std::string& spec_path, int episodes, uint64_t seed, int exec_prefix,
                const std::string& chain_path, const std::string& out) {
  const aina::policy::PolicyModel model = aina::policy::load_model(model_path);
  const aina::TaskSpec spec = load_task_or_preset(task, spec_path);
  const aina::kin::KinematicChain chain = load_chain_or_default(chain_path);

  aina::rollout::RolloutOptions opts;
  opts.t_o = model.config.T_o;
  opts.exec_prefix = exec_prefix;

  fs::create_directories(fs::path(out) / "traces");
  const aina::rollout::EvaluationResult result = aina::rollout::evaluate(
      [&] { return std::make_unique<aina::rollout::PolicyActor>(model); }, chain, spec, episodes,
      seed, opts, fs::path(out) / "traces");
  write_json(fs::path(out) / "rollout_report.json", aina::rollout::to_json(result, spec, seed));
  write_resolved_config(out, ordered_json{{"command", "rollout"},
                                          {"model", model_path},
                                          {"task", aina::task_name(spec.task)},
                                          {"spec", spec_path},
                                          {"episodes", episodes},
                                          {"seed", seed},
                                          {"exec_prefix", exec_prefix},
                                          {"chain", chain_path},
                                          {"out", out}});
  std::cout << "success_rate=" << fmt(result.success_rate) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"aina: point-policy learning from human demonstrations, desk scale"};
  app.require_subcommand(1);

  int threads = 0;
  app.add_option("--threads", threads, "worker threads (0 = auto; never affects results)");
  app.add_flag("--quiet", g_quiet, "suppress progress output");

  // synth
  auto* synth = app.add_subcommand("synth", "generate synthetic demonstrations");
  std::string s_task, s_spec, s_out, s_chain;
  int s_count = 1;
  uint64_t s_seed = 0;
  synth->add_option("--task", s_task, "reach|pick_place|press");
  synth->add_option("--spec", s_spec, "task spec JSON (overrides --task preset)");
  synth->add_option("--count", s_count, "total demos: 1 in-scene + (count-1) wild")
      ->required()
      ->check(CLI::Range(1, 1 << 20));
  synth->add_option("--seed", s_seed, "generator seed")->required();
  synth->add_option("--out", s_out, "output directory")->required();
  synth->add_option("--chain", s_chain, "kinematic chain JSON (default: built-in)");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "lift a perception bundle into a trajectory");
  std::string i_bundle, i_mode = "stereo_disparity", i_frame, i_out;
  ingest->add_option("--bundle", i_bundle, "bundle directory")->required();
  ingest->add_option("--mode", i_mode, "stereo_disparity|direct_depth");
  ingest->add_option("--frame", i_frame, "world_gravity_aligned|robot_base")->required();
  ingest->add_option("--out", i_out, "output directory")->required();

  // align
  auto* align = app.add_subcommand("align", "align wild trajectories to the in-scene demo");
  std::string a_scene, a_wild, a_mode = "pivoted", a_out;
  align->add_option("--scene", a_scene, "in-scene trajectory file")->required();
  align->add_option("--wild-dir", a_wild, "directory of wild .traj files")->required();
  align->add_option("--mode", a_mode, "pivoted|literal");
  align->add_option("--out", a_out, "output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "train the point policy");
  std::string t_data, t_preset = "desk", t_config, t_out;
  uint64_t t_seed = 0;
  train->add_option("--data", t_data, "dataset manifest (file or directory)")->required();
  train->add_option("--preset", t_preset, "desk|paper base config");
  train->add_option("--config", t_config, "policy config JSON overriding the preset");
  auto* t_seed_opt = train->add_option("--seed", t_seed, "overrides the config seed");
  train->add_option("--out", t_out, "output directory")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "teacher-forced MSE of a model on a dataset");
  std::string e_model, e_data, e_out;
  eval->add_option("--model", e_model, "model file")->required();
  eval->add_option("--data", e_data, "dataset manifest")->required();
  eval->add_option("--out", e_out, "output directory (optional)");

  // rollout
  auto* roll = app.add_subcommand("rollout", "closed-loop evaluation in the kinematic simulator");
  std::string r_model, r_task, r_spec, r_chain, r_out;
  int r_episodes = 10, r_prefix = 10;
  uint64_t r_seed = 0;
  roll->add_option("--model", r_model, "model file")->required();
  roll->add_option("--task", r_task, "reach|pick_place|press");
  roll->add_option("--spec", r_spec, "task spec JSON");
  roll->add_option("--episodes", r_episodes, "episode count")->check(CLI::Range(1, 1 << 20));
  roll->add_option("--seed", r_seed, "episode randomization seed")->required();
  roll->add_option("--exec-prefix", r_prefix, "executed frames per replan")
      ->check(CLI::Range(1, 1 << 10));
  roll->add_option("--chain", r_chain, "kinematic chain JSON (default: built-in)");
  roll->add_option("--out", r_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  if (threads > 0) aina::set_thread_count(threads);

  try {
    if (synth->parsed()) return cmd_synth(s_task, s_spec, s_count, s_seed, s_out, s_chain);
    if (ingest->parsed()) return cmd_ingest(i_bundle, i_mode, i_frame, i_out);
    if (align->parsed()) return cmd_align(a_scene, a_wild, a_mode, a_out);
    if (train->parsed())
      return cmd_train(t_data, t_preset, t_config, t_seed, t_seed_opt->count() > 0, t_out);
    if (eval->parsed()) return cmd_eval(e_model, e_data, e_out);
    if (roll->parsed())
      return cmd_rollout(r_model, r_task, r_spec, r_episodes, r_seed, r_prefix, r_chain, r_out);
  } catch (const aina::Error& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

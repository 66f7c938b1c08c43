// command line front end: simulate | gen-data | train | evaluate

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dnnmg/config.hpp"
#include "dnnmg/dnnmg.hpp"
#include "dnnmg/vtk.hpp"

namespace fs = std::filesystem;
using namespace dnnmg;

namespace {

ChannelSpec mesh_spec(const KvConfig& c) {
  ChannelSpec s;
  s.length = c.get_double("mesh.length", 2.25);
  s.height = c.get_double("mesh.height", 0.4);
  s.h0 = c.get_double("mesh.h0", 0.05);
  s.obs_cx = c.get_double("obstacle.cx", 0.3);
  s.obs_cy = c.get_double("obstacle.cy", 0.15);
  s.obs_side = c.get_double("obstacle.side", 0.1);
  return s;
}

FlowParams flow_params(const KvConfig& c) {
  FlowParams p;
  p.k = c.get_double("time.k", 0.01);
  p.re_eq = c.get_double("flow.re_eq", 1000.0);
  p.alpha0 = c.get_double("flow.alpha0", 0.01);
  p.vmax = c.get_double("flow.vmax", 2.0);
  p.ramp_time = c.get_double("flow.ramp", 1.0);
  return p;
}

SolverConfig solver_config(const KvConfig& c) {
  SolverConfig s;
  s.newton_tol = c.get_double("solver.newton_tol", s.newton_tol);
  s.newton_max = c.get_int("solver.newton_max", s.newton_max);
  s.gmres_tol = c.get_double("solver.gmres_tol", s.gmres_tol);
  s.gmres_restart = c.get_int("solver.gmres_restart", s.gmres_restart);
  s.gmres_max = c.get_int("solver.gmres_max", s.gmres_max);
  s.pre_smooth = c.get_int("solver.pre_smooth", s.pre_smooth);
  s.post_smooth = c.get_int("solver.post_smooth", s.post_smooth);
  s.vanka_omega = c.get_double("solver.vanka_omega", s.vanka_omega);
  return s;
}

// --config file, then --scenario, then explicit key overrides, in that order
struct Options {
  std::string config_path, scenario;
  std::vector<std::pair<std::string, std::string>> overrides;

  KvConfig resolve() const {
    KvConfig c =
        config_path.empty() ? KvConfig() : KvConfig::from_file(config_path);
    if (!scenario.empty()) {
      if (scenario == "train")
        c.set("obstacle.cy", "0.15");
      else if (scenario == "test")
        c.set("obstacle.cy", "0.25");
      else
        throw ConfigError("scenario must be 'train' or 'test', got '" + scenario + "'");
      c.set("scenario", scenario);
    }
    for (const auto& kv : overrides) c.set(kv.first, kv.second);
    return c;
  }
};

void add_common(CLI::App* sc, Options& o) {
  sc->add_option("--config", o.config_path, "key = value configuration file");
  sc->add_option("--scenario", o.scenario, "train (obstacle y 0.15) or test (0.25)");
  sc->add_option_function<std::vector<std::string>>(
      "--set",
      [&o](const std::vector<std::string>& kvs) {
        for (const std::string& kv : kvs) {
          auto eq = kv.find('=');
          if (eq == std::string::npos)
            throw CLI::ValidationError("--set expects key=value, got '" + kv + "'");
          o.overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
        }
      },
      "override any config key (key=value, repeatable)");
}

// binds a flag to a config key so the file/default can still fill it
void add_key(CLI::App* sc, Options& o, const char* flag, const std::string& key,
             const char* desc) {
  sc->add_option_function<std::string>(
      flag, [&o, key](const std::string& v) { o.overrides.emplace_back(key, v); }, desc);
}

std::string run_name(const std::string& dir) {
  fs::path p(dir);
  if (p.filename().empty()) p = p.parent_path();
  return p.filename().string();
}

std::map<std::string, double> read_stats_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::string hline, dline;
  if (!std::getline(f, hline) || !std::getline(f, dline))
    throw std::runtime_error(path + ": expected header plus one data row");
  std::map<std::string, double> out;
  std::stringstream hs(hline), ds(dline);
  std::string h, d;
  while (std::getline(hs, h, ',')) {
    if (!std::getline(ds, d, ',')) throw std::runtime_error(path + ": short data row");
    out[h] = std::strtod(d.c_str(), nullptr);
  }
  return out;
}

int cmd_simulate(const Options& o) {
  KvConfig c = o.resolve();
  MeshHierarchy hier = MeshHierarchy::build(mesh_spec(c), c.get_int("mesh.levels", 3));
  Discretization disc(hier, flow_params(c));

  RunConfig rc;
  rc.level = c.get_int("dnnmg.level", 1);
  rc.variant = variant_from_string(c.get("dnnmg.variant", "off"));
  rc.T = c.get_double("time.T", 15.0);
  rc.eval_t0 = c.get_double("output.eval_t0", 8.0);
  rc.eval_t1 = c.get_double("output.eval_t1", 15.0);
  rc.checkpoint = c.get("dnnmg.checkpoint", "");
  rc.out_dir = c.get("output.dir", "out");
  rc.snapshot_every = c.get_int("output.snapshot_every", 25);
  rc.solver = solver_config(c);
  for (const auto& kv : c.items()) rc.echo[kv.first] = kv.second;
  if (variant_uses_network(rc.variant) && rc.checkpoint.empty())
    throw ConfigError("variant " + to_string(rc.variant) +
                      " needs dnnmg.checkpoint / --checkpoint");

  std::printf("simulate variant=%s level=%d T=%g k=%g out=%s\n", to_string(rc.variant).c_str(),
              rc.level, rc.T, disc.prm.k, rc.out_dir.c_str());
  RunResult r = run_simulation(disc, rc);
  std::printf("steps=%d wall=%.1fs\n", r.n_steps, r.seconds);
  std::printf("eval [%g, %g]: drag mean=%.6g ampl=%.3g freq=%.4g | lift mean=%.4g ampl=%.4g "
              "freq=%.4g | div mean=%.4g\n",
              rc.eval_t0, rc.eval_t1, r.drag_osc.mean, r.drag_osc.ampl, r.drag_osc.freq,
              r.lift_osc.mean, r.lift_osc.ampl, r.lift_osc.freq, r.div_mean);
  return 0;
}

int cmd_gen_data(const Options& o) {
  KvConfig c = o.resolve();
  MeshHierarchy hier = MeshHierarchy::build(mesh_spec(c), c.get_int("mesh.levels", 3));
  Discretization disc(hier, flow_params(c));

  GenConfig g;
  g.level = c.get_int("dnnmg.level", 1);
  g.n_steps = (int)std::llround(c.get_double("time.T", 10.0) / disc.prm.k);
  g.solver = solver_config(c);
  g.out_dir = c.get("train.dataset", c.get("output.dir", "out") + "/dataset");
  for (const auto& kv : c.items()) g.provenance[kv.first] = kv.second;

  std::printf("gen-data level=%d steps=%d out=%s\n", g.level, g.n_steps, g.out_dir.c_str());
  generate_training_data(disc, g);
  std::printf("wrote %s/velocity and %s/psi\n", g.out_dir.c_str(), g.out_dir.c_str());
  return 0;
}

int cmd_train(const Options& o) {
  KvConfig c = o.resolve();
  Variant var = variant_from_string(c.get("dnnmg.variant", "plain"));
  if (var == Variant::off) throw ConfigError("variant off has no network to train");
  bool psi = var == Variant::psi;

  MeshHierarchy hier = MeshHierarchy::build(mesh_spec(c), c.get_int("mesh.levels", 3));
  int level = c.get_int("dnnmg.level", 1);
  if (level + 1 >= hier.n_levels()) throw ConfigError("training needs mesh.levels > dnnmg.level+1");
  const MeshLevel& fine = hier[level + 1];

  std::string root = c.get("train.dataset", c.get("output.dir", "out") + "/dataset");
  std::string dsdir = root + (psi ? "/psi" : "/velocity");
  DatasetReader data(dsdir);
  auto hf = data.meta().extra.find("h_fine");
  if (hf != data.meta().extra.end() &&
      std::abs(std::strtod(hf->second.c_str(), nullptr) - fine.hx) > 1e-9)
    throw ConfigError("dataset " + dsdir + " was generated on a different mesh");

  TrainConfig t;
  t.loss = psi ? LossKind::psi
               : var == Variant::p1 ? LossKind::p1
               : var == Variant::p2 ? LossKind::p2
                                    : LossKind::base;
  t.gamma = c.get_double("dnnmg.gamma", 0.0);
  t.epochs = c.get_int("train.epochs", 30);
  t.window = c.get_int("train.window", 20);
  t.lr = c.get_double("train.lr", 1e-3);
  t.seed = c.get_u64("train.seed", 1);
  t.target_offset = c.get_bool("dnnmg.target_offset", true);

  std::string out_dir = c.get("output.dir", "out");
  fs::create_directories(out_dir);
  std::string ckpt = c.get("dnnmg.checkpoint", out_dir + "/net_" + to_string(var) + ".bin");

  std::printf("train variant=%s dataset=%s epochs=%d window=%d lr=%g seed=%llu gamma=%g\n",
              to_string(var).c_str(), dsdir.c_str(), t.epochs, t.window, t.lr,
              (unsigned long long)t.seed, t.gamma);
  NetParams net(psi ? NetConfig::psi_default() : NetConfig::velocity_default());
  Normalizer nrm;
  TrainReport rep = train_network(data, fine, t, net, nrm);

  std::map<std::string, std::string> side;
  side["variant"] = to_string(var);
  side["gamma"] = std::to_string(t.gamma);
  side["epochs"] = std::to_string(t.epochs);
  side["window"] = std::to_string(t.window);
  side["lr"] = std::to_string(t.lr);
  side["seed"] = std::to_string(t.seed);
  side["target_offset"] = t.target_offset ? "1" : "0";
  side["dataset"] = dsdir;
  side["n_params"] = std::to_string(rep.n_params);
  char num[32];
  std::snprintf(num, sizeof(num), "%.17g", rep.epoch_loss.back());
  side["final_loss"] = num;
  std::snprintf(num, sizeof(num), "%.17g", rep.best_loss);
  side["best_loss"] = num;
  std::snprintf(num, sizeof(num), "%.17g", rep.mean_correction_norm);
  side["mean_correction_norm"] = num;
  save_checkpoint(ckpt, net, nrm, side);

  std::vector<double> ep, lo, be;
  double best = rep.epoch_loss[0];
  for (size_t i = 0; i < rep.epoch_loss.size(); ++i) {
    best = std::min(best, rep.epoch_loss[i]);
    ep.push_back((double)(i + 1));
    lo.push_back(rep.epoch_loss[i]);
    be.push_back(best);
  }
  write_csv(out_dir + "/loss_" + to_string(var) + ".csv", {"epoch", "loss", "best"},
            {ep, lo, be});

  std::printf("params=%d best_loss=%.6g final_loss=%.6g mean|d|=%.6g sec/epoch=%.2f\n",
              rep.n_params, rep.best_loss, rep.epoch_loss.back(), rep.mean_correction_norm,
              rep.sec_per_epoch);
  std::printf("checkpoint %s\n", ckpt.c_str());
  return 0;
}

int cmd_evaluate(const Options& o, const std::string& ref_dir,
                 const std::vector<std::string>& run_dirs, std::string out_dir) {
  KvConfig refc = KvConfig::from_file(ref_dir + "/config.txt");
  if (out_dir.empty()) out_dir = "eval";
  fs::create_directories(out_dir);
  KvConfig cli = o.resolve();
  for (const auto& kv : cli.items()) refc.set(kv.first, kv.second);  // cli may pin the mesh

  MeshHierarchy hier = MeshHierarchy::build(mesh_spec(refc), refc.get_int("mesh.levels", 3));
  Transfer transfer(hier);

  auto ref_stats = read_stats_csv(ref_dir + "/stats.csv");
  int ref_level = 0;
  double ref_time = 0;
  la::Vec ref_state = load_state(ref_dir + "/state_dragmax.bin", ref_level, ref_time);
  if (ref_level >= hier.n_levels()) throw ConfigError("reference state level not in hierarchy");
  const MeshLevel& mref = hier[ref_level];

  const std::vector<std::string> quant = {"drag_mean", "drag_ampl", "drag_freq", "lift_mean",
                                          "lift_ampl", "lift_freq", "div_mean"};
  std::ofstream raw(out_dir + "/table_raw.csv"), rel(out_dir + "/table_rel.csv");
  raw << "run,variant";
  rel << "run,variant";
  for (const auto& q : quant) raw << "," << q;
  for (const auto& q : quant) rel << "," << q << "_relerr_pct";
  raw << "\n";
  rel << "\n";

  auto emit = [&](const std::string& dir, const std::string& variant,
                  const std::map<std::string, double>& st, bool is_ref) {
    char num[32];
    raw << run_name(dir) << "," << variant;
    rel << run_name(dir) << "," << variant;
    for (const auto& q : quant) {
      std::snprintf(num, sizeof(num), "%.6g", st.at(q));
      raw << "," << num;
      double r = ref_stats.at(q);
      double e = is_ref ? 0.0
                        : (std::abs(r) < 1e-12 ? std::numeric_limits<double>::quiet_NaN()
                                               : std::abs(st.at(q) - r) / std::abs(r) * 100.0);
      std::snprintf(num, sizeof(num), "%.6g", e);
      rel << "," << num;
    }
    raw << "\n";
    rel << "\n";
  };

  emit(ref_dir, refc.get("run.variant", "?") + "(ref)", ref_stats, true);
  for (const std::string& rd : run_dirs) {
    KvConfig rc = KvConfig::from_file(rd + "/config.txt");
    auto st = read_stats_csv(rd + "/stats.csv");
    emit(rd, rc.get("run.variant", "?"), st, false);

    int lv = 0;
    double tm = 0;
    la::Vec xs = load_state(rd + "/state_dragmax.bin", lv, tm);
    while (lv < ref_level) {  // lift coarser states to the reference level
      xs = transfer.prolong(lv, xs, 3);
      ++lv;
    }
    if (lv != ref_level)
      throw ConfigError("run " + rd + " stored on level " + std::to_string(lv) +
                        ", reference on " + std::to_string(ref_level));
    std::vector<double> err = velocity_error_field(mref, xs, ref_state);
    int nn = mref.n_nodes();
    std::vector<double> v(xs.begin(), xs.begin() + 2 * nn), p(xs.begin() + 2 * nn, xs.end());
    write_solution_vtk(mref, v, p, out_dir + "/error_" + run_name(rd) + ".vtk",
                       {{"verr", &err}});
  }
  std::printf("wrote %s/table_raw.csv, %s/table_rel.csv and error fields\n", out_dir.c_str(),
              out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  const char* th = std::getenv("DNNMG_THREADS");
  int nth = th ? std::atoi(th) : 1;
  Eigen::setNbThreads(nth > 0 ? nth : 1);

  CLI::App app{"hierarchical flow solver with learned fine-level corrections"};
  app.require_subcommand(1);

  Options os, og, ot, oe;
  CLI::App* sim = app.add_subcommand("simulate", "time-step one variant and write csv/vtk");
  add_common(sim, os);
  add_key(sim, os, "--variant", "dnnmg.variant", "off | plain | p1 | p2 | psi");
  add_key(sim, os, "--level", "dnnmg.level", "solve level (0 = coarsest)");
  add_key(sim, os, "--levels", "mesh.levels", "mesh hierarchy depth");
  add_key(sim, os, "--checkpoint", "dnnmg.checkpoint", "network checkpoint file");
  add_key(sim, os, "--T", "time.T", "simulation horizon");
  add_key(sim, os, "--out", "output.dir", "output directory");

  CLI::App* gen = app.add_subcommand("gen-data", "paired coarse/fine run, training datasets");
  add_common(gen, og);
  add_key(gen, og, "--level", "dnnmg.level", "coarse level of the pair");
  add_key(gen, og, "--levels", "mesh.levels", "mesh hierarchy depth");
  add_key(gen, og, "--T", "time.T", "data horizon (default 10)");
  add_key(gen, og, "--dataset", "train.dataset", "dataset root directory");

  CLI::App* trn = app.add_subcommand("train", "train a network on a generated dataset");
  add_common(trn, ot);
  add_key(trn, ot, "--variant", "dnnmg.variant", "plain | p1 | p2 | psi");
  add_key(trn, ot, "--gamma", "dnnmg.gamma", "penalty weight for p1/p2");
  add_key(trn, ot, "--epochs", "train.epochs", "training epochs");
  add_key(trn, ot, "--seed", "train.seed", "init seed");
  add_key(trn, ot, "--dataset", "train.dataset", "dataset root directory");
  add_key(trn, ot, "--checkpoint", "dnnmg.checkpoint", "checkpoint output path");
  add_key(trn, ot, "--out", "output.dir", "output directory");

  CLI::App* ev = app.add_subcommand("evaluate", "compare runs against a reference run");
  add_common(ev, oe);
  std::string ref_dir, eval_out;
  std::vector<std::string> run_dirs;
  ev->add_option("--ref", ref_dir, "reference run directory")->required();
  ev->add_option("--run", run_dirs, "run directory (repeatable)")->required();
  ev->add_option("--out", eval_out, "evaluation output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) return cmd_simulate(os);
    if (gen->parsed()) return cmd_gen_data(og);
    if (trn->parsed()) return cmd_train(ot);
    if (ev->parsed()) return cmd_evaluate(oe, ref_dir, run_dirs, eval_out);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

#include "dnnmg/dnnmg.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "dnnmg/config.hpp"
#include "dnnmg/vtk.hpp"

namespace dnnmg {

namespace {
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}
}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::off: return "off";
    case Variant::plain: return "plain";
    case Variant::p1: return "p1";
    case Variant::p2: return "p2";
    case Variant::psi: return "psi";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  if (s == "off") return Variant::off;
  if (s == "plain") return Variant::plain;
  if (s == "p1") return Variant::p1;
  if (s == "p2") return Variant::p2;
  if (s == "psi") return Variant::psi;
  throw std::invalid_argument("unknown variant '" + s + "' (off|plain|p1|p2|psi)");
}

int patch_feature_len(PatchMode mode) {
  return mode == PatchMode::coarse_element ? 4 * 25 + 2 : 4 * 9 + 2;
}

void gather_patch_features(const MeshLevel& fine, const std::vector<Patch>& patches,
                           const la::Vec& xt, const la::Vec& rf, double re_eq,
                           Eigen::MatrixXd& X) {
  int np = (int)patches.size();
  if (np == 0) throw std::invalid_argument("gather features: empty patch list");
  int m = (int)patches[0].fine_nodes.size();
  int nn = fine.n_nodes();
  double pe_coef = 0.5 * re_eq * fine.hx;
  X.resize(4 * m + 2, np);
  for (int j = 0; j < np; ++j) {
    const Patch& p = patches[j];
    double vmean = 0.0;
    for (int k = 0; k < m; ++k) {
      int nd = p.fine_nodes[k];
      X(k, j) = rf[nd];
      X(m + k, j) = rf[nn + nd];
      X(2 * m + k, j) = xt[nd];
      X(3 * m + k, j) = xt[nn + nd];
      vmean += std::hypot(xt[nd], xt[nn + nd]);
    }
    X(4 * m, j) = p.w / p.h;
    X(4 * m + 1, j) = pe_coef * vmean / m;
  }
}

void gather_patch_velocity(const MeshLevel& fine, const std::vector<Patch>& patches,
                           const la::Vec& v, Eigen::MatrixXd& out) {
  int np = (int)patches.size();
  if (np == 0) throw std::invalid_argument("gather velocity: empty patch list");
  int m = (int)patches[0].fine_nodes.size();
  int nn = fine.n_nodes();
  out.resize(2 * m, np);
  for (int j = 0; j < np; ++j)
    for (int k = 0; k < m; ++k) {
      int nd = patches[j].fine_nodes[k];
      out(k, j) = v[nd];
      out(m + k, j) = v[nn + nd];
    }
}

void save_state(const std::string& path, int level, double time, const la::Vec& x) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.write("DNNMGST1", 8);
  uint32_t lv = (uint32_t)level, n = (uint32_t)x.size();
  f.write(reinterpret_cast<const char*>(&lv), 4);
  f.write(reinterpret_cast<const char*>(&n), 4);
  f.write(reinterpret_cast<const char*>(&time), 8);
  f.write(reinterpret_cast<const char*>(x.data()), 8 * (std::streamsize)x.size());
  if (!f) throw std::runtime_error("short write on " + path);
}

la::Vec load_state(const std::string& path, int& level, double& time) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, "DNNMGST1", 8) != 0)
    throw std::runtime_error(path + ": not a state file");
  uint32_t lv = 0, n = 0;
  f.read(reinterpret_cast<char*>(&lv), 4);
  f.read(reinterpret_cast<char*>(&n), 4);
  f.read(reinterpret_cast<char*>(&time), 8);
  la::Vec x(n);
  f.read(reinterpret_cast<char*>(x.data()), 8 * (std::streamsize)n);
  if (!f) throw std::runtime_error(path + ": truncated state file");
  level = (int)lv;
  return x;
}

Simulator::Simulator(Discretization& d, int level, Variant var, const SolverConfig& scfg,
                     const NetParams* net, const Normalizer* nrm)
    : d_(&d), level_(level), var_(var), net_(net), nrm_(nrm), newton_(d, level, scfg) {
  const LevelFem& femc = d.fem(level_);
  x_.assign(femc.n_dofs(), 0.0);
  femc.apply_dirichlet(x_, 0.0);
  if (var_ == Variant::off) {
    b_used_ = femc.assemble_rhs(x_, 0.0, d.prm.k);
    return;
  }
  if (level_ + 1 >= d.n_levels())
    throw std::invalid_argument("network variant needs a level above the solve level");
  if (!net_ || !nrm_) throw std::invalid_argument("network variant needs parameters");
  PatchMode mode = var_ == Variant::psi ? PatchMode::fine_element : PatchMode::coarse_element;
  if ((var_ == Variant::psi) != (net_->cfg.mode == NetMode::psi))
    throw std::invalid_argument("checkpoint mode does not match the variant");
  if (net_->cfg.F != patch_feature_len(mode) ||
      net_->cfg.O != (var_ == Variant::psi ? 8 : 50))
    throw std::invalid_argument("network dimensions do not match the patch mode");
  if ((int)nrm_->mean.size() != net_->cfg.F || (int)nrm_->inv_std.size() != net_->cfg.F)
    throw std::invalid_argument("normalizer length does not match the feature length");

  patches_ = enumerate_patches(*d.hier, level_, mode);
  hidden_ = Eigen::MatrixXd::Zero(net_->cfg.H, (Eigen::Index)patches_.size());
  const MeshLevel& mf = (*d.hier)[level_ + 1];
  if (var_ == Variant::psi) {
    rec_ = std::make_unique<StreamReconstructor>(mf);
  } else {
    std::vector<int> cnt(mf.n_nodes(), 0);
    for (const Patch& p : patches_)
      for (int nd : p.fine_nodes) ++cnt[nd];
    wpatch_.assign(mf.n_nodes(), 0.0);
    for (int n = 0; n < mf.n_nodes(); ++n)
      if (cnt[n]) wpatch_[n] = 1.0 / cnt[n];
  }
  xt_ = d.transfer.prolong(level_, x_, 3);
  bfine_used_ = d.fem(level_ + 1).assemble_rhs(xt_, 0.0, d.prm.k);
  b_used_ = d.transfer.restrict_functional(level_, bfine_used_, 3);
}

const la::Vec& Simulator::fine_state() const {
  if (var_ == Variant::off) throw std::logic_error("variant off has no fine state");
  return cf_;
}

const la::Vec& Simulator::prolonged_state() const {
  if (var_ == Variant::off) throw std::logic_error("variant off keeps no prolonged state");
  return xt_;
}

const la::Vec& Simulator::fine_rhs_used() const {
  if (var_ == Variant::off) throw std::logic_error("variant off keeps no fine rhs");
  return bfine_used_;
}

const Eigen::MatrixXd& Simulator::last_features() const {
  if (var_ == Variant::off) throw std::logic_error("variant off gathers no features");
  return feat_;
}

const la::Vec& Simulator::last_fine_residual() const {
  if (var_ == Variant::off) throw std::logic_error("variant off keeps no fine residual");
  return rf_;
}

void Simulator::apply_network(double tn, StepRecord& r) {
  const LevelFem& femf = d_->fem(level_ + 1);
  const MeshLevel& mf = (*d_->hier)[level_ + 1];
  int nnf = mf.n_nodes();

  xt_ = d_->transfer.prolong(level_, x_, 3);
  rf_ = femf.assemble_residual(xt_, bfine_used_, tn);
  gather_patch_features(mf, patches_, xt_, rf_, d_->prm.re_eq, feat_);
  featn_ = feat_;
  nrm_->apply(featn_);
  net_forward(*net_, featn_, hidden_, nullptr, out_);
  if (!out_.allFinite())
    for (Eigen::Index j = 0; j < out_.cols(); ++j)
      if (!out_.col(j).allFinite())
        throw std::runtime_error("non-finite network correction for patch " + std::to_string(j) +
                                 " at t=" + std::to_string(tn));

  dcor_.assign(2 * nnf, 0.0);
  if (var_ == Variant::psi) {
    std::vector<std::array<double, 8>> s(patches_.size());
    for (size_t j = 0; j < patches_.size(); ++j)
      for (int c = 0; c < 8; ++c) s[j][c] = out_(c, (Eigen::Index)j);
    dcor_ = rec_->assemble(s);
  } else {
    const int m = 25;
    for (size_t j = 0; j < patches_.size(); ++j)
      for (int k = 0; k < m; ++k) {
        int nd = patches_[j].fine_nodes[k];
        dcor_[nd] += wpatch_[nd] * out_(k, (Eigen::Index)j);
        dcor_[nnf + nd] += wpatch_[nd] * out_(m + k, (Eigen::Index)j);
      }
    for (int nd = 0; nd < nnf; ++nd)
      if (mf.is_dirichlet_v(nd)) dcor_[nd] = dcor_[nnf + nd] = 0.0;
  }

  cf_ = xt_;
  for (int i = 0; i < 2 * nnf; ++i) cf_[i] += dcor_[i];
  r.dnorm = la::norm2(dcor_);
  auto fl = drag_lift_residual(femf, cf_, bfine_used_);
  r.drag_f = fl.first;
  r.lift_f = fl.second;
  r.div_f = divergence_norm(femf, cf_);
}

StepRecord Simulator::step() {
  const LevelFem& femc = d_->fem(level_);
  double tn = time_ + d_->prm.k;
  rep_ = newton_.solve(x_, b_used_, tn);
  if (!rep_.converged)
    throw std::runtime_error("newton failed at t=" + std::to_string(tn) + ": " + rep_.what);

  StepRecord r;
  r.t = tn;
  auto fl = drag_lift_residual(femc, x_, b_used_);
  r.drag = fl.first;
  r.lift = fl.second;
  r.div = divergence_norm(femc, x_);
  r.newton_iters = rep_.iters;
  for (int g : rep_.gmres_iters) r.gmres_iters += g;
  r.drag_f = r.lift_f = r.div_f = r.dnorm = kNan;

  if (var_ != Variant::off) {
    apply_network(tn, r);
    bfine_next_ = d_->fem(level_ + 1).assemble_rhs(cf_, tn, tn + d_->prm.k);
    b_next_ = d_->transfer.restrict_functional(level_, bfine_next_, 3);
    bfine_used_.swap(bfine_next_);
  } else {
    b_next_ = femc.assemble_rhs(x_, tn, tn + d_->prm.k);
  }
  b_used_.swap(b_next_);
  time_ = tn;
  ++step_;
  return r;
}

RunResult run_simulation(Discretization& d, const RunConfig& cfg) {
  bool usenet = variant_uses_network(cfg.variant);
  NetParams net(NetConfig::velocity_default());
  Normalizer nrm;
  if (usenet) {
    if (cfg.checkpoint.empty())
      throw ConfigError("variant " + to_string(cfg.variant) + " needs a checkpoint");
    net = load_checkpoint(cfg.checkpoint, nrm);
    if ((cfg.variant == Variant::psi) != (net.cfg.mode == NetMode::psi))
      throw ConfigError("checkpoint " + cfg.checkpoint + " does not match variant " +
                        to_string(cfg.variant));
  }
  Simulator sim(d, cfg.level, cfg.variant, cfg.solver, usenet ? &net : nullptr,
                usenet ? &nrm : nullptr);

  bool out = !cfg.out_dir.empty();
  if (out) std::filesystem::create_directories(cfg.out_dir);

  RunResult res;
  res.out_level = usenet ? cfg.level + 1 : cfg.level;
  res.n_steps = (int)std::llround(cfg.T / d.prm.k);
  const MeshLevel& mout = (*d.hier)[res.out_level];

  auto snapshot = [&](int n) {
    const la::Vec& st = usenet ? sim.fine_state() : sim.state();
    int nn = mout.n_nodes();
    std::vector<double> v(st.begin(), st.begin() + 2 * nn), p(st.begin() + 2 * nn, st.end());
    char name[64];
    std::snprintf(name, sizeof(name), "/solution_%05d.vtk", n);
    write_solution_vtk(mout, v, p, cfg.out_dir + name);
  };

  auto tic = std::chrono::steady_clock::now();
  double best = 0.0;
  bool have_max = false;
  for (int n = 1; n <= res.n_steps; ++n) {
    StepRecord r = sim.step();
    res.series.push_back(r);
    double dprim = usenet ? r.drag_f : r.drag;
    if (r.t >= cfg.eval_t0 && r.t <= cfg.eval_t1 && (!have_max || dprim > best)) {
      best = dprim;
      have_max = true;
      res.state_dragmax = usenet ? sim.fine_state() : sim.state();
      res.t_dragmax = r.t;
    }
    if (out && cfg.snapshot_every > 0 && n % cfg.snapshot_every == 0) snapshot(n);
  }
  res.seconds = seconds_since(tic);
  res.state_final = usenet ? sim.fine_state() : sim.state();
  res.t_final = sim.time();
  if (!have_max) {
    res.state_dragmax = res.state_final;
    res.t_dragmax = res.t_final;
  }

  std::vector<double> t, dragp, liftp;
  double divsum = 0.0;
  int divcnt = 0;
  for (const StepRecord& r : res.series) {
    t.push_back(r.t);
    dragp.push_back(usenet ? r.drag_f : r.drag);
    liftp.push_back(usenet ? r.lift_f : r.lift);
    if (r.t >= cfg.eval_t0 && r.t <= cfg.eval_t1) {
      divsum += usenet ? r.div_f : r.div;
      ++divcnt;
    }
  }
  res.drag_osc = oscillation_stats(t, dragp, cfg.eval_t0, cfg.eval_t1);
  res.lift_osc = oscillation_stats(t, liftp, cfg.eval_t0, cfg.eval_t1);
  res.div_mean = divcnt ? divsum / divcnt : kNan;

  if (out) {
    KvConfig echo;
    echo.set("run.variant", to_string(cfg.variant));
    echo.set("run.level", std::to_string(cfg.level));
    echo.set("run.out_level", std::to_string(res.out_level));
    echo.set("run.T", std::to_string(cfg.T));
    echo.set("run.k", std::to_string(d.prm.k));
    echo.set("run.re_eq", std::to_string(d.prm.re_eq));
    echo.set("run.eval_t0", std::to_string(cfg.eval_t0));
    echo.set("run.eval_t1", std::to_string(cfg.eval_t1));
    echo.set("run.checkpoint", cfg.checkpoint);
    for (const auto& kv : cfg.echo) echo.set(kv.first, kv.second);
    echo.write(cfg.out_dir + "/config.txt");

    std::vector<std::string> hdr = {"t", "drag", "lift", "div"};
    std::vector<std::vector<double>> cols(4);
    for (const StepRecord& r : res.series) {
      cols[0].push_back(r.t);
      cols[1].push_back(r.drag);
      cols[2].push_back(r.lift);
      cols[3].push_back(r.div);
    }
    if (usenet) {
      hdr.insert(hdr.end(), {"drag_f", "lift_f", "div_f", "dnorm"});
      cols.resize(8);
      for (const StepRecord& r : res.series) {
        cols[4].push_back(r.drag_f);
        cols[5].push_back(r.lift_f);
        cols[6].push_back(r.div_f);
        cols[7].push_back(r.dnorm);
      }
    }
    hdr.insert(hdr.end(), {"newton", "gmres"});
    size_t b = cols.size();
    cols.resize(b + 2);
    for (const StepRecord& r : res.series) {
      cols[b].push_back(r.newton_iters);
      cols[b + 1].push_back(r.gmres_iters);
    }
    write_csv(cfg.out_dir + "/series.csv", hdr, cols);

    write_csv(cfg.out_dir + "/stats.csv",
              {"t0", "t1", "drag_min", "drag_max", "drag_mean", "drag_ampl", "drag_freq",
               "lift_min", "lift_max", "lift_mean", "lift_ampl", "lift_freq", "div_mean"},
              {{cfg.eval_t0},
               {cfg.eval_t1},
               {res.drag_osc.minv},
               {res.drag_osc.maxv},
               {res.drag_osc.mean},
               {res.drag_osc.ampl},
               {res.drag_osc.freq},
               {res.lift_osc.minv},
               {res.lift_osc.maxv},
               {res.lift_osc.mean},
               {res.lift_osc.ampl},
               {res.lift_osc.freq},
               {res.div_mean}});

    save_state(cfg.out_dir + "/state_dragmax.bin", res.out_level, res.t_dragmax,
               res.state_dragmax);
    save_state(cfg.out_dir + "/state_final.bin", res.out_level, res.t_final, res.state_final);
  }
  return res;
}

void generate_training_data(Discretization& d, const GenConfig& cfg) {
  if (cfg.level + 1 >= d.n_levels())
    throw std::invalid_argument("training data needs levels (L, L+1) in the hierarchy");
  const MeshLevel& mf = (*d.hier)[cfg.level + 1];

  NetParams znet(NetConfig::velocity_default());  // zero weights: correction-free feedback
  Normalizer znrm;
  znrm.mean.assign(znet.cfg.F, 0.0);
  znrm.inv_std.assign(znet.cfg.F, 1.0);
  Simulator coarse(d, cfg.level, Variant::plain, cfg.solver, &znet, &znrm);
  Simulator fine(d, cfg.level + 1, Variant::off, cfg.solver);

  auto patches_v = enumerate_patches(*d.hier, cfg.level, PatchMode::coarse_element);
  auto patches_p = enumerate_patches(*d.hier, cfg.level, PatchMode::fine_element);

  auto meta_for = [&](PatchMode mode, size_t np) {
    DatasetMeta m;
    m.mode = mode == PatchMode::coarse_element ? "velocity" : "psi";
    m.n_patches = (int)np;
    m.n_steps = cfg.n_steps;
    m.feature_len = patch_feature_len(mode);
    m.target_len = (m.feature_len - 2) / 2;
    m.extra = cfg.provenance;
    m.extra["level"] = std::to_string(cfg.level);
    m.extra["k"] = std::to_string(d.prm.k);
    m.extra["re_eq"] = std::to_string(d.prm.re_eq);
    m.extra["h_coarse"] = std::to_string((*d.hier)[cfg.level].hx);
    m.extra["h_fine"] = std::to_string(mf.hx);
    return m;
  };
  DatasetWriter wv(cfg.out_dir + "/velocity", meta_for(PatchMode::coarse_element, patches_v.size()));
  DatasetWriter wp(cfg.out_dir + "/psi", meta_for(PatchMode::fine_element, patches_p.size()));

  Eigen::MatrixXd xp, tv, tp;
  for (int n = 1; n <= cfg.n_steps; ++n) {
    coarse.step();
    fine.step();
    gather_patch_velocity(mf, patches_v, fine.state(), tv);
    wv.record_step(coarse.last_features(), tv);
    gather_patch_features(mf, patches_p, coarse.prolonged_state(), coarse.last_fine_residual(),
                          d.prm.re_eq, xp);
    gather_patch_velocity(mf, patches_p, fine.state(), tp);
    wp.record_step(xp, tp);
  }
  wv.finalize();
  wp.finalize();
}

TrainReport train_network(const DatasetReader& data, const MeshLevel& fine,
                          const TrainConfig& tc, NetParams& net, Normalizer& nrm) {
  const DatasetMeta& meta = data.meta();
  bool psi_mode = meta.mode == "psi";
  if (psi_mode != (net.cfg.mode == NetMode::psi))
    throw std::invalid_argument("network mode does not match the dataset mode");
  if (psi_mode != (tc.loss == LossKind::psi))
    throw std::invalid_argument("loss kind does not match the dataset mode");
  if (net.cfg.F != meta.feature_len)
    throw std::invalid_argument("network input width does not match the dataset");
  int m = (meta.feature_len - 2) / 4;
  if (meta.target_len != 2 * m) throw std::invalid_argument("unexpected dataset target length");
  if (net.cfg.O != (psi_mode ? 8 : 2 * m))
    throw std::invalid_argument("network output width does not match the dataset");
  if (psi_mode && meta.n_patches != fine.n_elems())
    throw std::invalid_argument("psi dataset patch count does not match the fine mesh");

  int np = meta.n_patches, F = meta.feature_len, H = net.cfg.H;
  net.init_random(tc.seed);

  nrm.mean.assign(F, 0.0);
  nrm.inv_std.assign(F, 0.0);
  {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(F), var = Eigen::VectorXd::Zero(F);
    for (int n = 0; n < meta.n_steps; ++n) mean += data.features(n).rowwise().sum();
    mean /= (double)meta.n_steps * np;
    for (int n = 0; n < meta.n_steps; ++n)
      var += (data.features(n).colwise() - mean).array().square().matrix().rowwise().sum();
    var /= (double)meta.n_steps * np;
    for (int i = 0; i < F; ++i) {
      nrm.mean[i] = mean[i];
      nrm.inv_std[i] = 1.0 / std::sqrt(var[i] + 1e-10);
    }
  }

  std::unique_ptr<Eigen::MatrixXd> Q;
  if (tc.loss == LossKind::p1 || tc.loss == LossKind::p2)
    Q = std::make_unique<Eigen::MatrixXd>(patch_divergence_matrix(fine.hx, fine.hy));
  std::unique_ptr<StreamReconstructor> rec;
  std::unique_ptr<PsiLoss> ploss;
  if (psi_mode) {
    rec = std::make_unique<StreamReconstructor>(fine);
    ploss = std::make_unique<PsiLoss>(*rec);
  }

  if (tc.epochs < 1 || tc.window < 1)
    throw std::invalid_argument("epochs and window must be positive");
  int off = tc.target_offset ? 1 : 0;
  int usable = meta.n_steps - off;
  if (usable < 1) throw std::invalid_argument("dataset too short for the target offset");

  Adam opt;
  opt.lr = tc.lr;
  NetParams grad(net.cfg);
  std::vector<StepTape> tapes(tc.window);
  std::vector<Eigen::MatrixXd> douts(tc.window);
  Eigen::MatrixXd hidden(H, np), X, out, V, dH, dHp;

  TrainReport rep;
  rep.n_params = net.cfg.n_params();
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    auto tic = std::chrono::steady_clock::now();
    hidden.setZero();
    double eloss = 0.0;
    for (int w0 = 0; w0 < usable; w0 += tc.window) {
      int wn = std::min(tc.window, usable - w0);
      std::fill(grad.buf.begin(), grad.buf.end(), 0.0);
      for (int i = 0; i < wn; ++i) {
        int n = w0 + i;
        X = data.features(n);
        nrm.apply(X);
        net_forward(net, X, hidden, &tapes[i], out);
        V = data.features(n).middleRows(2 * m, 2 * m);
        const Eigen::MatrixXd& T = data.targets(n + off);
        if (psi_mode)
          eloss += ploss->eval(out, V, T, douts[i]);
        else
          eloss += velocity_loss(tc.loss, tc.gamma, Q.get(), out, V, T, douts[i]);
      }
      dH = Eigen::MatrixXd::Zero(H, np);
      for (int i = wn - 1; i >= 0; --i) {
        net_backward(net, tapes[i], douts[i], dH, grad, dHp);
        dH.swap(dHp);
      }
      opt.step(net.buf, grad.buf);
    }
    rep.epoch_loss.push_back(eloss);
    rep.epoch_seconds.push_back(seconds_since(tic));
  }
  rep.best_loss = *std::min_element(rep.epoch_loss.begin(), rep.epoch_loss.end());
  double tsum = 0.0;
  for (double s : rep.epoch_seconds) tsum += s;
  rep.sec_per_epoch = tsum / (double)rep.epoch_seconds.size();

  hidden.setZero();
  double dnorm = 0.0;
  for (int n = 0; n < meta.n_steps; ++n) {
    X = data.features(n);
    nrm.apply(X);
    net_forward(net, X, hidden, nullptr, out);
    for (Eigen::Index j = 0; j < out.cols(); ++j) dnorm += out.col(j).norm();
  }
  rep.mean_correction_norm = dnorm / ((double)meta.n_steps * np);
  return rep;
}

}  // namespace dnnmg

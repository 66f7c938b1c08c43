#pragma once

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dnnmg/dataset.hpp"
#include "dnnmg/divfree.hpp"
#include "dnnmg/metrics.hpp"
#include "dnnmg/neural.hpp"
#include "dnnmg/solver.hpp"

namespace dnnmg {

enum class Variant { off, plain, p1, p2, psi };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);  // throws std::invalid_argument
inline bool variant_uses_network(Variant v) { return v != Variant::off; }

// feature rows per patch column: [res_x | res_y | vt_x | vt_y | aspect | peclet]
// with m lattice nodes per block; res is the fine residual of the prolonged
// state, vt the prolonged velocity, peclet = re_eq/2 * h_f * mean |vt|
int patch_feature_len(PatchMode mode);
void gather_patch_features(const MeshLevel& fine, const std::vector<Patch>& patches,
                           const la::Vec& xt, const la::Vec& rf, double re_eq,
                           Eigen::MatrixXd& X);
// patch-node velocity values, rows [vx | vy]
void gather_patch_velocity(const MeshLevel& fine, const std::vector<Patch>& patches,
                           const la::Vec& v, Eigen::MatrixXd& out);

// mixed state snapshot (vx | vy | p)
void save_state(const std::string& path, int level, double time, const la::Vec& x);
la::Vec load_state(const std::string& path, int& level, double& time);

// per-step diagnostics; the *_f fields hold corrected fine-level values and
// are NaN for variant off
struct StepRecord {
  double t = 0;
  double drag = 0, lift = 0, div = 0;
  double drag_f = 0, lift_f = 0, div_f = 0;
  double dnorm = 0;  // l2 norm of the applied correction
  int newton_iters = 0, gmres_iters = 0;
};

// One time-stepping loop.  Variant off is the plain solver on `level`; the
// network variants additionally prolong each solution to level+1, predict a
// patchwise velocity correction, and feed the corrected field back through
// the restricted right-hand side of the next step.
class Simulator {
 public:
  Simulator(Discretization& d, int level, Variant var, const SolverConfig& scfg,
            const NetParams* net = nullptr, const Normalizer* nrm = nullptr);

  StepRecord step();  // throws std::runtime_error on Newton failure
  double time() const { return time_; }
  int step_index() const { return step_; }
  int solve_level() const { return level_; }
  Variant variant() const { return var_; }
  bool has_fine() const { return var_ != Variant::off; }

  const la::Vec& state() const { return x_; }
  const la::Vec& fine_state() const;       // corrected fine mixed state
  const la::Vec& prolonged_state() const;  // uncorrected prolongation of state()
  const la::Vec& fine_rhs_used() const;    // fine rhs of the step just taken
  const la::Vec& rhs_used() const { return b_used_; }
  const Eigen::MatrixXd& last_features() const;       // raw, pre-normalization
  const la::Vec& last_fine_residual() const;
  const NewtonReport& last_report() const { return rep_; }
  const std::vector<Patch>& patches() const { return patches_; }

 private:
  void apply_network(double t, StepRecord& r);

  Discretization* d_;
  int level_;
  Variant var_;
  const NetParams* net_;
  const Normalizer* nrm_;
  NewtonSolver newton_;
  std::vector<Patch> patches_;
  std::unique_ptr<StreamReconstructor> rec_;  // psi reconstruction
  std::vector<double> wpatch_;                // velocity-mode scatter weights
  Eigen::MatrixXd hidden_, feat_, featn_, out_;
  la::Vec x_, b_used_, b_next_;
  la::Vec xt_, rf_, dcor_, cf_, bfine_used_, bfine_next_;
  NewtonReport rep_;
  double time_ = 0;
  int step_ = 0;
};

struct RunConfig {
  int level = 0;
  Variant variant = Variant::off;
  double T = 15.0;
  double eval_t0 = 8.0, eval_t1 = 15.0;
  std::string checkpoint;  // required for network variants
  std::string out_dir;     // empty: keep everything in memory
  int snapshot_every = 25;
  SolverConfig solver;
  std::map<std::string, std::string> echo;  // extra keys copied to config.txt
};

struct RunResult {
  std::vector<StepRecord> series;
  OscStats drag_osc, lift_osc;  // of the primary series over the eval window
  double div_mean = 0;          // primary divergence mean over the eval window
  la::Vec state_dragmax, state_final;  // mixed states on out_level
  double t_dragmax = 0, t_final = 0;
  int out_level = 0;
  int n_steps = 0;
  double seconds = 0;  // wall clock, never written to csv
};

// runs the full horizon; the primary drag/lift/div series is the corrected
// fine one for network variants and the solve-level one for variant off.
// With out_dir set writes config.txt, series.csv, stats.csv, state files and
// periodic vtk snapshots.
RunResult run_simulation(Discretization& d, const RunConfig& cfg);

struct GenConfig {
  int level = 0;     // coarse level L, data pairs (L, L+1)
  int n_steps = 1000;
  SolverConfig solver;
  std::string out_dir;  // writes <out_dir>/velocity and <out_dir>/psi
  std::map<std::string, std::string> provenance;
};

// paired coarse/fine run from identical initial data; records per step the
// patch features of the prolonged coarse state and the fine velocity targets,
// for both patch modes in one pass
void generate_training_data(Discretization& d, const GenConfig& cfg);

struct TrainConfig {
  LossKind loss = LossKind::base;
  double gamma = 0.0;
  int epochs = 30;
  int window = 20;  // truncated-backprop window length
  double lr = 1e-3;
  uint64_t seed = 1;
  bool target_offset = true;  // pair features at n with targets at n+1
};

struct TrainReport {
  std::vector<double> epoch_loss, epoch_seconds;
  double best_loss = 0;
  double sec_per_epoch = 0;          // mean, stdout/report only
  double mean_correction_norm = 0;   // mean output column norm after training
  int n_params = 0;
};

// initializes net from tc.seed, fits the normalizer on the dataset, trains
// chronological windows with one optimizer step per window, hidden state
// carried detached across windows and reset each epoch
TrainReport train_network(const DatasetReader& data, const MeshLevel& fine,
                          const TrainConfig& tc, NetParams& net, Normalizer& nrm);

}  // namespace dnnmg

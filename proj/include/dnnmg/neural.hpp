#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dnnmg/divfree.hpp"
#include "dnnmg/la.hpp"

namespace dnnmg {

enum class NetMode : uint32_t { velocity = 0, psi = 1 };
enum class LossKind { base, p1, p2, psi };

// encoder (2 fc + tanh) -> GRU -> decoder (fc + tanh, fc linear)
struct NetConfig {
  NetMode mode = NetMode::velocity;
  int F = 102, E1 = 32, E2 = 20, H = 20, D1 = 30, O = 50;

  static NetConfig velocity_default() { return {}; }
  static NetConfig psi_default() { return {NetMode::psi, 38, 42, 30, 31, 8, 8}; }
  int n_params() const;
  bool operator==(const NetConfig& o) const {
    return mode == o.mode && F == o.F && E1 == o.E1 && E2 == o.E2 && H == o.H && D1 == o.D1 &&
           O == o.O;
  }
};

// views into a flat buffer, in declaration (= serialization) order
template <typename M, typename V>
struct NetViewsT {
  M W1, W2, Wz, Uz, Wr, Ur, Wc, Uc, Dw1, Dw2;
  V b1, b2, bz, br, bc, db1, db2;
};
using NetViews = NetViewsT<Eigen::Map<Eigen::MatrixXd>, Eigen::Map<Eigen::VectorXd>>;
using CNetViews =
    NetViewsT<Eigen::Map<const Eigen::MatrixXd>, Eigen::Map<const Eigen::VectorXd>>;

NetViews make_views(double* p, const NetConfig& c);
CNetViews make_views(const double* p, const NetConfig& c);

struct NetParams {
  NetConfig cfg;
  la::Vec buf;

  explicit NetParams(const NetConfig& c) : cfg(c), buf(c.n_params(), 0.0) {}
  NetViews views() { return make_views(buf.data(), cfg); }
  CNetViews views() const { return make_views(buf.data(), cfg); }
  // weights uniform in +-sqrt(1/fan_in), biases zero
  void init_random(uint64_t seed);
};

struct Normalizer {
  la::Vec mean, inv_std;  // per feature
  void apply(Eigen::MatrixXd& X) const;
};

// reference single-sample cell: input is the encoder output (length E2)
la::Vec gru_cell(const NetParams& p, const la::Vec& x, const la::Vec& h);

struct StepTape {
  Eigen::MatrixXd X, A1, A2, Z, R, C, Hprev, Hnew, G1;
};

// one time step for a batch (columns = patches); hidden is H x np, updated in place
void net_forward(const NetParams& p, const Eigen::MatrixXd& X, Eigen::MatrixXd& hidden,
                 StepTape* tape, Eigen::MatrixXd& out);

// reverse step: accumulates into grad, writes the cotangent of the previous hidden state
void net_backward(const NetParams& p, const StepTape& t, const Eigen::MatrixXd& dOut,
                  const Eigen::MatrixXd& dHnext, NetParams& grad, Eigen::MatrixXd& dHprev);

// divergence quadrature matrix Q for the 5x5-node velocity patch (2x2 fine
// elements of size hx x hy): integral of (div d)^2 over the patch = d^T Q d,
// d in block layout (x values at the 25 lattice nodes, then y values)
Eigen::MatrixXd patch_divergence_matrix(double hx, double hy);

// base / p1 / p2 losses on one batched step; V and T hold the prolonged
// velocity and the fine target in the same 50-row layout as the net output
double velocity_loss(LossKind kind, double gamma, const Eigen::MatrixXd* Q,
                     const Eigen::MatrixXd& Out, const Eigen::MatrixXd& V,
                     const Eigen::MatrixXd& T, Eigen::MatrixXd& dOut);

// FE L2 loss through the global stream-function reconstruction; S is 8 x
// n_elems in element id order, V and T are 18 x n_elems with rows
// [x at 9 nodes | y at 9 nodes]
class PsiLoss {
 public:
  explicit PsiLoss(const StreamReconstructor& rec);
  double eval(const Eigen::MatrixXd& S, const Eigen::MatrixXd& V, const Eigen::MatrixXd& T,
              Eigen::MatrixXd& dS) const;

 private:
  const StreamReconstructor* rec_;
  Eigen::Matrix<double, 9, 9> mass_;
  Eigen::Matrix<double, 18, 8> B_;
};

struct Adam {
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  la::Vec m, v;
  long t = 0;
  void step(la::Vec& p, const la::Vec& g);
};

void save_checkpoint(const std::string& path, const NetParams& p, const Normalizer& nrm,
                     const std::map<std::string, std::string>& sidecar);
NetParams load_checkpoint(const std::string& path, Normalizer& nrm);

}  // namespace dnnmg

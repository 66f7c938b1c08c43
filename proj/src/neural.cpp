#include "dnnmg/neural.hpp"

#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

namespace dnnmg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

int NetConfig::n_params() const {
  return E1 * F + E1 + E2 * E1 + E2 + 3 * (H * E2 + H * H + H) + D1 * H + D1 + O * D1 + O;
}

namespace {

template <typename Views, typename Ptr>
Views build_views(Ptr p, const NetConfig& c) {
  using M = decltype(Views::W1);
  using V = decltype(Views::b1);
  Ptr q = p;
  auto mat = [&q](int r, int cl) {
    M m(q, r, cl);
    q += r * cl;
    return m;
  };
  auto vec = [&q](int n) {
    V v(q, n);
    q += n;
    return v;
  };
  M W1 = mat(c.E1, c.F);
  V b1 = vec(c.E1);
  M W2 = mat(c.E2, c.E1);
  V b2 = vec(c.E2);
  M Wz = mat(c.H, c.E2), Uz = mat(c.H, c.H);
  V bz = vec(c.H);
  M Wr = mat(c.H, c.E2), Ur = mat(c.H, c.H);
  V br = vec(c.H);
  M Wc = mat(c.H, c.E2), Uc = mat(c.H, c.H);
  V bc = vec(c.H);
  M Dw1 = mat(c.D1, c.H);
  V db1 = vec(c.D1);
  M Dw2 = mat(c.O, c.D1);
  V db2 = vec(c.O);
  return Views{W1, W2, Wz, Uz, Wr, Ur, Wc, Uc, Dw1, Dw2, b1, b2, bz, br, bc, db1, db2};
}

double unit_uniform(std::mt19937_64& g) { return (double)(g() >> 11) * 0x1.0p-53; }

inline MatrixXd sigmoid(const MatrixXd& x) {
  return (1.0 / (1.0 + (-x.array()).exp())).matrix();
}

}  // namespace

NetViews make_views(double* p, const NetConfig& c) { return build_views<NetViews>(p, c); }
CNetViews make_views(const double* p, const NetConfig& c) {
  return build_views<CNetViews>(p, c);
}

void NetParams::init_random(uint64_t seed) {
  std::mt19937_64 rng(seed);
  NetViews v = views();
  auto fill = [&rng](Eigen::Map<Eigen::MatrixXd> m) {
    double s = std::sqrt(1.0 / (double)m.cols());
    // column-major fill matches the buffer layout
    for (int j = 0; j < m.cols(); ++j)
      for (int i = 0; i < m.rows(); ++i) m(i, j) = s * (2.0 * unit_uniform(rng) - 1.0);
  };
  fill(v.W1);
  fill(v.W2);
  fill(v.Wz);
  fill(v.Uz);
  fill(v.Wr);
  fill(v.Ur);
  fill(v.Wc);
  fill(v.Uc);
  fill(v.Dw1);
  fill(v.Dw2);
}

void Normalizer::apply(Eigen::MatrixXd& X) const {
  if ((int)mean.size() != X.rows()) throw std::invalid_argument("normalizer: feature mismatch");
  for (int j = 0; j < X.cols(); ++j)
    for (int i = 0; i < X.rows(); ++i) X(i, j) = (X(i, j) - mean[i]) * inv_std[i];
}

la::Vec gru_cell(const NetParams& p, const la::Vec& x, const la::Vec& h) {
  CNetViews v = p.views();
  Eigen::Map<const VectorXd> xe(x.data(), x.size()), he(h.data(), h.size());
  VectorXd z = (1.0 / (1.0 + (-(v.Wz * xe + v.Uz * he + v.bz)).array().exp())).matrix();
  VectorXd r = (1.0 / (1.0 + (-(v.Wr * xe + v.Ur * he + v.br)).array().exp())).matrix();
  VectorXd c = (v.Wc * xe + v.Uc * (r.array() * he.array()).matrix() + v.bc).array().tanh();
  VectorXd hn =
      ((1.0 - z.array()) * he.array() + z.array() * c.array()).matrix();
  return la::Vec(hn.data(), hn.data() + hn.size());
}

void net_forward(const NetParams& p, const Eigen::MatrixXd& X, Eigen::MatrixXd& hidden,
                 StepTape* tape, Eigen::MatrixXd& out) {
  CNetViews v = p.views();
  MatrixXd A1 = ((v.W1 * X).colwise() + v.b1).array().tanh().matrix();
  MatrixXd A2 = ((v.W2 * A1).colwise() + v.b2).array().tanh().matrix();
  MatrixXd Z = sigmoid((v.Wz * A2 + v.Uz * hidden).colwise() + v.bz);
  MatrixXd R = sigmoid((v.Wr * A2 + v.Ur * hidden).colwise() + v.br);
  MatrixXd RH = (R.array() * hidden.array()).matrix();
  MatrixXd C = ((v.Wc * A2 + v.Uc * RH).colwise() + v.bc).array().tanh().matrix();
  MatrixXd Hnew =
      ((1.0 - Z.array()) * hidden.array() + Z.array() * C.array()).matrix();
  MatrixXd G1 = ((v.Dw1 * Hnew).colwise() + v.db1).array().tanh().matrix();
  out = (v.Dw2 * G1).colwise() + v.db2;
  if (tape) {
    tape->X = X;
    tape->A1 = A1;
    tape->A2 = A2;
    tape->Z = Z;
    tape->R = R;
    tape->C = C;
    tape->Hprev = hidden;
    tape->Hnew = Hnew;
    tape->G1 = G1;
  }
  hidden = Hnew;
}

void net_backward(const NetParams& p, const StepTape& t, const Eigen::MatrixXd& dOut,
                  const Eigen::MatrixXd& dHnext, NetParams& grad, Eigen::MatrixXd& dHprev) {
  CNetViews v = p.views();
  NetViews g = grad.views();

  g.Dw2.noalias() += dOut * t.G1.transpose();
  g.db2 += dOut.rowwise().sum();
  MatrixXd dG1 = (v.Dw2.transpose() * dOut).array() * (1.0 - t.G1.array().square());
  g.Dw1.noalias() += dG1 * t.Hnew.transpose();
  g.db1 += dG1.rowwise().sum();

  MatrixXd dH = v.Dw1.transpose() * dG1;
  if (dHnext.size()) dH += dHnext;

  MatrixXd dZ = dH.array() * (t.C.array() - t.Hprev.array());
  MatrixXd dC = dH.array() * t.Z.array();
  dHprev = (dH.array() * (1.0 - t.Z.array())).matrix();

  MatrixXd dCp = dC.array() * (1.0 - t.C.array().square());
  MatrixXd RH = (t.R.array() * t.Hprev.array()).matrix();
  g.Wc.noalias() += dCp * t.A2.transpose();
  g.Uc.noalias() += dCp * RH.transpose();
  g.bc += dCp.rowwise().sum();
  MatrixXd dA2 = v.Wc.transpose() * dCp;
  MatrixXd dRH = v.Uc.transpose() * dCp;
  MatrixXd dR = dRH.array() * t.Hprev.array();
  dHprev += (dRH.array() * t.R.array()).matrix();

  MatrixXd dZp = dZ.array() * t.Z.array() * (1.0 - t.Z.array());
  MatrixXd dRp = dR.array() * t.R.array() * (1.0 - t.R.array());
  g.Wz.noalias() += dZp * t.A2.transpose();
  g.Uz.noalias() += dZp * t.Hprev.transpose();
  g.bz += dZp.rowwise().sum();
  g.Wr.noalias() += dRp * t.A2.transpose();
  g.Ur.noalias() += dRp * t.Hprev.transpose();
  g.br += dRp.rowwise().sum();
  dA2 += v.Wz.transpose() * dZp + v.Wr.transpose() * dRp;
  dHprev += (v.Uz.transpose() * dZp + v.Ur.transpose() * dRp);

  MatrixXd dA2p = dA2.array() * (1.0 - t.A2.array().square());
  g.W2.noalias() += dA2p * t.A1.transpose();
  g.b2 += dA2p.rowwise().sum();
  MatrixXd dA1p =
      (v.W2.transpose() * dA2p).array() * (1.0 - t.A1.array().square());
  g.W1.noalias() += dA1p * t.X.transpose();
  g.b1 += dA1p.rowwise().sum();
}

namespace {

// 1d quadratic basis on [0,1] and 3 point Gauss rule, matching the fem module
double b1d(int i, double t) {
  switch (i) {
    case 0: return (1.0 - t) * (1.0 - 2.0 * t);
    case 1: return 4.0 * t * (1.0 - t);
    default: return t * (2.0 * t - 1.0);
  }
}
double db1d(int i, double t) {
  switch (i) {
    case 0: return 4.0 * t - 3.0;
    case 1: return 4.0 - 8.0 * t;
    default: return 4.0 * t - 1.0;
  }
}
const double g3x[3] = {0.5 - std::sqrt(0.15), 0.5, 0.5 + std::sqrt(0.15)};
const double g3w[3] = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};

}  // namespace

Eigen::MatrixXd patch_divergence_matrix(double hx, double hy) {
  MatrixXd Q = MatrixXd::Zero(50, 50);
  VectorXd gvec(50);
  for (int dy = 0; dy < 2; ++dy)
    for (int dx = 0; dx < 2; ++dx)
      for (int qy = 0; qy < 3; ++qy)
        for (int qx = 0; qx < 3; ++qx) {
          double w = g3w[qx] * g3w[qy] * hx * hy;
          gvec.setZero();
          for (int ly = 0; ly < 3; ++ly)
            for (int lx = 0; lx < 3; ++lx) {
              int pn = 5 * (2 * dy + ly) + (2 * dx + lx);
              double dphx = db1d(lx, g3x[qx]) * b1d(ly, g3x[qy]) / hx;
              double dphy = b1d(lx, g3x[qx]) * db1d(ly, g3x[qy]) / hy;
              gvec[pn] += dphx;
              gvec[25 + pn] += dphy;
            }
          Q.noalias() += w * gvec * gvec.transpose();
        }
  return Q;
}

double velocity_loss(LossKind kind, double gamma, const Eigen::MatrixXd* Q,
                     const Eigen::MatrixXd& Out, const Eigen::MatrixXd& V,
                     const Eigen::MatrixXd& T, Eigen::MatrixXd& dOut) {
  MatrixXd err = V + Out - T;
  double loss = err.squaredNorm();
  dOut = 2.0 * err;
  if (kind == LossKind::p1) {
    MatrixXd qd = *Q * Out;
    loss += gamma * (qd.array() * Out.array()).sum();
    dOut.noalias() += (2.0 * gamma) * qd;
  } else if (kind == LossKind::p2) {
    MatrixXd vd = V + Out;
    MatrixXd qd = *Q * vd;
    loss += gamma * (qd.array() * vd.array()).sum();
    dOut.noalias() += (2.0 * gamma) * qd;
  }
  return loss;
}

PsiLoss::PsiLoss(const StreamReconstructor& rec) : rec_(&rec) {
  const MeshLevel& m = rec.mesh();
  mass_.setZero();
  for (int qy = 0; qy < 3; ++qy)
    for (int qx = 0; qx < 3; ++qx) {
      double w = g3w[qx] * g3w[qy] * m.hx * m.hy;
      for (int i = 0; i < 9; ++i)
        for (int j = 0; j < 9; ++j)
          mass_(i, j) += w * b1d(i % 3, g3x[qx]) * b1d(i / 3, g3x[qy]) * b1d(j % 3, g3x[qx]) *
                         b1d(j / 3, g3x[qy]);
    }
  const auto& bm = rec.elem_matrix();
  for (int j = 0; j < 9; ++j)
    for (int k = 0; k < 8; ++k) {
      B_(j, k) = bm[(2 * j + 0) * 8 + k];
      B_(9 + j, k) = bm[(2 * j + 1) * 8 + k];
    }
}

double PsiLoss::eval(const Eigen::MatrixXd& S, const Eigen::MatrixXd& V,
                     const Eigen::MatrixXd& T, Eigen::MatrixXd& dS) const {
  const MeshLevel& m = rec_->mesh();
  int ne = m.n_elems(), nn = m.n_nodes();
  if (S.cols() != ne) throw std::invalid_argument("psi loss: coefficients per element required");

  MatrixXd D18 = B_ * S;
  la::Vec g(2 * nn, 0.0);
  for (int e = 0; e < ne; ++e)
    for (int j = 0; j < 9; ++j) {
      int n = m.elems[e].n[j];
      if (m.is_dirichlet_v(n)) continue;
      double w = rec_->node_weight(n);
      g[n] += w * D18(j, e);
      g[nn + n] += w * D18(9 + j, e);
    }

  double loss = 0.0;
  la::Vec gbar(2 * nn, 0.0);
  Eigen::Matrix<double, 9, 1> ex, ey, mx, my;
  for (int e = 0; e < ne; ++e) {
    for (int j = 0; j < 9; ++j) {
      int n = m.elems[e].n[j];
      ex[j] = T(j, e) - V(j, e) - g[n];
      ey[j] = T(9 + j, e) - V(9 + j, e) - g[nn + n];
    }
    mx.noalias() = mass_ * ex;
    my.noalias() = mass_ * ey;
    loss += ex.dot(mx) + ey.dot(my);
    for (int j = 0; j < 9; ++j) {
      int n = m.elems[e].n[j];
      gbar[n] -= 2.0 * mx[j];
      gbar[nn + n] -= 2.0 * my[j];
    }
  }

  MatrixXd dD18 = MatrixXd::Zero(18, ne);
  for (int e = 0; e < ne; ++e)
    for (int j = 0; j < 9; ++j) {
      int n = m.elems[e].n[j];
      if (m.is_dirichlet_v(n)) continue;
      double w = rec_->node_weight(n);
      dD18(j, e) = w * gbar[n];
      dD18(9 + j, e) = w * gbar[nn + n];
    }
  dS = B_.transpose() * dD18;
  return loss;
}

void Adam::step(la::Vec& p, const la::Vec& g) {
  if (m.size() != p.size()) {
    m.assign(p.size(), 0.0);
    v.assign(p.size(), 0.0);
    t = 0;
  }
  ++t;
  double c1 = 1.0 - std::pow(beta1, (double)t);
  double c2 = 1.0 - std::pow(beta2, (double)t);
  for (size_t i = 0; i < p.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
  }
}

// ---- checkpoint io ----------------------------------------------------------

namespace {
constexpr char kMagic[8] = {'D', 'N', 'N', 'M', 'G', 'N', 'T', '1'};
}

void save_checkpoint(const std::string& path, const NetParams& p, const Normalizer& nrm,
                     const std::map<std::string, std::string>& sidecar) {
  if ((int)nrm.mean.size() != p.cfg.F || (int)nrm.inv_std.size() != p.cfg.F)
    throw std::invalid_argument("checkpoint: normalizer length must match feature count");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint " + path);
  f.write(kMagic, 8);
  uint32_t mode = (uint32_t)p.cfg.mode;
  uint32_t dims[6] = {(uint32_t)p.cfg.F,  (uint32_t)p.cfg.E1, (uint32_t)p.cfg.E2,
                      (uint32_t)p.cfg.H,  (uint32_t)p.cfg.D1, (uint32_t)p.cfg.O};
  uint64_t np = (uint64_t)p.cfg.n_params();
  f.write((const char*)&mode, 4);
  f.write((const char*)dims, 24);
  f.write((const char*)&np, 8);
  f.write((const char*)nrm.mean.data(), p.cfg.F * 8);
  f.write((const char*)nrm.inv_std.data(), p.cfg.F * 8);
  f.write((const char*)p.buf.data(), np * 8);
  if (!f) throw std::runtime_error("short write on checkpoint " + path);

  std::ofstream s(path + ".txt");
  for (const auto& kv : sidecar) s << kv.first << " = " << kv.second << "\n";
}

NetParams load_checkpoint(const std::string& path, Normalizer& nrm) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read checkpoint " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("bad checkpoint magic in " + path);
  uint32_t mode, dims[6];
  uint64_t np;
  f.read((char*)&mode, 4);
  f.read((char*)dims, 24);
  f.read((char*)&np, 8);
  NetConfig c;
  c.mode = (NetMode)mode;
  c.F = dims[0];
  c.E1 = dims[1];
  c.E2 = dims[2];
  c.H = dims[3];
  c.D1 = dims[4];
  c.O = dims[5];
  if (np != (uint64_t)c.n_params())
    throw std::runtime_error("checkpoint parameter count mismatch in " + path);
  NetParams p(c);
  nrm.mean.resize(c.F);
  nrm.inv_std.resize(c.F);
  f.read((char*)nrm.mean.data(), c.F * 8);
  f.read((char*)nrm.inv_std.data(), c.F * 8);
  f.read((char*)p.buf.data(), np * 8);
  if (!f) throw std::runtime_error("truncated checkpoint " + path);
  return p;
}

}  // namespace dnnmg

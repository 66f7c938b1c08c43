#include <random>

#include "dnnmg/la.hpp"
#include "dnnmg/mesh.hpp"
#include "dnnmg/transfer.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace dnnmg;

namespace {

struct Fix {
  MeshHierarchy hier = MeshHierarchy::build(oracle::toy_spec(), 3);
  Transfer tr{hier};
};

}  // namespace

TEST_SUITE("transfer") {
  TEST_CASE("prolongation is exact on Q2 polynomials") {
    Fix fx;
    // nested spaces: nodal interpolation reproduces any biquadratic exactly
    for (int a = 0; a <= 2; ++a)
      for (int b = 0; b <= 2; ++b) {
        oracle::Monomial mono{a, b};
        for (int l = 0; l + 1 < fx.hier.n_levels(); ++l) {
          const MeshLevel& mc = fx.hier[l];
          const MeshLevel& mf = fx.hier[l + 1];
          la::Vec vc(mc.n_nodes());
          for (int n = 0; n < mc.n_nodes(); ++n)
            vc[n] = mono.val(mc.nodes[n].x, mc.nodes[n].y);
          la::Vec vf = fx.tr.prolong_scalar(l, vc);
          REQUIRE((int)vf.size() == mf.n_nodes());
          for (int n = 0; n < mf.n_nodes(); ++n)
            CHECK(vf[n] ==
                  doctest::Approx(mono.val(mf.nodes[n].x, mf.nodes[n].y)).epsilon(1e-12));
        }
      }
  }

  TEST_CASE("injection inverts prolongation exactly") {
    Fix fx;
    std::mt19937_64 g(7);
    la::Vec vc(3 * fx.hier[0].n_nodes());
    for (double& v : vc) v = oracle::runif(g);
    la::Vec vf = fx.tr.prolong(0, vc, 3);
    la::Vec back = fx.tr.inject(0, vf, 3);
    REQUIRE(back.size() == vc.size());
    for (std::size_t i = 0; i < vc.size(); ++i) CHECK(back[i] == vc[i]);
  }

  TEST_CASE("L2 restriction inverts prolongation") {
    Fix fx;
    std::mt19937_64 g(11);
    for (int rep = 0; rep < 100; ++rep) {
      int l = rep % 2;
      la::Vec vc(3 * fx.hier[l].n_nodes());
      for (double& v : vc) v = oracle::runif(g);
      la::Vec back = fx.tr.restrict_l2(l, fx.tr.prolong(l, vc, 3), 3);
      double num = 0, den = 0;
      for (std::size_t i = 0; i < vc.size(); ++i) {
        num += (back[i] - vc[i]) * (back[i] - vc[i]);
        den += vc[i] * vc[i];
      }
      CHECK(std::sqrt(num / den) <= 1e-12);
    }
  }

  TEST_CASE("functional restriction is the prolongation adjoint") {
    Fix fx;
    std::mt19937_64 g(13);
    for (int rep = 0; rep < 20; ++rep) {
      la::Vec vc(3 * fx.hier[0].n_nodes()), bf(3 * fx.hier[1].n_nodes());
      for (double& v : vc) v = oracle::runif(g);
      for (double& v : bf) v = oracle::runif(g);
      double a = la::dot(fx.tr.restrict_functional(0, bf, 3), vc);
      double b = la::dot(bf, fx.tr.prolong(0, vc, 3));
      CHECK(std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)));
    }
  }

  TEST_CASE("functional restriction conserves totals") {
    // P reproduces constants, so summing a restricted functional changes nothing
    Fix fx;
    std::mt19937_64 g(17);
    la::Vec bf(fx.hier[1].n_nodes());
    for (double& v : bf) v = oracle::runif(g);
    la::Vec bc = fx.tr.restrict_functional_scalar(0, bf);
    double sf = 0, sc = 0;
    for (double v : bf) sf += v;
    for (double v : bc) sc += v;
    CHECK(sc == doctest::Approx(sf).epsilon(1e-12));
  }

  TEST_CASE("block transfer acts per block") {
    Fix fx;
    std::mt19937_64 g(19);
    int nc = fx.hier[0].n_nodes();
    la::Vec vc(2 * nc);
    for (double& v : vc) v = oracle::runif(g);
    la::Vec both = fx.tr.prolong(0, vc, 2);
    la::Vec x(vc.begin(), vc.begin() + nc), y(vc.begin() + nc, vc.end());
    la::Vec px = fx.tr.prolong_scalar(0, x), py = fx.tr.prolong_scalar(0, y);
    int nf = fx.hier[1].n_nodes();
    REQUIRE((int)both.size() == 2 * nf);
    for (int i = 0; i < nf; ++i) {
      CHECK(both[i] == px[i]);
      CHECK(both[nf + i] == py[i]);
    }
  }
}

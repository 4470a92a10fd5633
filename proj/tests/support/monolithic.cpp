#include "monolithic.hpp"

#include <cmath>

namespace pfc::testsupport {

namespace {

enum Block { PHI = 0, PSI, MU, RX, RY, QX, QY, PX, PY, SX, SY, NBLOCKS };

const double kNormal[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};

struct Index {
  int ns, nf1;
  std::ptrdiff_t n_interior;
  const Discretization* disc;
  std::ptrdiff_t iu(int e, int block, int a) const {
    return (static_cast<std::ptrdiff_t>(e) * NBLOCKS + block) * ns + a;
  }
  std::ptrdiff_t isk(int face, int field, int m) const {
    return n_interior + disc->skeleton_global(face, field, m);
  }
};

// Coefficients of one field on one element.
Eigen::VectorXd coeffs(const Eigen::VectorXd& v, int e, int ns, int comp = -1) {
  if (comp < 0) return v.segment(static_cast<std::ptrdiff_t>(e) * ns, ns);
  return v.segment(static_cast<std::ptrdiff_t>(e) * 2 * ns + comp * ns, ns);
}

}  // namespace

MonolithicSystem assemble_monolithic(const Discretization& disc,
                                     const State& guess, const State& prev,
                                     const SourceFn* source) {
  const CartesianMesh& mesh = disc.mesh();
  const RefElement& ref = disc.ref();
  const PfcParams& pp = disc.params();
  const int ns = ref.num_nodes();
  const int nf1 = ref.nodes_per_side();
  const int ne = mesh.num_elements();
  const int nqv = ref.num_vol_points();
  const int nqf = ref.nq1d();
  const double hx = mesh.hx(), hy = mesh.hy();

  Index ix{ns, nf1, static_cast<std::ptrdiff_t>(ne) * NBLOCKS * ns, &disc};
  MonolithicSystem sys;
  sys.n_interior = ix.n_interior;
  sys.n_total = ix.n_interior + 3 * disc.skeleton_map().total();
  sys.jac = Eigen::MatrixXd::Zero(sys.n_total, sys.n_total);
  sys.res = Eigen::VectorXd::Zero(sys.n_total);

  // Split of the 2*psi term between the new and previous time levels.
  const double w_new = pp.splitting == Splitting::Secant ? 1.0 : 0.0;
  const double w_old = 2.0 - w_new;

  for (int e = 0; e < ne; ++e) {
    const ElementGeometry g = mesh.element_geometry(e);
    const Eigen::VectorXd cphi = coeffs(guess.phi, e, ns);
    const Eigen::VectorXd cpsi = coeffs(guess.psi, e, ns);
    const Eigen::VectorXd cmu = coeffs(guess.mu, e, ns);
    const Eigen::VectorXd crx = coeffs(guess.r, e, ns, 0);
    const Eigen::VectorXd cry = coeffs(guess.r, e, ns, 1);
    const Eigen::VectorXd cqx = coeffs(guess.q, e, ns, 0);
    const Eigen::VectorXd cqy = coeffs(guess.q, e, ns, 1);
    const Eigen::VectorXd cpx = coeffs(guess.p, e, ns, 0);
    const Eigen::VectorXd cpy = coeffs(guess.p, e, ns, 1);
    const Eigen::VectorXd csx = coeffs(guess.s, e, ns, 0);
    const Eigen::VectorXd csy = coeffs(guess.s, e, ns, 1);
    const Eigen::VectorXd pphi = coeffs(prev.phi, e, ns);
    const Eigen::VectorXd ppsi = coeffs(prev.psi, e, ns);

    // Volume contributions.
    for (int q = 0; q < nqv; ++q) {
      const double w = ref.vol_weight(q) * hx * hy;
      const auto N = ref.vol_value().row(q);
      Eigen::RowVectorXd dNdx = ref.vol_grad_xi().row(q) / hx;
      Eigen::RowVectorXd dNdy = ref.vol_grad_eta().row(q) / hy;
      const double phi = N.dot(cphi), psi = N.dot(cpsi), mu = N.dot(cmu);
      const double rx = N.dot(crx), ry = N.dot(cry);
      const double qx = N.dot(cqx), qy = N.dot(cqy);
      const double px = N.dot(cpx), py = N.dot(cpy);
      const double sx = N.dot(csx), sy = N.dot(csy);
      const double phip = N.dot(pphi), psip = N.dot(ppsi);
      const double divr = dNdx.dot(crx) + dNdy.dot(cry);
      const double divq = dNdx.dot(cqx) + dNdy.dot(cqy);
      const double divs = dNdx.dot(csx) + dNdy.dot(csy);
      const double mob = mobility_eval(pp.mobility, phip);
      const double gsrc = source ? (*source)(g.x0 + g.hx * ref.vol_x(q),
                                             g.y0 + g.hy * ref.vol_y(q),
                                             guess.t)
                                 : 0.0;
      for (int i = 0; i < ns; ++i) {
        const double Ni = N[i];
        const double dNix = dNdx[i], dNiy = dNdy[i];
        // (12a): (r, rt) - (phi, div rt) = ...
        sys.res[ix.iu(e, RX, i)] += w * (rx * Ni - phi * dNix);
        sys.res[ix.iu(e, RY, i)] += w * (ry * Ni - phi * dNiy);
        // (12b): (psi, phit) + (div r, phit)
        sys.res[ix.iu(e, PSI, i)] += w * (psi * Ni + divr * Ni);
        // mu equation: (mu, psit) - (f(phi), psit) - (split 2 psi, psit)
        // + (div q, psit)
        sys.res[ix.iu(e, MU, i)] +=
            w * (mu * Ni - f_eval(phi, pp.eps) * Ni - w_new * psi * Ni -
                 w_old * psip * Ni + divq * Ni);
        // (12c), (12e)
        sys.res[ix.iu(e, QX, i)] += w * (qx * Ni - psi * dNix);
        sys.res[ix.iu(e, QY, i)] += w * (qy * Ni - psi * dNiy);
        sys.res[ix.iu(e, PX, i)] += w * (px * Ni - mu * dNix);
        sys.res[ix.iu(e, PY, i)] += w * (py * Ni - mu * dNiy);
        // (12f): (s, st) - (M(phi_prev) p, st)
        sys.res[ix.iu(e, SX, i)] += w * (sx * Ni - mob * px * Ni);
        sys.res[ix.iu(e, SY, i)] += w * (sy * Ni - mob * py * Ni);
        // (12g): (delta phi, mut) + (div s, mut) - (g, mut)
        sys.res[ix.iu(e, PHI, i)] +=
            w * ((phi - phip) / pp.dt * Ni + divs * Ni - gsrc * Ni);

        for (int j = 0; j < ns; ++j) {
          const double Nj = N[j];
          sys.jac(ix.iu(e, RX, i), ix.iu(e, RX, j)) += w * Nj * Ni;
          sys.jac(ix.iu(e, RY, i), ix.iu(e, RY, j)) += w * Nj * Ni;
          sys.jac(ix.iu(e, RX, i), ix.iu(e, PHI, j)) -= w * Nj * dNix;
          sys.jac(ix.iu(e, RY, i), ix.iu(e, PHI, j)) -= w * Nj * dNiy;
          sys.jac(ix.iu(e, PSI, i), ix.iu(e, PSI, j)) += w * Nj * Ni;
          sys.jac(ix.iu(e, PSI, i), ix.iu(e, RX, j)) += w * dNdx[j] * Ni;
          sys.jac(ix.iu(e, PSI, i), ix.iu(e, RY, j)) += w * dNdy[j] * Ni;
          sys.jac(ix.iu(e, MU, i), ix.iu(e, MU, j)) += w * Nj * Ni;
          sys.jac(ix.iu(e, MU, i), ix.iu(e, PSI, j)) -= w * w_new * Nj * Ni;
          sys.jac(ix.iu(e, MU, i), ix.iu(e, PHI, j)) -=
              w * f_prime(phi, pp.eps) * Nj * Ni;
          sys.jac(ix.iu(e, MU, i), ix.iu(e, QX, j)) += w * dNdx[j] * Ni;
          sys.jac(ix.iu(e, MU, i), ix.iu(e, QY, j)) += w * dNdy[j] * Ni;
          sys.jac(ix.iu(e, QX, i), ix.iu(e, QX, j)) += w * Nj * Ni;
          sys.jac(ix.iu(e, QY, i), ix.iu(e, QY, j)) += w * Nj * Ni;
          sys.jac(ix.iu(e, QX, i), ix.iu(e, PSI, j)) -= w * Nj * dNix;
          sys.jac(ix.iu(e, QY, i), ix.iu(e, PSI, j)) -= w * Nj * dNiy;
          sys.jac(ix.iu(e, PX, i), ix.iu(e, PX, j)) += w * Nj * Ni;
          sys.jac(ix.iu(e, PY, i), ix.iu(e, PY, j)) += w * Nj * Ni;
          sys.jac(ix.iu(e, PX, i), ix.iu(e, MU, j)) -= w * Nj * dNix;
          sys.jac(ix.iu(e, PY, i), ix.iu(e, MU, j)) -= w * Nj * dNiy;
          sys.jac(ix.iu(e, SX, i), ix.iu(e, SX, j)) += w * Nj * Ni;
          sys.jac(ix.iu(e, SY, i), ix.iu(e, SY, j)) += w * Nj * Ni;
          sys.jac(ix.iu(e, SX, i), ix.iu(e, PX, j)) -= w * mob * Nj * Ni;
          sys.jac(ix.iu(e, SY, i), ix.iu(e, PY, j)) -= w * mob * Nj * Ni;
          sys.jac(ix.iu(e, PHI, i), ix.iu(e, PHI, j)) += w / pp.dt * Nj * Ni;
          sys.jac(ix.iu(e, PHI, i), ix.iu(e, SX, j)) += w * dNdx[j] * Ni;
          sys.jac(ix.iu(e, PHI, i), ix.iu(e, SY, j)) += w * dNdy[j] * Ni;
        }
      }
    }

    // Facet contributions of the element equations.
    auto faces = mesh.faces_of_element(e);
    for (int lf = 0; lf < 4; ++lf) {
      const double nx = kNormal[lf][0], ny = kNormal[lf][1];
      const double len = lf < 2 ? hy : hx;
      const int face = faces[lf].face;
      for (int q = 0; q < nqf; ++q) {
        const double w = ref.rule1d().weights[q] * len;
        const auto Nf = ref.facet_value(lf).row(q);
        const auto Lf = ref.facet_basis_1d().row(q);
        const double phi = Nf.dot(cphi), psi = Nf.dot(cpsi), mu = Nf.dot(cmu);
        double phib = 0, psib = 0, mub = 0;
        for (int m = 0; m < nf1; ++m) {
          const std::int64_t d = disc.skeleton_map().skeleton_dof(face, m);
          phib += Lf[m] * guess.phibar[d];
          psib += Lf[m] * guess.psibar[d];
          mub += Lf[m] * guess.mubar[d];
        }
        for (int i = 0; i < ns; ++i) {
          const double Ni = Nf[i];
          // (12a,c,e): + <bar, test . n>
          sys.res[ix.iu(e, RX, i)] += w * nx * phib * Ni;
          sys.res[ix.iu(e, RY, i)] += w * ny * phib * Ni;
          sys.res[ix.iu(e, QX, i)] += w * nx * psib * Ni;
          sys.res[ix.iu(e, QY, i)] += w * ny * psib * Ni;
          sys.res[ix.iu(e, PX, i)] += w * nx * mub * Ni;
          sys.res[ix.iu(e, PY, i)] += w * ny * mub * Ni;
          // (12b): + <tau1 (phi - phib), phit>
          sys.res[ix.iu(e, PSI, i)] += w * pp.tau1 * (phi - phib) * Ni;
          // (12d): + <tau2 (psi - psib) - tau4 (phi - phib), psit>
          sys.res[ix.iu(e, MU, i)] +=
              w * (pp.tau2 * (psi - psib) - pp.tau4 * (phi - phib)) * Ni;
          // (12g): + <tau3 (mu - mub), mut>
          sys.res[ix.iu(e, PHI, i)] += w * pp.tau3 * (mu - mub) * Ni;

          for (int j = 0; j < ns; ++j) {
            const double Nj = Nf[j];
            sys.jac(ix.iu(e, PSI, i), ix.iu(e, PHI, j)) += w * pp.tau1 * Nj * Ni;
            sys.jac(ix.iu(e, MU, i), ix.iu(e, PSI, j)) += w * pp.tau2 * Nj * Ni;
            sys.jac(ix.iu(e, MU, i), ix.iu(e, PHI, j)) -= w * pp.tau4 * Nj * Ni;
            sys.jac(ix.iu(e, PHI, i), ix.iu(e, MU, j)) += w * pp.tau3 * Nj * Ni;
          }
          for (int m = 0; m < nf1; ++m) {
            const double Lm = Lf[m];
            sys.jac(ix.iu(e, RX, i), ix.isk(face, 0, m)) += w * nx * Lm * Ni;
            sys.jac(ix.iu(e, RY, i), ix.isk(face, 0, m)) += w * ny * Lm * Ni;
            sys.jac(ix.iu(e, QX, i), ix.isk(face, 1, m)) += w * nx * Lm * Ni;
            sys.jac(ix.iu(e, QY, i), ix.isk(face, 1, m)) += w * ny * Lm * Ni;
            sys.jac(ix.iu(e, PX, i), ix.isk(face, 2, m)) += w * nx * Lm * Ni;
            sys.jac(ix.iu(e, PY, i), ix.isk(face, 2, m)) += w * ny * Lm * Ni;
            sys.jac(ix.iu(e, PSI, i), ix.isk(face, 0, m)) -=
                w * pp.tau1 * Lm * Ni;
            sys.jac(ix.iu(e, MU, i), ix.isk(face, 1, m)) -= w * pp.tau2 * Lm * Ni;
            sys.jac(ix.iu(e, MU, i), ix.isk(face, 0, m)) += w * pp.tau4 * Lm * Ni;
            sys.jac(ix.iu(e, PHI, i), ix.isk(face, 2, m)) -=
                w * pp.tau3 * Lm * Ni;
          }
        }
        // Flux continuity rows (12h)-(12j), this element's share.
        for (int m = 0; m < nf1; ++m) {
          const double Lm = Lf[m];
          const double rn = nx * Nf.dot(crx) + ny * Nf.dot(cry);
          const double qn = nx * Nf.dot(cqx) + ny * Nf.dot(cqy);
          const double sn = nx * Nf.dot(csx) + ny * Nf.dot(csy);
          sys.res[ix.isk(face, 0, m)] += w * (rn + pp.tau1 * (phi - phib)) * Lm;
          sys.res[ix.isk(face, 1, m)] +=
              w * (qn + pp.tau2 * (psi - psib) - pp.tau4 * (phi - phib)) * Lm;
          sys.res[ix.isk(face, 2, m)] += w * (sn + pp.tau3 * (mu - mub)) * Lm;
          for (int j = 0; j < ns; ++j) {
            const double Nj = Nf[j];
            sys.jac(ix.isk(face, 0, m), ix.iu(e, RX, j)) += w * nx * Nj * Lm;
            sys.jac(ix.isk(face, 0, m), ix.iu(e, RY, j)) += w * ny * Nj * Lm;
            sys.jac(ix.isk(face, 0, m), ix.iu(e, PHI, j)) +=
                w * pp.tau1 * Nj * Lm;
            sys.jac(ix.isk(face, 1, m), ix.iu(e, QX, j)) += w * nx * Nj * Lm;
            sys.jac(ix.isk(face, 1, m), ix.iu(e, QY, j)) += w * ny * Nj * Lm;
            sys.jac(ix.isk(face, 1, m), ix.iu(e, PSI, j)) +=
                w * pp.tau2 * Nj * Lm;
            sys.jac(ix.isk(face, 1, m), ix.iu(e, PHI, j)) -=
                w * pp.tau4 * Nj * Lm;
            sys.jac(ix.isk(face, 2, m), ix.iu(e, SX, j)) += w * nx * Nj * Lm;
            sys.jac(ix.isk(face, 2, m), ix.iu(e, SY, j)) += w * ny * Nj * Lm;
            sys.jac(ix.isk(face, 2, m), ix.iu(e, MU, j)) += w * pp.tau3 * Nj * Lm;
          }
          for (int mm = 0; mm < nf1; ++mm) {
            const double Lmm = Lf[mm];
            sys.jac(ix.isk(face, 0, m), ix.isk(face, 0, mm)) -=
                w * pp.tau1 * Lmm * Lm;
            sys.jac(ix.isk(face, 1, m), ix.isk(face, 1, mm)) -=
                w * pp.tau2 * Lmm * Lm;
            sys.jac(ix.isk(face, 1, m), ix.isk(face, 0, mm)) +=
                w * pp.tau4 * Lmm * Lm;
            sys.jac(ix.isk(face, 2, m), ix.isk(face, 2, mm)) -=
                w * pp.tau3 * Lmm * Lm;
          }
        }
      }
    }
  }
  return sys;
}

State monolithic_newton_update(const Discretization& disc, const State& guess,
                               const State& prev, const SourceFn* source) {
  MonolithicSystem sys = assemble_monolithic(disc, guess, prev, source);
  Eigen::VectorXd delta = sys.jac.partialPivLu().solve(-sys.res);
  State out = guess;
  const int ns = disc.ref().num_nodes();
  const int ne = disc.mesh().num_elements();
  Index ix{ns, disc.ref().nodes_per_side(),
           static_cast<std::ptrdiff_t>(ne) * NBLOCKS * ns, &disc};
  for (int e = 0; e < ne; ++e)
    for (int a = 0; a < ns; ++a) {
      out.phi[static_cast<std::ptrdiff_t>(e) * ns + a] += delta[ix.iu(e, PHI, a)];
      out.psi[static_cast<std::ptrdiff_t>(e) * ns + a] += delta[ix.iu(e, PSI, a)];
      out.mu[static_cast<std::ptrdiff_t>(e) * ns + a] += delta[ix.iu(e, MU, a)];
      out.r[static_cast<std::ptrdiff_t>(e) * 2 * ns + a] += delta[ix.iu(e, RX, a)];
      out.r[static_cast<std::ptrdiff_t>(e) * 2 * ns + ns + a] += delta[ix.iu(e, RY, a)];
      out.q[static_cast<std::ptrdiff_t>(e) * 2 * ns + a] += delta[ix.iu(e, QX, a)];
      out.q[static_cast<std::ptrdiff_t>(e) * 2 * ns + ns + a] += delta[ix.iu(e, QY, a)];
      out.p[static_cast<std::ptrdiff_t>(e) * 2 * ns + a] += delta[ix.iu(e, PX, a)];
      out.p[static_cast<std::ptrdiff_t>(e) * 2 * ns + ns + a] += delta[ix.iu(e, PY, a)];
      out.s[static_cast<std::ptrdiff_t>(e) * 2 * ns + a] += delta[ix.iu(e, SX, a)];
      out.s[static_cast<std::ptrdiff_t>(e) * 2 * ns + ns + a] += delta[ix.iu(e, SY, a)];
    }
  for (std::int64_t d = 0; d < disc.skeleton_map().total(); ++d) {
    out.phibar[d] += delta[ix.n_interior + 3 * d + 0];
    out.psibar[d] += delta[ix.n_interior + 3 * d + 1];
    out.mubar[d] += delta[ix.n_interior + 3 * d + 2];
  }
  return out;
}

void set_consistent_s(const Discretization& disc, const State& prev,
                      State& state) {
  const RefElement& ref = disc.ref();
  const CartesianMesh& mesh = disc.mesh();
  const PfcParams& pp = disc.params();
  const int ns = ref.num_nodes();
  const int nqv = ref.num_vol_points();
  const double scale = mesh.hx() * mesh.hy();
  for (int e = 0; e < mesh.num_elements(); ++e) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(ns, ns);
    Eigen::VectorXd bx = Eigen::VectorXd::Zero(ns);
    Eigen::VectorXd by = Eigen::VectorXd::Zero(ns);
    const Eigen::VectorXd pphi = coeffs(prev.phi, e, ns);
    const Eigen::VectorXd cpx = coeffs(state.p, e, ns, 0);
    const Eigen::VectorXd cpy = coeffs(state.p, e, ns, 1);
    for (int q = 0; q < nqv; ++q) {
      const double w = ref.vol_weight(q) * scale;
      const auto N = ref.vol_value().row(q);
      const double mob = mobility_eval(pp.mobility, N.dot(pphi));
      for (int i = 0; i < ns; ++i) {
        bx[i] += w * mob * N.dot(cpx) * N[i];
        by[i] += w * mob * N.dot(cpy) * N[i];
        for (int j = 0; j < ns; ++j) m(i, j) += w * N[j] * N[i];
      }
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
    state.s.segment(static_cast<std::ptrdiff_t>(e) * 2 * ns, ns) = lu.solve(bx);
    state.s.segment(static_cast<std::ptrdiff_t>(e) * 2 * ns + ns, ns) =
        lu.solve(by);
  }
}

Eigen::VectorXd reduced_residual(const Discretization& disc,
                                 const MonolithicSystem& sys) {
  const int ns = disc.ref().num_nodes();
  const int ne = disc.mesh().num_elements();
  const int nI = 9 * ns;
  Index ix{ns, disc.ref().nodes_per_side(),
           static_cast<std::ptrdiff_t>(ne) * NBLOCKS * ns, &disc};
  const std::ptrdiff_t nsk = 3 * disc.skeleton_map().total();
  Eigen::VectorXd out(static_cast<std::ptrdiff_t>(ne) * nI + nsk);
  const int blocks[9] = {PHI, PSI, MU, RX, RY, QX, QY, PX, PY};
  for (int e = 0; e < ne; ++e)
    for (int b = 0; b < 9; ++b)
      for (int a = 0; a < ns; ++a)
        out[static_cast<std::ptrdiff_t>(e) * nI + b * ns + a] =
            sys.res[ix.iu(e, blocks[b], a)];
  out.tail(nsk) = sys.res.tail(nsk);
  return out;
}

}  // namespace pfc::testsupport

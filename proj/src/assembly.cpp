#include "pfc/assembly.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace pfc {

double f_eval(double phi, double eps) {
  return phi * phi * phi + (1.0 - eps) * phi;
}

double f_prime(double phi, double eps) { return 3.0 * phi * phi + (1.0 - eps); }

double mobility_eval(const Mobility& mob, double phi) {
  if (mob.kind == Mobility::Kind::Constant) return mob.m;
  return std::max(1.0 - phi * phi, 0.0);
}

void PfcParams::validate() const {
  if (!(eps < 1.0)) throw std::invalid_argument("PfcParams: eps must be < 1");
  if (!(dt > 0.0)) throw std::invalid_argument("PfcParams: dt must be > 0");
  if (degree < 1) throw std::invalid_argument("PfcParams: degree must be >= 1");
  if (mobility.kind == Mobility::Kind::Constant && mobility.m < 0.0)
    throw std::invalid_argument("PfcParams: constant mobility must be >= 0");
  if (!allow_unstable_taus) {
    const double s1 = std::max(1.0, std::abs(tau1));
    if (!(tau1 > 0.0))
      throw std::invalid_argument("PfcParams: tau1 must be positive");
    if (!(tau3 > 0.0))
      throw std::invalid_argument("PfcParams: tau3 must be positive");
    if (std::abs(tau2 - tau1) > 1e-12 * s1)
      throw std::invalid_argument("PfcParams: tau2 must equal tau1");
    if (std::abs(tau4 - 2.0 * tau1) > 1e-12 * s1)
      throw std::invalid_argument("PfcParams: tau4 must equal 2*tau1");
  }
}

bool State::all_finite() const {
  return phi.allFinite() && psi.allFinite() && mu.allFinite() &&
         r.allFinite() && q.allFinite() && p.allFinite() && s.allFinite() &&
         phibar.allFinite() && psibar.allFinite() && mubar.allFinite();
}

namespace {

// Interior unknown layout per element: 9 blocks of n_s coefficients.
struct Layout {
  int ns, nf1, nI, nlocS;
  int oPhi, oPsi, oMu, oRx, oRy, oQx, oQy, oPx, oPy;
  explicit Layout(int k)
      : ns((k + 1) * (k + 1)),
        nf1(k + 1),
        nI(9 * ns),
        nlocS(12 * nf1),
        oPhi(0),
        oPsi(ns),
        oMu(2 * ns),
        oRx(3 * ns),
        oRy(4 * ns),
        oQx(5 * ns),
        oQy(6 * ns),
        oPx(7 * ns),
        oPy(8 * ns) {}
  int sk(int face, int field, int m) const {
    return face * 3 * nf1 + field * nf1 + m;
  }
};

constexpr double kFaceNormal[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};

}  // namespace

struct Discretization::Impl {
  Layout lay;
  double hx, hy, volw;  // volw multiplies the reference tensor weights

  // Shared element matrices (uniform mesh: identical for every element).
  Eigen::MatrixXd mass, mass_inv;
  Eigen::MatrixXd cx, cy;        // (N_i, dN_j/dx_c)
  Eigen::MatrixXd gx, gy;        // (N_j, dN_i/dx_c) = c^T
  Eigen::MatrixXd e_sum;         // facet mass of volume traces, all faces
  Eigen::MatrixXd e_f[4], t_f[4], u_f[4];
  double face_len[4];

  // Shared constant Newton blocks. a0_ii carries every state-independent
  // interior term; for constant mobility it also carries the p -> time
  // equation coupling, for degenerate mobility that block is per element.
  Eigen::MatrixXd a0_ii, a_is, a_si0, a_ss;
  bool fast = false;  // Woodbury update path (constant mobility)
  Eigen::PartialPivLU<Eigen::MatrixXd> lu0;
  Eigen::MatrixXd x_is, x_d, gblk, hblk, s0, kblk;

  // Over-integration data (nq+2 points per direction) for projections and
  // error norms of non-polynomial fields.
  RefElement ref_oi;
  QuadRule1D rule_oi;
  Eigen::MatrixXd oi_facet_1d;  // facet basis at the over-integration points

  // Skeleton structure.
  std::vector<std::int64_t> elem_sk;  // ne * nlocS global indices
  std::int64_t nskf = 0;              // skeleton dofs per field
  CondensedSystem cs;

  // Per-step caches.
  Eigen::VectorXd data_vec;            // ne * nI
  std::vector<Eigen::MatrixXd> wmob;   // degenerate mobility projections
  double t_n = 0.0;
  bool step_ready = false;

  linalg::SparseLu solver;

  // Residual of the current iterate (kept for condensation + recovery).
  Eigen::VectorXd r_int, r_skel;
  bool residual_ready = false;

  Impl(int k, int nq_oi) : lay(k), ref_oi(RefElement::build(k, nq_oi)) {}
};

Discretization::Discretization(const CartesianMesh& mesh,
                               const PfcParams& params)
    : mesh_(mesh),
      params_(params),
      ref_(RefElement::build(params.degree, 2 * params.degree + 1)),
      scalar_map_(DofMap::build(mesh, params.degree, SpaceKind::ElementScalar)),
      vector_map_(DofMap::build(mesh, params.degree, SpaceKind::ElementVector)),
      skeleton_map_(DofMap::build(mesh, params.degree,
                                  params.coupling == Coupling::EDG
                                      ? SpaceKind::SkeletonEDG
                                      : SpaceKind::SkeletonHDG)) {
  params_.validate();
  const int k = params_.degree;
  impl_ = std::make_unique<Impl>(k, 2 * k + 3);
  Impl& im = *impl_;
  im.hx = mesh.hx();
  im.hy = mesh.hy();
  im.volw = im.hx * im.hy;
  im.nskf = skeleton_map_.total();
  im.rule_oi = gauss_legendre(2 * k + 3);

  const int ns = im.lay.ns;
  const int nf1 = im.lay.nf1;
  const int nqv = ref_.num_vol_points();
  const int nq = ref_.nq1d();

  // Volume matrices.
  Eigen::VectorXd w(nqv);
  for (int q = 0; q < nqv; ++q) w[q] = ref_.vol_weight(q) * im.volw;
  const Eigen::MatrixXd& N = ref_.vol_value();
  im.mass = N.transpose() * w.asDiagonal() * N;
  im.mass_inv = im.mass.inverse();
  // c_x[i][j] = int N_i dN_j/dx; the 1/hx of the gradient cancels one hx
  // of the volume scaling.
  Eigen::VectorXd wx(nqv), wy(nqv);
  for (int q = 0; q < nqv; ++q) {
    wx[q] = ref_.vol_weight(q) * im.hy;
    wy[q] = ref_.vol_weight(q) * im.hx;
  }
  im.cx = N.transpose() * wx.asDiagonal() * ref_.vol_grad_xi();
  im.cy = N.transpose() * wy.asDiagonal() * ref_.vol_grad_eta();
  im.gx = im.cx.transpose();
  im.gy = im.cy.transpose();

  // Facet matrices.
  im.face_len[0] = im.face_len[1] = im.hy;
  im.face_len[2] = im.face_len[3] = im.hx;
  im.e_sum = Eigen::MatrixXd::Zero(ns, ns);
  const QuadRule1D& r1 = ref_.rule1d();
  for (int f = 0; f < 4; ++f) {
    Eigen::VectorXd wf(nq);
    for (int q = 0; q < nq; ++q) wf[q] = r1.weights[q] * im.face_len[f];
    const Eigen::MatrixXd& Nf = ref_.facet_value(f);
    const Eigen::MatrixXd& L = ref_.facet_basis_1d();
    im.e_f[f] = Nf.transpose() * wf.asDiagonal() * Nf;
    im.t_f[f] = Nf.transpose() * wf.asDiagonal() * L;
    im.u_f[f] = L.transpose() * wf.asDiagonal() * L;
    im.e_sum += im.e_f[f];
  }

  // Facet basis at the over-integration points (skeleton projections).
  im.oi_facet_1d.resize(im.rule_oi.n, nf1);
  std::vector<double> tmp(nf1);
  for (int q = 0; q < im.rule_oi.n; ++q) {
    ref_.eval_basis_1d(im.rule_oi.points[q], tmp.data());
    for (int m = 0; m < nf1; ++m) im.oi_facet_1d(q, m) = tmp[m];
  }

  // Skeleton dof table per element.
  const int ne = mesh.num_elements();
  im.elem_sk.resize(static_cast<std::size_t>(ne) * im.lay.nlocS);
  for (int e = 0; e < ne; ++e) {
    auto faces = mesh.faces_of_element(e);
    for (int lf = 0; lf < 4; ++lf)
      for (int field = 0; field < 3; ++field)
        for (int m = 0; m < nf1; ++m)
          im.elem_sk[static_cast<std::size_t>(e) * im.lay.nlocS +
                     im.lay.sk(lf, field, m)] =
              3 * skeleton_map_.skeleton_dof(faces[lf].face, m) + field;
  }

  // Skeleton sparsity: all pairs of distinct skeleton dofs per element.
  {
    std::vector<std::pair<int, int>> pairs;
    std::vector<int> loc;
    for (int e = 0; e < ne; ++e) {
      loc.assign(im.elem_sk.begin() + static_cast<std::size_t>(e) * im.lay.nlocS,
                 im.elem_sk.begin() +
                     static_cast<std::size_t>(e + 1) * im.lay.nlocS);
      std::sort(loc.begin(), loc.end());
      loc.erase(std::unique(loc.begin(), loc.end()), loc.end());
      for (int a : loc)
        for (int b : loc) pairs.emplace_back(a, b);
    }
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    linalg::CsrMatrix& A = im.cs.a;
    A.n = static_cast<int>(3 * im.nskf);
    A.row_ptr.assign(A.n + 1, 0);
    A.col_idx.resize(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      A.row_ptr[pairs[i].first + 1]++;
      A.col_idx[i] = pairs[i].second;
    }
    for (int rI = 0; rI < A.n; ++rI) A.row_ptr[rI + 1] += A.row_ptr[rI];
    A.vals.assign(pairs.size(), 0.0);
    im.cs.b.setZero(A.n);
  }

  set_dt(params_.dt);
}

Discretization::~Discretization() = default;
Discretization::Discretization(Discretization&&) noexcept = default;

int Discretization::interior_size() const { return impl_->lay.nI; }
int Discretization::local_skeleton_size() const { return impl_->lay.nlocS; }
std::int64_t Discretization::skeleton_system_size() const {
  return 3 * impl_->nskf;
}

std::int64_t Discretization::skeleton_global(int face, int field, int m) const {
  return 3 * skeleton_map_.skeleton_dof(face, m) + field;
}

State Discretization::make_state() const {
  State st;
  const auto nsc = scalar_map_.total();
  const auto nvec = vector_map_.total();
  const auto nsk = skeleton_map_.total();
  st.phi.setZero(nsc);
  st.psi.setZero(nsc);
  st.mu.setZero(nsc);
  st.r.setZero(nvec);
  st.q.setZero(nvec);
  st.p.setZero(nvec);
  st.s.setZero(nvec);
  st.phibar.setZero(nsk);
  st.psibar.setZero(nsk);
  st.mubar.setZero(nsk);
  return st;
}

void Discretization::set_dt(double dt) {
  if (!(dt > 0)) throw std::invalid_argument("set_dt: dt must be positive");
  params_.dt = dt;
  Impl& im = *impl_;
  const Layout& L = im.lay;
  const PfcParams& pp = params_;
  const int ns = L.ns, nf1 = L.nf1;

  // Constant interior block. The cubic term's Jacobian is added per
  // element; degenerate mobility's p-coupling as well.
  im.a0_ii = Eigen::MatrixXd::Zero(L.nI, L.nI);
  auto put = [&](int ro, int co, const Eigen::MatrixXd& blk, double sc) {
    im.a0_ii.block(ro, co, blk.rows(), blk.cols()) += sc * blk;
  };
  put(L.oPhi, L.oPhi, im.mass, 1.0 / dt);
  put(L.oPhi, L.oMu, im.e_sum, pp.tau3);
  put(L.oPsi, L.oPsi, im.mass, 1.0);
  put(L.oPsi, L.oRx, im.cx, 1.0);
  put(L.oPsi, L.oRy, im.cy, 1.0);
  put(L.oPsi, L.oPhi, im.e_sum, pp.tau1);
  put(L.oMu, L.oMu, im.mass, 1.0);
  put(L.oMu, L.oQx, im.cx, 1.0);
  put(L.oMu, L.oQy, im.cy, 1.0);
  put(L.oMu, L.oPsi, im.e_sum, pp.tau2);
  if (pp.splitting == Splitting::Secant)
    put(L.oMu, L.oPsi, im.mass, -1.0);  // implicit half of the 2*psi term
  put(L.oMu, L.oPhi, im.e_sum, -pp.tau4);
  put(L.oMu, L.oPhi, im.mass, -(1.0 - pp.eps));
  put(L.oRx, L.oRx, im.mass, 1.0);
  put(L.oRy, L.oRy, im.mass, 1.0);
  put(L.oRx, L.oPhi, im.gx, -1.0);
  put(L.oRy, L.oPhi, im.gy, -1.0);
  put(L.oQx, L.oQx, im.mass, 1.0);
  put(L.oQy, L.oQy, im.mass, 1.0);
  put(L.oQx, L.oPsi, im.gx, -1.0);
  put(L.oQy, L.oPsi, im.gy, -1.0);
  put(L.oPx, L.oPx, im.mass, 1.0);
  put(L.oPy, L.oPy, im.mass, 1.0);
  put(L.oPx, L.oMu, im.gx, -1.0);
  put(L.oPy, L.oMu, im.gy, -1.0);

  im.fast = pp.mobility.kind == Mobility::Kind::Constant;
  if (im.fast) {
    const double m = pp.mobility.m;
    put(L.oPhi, L.oPx, im.cx, m);
    put(L.oPhi, L.oPy, im.cy, m);
  }

  im.a_is = Eigen::MatrixXd::Zero(L.nI, L.nlocS);
  im.a_si0 = Eigen::MatrixXd::Zero(L.nlocS, L.nI);
  im.a_ss = Eigen::MatrixXd::Zero(L.nlocS, L.nlocS);
  for (int f = 0; f < 4; ++f) {
    const double nx = kFaceNormal[f][0], ny = kFaceNormal[f][1];
    const Eigen::MatrixXd& T = im.t_f[f];
    const Eigen::MatrixXd Tt = T.transpose();
    const Eigen::MatrixXd& U = im.u_f[f];
    auto skc = [&](int field) { return L.sk(f, field, 0); };
    im.a_is.block(L.oPhi, skc(2), ns, nf1) -= pp.tau3 * T;
    im.a_is.block(L.oPsi, skc(0), ns, nf1) -= pp.tau1 * T;
    im.a_is.block(L.oMu, skc(1), ns, nf1) -= pp.tau2 * T;
    im.a_is.block(L.oMu, skc(0), ns, nf1) += pp.tau4 * T;
    if (nx != 0) {
      im.a_is.block(L.oRx, skc(0), ns, nf1) += nx * T;
      im.a_is.block(L.oQx, skc(1), ns, nf1) += nx * T;
      im.a_is.block(L.oPx, skc(2), ns, nf1) += nx * T;
      im.a_si0.block(skc(0), L.oRx, nf1, ns) += nx * Tt;
      im.a_si0.block(skc(1), L.oQx, nf1, ns) += nx * Tt;
      if (im.fast)
        im.a_si0.block(skc(2), L.oPx, nf1, ns) += nx * pp.mobility.m * Tt;
    }
    if (ny != 0) {
      im.a_is.block(L.oRy, skc(0), ns, nf1) += ny * T;
      im.a_is.block(L.oQy, skc(1), ns, nf1) += ny * T;
      im.a_is.block(L.oPy, skc(2), ns, nf1) += ny * T;
      im.a_si0.block(skc(0), L.oRy, nf1, ns) += ny * Tt;
      im.a_si0.block(skc(1), L.oQy, nf1, ns) += ny * Tt;
      if (im.fast)
        im.a_si0.block(skc(2), L.oPy, nf1, ns) += ny * pp.mobility.m * Tt;
    }
    im.a_si0.block(skc(0), L.oPhi, nf1, ns) += pp.tau1 * Tt;
    im.a_si0.block(skc(1), L.oPsi, nf1, ns) += pp.tau2 * Tt;
    im.a_si0.block(skc(1), L.oPhi, nf1, ns) -= pp.tau4 * Tt;
    im.a_si0.block(skc(2), L.oMu, nf1, ns) += pp.tau3 * Tt;
    im.a_ss.block(skc(0), skc(0), nf1, nf1) -= pp.tau1 * U;
    im.a_ss.block(skc(1), skc(1), nf1, nf1) -= pp.tau2 * U;
    im.a_ss.block(skc(1), skc(0), nf1, nf1) += pp.tau4 * U;
    im.a_ss.block(skc(2), skc(2), nf1, nf1) -= pp.tau3 * U;
  }

  if (im.fast) {
    im.lu0.compute(im.a0_ii);
    const auto& diag = im.lu0.matrixLU().diagonal();
    for (int i = 0; i < diag.size(); ++i)
      if (diag[i] == 0.0)
        throw std::runtime_error("Discretization: singular interior block");
    im.x_is = im.lu0.solve(im.a_is);
    Eigen::MatrixXd pd = Eigen::MatrixXd::Zero(L.nI, ns);
    pd.block(L.oMu, 0, ns, ns).setIdentity();
    im.x_d = im.lu0.solve(pd);
    im.gblk = im.x_d.middleRows(L.oPhi, ns);
    im.hblk = im.x_is.middleRows(L.oPhi, ns);
    im.s0 = im.a_ss - im.a_si0 * im.x_is;
    im.kblk = im.a_si0 * im.x_d;
  }
  im.step_ready = false;
  im.residual_ready = false;
}

namespace {

// Gathers of per-element coefficient blocks.
struct ElemView {
  Eigen::Map<const Eigen::VectorXd> phi, psi, mu, rx, ry, qx, qy, px, py;
  ElemView(const State& st, int e, int ns)
      : phi(st.phi.data() + static_cast<std::ptrdiff_t>(e) * ns, ns),
        psi(st.psi.data() + static_cast<std::ptrdiff_t>(e) * ns, ns),
        mu(st.mu.data() + static_cast<std::ptrdiff_t>(e) * ns, ns),
        rx(st.r.data() + static_cast<std::ptrdiff_t>(e) * 2 * ns, ns),
        ry(st.r.data() + static_cast<std::ptrdiff_t>(e) * 2 * ns + ns, ns),
        qx(st.q.data() + static_cast<std::ptrdiff_t>(e) * 2 * ns, ns),
        qy(st.q.data() + static_cast<std::ptrdiff_t>(e) * 2 * ns + ns, ns),
        px(st.p.data() + static_cast<std::ptrdiff_t>(e) * 2 * ns, ns),
        py(st.p.data() + static_cast<std::ptrdiff_t>(e) * 2 * ns + ns, ns) {}
};

}  // namespace

void Discretization::begin_step(const State& prev, const SourceFn* source) {
  Impl& im = *impl_;
  const Layout& L = im.lay;
  const int ne = mesh_.num_elements();
  const int ns = L.ns;
  const int nqv = ref_.num_vol_points();
  im.t_n = prev.t + params_.dt;
  im.data_vec.setZero(static_cast<std::ptrdiff_t>(ne) * L.nI);
  clamped_ = 0;

  const bool degenerate = params_.mobility.kind == Mobility::Kind::Degenerate;
  if (degenerate) im.wmob.assign(ne, Eigen::MatrixXd());

  const double lag_coeff =
      params_.splitting == Splitting::Secant ? 1.0 : 2.0;
  Eigen::VectorXd phiq(nqv), mw(nqv), gq(nqv);
  const Eigen::MatrixXd& N = ref_.vol_value();
  for (int e = 0; e < ne; ++e) {
    ElemView pv(prev, e, ns);
    auto block = im.data_vec.segment(static_cast<std::ptrdiff_t>(e) * L.nI, L.nI);
    block.segment(L.oPhi, ns) = -(1.0 / params_.dt) * (im.mass * pv.phi);
    block.segment(L.oMu, ns) = -lag_coeff * (im.mass * pv.psi);
    if (degenerate) {
      phiq.noalias() = N * pv.phi;
      for (int q = 0; q < nqv; ++q) {
        const double v = 1.0 - phiq[q] * phiq[q];
        if (v < 0.0) ++clamped_;
        mw[q] = std::max(v, 0.0) * ref_.vol_weight(q) * im.volw;
      }
      Eigen::MatrixXd km = N.transpose() * mw.asDiagonal() * N;
      im.wmob[e] = im.mass_inv * km;
    }
    if (source) {
      const ElementGeometry g = mesh_.element_geometry(e);
      for (int q = 0; q < nqv; ++q) {
        const double x = g.x0 + g.hx * ref_.vol_x(q);
        const double y = g.y0 + g.hy * ref_.vol_y(q);
        gq[q] = (*source)(x, y, im.t_n) * ref_.vol_weight(q) * im.volw;
      }
      block.segment(L.oPhi, ns) -= N.transpose() * gq;
    }
  }
  im.step_ready = true;
  im.residual_ready = false;
}

double Discretization::residual_norm(const State& guess, const State& prev) {
  Impl& im = *impl_;
  if (!im.step_ready) throw std::logic_error("residual_norm before begin_step");
  const Layout& L = im.lay;
  const int ne = mesh_.num_elements();
  const int ns = L.ns, nf1 = L.nf1;
  const int nqv = ref_.num_vol_points();
  const bool degenerate = params_.mobility.kind == Mobility::Kind::Degenerate;

  im.r_int.setZero(static_cast<std::ptrdiff_t>(ne) * L.nI);
  im.r_skel.setZero(3 * im.nskf);

  const Eigen::MatrixXd& N = ref_.vol_value();
  Eigen::VectorXd xI(L.nI), xS(L.nlocS), phiq(nqv), cw(nqv);
  Eigen::VectorXd sx(ns), sy(ns), ri(L.nI), rs(L.nlocS);
  for (int e = 0; e < ne; ++e) {
    ElemView gv(guess, e, ns);
    xI.segment(L.oPhi, ns) = gv.phi;
    xI.segment(L.oPsi, ns) = gv.psi;
    xI.segment(L.oMu, ns) = gv.mu;
    xI.segment(L.oRx, ns) = gv.rx;
    xI.segment(L.oRy, ns) = gv.ry;
    xI.segment(L.oQx, ns) = gv.qx;
    xI.segment(L.oQy, ns) = gv.qy;
    xI.segment(L.oPx, ns) = gv.px;
    xI.segment(L.oPy, ns) = gv.py;
    const std::int64_t* sk = im.elem_sk.data() +
                             static_cast<std::size_t>(e) * L.nlocS;
    for (int j = 0; j < L.nlocS; ++j) {
      const std::int64_t g = sk[j];
      const int field = static_cast<int>(g % 3);
      const std::int64_t d = g / 3;
      xS[j] = field == 0 ? guess.phibar[d]
                         : (field == 1 ? guess.psibar[d] : guess.mubar[d]);
    }

    ri.noalias() = im.a0_ii * xI;
    ri.noalias() += im.a_is * xS;
    ri += im.data_vec.segment(static_cast<std::ptrdiff_t>(e) * L.nI, L.nI);
    rs.noalias() = im.a_si0 * xI;
    rs.noalias() += im.a_ss * xS;

    // Cubic term of f in the mu equation.
    phiq.noalias() = N * gv.phi;
    for (int q = 0; q < nqv; ++q)
      cw[q] = phiq[q] * phiq[q] * phiq[q] * ref_.vol_weight(q) * im.volw;
    ri.segment(L.oMu, ns).noalias() -= N.transpose() * cw;

    if (degenerate) {
      sx.noalias() = im.wmob[e] * gv.px;
      sy.noalias() = im.wmob[e] * gv.py;
      ri.segment(L.oPhi, ns).noalias() += im.cx * sx;
      ri.segment(L.oPhi, ns).noalias() += im.cy * sy;
      for (int f = 0; f < 4; ++f) {
        const double nx = kFaceNormal[f][0], ny = kFaceNormal[f][1];
        if (nx != 0)
          rs.segment(L.sk(f, 2, 0), nf1).noalias() +=
              nx * (im.t_f[f].transpose() * sx);
        else
          rs.segment(L.sk(f, 2, 0), nf1).noalias() +=
              ny * (im.t_f[f].transpose() * sy);
      }
    }

    im.r_int.segment(static_cast<std::ptrdiff_t>(e) * L.nI, L.nI) = ri;
    for (int j = 0; j < L.nlocS; ++j) im.r_skel[sk[j]] += rs[j];
  }
  im.residual_ready = true;
  return std::sqrt(im.r_int.squaredNorm() + im.r_skel.squaredNorm());
}

const Eigen::VectorXd& Discretization::last_interior_residual() const {
  return impl_->r_int;
}
const Eigen::VectorXd& Discretization::last_skeleton_residual() const {
  return impl_->r_skel;
}

CondensedSystem& Discretization::assemble_condensed(const State& guess,
                                                    const State& prev) {
  Impl& im = *impl_;
  if (!im.residual_ready)
    throw std::logic_error("assemble_condensed before residual_norm");
  const Layout& L = im.lay;
  const int ne = mesh_.num_elements();
  const int ns = L.ns, nf1 = L.nf1;
  const int nqv = ref_.num_vol_points();
  const bool degenerate = params_.mobility.kind == Mobility::Kind::Degenerate;

  CondensedSystem& cs = im.cs;
  std::fill(cs.a.vals.begin(), cs.a.vals.end(), 0.0);
  cs.b = -im.r_skel;
  cs.fast_path = im.fast;
  cs.z.setZero(static_cast<std::ptrdiff_t>(ne) * L.nI);
  if (im.fast) {
    cs.w1.setZero(ns, static_cast<std::ptrdiff_t>(ne) * ns);
    cs.lu.clear();
  } else {
    cs.w1.resize(0, 0);
    cs.lu.assign(ne, Eigen::PartialPivLU<Eigen::MatrixXd>());
  }

  const Eigen::MatrixXd& N = ref_.vol_value();
  Eigen::VectorXd phiq(nqv), fw(nqv);
  Eigen::MatrixXd f3(ns, ns), cap(ns, ns), w1(ns, ns), s_e(L.nlocS, L.nlocS);
  Eigen::MatrixXd a_ii, y_e;
  Eigen::VectorXd bloc(L.nlocS), z(L.nI);
  for (int e = 0; e < ne; ++e) {
    ElemView gv(guess, e, ns);
    phiq.noalias() = N * gv.phi;
    for (int q = 0; q < nqv; ++q)
      fw[q] = 3.0 * phiq[q] * phiq[q] * ref_.vol_weight(q) * im.volw;
    f3.noalias() = N.transpose() * fw.asDiagonal() * N;

    const auto r_i =
        im.r_int.segment(static_cast<std::ptrdiff_t>(e) * L.nI, L.nI);
    if (im.fast) {
      cap = Eigen::MatrixXd::Identity(ns, ns) - im.gblk * f3;
      Eigen::PartialPivLU<Eigen::MatrixXd> caplu(cap);
      w1.noalias() = f3 * caplu.inverse();
      const Eigen::VectorXd z0 = im.lu0.solve(r_i);
      z = z0;
      z.noalias() += im.x_d * (w1 * z0.segment(L.oPhi, ns));
      s_e = im.s0;
      s_e.noalias() -= im.kblk * (w1 * im.hblk);
      bloc.noalias() = im.a_si0 * z;
      cs.w1.block(0, static_cast<std::ptrdiff_t>(e) * ns, ns, ns) = w1;
    } else {
      a_ii = im.a0_ii;
      a_ii.block(L.oMu, L.oPhi, ns, ns) -= f3;
      const Eigen::MatrixXd& wm = im.wmob[e];
      Eigen::MatrixXd a_si = im.a_si0;
      a_ii.block(L.oPhi, L.oPx, ns, ns) += im.cx * wm;
      a_ii.block(L.oPhi, L.oPy, ns, ns) += im.cy * wm;
      for (int f = 0; f < 4; ++f) {
        const double nx = kFaceNormal[f][0], ny = kFaceNormal[f][1];
        if (nx != 0)
          a_si.block(L.sk(f, 2, 0), L.oPx, nf1, ns) +=
              nx * (im.t_f[f].transpose() * wm);
        else
          a_si.block(L.sk(f, 2, 0), L.oPy, nf1, ns) +=
              ny * (im.t_f[f].transpose() * wm);
      }
      cs.lu[e].compute(a_ii);
      const auto& diag = cs.lu[e].matrixLU().diagonal();
      for (int i = 0; i < diag.size(); ++i)
        if (diag[i] == 0.0)
          throw std::runtime_error("condense: singular interior block in element " +
                                   std::to_string(e));
      y_e = cs.lu[e].solve(im.a_is);
      z = cs.lu[e].solve(r_i);
      s_e = im.a_ss;
      s_e.noalias() -= a_si * y_e;
      bloc.noalias() = a_si * z;
    }
    cs.z.segment(static_cast<std::ptrdiff_t>(e) * L.nI, L.nI) = z;

    const std::int64_t* sk =
        im.elem_sk.data() + static_cast<std::size_t>(e) * L.nlocS;
    for (int lr = 0; lr < L.nlocS; ++lr) {
      const int gr = static_cast<int>(sk[lr]);
      cs.b[gr] += bloc[lr];
      const int lo = cs.a.row_ptr[gr], hi = cs.a.row_ptr[gr + 1];
      const int* cols = cs.a.col_idx.data();
      for (int lc = 0; lc < L.nlocS; ++lc) {
        const int gc = static_cast<int>(sk[lc]);
        const int* it = std::lower_bound(cols + lo, cols + hi, gc);
        cs.a.vals[it - cols] += s_e(lr, lc);
      }
    }
  }
  cs.ready = true;
  im.residual_ready = false;
  return cs;
}

void Discretization::recover(const CondensedSystem& cs,
                             const Eigen::VectorXd& dskel,
                             Eigen::VectorXd& dinterior) const {
  const Impl& im = *impl_;
  if (!cs.ready) throw std::logic_error("recover: missing factorization");
  const Layout& L = im.lay;
  const int ne = mesh_.num_elements();
  const int ns = L.ns;
  dinterior.setZero(static_cast<std::ptrdiff_t>(ne) * L.nI);
  Eigen::VectorXd dS(L.nlocS), di(L.nI);
  for (int e = 0; e < ne; ++e) {
    const std::int64_t* sk =
        im.elem_sk.data() + static_cast<std::size_t>(e) * L.nlocS;
    for (int j = 0; j < L.nlocS; ++j) dS[j] = dskel[sk[j]];
    const auto z = cs.z.segment(static_cast<std::ptrdiff_t>(e) * L.nI, L.nI);
    if (cs.fast_path) {
      di = -z;
      di.noalias() -= im.x_is * dS;
      const auto w1 = cs.w1.block(0, static_cast<std::ptrdiff_t>(e) * ns, ns, ns);
      di.noalias() -= im.x_d * (w1 * (im.hblk * dS));
    } else {
      di = -z - cs.lu[e].solve(im.a_is * dS);
    }
    dinterior.segment(static_cast<std::ptrdiff_t>(e) * L.nI, L.nI) = di;
  }
}

void Discretization::apply_update(State& state, const Eigen::VectorXd& dskel,
                                  const Eigen::VectorXd& dinterior) const {
  const Layout& L = impl_->lay;
  const int ne = mesh_.num_elements();
  const int ns = L.ns;
  for (int e = 0; e < ne; ++e) {
    const auto di =
        dinterior.segment(static_cast<std::ptrdiff_t>(e) * L.nI, L.nI);
    state.phi.segment(static_cast<std::ptrdiff_t>(e) * ns, ns) +=
        di.segment(L.oPhi, ns);
    state.psi.segment(static_cast<std::ptrdiff_t>(e) * ns, ns) +=
        di.segment(L.oPsi, ns);
    state.mu.segment(static_cast<std::ptrdiff_t>(e) * ns, ns) +=
        di.segment(L.oMu, ns);
    state.r.segment(static_cast<std::ptrdiff_t>(e) * 2 * ns, ns) +=
        di.segment(L.oRx, ns);
    state.r.segment(static_cast<std::ptrdiff_t>(e) * 2 * ns + ns, ns) +=
        di.segment(L.oRy, ns);
    state.q.segment(static_cast<std::ptrdiff_t>(e) * 2 * ns, ns) +=
        di.segment(L.oQx, ns);
    state.q.segment(static_cast<std::ptrdiff_t>(e) * 2 * ns + ns, ns) +=
        di.segment(L.oQy, ns);
    state.p.segment(static_cast<std::ptrdiff_t>(e) * 2 * ns, ns) +=
        di.segment(L.oPx, ns);
    state.p.segment(static_cast<std::ptrdiff_t>(e) * 2 * ns + ns, ns) +=
        di.segment(L.oPy, ns);
  }
  for (std::int64_t d = 0; d < impl_->nskf; ++d) {
    state.phibar[d] += dskel[3 * d + 0];
    state.psibar[d] += dskel[3 * d + 1];
    state.mubar[d] += dskel[3 * d + 2];
  }
}

linalg::SparseLu& Discretization::skeleton_solver() { return impl_->solver; }

void Discretization::reconstruct_s(State& state, const State& prev) const {
  const Impl& im = *impl_;
  const int ne = mesh_.num_elements();
  const int ns = im.lay.ns;
  const int nqv = ref_.num_vol_points();
  const Eigen::MatrixXd& N = ref_.vol_value();
  if (params_.mobility.kind == Mobility::Kind::Constant) {
    state.s = params_.mobility.m * state.p;
    return;
  }
  Eigen::VectorXd phiq(nqv), mw(nqv);
  for (int e = 0; e < ne; ++e) {
    ElemView pv(prev, e, ns);
    ElemView gv(state, e, ns);
    phiq.noalias() = N * pv.phi;
    for (int q = 0; q < nqv; ++q)
      mw[q] = std::max(1.0 - phiq[q] * phiq[q], 0.0) * ref_.vol_weight(q) *
              im.volw;
    Eigen::MatrixXd wm = im.mass_inv * (N.transpose() * mw.asDiagonal() * N);
    state.s.segment(static_cast<std::ptrdiff_t>(e) * 2 * ns, ns) = wm * gv.px;
    state.s.segment(static_cast<std::ptrdiff_t>(e) * 2 * ns + ns, ns) =
        wm * gv.py;
  }
}

LocalSystem Discretization::local_system(int e, const State& guess,
                                         const State& prev,
                                         const SourceFn* source) const {
  if (e < 0 || e >= mesh_.num_elements())
    throw std::out_of_range("local_system: element id out of range");
  const Impl& im = *impl_;
  const Layout& L = im.lay;
  const int ns = L.ns, nf1 = L.nf1;
  const int nqv = ref_.num_vol_points();
  const bool degenerate = params_.mobility.kind == Mobility::Kind::Degenerate;
  const Eigen::MatrixXd& N = ref_.vol_value();

  LocalSystem sys;
  ElemView gv(guess, e, ns);
  ElemView pv(prev, e, ns);

  Eigen::VectorXd xI(L.nI), xS(L.nlocS);
  xI.segment(L.oPhi, ns) = gv.phi;
  xI.segment(L.oPsi, ns) = gv.psi;
  xI.segment(L.oMu, ns) = gv.mu;
  xI.segment(L.oRx, ns) = gv.rx;
  xI.segment(L.oRy, ns) = gv.ry;
  xI.segment(L.oQx, ns) = gv.qx;
  xI.segment(L.oQy, ns) = gv.qy;
  xI.segment(L.oPx, ns) = gv.px;
  xI.segment(L.oPy, ns) = gv.py;
  auto faces = mesh_.faces_of_element(e);
  for (int f = 0; f < 4; ++f)
    for (int m = 0; m < nf1; ++m) {
      const std::int64_t d = skeleton_map_.skeleton_dof(faces[f].face, m);
      xS[L.sk(f, 0, m)] = guess.phibar[d];
      xS[L.sk(f, 1, m)] = guess.psibar[d];
      xS[L.sk(f, 2, m)] = guess.mubar[d];
    }

  // Mobility projection from the previous state.
  Eigen::MatrixXd wm;
  Eigen::VectorXd phiq(nqv), w(nqv);
  if (degenerate) {
    phiq.noalias() = N * pv.phi;
    for (int q = 0; q < nqv; ++q)
      w[q] = std::max(1.0 - phiq[q] * phiq[q], 0.0) * ref_.vol_weight(q) *
             im.volw;
    wm = im.mass_inv * (N.transpose() * w.asDiagonal() * N);
  } else {
    wm = params_.mobility.m * Eigen::MatrixXd::Identity(ns, ns);
  }

  sys.a_ii = im.a0_ii;
  sys.a_si = im.a_si0;
  sys.a_is = im.a_is;
  sys.a_ss = im.a_ss;
  phiq.noalias() = N * gv.phi;
  for (int q = 0; q < nqv; ++q)
    w[q] = 3.0 * phiq[q] * phiq[q] * ref_.vol_weight(q) * im.volw;
  sys.a_ii.block(L.oMu, L.oPhi, ns, ns) -= N.transpose() * w.asDiagonal() * N;
  if (degenerate) {
    sys.a_ii.block(L.oPhi, L.oPx, ns, ns) += im.cx * wm;
    sys.a_ii.block(L.oPhi, L.oPy, ns, ns) += im.cy * wm;
    for (int f = 0; f < 4; ++f) {
      const double nx = kFaceNormal[f][0], ny = kFaceNormal[f][1];
      if (nx != 0)
        sys.a_si.block(L.sk(f, 2, 0), L.oPx, nf1, ns) +=
            nx * (im.t_f[f].transpose() * wm);
      else
        sys.a_si.block(L.sk(f, 2, 0), L.oPy, nf1, ns) +=
            ny * (im.t_f[f].transpose() * wm);
    }
  }

  // Residuals.
  Eigen::VectorXd sx = wm * gv.px, sy = wm * gv.py;
  sys.r_i.noalias() = sys.a_is * xS;
  // a0_ii lacks the p coupling only in the degenerate branch; add via s.
  sys.r_i.noalias() += im.a0_ii * xI;
  if (degenerate) {
    sys.r_i.segment(L.oPhi, ns).noalias() += im.cx * sx;
    sys.r_i.segment(L.oPhi, ns).noalias() += im.cy * sy;
  }
  phiq.noalias() = N * gv.phi;
  for (int q = 0; q < nqv; ++q)
    w[q] = phiq[q] * phiq[q] * phiq[q] * ref_.vol_weight(q) * im.volw;
  sys.r_i.segment(L.oMu, ns).noalias() -= N.transpose() * w;
  sys.r_i.segment(L.oPhi, ns).noalias() -=
      (1.0 / params_.dt) * (im.mass * pv.phi);
  const double lag_coeff =
      params_.splitting == Splitting::Secant ? 1.0 : 2.0;
  sys.r_i.segment(L.oMu, ns).noalias() -= lag_coeff * (im.mass * pv.psi);
  if (source) {
    const ElementGeometry g = mesh_.element_geometry(e);
    for (int q = 0; q < nqv; ++q) {
      const double x = g.x0 + g.hx * ref_.vol_x(q);
      const double y = g.y0 + g.hy * ref_.vol_y(q);
      w[q] = (*source)(x, y, guess.t) * ref_.vol_weight(q) * im.volw;
    }
    sys.r_i.segment(L.oPhi, ns).noalias() -= N.transpose() * w;
  }

  sys.r_s.noalias() = im.a_si0 * xI;
  sys.r_s.noalias() += im.a_ss * xS;
  if (degenerate) {
    for (int f = 0; f < 4; ++f) {
      const double nx = kFaceNormal[f][0], ny = kFaceNormal[f][1];
      if (nx != 0)
        sys.r_s.segment(L.sk(f, 2, 0), nf1).noalias() +=
            nx * (im.t_f[f].transpose() * sx);
      else
        sys.r_s.segment(L.sk(f, 2, 0), nf1).noalias() +=
            ny * (im.t_f[f].transpose() * sy);
    }
  }
  return sys;
}

Eigen::VectorXd Discretization::local_residual(int e, const State& guess,
                                               const State& prev,
                                               const SourceFn* source) const {
  LocalSystem sys = local_system(e, guess, prev, source);
  Eigen::VectorXd out(sys.r_i.size() + sys.r_s.size());
  out << sys.r_i, sys.r_s;
  return out;
}

Eigen::MatrixXd Discretization::local_jacobian(int e, const State& guess,
                                               const State& prev) const {
  LocalSystem sys = local_system(e, guess, prev, nullptr);
  const int ni = static_cast<int>(sys.a_ii.rows());
  const int nsk = static_cast<int>(sys.a_ss.rows());
  Eigen::MatrixXd out(ni + nsk, ni + nsk);
  out.topLeftCorner(ni, ni) = sys.a_ii;
  out.topRightCorner(ni, nsk) = sys.a_is;
  out.bottomLeftCorner(nsk, ni) = sys.a_si;
  out.bottomRightCorner(nsk, nsk) = sys.a_ss;
  return out;
}

CondensedElement condense(const LocalSystem& sys, int element_id) {
  CondensedElement ce;
  ce.interior_lu.compute(sys.a_ii);
  const auto& diag = ce.interior_lu.matrixLU().diagonal();
  for (int i = 0; i < diag.size(); ++i)
    if (diag[i] == 0.0)
      throw std::runtime_error("condense: singular interior block in element " +
                               std::to_string(element_id));
  ce.schur = sys.a_ss - sys.a_si * ce.interior_lu.solve(sys.a_is);
  ce.rhs = -sys.r_s + sys.a_si * ce.interior_lu.solve(sys.r_i);
  return ce;
}

Eigen::VectorXd recover_interior(const CondensedElement& ce,
                                 const LocalSystem& sys,
                                 const Eigen::VectorXd& dskel) {
  return -ce.interior_lu.solve(sys.r_i + sys.a_is * dskel);
}

double Discretization::compute_energy(const State& state) const {
  const Impl& im = *impl_;
  const int ne = mesh_.num_elements();
  const int ns = im.lay.ns;
  const int nqv = ref_.num_vol_points();
  const Eigen::MatrixXd& N = ref_.vol_value();
  const double eps = params_.eps;
  double total = 0.0;
  Eigen::VectorXd phiq(nqv), psiq(nqv), rxq(nqv), ryq(nqv);
  for (int e = 0; e < ne; ++e) {
    ElemView v(state, e, ns);
    phiq.noalias() = N * v.phi;
    psiq.noalias() = N * v.psi;
    rxq.noalias() = N * v.rx;
    ryq.noalias() = N * v.ry;
    double acc = 0.0;
    for (int q = 0; q < nqv; ++q) {
      const double ph = phiq[q];
      acc += ref_.vol_weight(q) *
             (0.25 * ph * ph * ph * ph + 0.5 * (1.0 - eps) * ph * ph -
              (rxq[q] * rxq[q] + ryq[q] * ryq[q]) + 0.5 * psiq[q] * psiq[q]);
    }
    total += acc * im.volw;
  }
  return total;
}

double Discretization::compute_mass(const State& state) const {
  const Impl& im = *impl_;
  const int ne = mesh_.num_elements();
  const int ns = im.lay.ns;
  const int nqv = ref_.num_vol_points();
  const Eigen::MatrixXd& N = ref_.vol_value();
  double total = 0.0;
  Eigen::VectorXd phiq(nqv);
  for (int e = 0; e < ne; ++e) {
    ElemView v(state, e, ns);
    phiq.noalias() = N * v.phi;
    double acc = 0.0;
    for (int q = 0; q < nqv; ++q) acc += ref_.vol_weight(q) * phiq[q];
    total += acc * im.volw;
  }
  return total;
}

double Discretization::dissipation(const State& state, const State& prev) const {
  const Impl& im = *impl_;
  const int ne = mesh_.num_elements();
  const int ns = im.lay.ns;
  const int nqv = ref_.num_vol_points();
  const Eigen::MatrixXd& N = ref_.vol_value();
  const Mobility& mob = params_.mobility;
  double total = 0.0;
  Eigen::VectorXd phiq(nqv), pxq(nqv), pyq(nqv);
  for (int e = 0; e < ne; ++e) {
    ElemView v(state, e, ns);
    ElemView pv(prev, e, ns);
    phiq.noalias() = N * pv.phi;
    pxq.noalias() = N * v.px;
    pyq.noalias() = N * v.py;
    double acc = 0.0;
    for (int q = 0; q < nqv; ++q)
      acc += ref_.vol_weight(q) * mobility_eval(mob, phiq[q]) *
             (pxq[q] * pxq[q] + pyq[q] * pyq[q]);
    total += acc * im.volw;
  }
  return total;
}

EnergyRecord Discretization::energy_record(const State& state,
                                           const State& prev,
                                           int newton_iters) const {
  EnergyRecord rec;
  rec.step = state.step;
  rec.time = state.t;
  rec.energy = compute_energy(state);
  rec.scaled_energy = rec.energy / mesh_.area();
  rec.mass = compute_mass(state);
  rec.dissipation = dissipation(state, prev);
  rec.newton_iters = newton_iters;
  return rec;
}

Eigen::VectorXd Discretization::project_scalar(
    const std::function<double(double, double)>& f) const {
  const Impl& im = *impl_;
  const RefElement& roi = im.ref_oi;
  const int ne = mesh_.num_elements();
  const int ns = im.lay.ns;
  const int nqv = roi.num_vol_points();
  const Eigen::MatrixXd& N = roi.vol_value();
  Eigen::VectorXd out(scalar_map_.total());
  Eigen::VectorXd w(nqv);
  for (int e = 0; e < ne; ++e) {
    const ElementGeometry g = mesh_.element_geometry(e);
    for (int q = 0; q < nqv; ++q) {
      const double x = g.x0 + g.hx * roi.vol_x(q);
      const double y = g.y0 + g.hy * roi.vol_y(q);
      const double v = f(x, y);
      if (!std::isfinite(v))
        throw std::runtime_error("project_scalar: non-finite field value");
      w[q] = v * roi.vol_weight(q) * im.volw;
    }
    out.segment(static_cast<std::ptrdiff_t>(e) * ns, ns) =
        im.mass_inv * (N.transpose() * w);
  }
  return out;
}

namespace {

// Physical quadrature points along a face, via its first incidence.
void face_points(const CartesianMesh& mesh, int face, const QuadRule1D& rule,
                 std::vector<double>& xs, std::vector<double>& ys,
                 double& len) {
  const Face& f = mesh.face(face);
  const FaceIncidence& in = f.incidence[0];
  const ElementGeometry g = mesh.element_geometry(in.element);
  xs.resize(rule.n);
  ys.resize(rule.n);
  if (f.orientation == FaceOrientation::Vertical) {
    const double x = in.local_face == 0 ? g.x0 : g.x0 + g.hx;
    for (int q = 0; q < rule.n; ++q) {
      xs[q] = x;
      ys[q] = g.y0 + g.hy * rule.points[q];
    }
    len = g.hy;
  } else {
    const double y = in.local_face == 2 ? g.y0 : g.y0 + g.hy;
    for (int q = 0; q < rule.n; ++q) {
      xs[q] = g.x0 + g.hx * rule.points[q];
      ys[q] = y;
    }
    len = g.hx;
  }
}

}  // namespace

Eigen::VectorXd Discretization::project_skeleton(
    const std::function<double(double, double)>& f) const {
  const Impl& im = *impl_;
  const int nf1 = im.lay.nf1;
  const std::int64_t n = im.nskf;
  // Facet-space mass matrix (handles EDG vertex continuity) and rhs.
  std::vector<std::vector<std::pair<int, double>>> rows(n);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  std::vector<double> xs, ys;
  for (int face = 0; face < mesh_.num_faces(); ++face) {
    double len = 0.0;
    face_points(mesh_, face, im.rule_oi, xs, ys, len);
    for (int a = 0; a < nf1; ++a) {
      const std::int64_t ga = skeleton_map_.skeleton_dof(face, a);
      double acc = 0.0;
      for (int q = 0; q < im.rule_oi.n; ++q)
        acc += im.rule_oi.weights[q] * len * im.oi_facet_1d(q, a) *
               f(xs[q], ys[q]);
      rhs[ga] += acc;
      for (int b = 0; b < nf1; ++b) {
        const std::int64_t gb = skeleton_map_.skeleton_dof(face, b);
        double m = 0.0;
        for (int q = 0; q < im.rule_oi.n; ++q)
          m += im.rule_oi.weights[q] * len * im.oi_facet_1d(q, a) *
               im.oi_facet_1d(q, b);
        rows[ga].push_back({static_cast<int>(gb), m});
      }
    }
  }
  linalg::CsrMatrix M;
  M.n = static_cast<int>(n);
  M.row_ptr.assign(n + 1, 0);
  for (std::int64_t rI = 0; rI < n; ++rI) {
    auto& row = rows[rI];
    std::sort(row.begin(), row.end());
    std::vector<std::pair<int, double>> merged;
    for (auto& [c, v] : row) {
      if (!merged.empty() && merged.back().first == c)
        merged.back().second += v;
      else
        merged.push_back({c, v});
    }
    row = std::move(merged);
    M.row_ptr[rI + 1] = M.row_ptr[rI] + static_cast<int>(row.size());
    for (auto& [c, v] : row) {
      M.col_idx.push_back(c);
      M.vals.push_back(v);
    }
  }
  return linalg::sparse_lu_solve(M, rhs);
}

Eigen::VectorXd Discretization::project_skeleton_from_field(
    const Eigen::VectorXd& field) const {
  const Impl& im = *impl_;
  const int nf1 = im.lay.nf1;
  const int ns = im.lay.ns;
  const int nq = ref_.nq1d();
  const QuadRule1D& r1 = ref_.rule1d();
  const std::int64_t n = im.nskf;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  std::vector<std::vector<std::pair<int, double>>> rows(n);
  // Unit-length facet mass matrix.
  Eigen::MatrixXd uref = im.u_f[0] / im.face_len[0];
  for (int face = 0; face < mesh_.num_faces(); ++face) {
    const Face& f = mesh_.face(face);
    const double len = f.orientation == FaceOrientation::Vertical ? im.hy
                                                                  : im.hx;
    // Average the traces over the incident elements.
    Eigen::VectorXd trace = Eigen::VectorXd::Zero(nq);
    for (int i = 0; i < f.num_incidences; ++i) {
      const FaceIncidence& in = f.incidence[i];
      const auto coeffs =
          field.segment(static_cast<std::ptrdiff_t>(in.element) * ns, ns);
      trace += ref_.facet_value(in.local_face) * coeffs;
    }
    trace /= f.num_incidences;
    for (int a = 0; a < nf1; ++a) {
      const std::int64_t ga = skeleton_map_.skeleton_dof(face, a);
      double acc = 0.0;
      for (int q = 0; q < nq; ++q)
        acc += r1.weights[q] * len * ref_.facet_basis_1d()(q, a) * trace[q];
      rhs[ga] += acc;
      for (int b = 0; b < nf1; ++b) {
        const std::int64_t gb = skeleton_map_.skeleton_dof(face, b);
        rows[ga].push_back({static_cast<int>(gb), len * uref(a, b)});
      }
    }
  }
  linalg::CsrMatrix M;
  M.n = static_cast<int>(n);
  M.row_ptr.assign(n + 1, 0);
  for (std::int64_t rI = 0; rI < n; ++rI) {
    auto& row = rows[rI];
    std::sort(row.begin(), row.end());
    std::vector<std::pair<int, double>> merged;
    for (auto& [c, v] : row) {
      if (!merged.empty() && merged.back().first == c)
        merged.back().second += v;
      else
        merged.push_back({c, v});
    }
    row = std::move(merged);
    M.row_ptr[rI + 1] = M.row_ptr[rI] + static_cast<int>(row.size());
    for (auto& [c, v] : row) {
      M.col_idx.push_back(c);
      M.vals.push_back(v);
    }
  }
  return linalg::sparse_lu_solve(M, rhs);
}

double Discretization::l2_error_scalar(
    const Eigen::VectorXd& field,
    const std::function<double(double, double)>& exact) const {
  const Impl& im = *impl_;
  const RefElement& roi = im.ref_oi;
  const int ne = mesh_.num_elements();
  const int ns = im.lay.ns;
  const int nqv = roi.num_vol_points();
  const Eigen::MatrixXd& N = roi.vol_value();
  double total = 0.0;
  Eigen::VectorXd fq(nqv);
  for (int e = 0; e < ne; ++e) {
    ElementGeometry g = mesh_.element_geometry(e);
    fq.noalias() = N * field.segment(static_cast<std::ptrdiff_t>(e) * ns, ns);
    double acc = 0.0;
    for (int q = 0; q < nqv; ++q) {
      const double x = g.x0 + g.hx * roi.vol_x(q);
      const double y = g.y0 + g.hy * roi.vol_y(q);
      const double d = exact(x, y) - fq[q];
      acc += roi.vol_weight(q) * d * d;
    }
    total += acc * im.volw;
  }
  return std::sqrt(total);
}

double Discretization::eval_scalar(const Eigen::VectorXd& field, double x,
                                   double y) const {
  const Impl& im = *impl_;
  const int ns = im.lay.ns;
  int i = static_cast<int>(std::floor((x - mesh_.x0()) / im.hx));
  int j = static_cast<int>(std::floor((y - mesh_.y0()) / im.hy));
  i = std::clamp(i, 0, mesh_.nx() - 1);
  j = std::clamp(j, 0, mesh_.ny() - 1);
  const int e = mesh_.element_index(i, j);
  const ElementGeometry g = mesh_.element_geometry(e);
  const double xi = std::clamp((x - g.x0) / g.hx, 0.0, 1.0);
  const double eta = std::clamp((y - g.y0) / g.hy, 0.0, 1.0);
  std::vector<double> vals(ns);
  ref_.eval_basis(xi, eta, vals.data());
  double acc = 0.0;
  for (int a = 0; a < ns; ++a)
    acc += vals[a] * field[static_cast<std::ptrdiff_t>(e) * ns + a];
  return acc;
}

}  // namespace pfc

#include "loadshift/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "loadshift/errors.hpp"

namespace loadshift {

const char* to_string(QpStatus status) {
  switch (status) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::infeasible: return "infeasible";
    case QpStatus::unbounded: return "unbounded";
    case QpStatus::max_iter: return "max_iter";
  }
  return "unknown";
}

void QpProblem::validate() const {
  const auto n = c.size();
  if (H.rows() != n || H.cols() != n) throw Error(ErrorCode::validation, "QP Hessian size mismatch");
  if (lower.size() != n || upper.size() != n) throw Error(ErrorCode::validation, "QP bound size mismatch");
  if (A_in.rows() != b_in.size() || (A_in.rows() > 0 && A_in.cols() != n))
    throw Error(ErrorCode::validation, "QP inequality block size mismatch");
  if (A_eq.rows() != b_eq.size() || (A_eq.rows() > 0 && A_eq.cols() != n))
    throw Error(ErrorCode::validation, "QP equality block size mismatch");
}

namespace {

using Row = std::vector<std::pair<int, double>>;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Problem over the free variables only, inequalities split into general rows
// and simple bounds.
struct Reduced {
  int n = 0;
  Eigen::MatrixXd H;
  Eigen::VectorXd c;
  std::vector<Row> G;
  std::vector<double> h;
  std::vector<int> lo_idx, up_idx;
  std::vector<double> lo_val, up_val;
  std::vector<Row> E;
  std::vector<double> f;

  std::size_t m() const { return G.size() + lo_idx.size() + up_idx.size(); }

  Eigen::VectorXd apply_G(const Eigen::VectorXd& x) const {
    Eigen::VectorXd r(static_cast<Eigen::Index>(m()));
    Eigen::Index k = 0;
    for (const auto& row : G) {
      double v = 0.0;
      for (const auto& [j, a] : row) v += a * x[j];
      r[k++] = v;
    }
    for (int j : lo_idx) r[k++] = -x[j];
    for (int j : up_idx) r[k++] = x[j];
    return r;
  }
  Eigen::VectorXd apply_GT(const Eigen::VectorXd& w) const {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(n);
    Eigen::Index k = 0;
    for (const auto& row : G) {
      for (const auto& [j, a] : row) r[j] += a * w[k];
      ++k;
    }
    for (int j : lo_idx) r[j] -= w[k++];
    for (int j : up_idx) r[j] += w[k++];
    return r;
  }
  Eigen::VectorXd h_all() const {
    Eigen::VectorXd r(static_cast<Eigen::Index>(m()));
    Eigen::Index k = 0;
    for (double v : h) r[k++] = v;
    for (double v : lo_val) r[k++] = -v;
    for (double v : up_val) r[k++] = v;
    return r;
  }
  Eigen::VectorXd apply_E(const Eigen::VectorXd& x) const {
    Eigen::VectorXd r(static_cast<Eigen::Index>(E.size()));
    for (std::size_t i = 0; i < E.size(); ++i) {
      double v = 0.0;
      for (const auto& [j, a] : E[i]) v += a * x[j];
      r[static_cast<Eigen::Index>(i)] = v;
    }
    return r;
  }
  Eigen::VectorXd apply_ET(const Eigen::VectorXd& y) const {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < E.size(); ++i)
      for (const auto& [j, a] : E[i]) r[j] += a * y[static_cast<Eigen::Index>(i)];
    return r;
  }
};

struct IpmOutcome {
  QpStatus status = QpStatus::max_iter;
  Eigen::VectorXd x;
  int iterations = 0;
  double residual = 0.0;
};

double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double a = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
  return a;
}

IpmOutcome ipm(const Reduced& P, const QpOptions& opt) {
  const int n = P.n;
  const auto m = static_cast<Eigen::Index>(P.m());
  const auto me = static_cast<Eigen::Index>(P.E.size());
  IpmOutcome out;

  const Eigen::VectorXd h = P.h_all();
  const Eigen::VectorXd f = Eigen::Map<const Eigen::VectorXd>(P.f.data(), me);
  double reg = 1e-11;

  // Normal-equation matrix H + G^T D G (+ reg), and its factorization with the
  // equality Schur complement.
  Eigen::LLT<Eigen::MatrixXd> llt, schur;
  Eigen::MatrixXd MinvEt;
  auto factor = [&](const Eigen::VectorXd& D) {
    for (;;) {
      Eigen::MatrixXd M = P.H;
      M.diagonal().array() += reg;
      Eigen::Index k = 0;
      for (const auto& row : P.G) {
        const double d = D[k++];
        for (const auto& [i, a] : row)
          for (const auto& [j, b] : row) M(i, j) += d * a * b;
      }
      for (int j : P.lo_idx) M(j, j) += D[k++];
      for (int j : P.up_idx) M(j, j) += D[k++];
      llt.compute(M);
      if (llt.info() == Eigen::Success) break;
      reg = std::max(reg * 100.0, 1e-9);
      if (reg > 1e-2) return false;
    }
    if (me > 0) {
      Eigen::MatrixXd Et = Eigen::MatrixXd::Zero(n, me);
      for (Eigen::Index i = 0; i < me; ++i)
        for (const auto& [j, a] : P.E[static_cast<std::size_t>(i)]) Et(j, i) += a;
      MinvEt = llt.solve(Et);
      Eigen::MatrixXd S = Et.transpose() * MinvEt;
      S.diagonal().array() += 1e-13;
      schur.compute(S);
    }
    return true;
  };
  // Solves M dx + E^T dy = r1, E dx = r2.
  auto solve_kkt = [&](const Eigen::VectorXd& r1, const Eigen::VectorXd& r2, Eigen::VectorXd& dx, Eigen::VectorXd& dy) {
    const Eigen::VectorXd v = llt.solve(r1);
    if (me > 0) {
      dy = schur.solve(P.apply_E(v) - r2);
      dx = v - MinvEt * dy;
    } else {
      dy.resize(0);
      dx = v;
    }
  };

  // Least-squares start: min 1/2 x'Hx + c'x + 1/2 |Gx - h|^2 s.t. Ex = f, then
  // shift s = h - Gx and z = Gx - h into the positive orthant.
  Eigen::VectorXd x, y, s, z;
  if (!factor(Eigen::VectorXd::Ones(m))) {
    out.x = Eigen::VectorXd::Zero(n);
    return out;
  }
  solve_kkt(-P.c + P.apply_GT(h), f, x, y);
  s = h - P.apply_G(x);
  z = -s;
  if (m > 0) {
    const double ap = -s.minCoeff(), ad = -z.minCoeff();
    const double scale = std::max(1.0, s.lpNorm<Eigen::Infinity>());
    if (ap >= -1e-8 * scale) s.array() += 1.0 + ap;
    if (ad >= -1e-8 * scale) z.array() += 1.0 + ad;
  }

  const double cscale = 1.0 + (n > 0 ? P.c.lpNorm<Eigen::Infinity>() : 0.0);
  const double pscale = 1.0 + std::max(m > 0 ? h.lpNorm<Eigen::Infinity>() : 0.0,
                                       me > 0 ? f.lpNorm<Eigen::Infinity>() : 0.0);
  for (out.iterations = 0; out.iterations <= opt.max_iter; ++out.iterations) {
    const Eigen::VectorXd Gx = P.apply_G(x);
    const Eigen::VectorXd r_d = P.H * x + P.c + P.apply_ET(y) + P.apply_GT(z);
    const Eigen::VectorXd r_e = P.apply_E(x) - f;
    const Eigen::VectorXd r_i = Gx + s - h;
    const double mu = m > 0 ? s.dot(z) / static_cast<double>(m) : 0.0;
    const double dres = r_d.size() ? r_d.lpNorm<Eigen::Infinity>() / cscale : 0.0;
    const double pres = std::max(me ? r_e.lpNorm<Eigen::Infinity>() : 0.0, m ? r_i.lpNorm<Eigen::Infinity>() : 0.0) / pscale;
    const double gap = m > 0 ? s.dot(z) : 0.0;
    out.residual = std::max({dres, pres, gap});
    if (dres <= opt.tol && pres <= opt.tol && gap <= opt.tol) {
      out.status = QpStatus::optimal;
      break;
    }
    if (out.iterations == opt.max_iter) break;
    if (!x.allFinite() || x.lpNorm<Eigen::Infinity>() > 1e14) {
      out.status = QpStatus::unbounded;
      break;
    }

    const Eigen::VectorXd D = z.cwiseQuotient(s);
    if (!factor(D)) break;

    auto direction = [&](const Eigen::VectorXd& r_c, Eigen::VectorXd& dx, Eigen::VectorXd& dy,
                         Eigen::VectorXd& dz, Eigen::VectorXd& ds) {
      const Eigen::VectorXd rhs1 = -r_d - P.apply_GT(D.cwiseProduct(r_i) + r_c.cwiseQuotient(s));
      solve_kkt(rhs1, -r_e, dx, dy);
      dz = D.cwiseProduct(P.apply_G(dx) + r_i) + r_c.cwiseQuotient(s);
      ds = (r_c - s.cwiseProduct(dz)).cwiseQuotient(z);
    };

    Eigen::VectorXd dx, dy, dz, ds;
    Eigen::VectorXd r_c = -s.cwiseProduct(z);
    direction(r_c, dx, dy, dz, ds);
    if (m > 0) {
      const double a_aff = std::min(max_step(s, ds), max_step(z, dz));
      const double mu_aff = (s + a_aff * ds).dot(z + a_aff * dz) / static_cast<double>(m);
      const double sigma = std::pow(mu_aff / mu, 3.0);
      r_c = -s.cwiseProduct(z) - ds.cwiseProduct(dz) + Eigen::VectorXd::Constant(m, sigma * mu);
      direction(r_c, dx, dy, dz, ds);
    }
    const double a = m > 0 ? std::min(1.0, 0.99 * std::min(max_step(s, ds), max_step(z, dz))) : 1.0;
    x += a * dx;
    y += a * dy;
    z += a * dz;
    s += a * ds;
  }
  out.x = x;
  return out;
}

// Elastic feasibility problem: minimize the total row violation.
bool phase_one_feasible(const Reduced& P, const QpOptions& opt) {
  Reduced F;
  const int n = P.n;
  const int ne = static_cast<int>(P.E.size());
  const int t = n;
  F.n = n + 1 + 2 * ne;
  F.H = Eigen::MatrixXd::Zero(F.n, F.n);
  F.H.diagonal().array() = 1e-8;
  F.c = Eigen::VectorXd::Zero(F.n);
  F.c[t] = 1.0;
  for (int i = 0; i < ne; ++i) F.c[n + 1 + i] = F.c[n + 1 + ne + i] = 1.0;
  for (std::size_t r = 0; r < P.G.size(); ++r) {
    Row row = P.G[r];
    row.emplace_back(t, -1.0);
    F.G.push_back(std::move(row));
    F.h.push_back(P.h[r]);
  }
  F.lo_idx = P.lo_idx;
  F.lo_val = P.lo_val;
  F.up_idx = P.up_idx;
  F.up_val = P.up_val;
  F.lo_idx.push_back(t);
  F.lo_val.push_back(0.0);
  for (int i = 0; i < 2 * ne; ++i) {
    F.lo_idx.push_back(n + 1 + i);
    F.lo_val.push_back(0.0);
  }
  for (int i = 0; i < ne; ++i) {
    Row row = P.E[static_cast<std::size_t>(i)];
    row.emplace_back(n + 1 + i, -1.0);
    row.emplace_back(n + 1 + ne + i, 1.0);
    F.E.push_back(std::move(row));
    F.f.push_back(P.f[static_cast<std::size_t>(i)]);
  }
  QpOptions o = opt;
  o.max_iter = std::max(opt.max_iter, 200);
  const auto r = ipm(F, o);
  double total = r.x[t];
  for (int i = 0; i < 2 * ne; ++i) total += r.x[n + 1 + i];
  return total <= 1e-7;
}

}  // namespace

QpResult solve_qp(const QpProblem& qp, const QpOptions& options) {
  return solve_qp(qp, qp.lower, qp.upper, options);
}

QpResult solve_qp(const QpProblem& qp, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                  const QpOptions& options) {
  qp.validate();
  const auto N = qp.size();
  if (lower.size() != N || upper.size() != N) throw Error(ErrorCode::validation, "QP bound size mismatch");
  QpResult res;
  res.x = Eigen::VectorXd::Zero(N);

  for (Eigen::Index j = 0; j < N; ++j)
    if (lower[j] > upper[j]) {
      res.status = QpStatus::infeasible;
      return res;
    }

  // Eliminate fixed variables.
  std::vector<int> map(static_cast<std::size_t>(N), -1);
  std::vector<Eigen::Index> free_vars;
  Eigen::VectorXd xfix = Eigen::VectorXd::Zero(N);
  for (Eigen::Index j = 0; j < N; ++j) {
    if (std::isfinite(lower[j]) && upper[j] - lower[j] <= 1e-12 * std::max(1.0, std::abs(lower[j]))) {
      xfix[j] = lower[j];
    } else {
      map[static_cast<std::size_t>(j)] = static_cast<int>(free_vars.size());
      free_vars.push_back(j);
    }
  }
  Reduced P;
  P.n = static_cast<int>(free_vars.size());
  P.H.resize(P.n, P.n);
  P.c.resize(P.n);
  const Eigen::VectorXd Hx = qp.H * xfix;
  for (int a = 0; a < P.n; ++a) {
    P.c[a] = qp.c[free_vars[static_cast<std::size_t>(a)]] + Hx[free_vars[static_cast<std::size_t>(a)]];
    for (int b = 0; b < P.n; ++b)
      P.H(a, b) = qp.H(free_vars[static_cast<std::size_t>(a)], free_vars[static_cast<std::size_t>(b)]);
  }
  const double feas_tol = 1e-9;
  auto reduce_rows = [&](const SparseRows& A, const Eigen::VectorXd& b, std::vector<Row>& rows,
                         std::vector<double>& rhs, bool equality) {
    for (Eigen::Index r = 0; r < A.rows(); ++r) {
      Row row;
      double fixed = 0.0;
      for (SparseRows::InnerIterator it(A, r); it; ++it) {
        const int k = map[static_cast<std::size_t>(it.col())];
        if (k < 0) fixed += it.value() * xfix[it.col()];
        else if (it.value() != 0.0) row.emplace_back(k, it.value());
      }
      const double rem = b[r] - fixed;
      if (row.empty()) {
        const bool ok = equality ? std::abs(rem) <= feas_tol * (1.0 + std::abs(b[r])) : rem >= -feas_tol * (1.0 + std::abs(b[r]));
        if (!ok) return false;
        continue;
      }
      rows.push_back(std::move(row));
      rhs.push_back(rem);
    }
    return true;
  };
  if (!reduce_rows(qp.A_in, qp.b_in, P.G, P.h, false) || !reduce_rows(qp.A_eq, qp.b_eq, P.E, P.f, true)) {
    res.status = QpStatus::infeasible;
    res.x = xfix;
    return res;
  }
  for (int a = 0; a < P.n; ++a) {
    const auto j = free_vars[static_cast<std::size_t>(a)];
    if (std::isfinite(lower[j])) {
      P.lo_idx.push_back(a);
      P.lo_val.push_back(lower[j]);
    }
    if (std::isfinite(upper[j])) {
      P.up_idx.push_back(a);
      P.up_val.push_back(upper[j]);
    }
  }

  IpmOutcome o;
  if (P.n > 0) {
    o = ipm(P, options);
  } else {
    o.status = QpStatus::optimal;
  }
  res.iterations = o.iterations;
  res.kkt_residual = o.residual;
  res.x = xfix;
  for (int a = 0; a < P.n; ++a) res.x[free_vars[static_cast<std::size_t>(a)]] = o.x[a];
  // Bounds are satisfied only to IPM accuracy; clip the tiny overshoot.
  res.x = res.x.cwiseMax(lower).cwiseMin(upper);
  res.status = o.status;
  if (o.status != QpStatus::optimal && options.detect_infeasibility && !phase_one_feasible(P, options))
    res.status = QpStatus::infeasible;
  res.objective = qp.objective(res.x);
  return res;
}

}  // namespace loadshift

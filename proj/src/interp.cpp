#include "loadshift/interp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "loadshift/errors.hpp"

namespace loadshift {

namespace {

double rbf_kernel(double x, double sigma) { return std::exp(-x * x / (2.0 * sigma * sigma)); }

std::size_t pl_interval(std::span<const double> offsets, double tau) {
  if (tau >= offsets.back()) return offsets.size() - 2;
  if (tau <= offsets.front()) return 0;
  auto it = std::upper_bound(offsets.begin(), offsets.end(), tau);
  return static_cast<std::size_t>(it - offsets.begin()) - 1;
}

}  // namespace

std::shared_ptr<const InterpBasis> InterpBasis::make(const InterpOptions& options,
                                                     const LocalGridTemplate& grid) {
  if (grid.size() < 2)
    throw Error(ErrorCode::validation, "interpolation needs at least two local nodes");
  if (!(options.ramp_width > 0.0))
    throw Error(ErrorCode::validation, "boundary ramp width must be positive");
  auto b = std::make_shared<InterpBasis>();
  b->method_ = options.method;
  b->offsets_.assign(grid.offsets().begin(), grid.offsets().end());
  b->ramp_ = options.ramp_width;
  if (options.method == InterpMethod::piecewise_linear) return b;

  const double median = grid.median_spacing();
  b->sigma_ = options.sigma > 0.0 ? options.sigma : 2.0 * median;
  if (b->sigma_ < kMinSigmaRatio * median) {
    std::ostringstream os;
    os << "rbf kernel width " << b->sigma_ << " h is below " << kMinSigmaRatio
       << "x the median local spacing " << median
       << " h; the interpolant is numerically degenerate between nodes";
    throw Error(ErrorCode::conditioning, os.str());
  }
  const auto n = static_cast<Eigen::Index>(b->offsets_.size());
  Eigen::MatrixXd gram(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      gram(i, j) = rbf_kernel(b->offsets_[i] - b->offsets_[j], b->sigma_);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  b->condition_ = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  if (!(b->condition_ <= kMaxGramCondition)) {
    std::size_t worst = 1;
    for (std::size_t i = 2; i < b->offsets_.size(); ++i)
      if (b->offsets_[i] - b->offsets_[i - 1] < b->offsets_[worst] - b->offsets_[worst - 1])
        worst = i;
    std::ostringstream os;
    os << "rbf Gram matrix condition estimate " << b->condition_ << " exceeds "
       << kMaxGramCondition << " (sigma " << b->sigma_ << " h); closest offsets "
       << b->offsets_[worst - 1] << " and " << b->offsets_[worst];
    throw Error(ErrorCode::conditioning, os.str());
  }
  b->gram_inverse_ = gram.ldlt().solve(Eigen::MatrixXd::Identity(n, n));
  return b;
}

void InterpBasis::core_weights(double tau, std::span<double> w, std::span<double> dw) const {
  const std::size_t n = offsets_.size();
  std::fill(w.begin(), w.end(), 0.0);
  std::fill(dw.begin(), dw.end(), 0.0);
  if (method_ == InterpMethod::piecewise_linear) {
    const std::size_t j = pl_interval(offsets_, tau);
    const double h = offsets_[j + 1] - offsets_[j];
    const double theta = (tau - offsets_[j]) / h;
    w[j] = 1.0 - theta;
    w[j + 1] = theta;
    dw[j] = -1.0 / h;
    dw[j + 1] = 1.0 / h;
    return;
  }
  Eigen::VectorXd k(static_cast<Eigen::Index>(n)), dk(static_cast<Eigen::Index>(n));
  const double inv_s2 = 1.0 / (sigma_ * sigma_);
  for (std::size_t m = 0; m < n; ++m) {
    const double x = tau - offsets_[m];
    const double kv = rbf_kernel(x, sigma_);
    k[static_cast<Eigen::Index>(m)] = kv;
    dk[static_cast<Eigen::Index>(m)] = -x * inv_s2 * kv;
  }
  const Eigen::VectorXd wv = gram_inverse_ * k;
  const Eigen::VectorXd dwv = gram_inverse_ * dk;
  for (std::size_t m = 0; m < n; ++m) {
    w[m] = wv[static_cast<Eigen::Index>(m)];
    dw[m] = dwv[static_cast<Eigen::Index>(m)];
  }
}

double InterpBasis::evaluate(double t_s, double t, std::span<const double> samples,
                             double* d_start, std::span<double> d_samples) const {
  const std::size_t n = offsets_.size();
  const double T = offsets_.back();
  const double tau = t - t_s;
  std::fill(d_samples.begin(), d_samples.end(), 0.0);
  if (d_start) *d_start = 0.0;
  if (tau < -ramp_ || tau > T + ramp_) return 0.0;

  // Ramp regions evaluate the core at the nearest support end.
  double anchor = tau, ramp = 1.0, dramp_dts = 0.0;
  const bool entry = tau < 0.0, exit = tau > T;
  if (entry) {
    anchor = 0.0;
    ramp = (tau + ramp_) / ramp_;
    dramp_dts = -1.0 / ramp_;
  } else if (exit) {
    anchor = T;
    ramp = (T + ramp_ - tau) / ramp_;
    dramp_dts = 1.0 / ramp_;
  }

  double wbuf[64], dwbuf[64];
  std::vector<double> wheap, dwheap;
  std::span<double> w, dw;
  if (n <= 64) {
    w = std::span<double>(wbuf, n);
    dw = std::span<double>(dwbuf, n);
  } else {
    wheap.resize(n);
    dwheap.resize(n);
    w = wheap;
    dw = dwheap;
  }
  double core = 0.0, dcore = 0.0;
  if (method_ == InterpMethod::rbf) {
    // Kernel expansion with alpha = K^{-1} y, accumulated in extended
    // precision: K is poorly conditioned at the default width and plain
    // double sums leave finite differences dominated by rounding.
    const double inv_s2 = 1.0 / (sigma_ * sigma_);
    long double acc = 0.0L, dacc = 0.0L;
    for (std::size_t m = 0; m < n; ++m) {
      long double alpha = 0.0L;
      for (std::size_t j = 0; j < n; ++j)
        alpha += static_cast<long double>(gram_inverse_(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(j))) *
                 samples[j];
      const double x = anchor - offsets_[m];
      const long double kv = rbf_kernel(x, sigma_) * alpha;
      acc += kv;
      dacc -= x * inv_s2 * kv;
    }
    core = static_cast<double>(acc);
    dcore = static_cast<double>(dacc);
    if (!d_samples.empty()) core_weights(anchor, w, dw);
  } else {
    core_weights(anchor, w, dw);
    for (std::size_t j = 0; j < n; ++j) {
      core += w[j] * samples[j];
      dcore += dw[j] * samples[j];
    }
  }
  double dclamp = 1.0;
  const double level = method_ == InterpMethod::rbf ? smooth_clamp(core, &dclamp) : core;

  if (entry || exit) {
    if (d_start) *d_start = level * dramp_dts;
    for (std::size_t j = 0; j < d_samples.size(); ++j) d_samples[j] = ramp * dclamp * w[j];
    return level * ramp;
  }
  if (d_start) *d_start = -dclamp * dcore;
  for (std::size_t j = 0; j < d_samples.size(); ++j) d_samples[j] = dclamp * w[j];
  return level;
}

bool InterpBasis::near_kink(double t_s, double t, std::span<const double> samples,
                            double h) const {
  const double tau = t - t_s;
  const double T = offsets_.back();
  const double margin = 2.0 * h + 1e-12;
  for (double k : {-ramp_, 0.0, T, T + ramp_})
    if (std::abs(tau - k) <= margin) return true;
  if (method_ == InterpMethod::piecewise_linear) {
    for (double o : offsets_)
      if (std::abs(tau - o) <= margin) return true;
    return false;
  }
  // rbf: the clamp blend switches at +-kClampWidth
  const double anchor = std::clamp(tau, 0.0, T);
  std::vector<double> w(size()), dw(size());
  core_weights(anchor, w, dw);
  double core = 0.0, slope = 0.0;
  for (std::size_t j = 0; j < size(); ++j) {
    core += w[j] * samples[j];
    slope += dw[j] * samples[j];
  }
  const double reach = std::abs(slope) * margin + 1e-12;
  return std::abs(core - kClampWidth) <= reach || std::abs(core + kClampWidth) <= reach;
}

Interpolant Interpolant::fit(const InterpOptions& options, const LocalGridTemplate& grid,
                             std::vector<double> samples) {
  return fit(InterpBasis::make(options, grid), std::move(samples));
}

Interpolant Interpolant::fit(std::shared_ptr<const InterpBasis> basis, std::vector<double> samples) {
  if (samples.size() != basis->size())
    throw Error(ErrorCode::validation, "interpolation needs one sample per local node (" +
                                           std::to_string(basis->size()) + " expected, got " +
                                           std::to_string(samples.size()) + ")");
  for (double s : samples)
    if (!std::isfinite(s)) throw Error(ErrorCode::numerical_domain, "non-finite interpolation sample");
  Interpolant f;
  f.basis_ = std::move(basis);
  f.samples_ = std::move(samples);
  if (f.basis_->method() == InterpMethod::rbf) {
    // alpha_j is the weight of node j's kernel: alpha = K^{-1} y.
    const std::size_t n = f.samples_.size();
    f.alpha_.assign(n, 0.0);
    const auto& offs = f.basis_->offsets();
    const auto m = static_cast<Eigen::Index>(n);
    Eigen::MatrixXd gram(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j)
        gram(i, j) = rbf_kernel(offs[i] - offs[j], f.basis_->sigma());
    const Eigen::Map<const Eigen::VectorXd> y(f.samples_.data(), m);
    const Eigen::VectorXd alpha = gram.ldlt().solve(y);
    for (std::size_t j = 0; j < n; ++j) f.alpha_[j] = alpha[static_cast<Eigen::Index>(j)];
  }
  return f;
}

double Interpolant::eval(double t_s, double t) const {
  return basis_->evaluate(t_s, t, samples_);
}

Interpolant::Gradient Interpolant::eval_grad(double t_s, double t) const {
  Gradient g;
  g.d_samples.assign(samples_.size(), 0.0);
  basis_->evaluate(t_s, t, samples_, &g.d_start, g.d_samples);
  return g;
}

}  // namespace loadshift

#pragma once

#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "loadshift/timegrid.hpp"

namespace loadshift {

enum class InterpMethod { piecewise_linear, rbf };

inline constexpr double kDefaultRampWidth = 0.005;  // h
inline constexpr double kClampWidth = 1e-3;         // kW
inline constexpr double kMaxGramCondition = 1e12;
// Kernels narrower than this fraction of the median node spacing collapse to
// isolated spikes between nodes; treated as a conditioning failure.
inline constexpr double kMinSigmaRatio = 0.05;

struct InterpOptions {
  InterpMethod method = InterpMethod::piecewise_linear;
  double sigma = 0.0;  // rbf width in h; 0 selects 2x the median local spacing
  double ramp_width = kDefaultRampWidth;
};

/// Sample-independent part of an interpolant: the local grid plus, for the
/// RBF kernel, the inverted Gram matrix. Pairwise offset distances do not
/// depend on the start time, so one basis serves every t_s.
class InterpBasis {
 public:
  static std::shared_ptr<const InterpBasis> make(const InterpOptions& options,
                                                 const LocalGridTemplate& grid);

  InterpMethod method() const { return method_; }
  std::size_t size() const { return offsets_.size(); }
  std::span<const double> offsets() const { return offsets_; }
  double duration() const { return offsets_.back(); }
  double sigma() const { return sigma_; }
  double ramp_width() const { return ramp_; }
  double gram_condition() const { return condition_; }

  /// Value at absolute time t of the profile started at t_s. When requested,
  /// also the exact partial derivatives w.r.t. t_s and every sample (at
  /// piecewise-linear kinks the right-hand derivative).
  double evaluate(double t_s, double t, std::span<const double> samples,
                  double* d_start = nullptr, std::span<double> d_samples = {}) const;

  /// Interpolation weights of the unclamped core at relative time tau and
  /// their tau-derivatives.
  void core_weights(double tau, std::span<double> w, std::span<double> dw) const;

  /// True if a central difference of half-width h around (t_s, t) may straddle
  /// a point where evaluate() is not differentiable.
  bool near_kink(double t_s, double t, std::span<const double> samples, double h) const;

 private:
  InterpMethod method_ = InterpMethod::piecewise_linear;
  std::vector<double> offsets_;
  double sigma_ = 0.0;
  double ramp_ = kDefaultRampWidth;
  double condition_ = 1.0;
  Eigen::MatrixXd gram_inverse_;
};

class Interpolant {
 public:
  static Interpolant fit(const InterpOptions& options, const LocalGridTemplate& grid,
                         std::vector<double> samples);
  static Interpolant fit(std::shared_ptr<const InterpBasis> basis, std::vector<double> samples);

  double eval(double t_s, double t) const;

  struct Gradient {
    double d_start = 0.0;             // kW/h
    std::vector<double> d_samples;    // dimensionless weights
  };
  Gradient eval_grad(double t_s, double t) const;

  const InterpBasis& basis() const { return *basis_; }
  std::span<const double> samples() const { return samples_; }
  /// Kernel coefficients alpha with K alpha = samples (rbf only; empty otherwise).
  std::span<const double> coefficients() const { return alpha_; }

 private:
  std::shared_ptr<const InterpBasis> basis_;
  std::vector<double> samples_;
  std::vector<double> alpha_;
};

/// Smoothed max(v, 0): identity for v >= kClampWidth, zero below -kClampWidth,
/// quadratic blend in between (C1).
inline double smooth_clamp(double v, double* dv = nullptr) {
  constexpr double s = kClampWidth;
  if (v >= s) { if (dv) *dv = 1.0; return v; }
  if (v <= -s) { if (dv) *dv = 0.0; return 0.0; }
  if (dv) *dv = (v + s) / (2.0 * s);
  return (v + s) * (v + s) / (4.0 * s);
}

}  // namespace loadshift

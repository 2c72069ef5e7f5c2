#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "loadshift/timegrid.hpp"

namespace loadshift {

/// Ideal battery. Positive power discharges (supplies the bus).
struct BatteryParams {
  double e_max = 0.0;  // kWh
  double p_lo = 0.0;   // kW, max charge rate (<= 0)
  double p_hi = 0.0;   // kW, max discharge rate (>= 0)

  void validate() const;
};

struct BatteryState {
  double energy = 0.0;  // kWh
  double time = 0.0;    // h
};

/// Node energies under piecewise-constant power on the grid intervals.
std::vector<double> propagate(double e0, std::span<const double> powers, const GlobalGrid& grid);

enum class BatteryQuantity { energy_low, energy_high, power_low, power_high };

struct BoundViolation {
  std::size_t index;
  BatteryQuantity quantity;
  double amount;
};

inline constexpr double kBatteryTolerance = 1e-8;

std::vector<BoundViolation> check_bounds(std::span<const double> energies,
                                         std::span<const double> powers,
                                         const BatteryParams& params,
                                         double tol = kBatteryTolerance);

}  // namespace loadshift

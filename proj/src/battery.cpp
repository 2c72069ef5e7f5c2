#include "loadshift/battery.hpp"

#include <cmath>

#include "loadshift/errors.hpp"

namespace loadshift {

void BatteryParams::validate() const {
  if (!(e_max > 0.0)) throw Error(ErrorCode::validation, "battery capacity must be positive");
  if (!(p_lo <= 0.0) || !(p_hi >= 0.0))
    throw Error(ErrorCode::validation, "battery rate bounds must satisfy p_lo <= 0 <= p_hi");
}

std::vector<double> propagate(double e0, std::span<const double> powers, const GlobalGrid& grid) {
  if (powers.size() != grid.interval_count())
    throw Error(ErrorCode::validation, "battery power count must equal the number of grid intervals");
  std::vector<double> e(grid.node_count());
  e[0] = e0;
  for (std::size_t k = 0; k < powers.size(); ++k) e[k + 1] = e[k] - powers[k] * grid.width(k);
  return e;
}

std::vector<BoundViolation> check_bounds(std::span<const double> energies,
                                         std::span<const double> powers,
                                         const BatteryParams& params, double tol) {
  std::vector<BoundViolation> out;
  for (std::size_t i = 0; i < energies.size(); ++i) {
    if (energies[i] < -tol) out.push_back({i, BatteryQuantity::energy_low, -energies[i]});
    if (energies[i] > params.e_max + tol)
      out.push_back({i, BatteryQuantity::energy_high, energies[i] - params.e_max});
  }
  for (std::size_t k = 0; k < powers.size(); ++k) {
    if (powers[k] < params.p_lo - tol)
      out.push_back({k, BatteryQuantity::power_low, params.p_lo - powers[k]});
    if (powers[k] > params.p_hi + tol)
      out.push_back({k, BatteryQuantity::power_high, powers[k] - params.p_hi});
  }
  return out;
}

}  // namespace loadshift

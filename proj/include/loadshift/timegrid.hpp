#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "loadshift/plan.hpp"

namespace loadshift {

struct Task;

/// Receding grid on which bus and battery constraints are evaluated.
class GlobalGrid {
 public:
  static GlobalGrid uniform(double t0, double te, double resolution);
  static GlobalGrid from_nodes(std::vector<double> nodes);

  std::span<const double> nodes() const { return nodes_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t interval_count() const { return nodes_.size() - 1; }
  double width(std::size_t k) const { return nodes_[k + 1] - nodes_[k]; }
  double start() const { return nodes_.front(); }
  double end() const { return nodes_.back(); }

 private:
  std::vector<double> nodes_;
};

inline GlobalGrid build_global_grid(double t0, double te, double resolution) {
  return GlobalGrid::uniform(t0, te, resolution);
}

// Closest admissible pair of local nodes.
inline constexpr double kMinLocalGap = 1e-4;

/// Relative-time node template for one task, translated by its start time.
class LocalGridTemplate {
 public:
  LocalGridTemplate() = default;
  static LocalGridTemplate make(std::vector<double> offsets);
  static LocalGridTemplate uniform(double duration, double resolution);

  std::span<const double> offsets() const { return offsets_; }
  std::size_t size() const { return offsets_.size(); }
  double duration() const { return offsets_.empty() ? 0.0 : offsets_.back(); }
  double median_spacing() const;

  bool operator==(const LocalGridTemplate&) const = default;

 private:
  std::vector<double> offsets_;
};

std::vector<double> instantiate_local_grid(const LocalGridTemplate& tmpl, double start);

/// Latest time any pending task can still be running.
///
/// Each chain contributes its request time plus the sum of (delay bound +
/// duration) over its members. Members listed in `fixed_starts` contribute
/// their known start instead. Clamped to at least t0 + resolution.
double horizon_end(std::span<const Task> tasks, double t0, double resolution,
                   const std::map<TaskId, double>& fixed_starts = {});

}  // namespace loadshift

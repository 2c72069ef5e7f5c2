#include "loadshift/timegrid.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "loadshift/errors.hpp"
#include "loadshift/profiles.hpp"

namespace loadshift {

GlobalGrid GlobalGrid::uniform(double t0, double te, double resolution) {
  if (!(resolution > 0.0))
    throw Error(ErrorCode::validation, "global grid resolution must be positive");
  if (!(te > t0)) {
    std::ostringstream os;
    os << "empty horizon: end " << te << " h is not after start " << t0 << " h";
    throw Error(ErrorCode::empty_horizon, os.str());
  }
  // Intervals shorter than this relative slack are merged into their neighbour
  // so float round-off never produces a sliver at the end of the grid.
  const double span = te - t0;
  const auto full = static_cast<std::size_t>(std::floor(span / resolution + 1e-9));
  GlobalGrid g;
  g.nodes_.reserve(full + 2);
  for (std::size_t k = 0; k <= full; ++k) g.nodes_.push_back(t0 + static_cast<double>(k) * resolution);
  if (te - g.nodes_.back() > 1e-9 * std::max(1.0, std::abs(te)))
    g.nodes_.push_back(te);
  else
    g.nodes_.back() = te;
  if (g.nodes_.size() < 2) g.nodes_ = {t0, te};
  return g;
}

GlobalGrid GlobalGrid::from_nodes(std::vector<double> nodes) {
  if (nodes.size() < 2)
    throw Error(ErrorCode::empty_horizon, "global grid needs at least two nodes");
  for (std::size_t i = 1; i < nodes.size(); ++i)
    if (!(nodes[i] > nodes[i - 1]))
      throw Error(ErrorCode::validation, "global grid nodes must be strictly increasing");
  GlobalGrid g;
  g.nodes_ = std::move(nodes);
  return g;
}

LocalGridTemplate LocalGridTemplate::make(std::vector<double> offsets) {
  if (offsets.size() < 2)
    throw Error(ErrorCode::validation, "local grid needs at least two nodes");
  if (offsets.front() != 0.0)
    throw Error(ErrorCode::validation, "local grid must start at offset 0");
  for (std::size_t i = 1; i < offsets.size(); ++i) {
    const double gap = offsets[i] - offsets[i - 1];
    if (!(gap > 0.0))
      throw Error(ErrorCode::validation, "local grid offsets must be strictly increasing");
    if (gap < kMinLocalGap) {
      std::ostringstream os;
      os << "local grid offsets " << offsets[i - 1] << " and " << offsets[i]
         << " are closer than the minimum gap " << kMinLocalGap << " h";
      throw Error(ErrorCode::validation, os.str());
    }
  }
  LocalGridTemplate t;
  t.offsets_ = std::move(offsets);
  return t;
}

LocalGridTemplate LocalGridTemplate::uniform(double duration, double resolution) {
  if (!(duration > 0.0) || !(resolution > 0.0))
    throw Error(ErrorCode::validation, "uniform local grid needs positive duration and resolution");
  const auto g = GlobalGrid::uniform(0.0, duration, resolution);
  return make(std::vector<double>(g.nodes().begin(), g.nodes().end()));
}

double LocalGridTemplate::median_spacing() const {
  std::vector<double> gaps;
  for (std::size_t i = 1; i < offsets_.size(); ++i) gaps.push_back(offsets_[i] - offsets_[i - 1]);
  std::sort(gaps.begin(), gaps.end());
  const std::size_t n = gaps.size();
  return n % 2 ? gaps[n / 2] : 0.5 * (gaps[n / 2 - 1] + gaps[n / 2]);
}

std::vector<double> instantiate_local_grid(const LocalGridTemplate& tmpl, double start) {
  std::vector<double> out;
  out.reserve(tmpl.size());
  for (double o : tmpl.offsets()) out.push_back(start + o);
  return out;
}

double horizon_end(std::span<const Task> tasks, double t0, double resolution,
                   const std::map<TaskId, double>& fixed_starts) {
  const double floor_end = t0 + resolution;
  std::map<TaskId, double> memo;
  std::function<double(const Task&, int)> worst_finish = [&](const Task& t, int depth) -> double {
    if (depth > static_cast<int>(tasks.size()))
      throw Error(ErrorCode::validation, "predecessor cycle through task '" + t.id + "'");
    if (auto it = memo.find(t.id); it != memo.end()) return it->second;
    double finish;
    if (auto f = fixed_starts.find(t.id); f != fixed_starts.end()) {
      finish = f->second + t.duration();
    } else {
      double base;
      const Task* pred = t.predecessor ? find_task(tasks, *t.predecessor) : nullptr;
      if (pred && !t.request_time)
        base = worst_finish(*pred, depth + 1);
      else if (t.request_time)
        base = *t.request_time;
      else
        throw Error(ErrorCode::validation,
                    "task '" + t.id + "' has neither a request time nor a pending predecessor");
      finish = base + t.delay_bound + t.duration();
    }
    memo[t.id] = finish;
    return finish;
  };
  double end = floor_end;
  for (const auto& t : tasks) end = std::max(end, worst_finish(t, 0));
  return end;
}

}  // namespace loadshift

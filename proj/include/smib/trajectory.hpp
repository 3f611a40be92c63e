#pragma once

#include <cstddef>
#include <vector>

#include "smib/model.hpp"

namespace smib {

/// Sampled solution. `storage` is empty unless storage recording was
/// requested; otherwise it is aligned with `times`.
struct Trajectory {
  std::vector<double> times;
  std::vector<PhysicalState> states;
  std::vector<double> storage;

  std::size_t size() const { return times.size(); }
  bool has_storage() const { return !storage.empty(); }
};

}  // namespace smib

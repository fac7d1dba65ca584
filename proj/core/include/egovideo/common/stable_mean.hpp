#pragma once

#include <algorithm>
#include <vector>

namespace egovideo {

// Mean that is exactly x for k copies of x and independent of input order:
// values are sorted, then accumulated as offsets from the smallest.
inline double order_free_mean(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double base = values.front();
  double offset = 0.0;
  for (double v : values) offset += v - base;
  return base + offset / static_cast<double>(values.size());
}

}  // namespace egovideo

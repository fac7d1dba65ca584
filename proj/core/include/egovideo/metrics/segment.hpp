#pragma once

#include <optional>

namespace egovideo {

struct TemporalSegment {
  double start_s = 0.0;
  double end_s = 0.0;
  double score = 0.0;
  std::optional<int> label;

  double length() const { return end_s - start_s; }
  bool valid() const { return 0.0 <= start_s && start_s <= end_s; }
};

}  // namespace egovideo

#pragma once

#include <span>

namespace protonet {

struct AccuracySummary {
  double mean = 0.0;
  double ci95 = 0.0;  // 1.96 * sample std / sqrt(n); zero when n < 2
  std::size_t count = 0;
};

AccuracySummary summarize(std::span<const double> per_episode);

}  // namespace protonet

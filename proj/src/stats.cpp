#include "protonet/stats.hpp"

#include <cmath>

namespace protonet {

AccuracySummary summarize(std::span<const double> per_episode) {
  AccuracySummary s;
  s.count = per_episode.size();
  if (s.count == 0) return s;
  for (double a : per_episode) s.mean += a;
  s.mean /= static_cast<double>(s.count);
  if (s.count < 2) return s;
  double ss = 0.0;
  for (double a : per_episode) ss += (a - s.mean) * (a - s.mean);
  const double sd = std::sqrt(ss / static_cast<double>(s.count - 1));
  s.ci95 = 1.96 * sd / std::sqrt(static_cast<double>(s.count));
  return s;
}

}  // namespace protonet

#include "dire/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace dire {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels, const char* what) {
  if (scores.size() != labels.size())
    throw std::invalid_argument(std::string(what) + ": scores and labels differ in length");
  if (scores.empty()) throw std::invalid_argument(std::string(what) + ": empty input");
  for (int y : labels)
    if (y != 0 && y != 1) throw std::invalid_argument(std::string(what) + ": labels must be 0 or 1");
}

}  // namespace

double accuracy(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_inputs(scores, labels, "accuracy");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if ((scores[i] >= threshold ? 1 : 0) == labels[i]) ++hits;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(scores.size());
}

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels, "average_precision");
  const auto positives = std::count(labels.begin(), labels.end(), 1);
  if (positives == 0) throw std::invalid_argument("average_precision: no positive labels");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double ap = 0.0;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (labels[order[k]] != 1) continue;
    ++tp;
    ap += static_cast<double>(tp) / static_cast<double>(k + 1);
  }
  return 100.0 * ap / static_cast<double>(positives);
}

}  // namespace dire

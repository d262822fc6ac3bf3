#pragma once

#include <span>

namespace dire {

/// Percent of items where (score >= threshold) equals label.
double accuracy(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

/// Percent. Items ranked by descending score with a stable sort (input order
/// breaks ties); AP = sum over positive positions k of (R_k - R_{k-1}) P_k.
double average_precision(std::span<const double> scores, std::span<const int> labels);

}  // namespace dire

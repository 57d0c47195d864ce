#pragma once

#include <vector>

#include "mltn/tensor.hpp"

namespace mltn {

// Probability that a uniformly random positive outscores a uniformly random
// negative, with ties counted one half (rank / Mann-Whitney formulation).
// Throws DegenerateLabels when either class is absent.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

// Fraction of rows whose argmax matches the label.
double accuracy(const Tensor& logits, const std::vector<int>& labels);

}  // namespace mltn

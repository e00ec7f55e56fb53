#pragma once

#include "lf/metrics.hpp"

#include <string>
#include <vector>

namespace lf {

/// Heatmap JSON behind the similarity figures: {metric, mode, n_layers,
/// distances} with null entries for unevaluated pairs, symmetric, zero
/// diagonal.
std::string emit_heatmap(const SimilarityReport& report);

/// Entry point behind the lfc binary. Returns 0 on success, 2 on validation
/// errors (including usage problems), 3 on container format errors.
int run_cli(const std::vector<std::string>& args);

} // namespace lf

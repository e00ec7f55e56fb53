#pragma once

#include "lf/metrics.hpp"
#include "lf/net.hpp"

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace lf {

enum class FusionStrategy { mean, freeze, mix };

std::string strategy_name(FusionStrategy s);
FusionStrategy strategy_from_name(const std::string& name);

struct FusionPair {
    std::size_t i = 0; // i < j, indices into the source model
    std::size_t j = 0;
    double distance = 0.0;
    double gamma = 0.0;      // row-mean Jensen-Shannon divergence, in [0, ln 2]
    std::size_t frozen = 0;  // which of i/j freezes under the freeze strategy
};

struct FusionPlan {
    std::vector<FusionPair> pairs;
    FusionStrategy strategy = FusionStrategy::mean;
    double fraction = 0.0;
    double mix_probability = 0.5;
    std::uint64_t seed = 0;

    std::string to_json() const;
};

struct FusedModel {
    NetworkModel model;
    std::map<std::size_t, std::set<std::size_t>> provenance; // survivor -> sources
};

/// Equalize two flattened weight vectors: the longer one loses its
/// smallest-magnitude entries (earliest index first on ties) until the
/// lengths match; survivor order is preserved.
std::pair<std::vector<double>, std::vector<double>> align_unequal(
    const std::vector<double>& a, const std::vector<double>& b);

/// Align two layer summaries to a common shape (the smaller layer's), by
/// magnitude-trimming the larger one and re-summarizing.
std::pair<LayerSummary, LayerSummary> align_summaries(const LayerSummary& a,
                                                      const LayerSummary& b);

/// Mean over rows of the Jensen-Shannon divergence between the row-softmaxed
/// weight matrices; this is the gamma of the fused backprop rule.
double js_gamma(const Matrix& wi, const Matrix& wj);

/// True when the pair can be fused: same activation, the removed layer is
/// square (so the chain recomposes) and the survivor's shape is the smaller.
bool fusable_pair(const NetworkModel& model, std::size_t i, std::size_t j,
                  bool exclude_endpoints);

struct SelectOptions {
    bool exclude_endpoints = false;
    bool compatible_only = true;   // needs report summaries + a model-shaped report
    FusionStrategy strategy = FusionStrategy::mean;
    double mix_probability = 0.5;
    std::uint64_t seed = 0;
};

/// Top k = round(L * fraction) smallest-distance pairs, ties broken by
/// (i, j); gamma and the frozen side are filled per pair.
FusionPlan select_top_k(const SimilarityReport& report, double fraction,
                        const SelectOptions& opts = {});

FusedModel fuse_mean(const NetworkModel& model, const FusionPlan& plan);
FusedModel fuse_freeze(const NetworkModel& model, const FusionPlan& plan);
FusedModel fuse_mix(const NetworkModel& model, const FusionPlan& plan);

/// Collapse every connected component of the plan into one averaged layer at
/// the component's lowest index. fuse_mean and fuse_freeze finalization both
/// reduce to this.
FusedModel finalize_fusion(const NetworkModel& model, const FusionPlan& plan);

/// Set every member of each component to the component average (the state
/// retraining starts from under the mean strategy).
NetworkModel apply_mean_tie(const NetworkModel& model, const FusionPlan& plan);

/// Tied-group constraints for retraining under the mean strategy.
FusionConstraints mean_constraints(const NetworkModel& model, const FusionPlan& plan);

/// Freeze-link constraints (frozen layer fixed, partner takes the
/// gamma-combined gradient). Pairs must be disjoint.
FusionConstraints freeze_constraints(const NetworkModel& model, const FusionPlan& plan);

} // namespace lf

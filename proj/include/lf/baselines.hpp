#pragma once

#include "lf/matrix.hpp"
#include "lf/net.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lf {

enum class PruneScope { layer, global };

std::string prune_scope_name(PruneScope s);
PruneScope prune_scope_from_name(const std::string& name);

struct PruneMask {
    std::vector<Matrix> masks; // 1 = keep, 0 = pruned; one per layer
    PruneScope scope = PruneScope::layer;
    double fraction = 0.0;

    std::size_t zero_count() const;
};

struct PruneResult {
    NetworkModel model;
    PruneMask mask;
};

/// Zero the requested fraction of smallest-magnitude weights, per layer or by
/// a single global threshold. Biases are untouched; surviving weights are
/// bitwise unchanged.
PruneResult prune(const NetworkModel& model, PruneScope scope, double fraction);

struct LayerCodebook {
    std::vector<double> centroids;
    std::vector<std::size_t> assignments; // one per weight, row-major
};

struct Codebook {
    std::vector<LayerCodebook> layers;
    double fraction = 0.0;
};

struct QuantizeResult {
    NetworkModel model;
    Codebook codebook;
};

/// Lloyd k-means over each layer's flattened weights with k-means++ seeding;
/// k = max(1, round(fraction * layer output width)). The objective is
/// asserted non-increasing every iteration.
QuantizeResult kmeans_quantize(const NetworkModel& model, double fraction,
                               std::uint64_t seed, std::size_t max_iters = 100);

struct LowRankLayer {
    Matrix left;  // rows x k
    Matrix right; // k x cols
    std::size_t rank = 0;
    double reconstruction_error = 0.0; // Frobenius
};

/// Randomized range-finder factorization (gaussian test matrix, QR, exact SVD
/// of the small projected matrix, truncation to k).
LowRankLayer low_rank_factor(const Matrix& w, std::size_t k, std::uint64_t seed,
                             std::size_t oversample = 8);

/// Replace each layer whose rank budget k = max(1, round(rank_fraction *
/// min_dim)) is below min_dim with the factor pair (left, identity) ->
/// (right, bias, activation). Processed bottom to top. When factored_layers
/// is given it receives the source-layer indices that were factored.
NetworkModel truncated_svd_compress(const NetworkModel& model, double rank_fraction,
                                    std::uint64_t seed, std::size_t oversample = 8,
                                    std::vector<std::size_t>* factored_layers = nullptr);

struct DaeLayers {
    Layer encoder;      // n x h, relu
    Matrix decoder;     // h x n, no bias
    double final_mse = 0.0;
};

/// Train a 1-hidden-layer denoising autoencoder on activation rows:
/// reconstruct z from relu((z + eps) w1 + a) w2 under MSE.
DaeLayers train_dae(const Matrix& activations, std::size_t hidden, std::size_t epochs,
                    double noise_std, std::uint64_t seed, double lr = 0.05);

struct DaeResult {
    NetworkModel model;
    double output_drift_mse = 0.0; // teacher vs student outputs on the dataset
};

/// Student rollout: bottom to top, train a DAE on each layer's input
/// activations under the partially replaced model, then splice in
/// encoder -> (decoder folded into the original layer).
DaeResult dae_rollout(const NetworkModel& model, const Dataset& data,
                      double hidden_fraction, std::size_t epochs, double noise_std,
                      std::uint64_t seed, double lr = 0.05);

} // namespace lf

#pragma once

#include "lf/matrix.hpp"
#include "lf/net.hpp"

#include <optional>
#include <string>
#include <vector>

namespace lf {

/// Weight-space snapshot of one layer: vectorized weights, scalar mean,
/// column covariance and row-softmaxed weights. Covariance is absent for
/// single-row weight matrices (degenerate for covariance-based metrics).
struct LayerSummary {
    int layer_index = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    Activation activation = Activation::identity;
    std::vector<double> flat_weights;
    double mean = 0.0;
    std::optional<SymmetricPsd> cov;
    Matrix softmax_rows;

    Matrix weights_matrix() const;
    const SymmetricPsd& covariance() const; // throws on degenerate layers
};

LayerSummary summarize_matrix(const Matrix& w, int layer_index, Activation activation,
                              std::size_t block_cap = 128);
LayerSummary summarize_layer(const NetworkModel& model, std::size_t index,
                             std::size_t block_cap = 128);

enum class MetricKind {
    euclidean,
    cos_cov,
    kl_cov,
    skl_cov,
    bures_ws2,
    exact_ws,
    airm,
    lerm,
    jbld,
    cca
};

std::string metric_name(MetricKind k);
MetricKind metric_from_name(const std::string& name);

/// L2 distance between the flattened weights (lengths must already match).
double euclidean_distance(const LayerSummary& a, const LayerSummary& b);

/// Cosine similarity between covariances: tr(Sa Sb) / (|Sa|_F |Sb|_F).
/// In [0,1] for PSD inputs; ranking uses 1 - value.
double cos_cov(const LayerSummary& a, const LayerSummary& b);

/// Zero-mean gaussian KL between covariances, including the -d term so the
/// self-divergence vanishes. Asymmetric; skl_cov symmetrizes.
double kl_cov(const LayerSummary& a, const LayerSummary& b);
double skl_cov(const LayerSummary& a, const LayerSummary& b);

/// 2-Wasserstein between gaussian fits (Bures metric):
/// sqrt((mu_a-mu_b)^2 + tr Sa + tr Sb - 2 tr[(sqrt(Sa) Sb sqrt(Sa))^{1/2}]).
double bures_ws2(const LayerSummary& a, const LayerSummary& b);

struct Assignment {
    std::vector<std::size_t> permutation; // source index -> target index
    double total_cost = 0.0;
};

inline constexpr std::size_t kHungarianCap = 512;

/// Exact minimum-cost assignment (Jonker-Volgenant style shortest augmenting
/// paths). Square cost matrices up to 512x512.
Assignment hungarian(const Matrix& cost);

/// Empirical Wasserstein between two scalar multisets via the assignment
/// solver; when normalized, each point carries mass 1/d so the value
/// converges to the distributional distance.
double empirical_wasserstein(const std::vector<double>& a, const std::vector<double>& b,
                             double p, bool normalized);

/// Exact WS distance over the flattened row-softmaxed weights:
/// cost_ij = |sa_i - sb_j|^p, solved exactly, returned as total^(1/p).
double exact_ws(const LayerSummary& a, const LayerSummary& b, double p = 2.0);

double airm(const LayerSummary& a, const LayerSummary& b);
double lerm(const LayerSummary& a, const LayerSummary& b);
double jbld(const LayerSummary& a, const LayerSummary& b);

struct CcaResult {
    double rho = 0.0;
    std::vector<double> projection_a;
    std::vector<double> projection_b;
    double ridge = 0.0;
};

/// Largest canonical correlation of the two weight matrices under ridge
/// regularization; columns wider than block_cap are scored block-wise and
/// averaged.
CcaResult cca_rho(const Matrix& a, const Matrix& b, double ridge = 1e-4,
                  std::size_t block_cap = 128);
CcaResult cca_rho(const LayerSummary& a, const LayerSummary& b, double ridge = 1e-4,
                  std::size_t block_cap = 128);

enum class RankMode { global, adjacent };

std::string rank_mode_name(RankMode m);
RankMode rank_mode_from_name(const std::string& name);

/// Distance used for ranking: similarities (cos_cov, cca) become 1 - value,
/// the kl metric ranks by its symmetrized variant, everything else is used
/// directly. Unequal layers are aligned first.
double ranked_distance(const LayerSummary& a, const LayerSummary& b, MetricKind metric,
                       double cca_ridge = 1e-4);

struct SimilarityReport {
    MetricKind metric = MetricKind::euclidean;
    RankMode mode = RankMode::global;
    std::size_t n_layers = 0;
    Matrix distances; // NaN = unevaluated, zero diagonal
    std::vector<LayerSummary> summaries;

    struct Entry {
        std::size_t i;
        std::size_t j;
        double distance;
    };
    std::vector<Entry> entries() const;

    std::string to_csv() const;
};

SimilarityReport pairwise_distances(const NetworkModel& model, MetricKind metric,
                                    RankMode mode, std::size_t block_cap = 128,
                                    double cca_ridge = 1e-4);

/// Rebuild a report (without summaries) from its CSV form.
SimilarityReport report_from_csv(const std::string& csv_text);

} // namespace lf

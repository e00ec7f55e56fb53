#pragma once

#include "lf/baselines.hpp"
#include "lf/fusion.hpp"
#include "lf/metrics.hpp"
#include "lf/net.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lf {

enum class ScheduleMode { uniform, exponential };

std::string schedule_mode_name(ScheduleMode m);
ScheduleMode schedule_mode_from_name(const std::string& name);

struct CompressionSchedule {
    double total_fraction = 0.0;
    std::size_t steps = 0;
    ScheduleMode mode = ScheduleMode::uniform;
    std::vector<double> fractions;          // per step, sums to total_fraction
    std::vector<std::size_t> epochs_per_step; // non-decreasing in exponential mode
};

/// uniform: equal fractions and epochs. exponential: fraction_t ~ 2^-t and
/// epochs_t ~ 2^t (compress more early, retrain more late); epoch rounding
/// remainder goes to the last step.
CompressionSchedule make_schedule(double total_fraction, std::size_t steps,
                                  ScheduleMode mode, std::size_t total_epochs);

enum class CompressorKind {
    fuse_mean,
    fuse_freeze,
    fuse_mix,
    prune_layer,
    prune_global,
    quantize,
    svd
};

std::string compressor_name(CompressorKind k);
CompressorKind compressor_from_name(const std::string& name);

struct TrainReportRow {
    std::size_t epoch = 0; // global epoch counter, 0 = initial state
    std::size_t step = 0;  // compression step, 0 before the first
    double fraction_cum = 0.0;
    std::size_t params = 0; // logical parameter count (tied weights count once)
    double loss = 0.0;
    double accuracy = 0.0;
};

struct TrainReport {
    std::vector<TrainReportRow> rows;
    std::vector<std::string> notes;
    CompressionSchedule schedule;

    std::string to_csv() const;
    std::string to_json() const;
};

struct RetrainOptions {
    TrainOptions train;
    MetricKind metric = MetricKind::bures_ws2;
    RankMode mode = RankMode::global;
    bool exclude_endpoints = true;
    double mix_probability = 0.5;
    std::size_t block_cap = 128;
    double cca_ridge = 1e-4;
    std::size_t kmeans_iters = 100;
    std::size_t svd_oversample = 8;
};

struct CompressRetrainResult {
    NetworkModel model;
    TrainReport report;
};

/// Iterative compress-retrain. Zeroing/decomposing compressors follow
/// scheme (1): compress, retrain, repeat (prune masks stay applied so zeros
/// survive retraining; svd refactors the retrained factors each step).
/// Fusion follows scheme (2): constraints are applied, retraining runs with
/// them active, and pairs are averaged into single layers at the end.
CompressRetrainResult compress_retrain(const NetworkModel& model, const Dataset& data,
                                       CompressorKind compressor,
                                       const CompressionSchedule& schedule,
                                       std::uint64_t seed,
                                       const RetrainOptions& opts = {});

} // namespace lf

#include "lf/pipeline.hpp"

#include "lf/errors.hpp"
#include "lf/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

namespace lf {

std::string schedule_mode_name(ScheduleMode m) {
    return m == ScheduleMode::uniform ? "uniform" : "exponential";
}

ScheduleMode schedule_mode_from_name(const std::string& name) {
    if (name == "uniform") return ScheduleMode::uniform;
    if (name == "exponential") return ScheduleMode::exponential;
    throw ValidationError("unknown schedule mode: " + name);
}

CompressionSchedule make_schedule(double total_fraction, std::size_t steps,
                                  ScheduleMode mode, std::size_t total_epochs) {
    if (steps < 1) throw ValidationError("schedule needs at least 1 step");
    if (!(total_fraction > 0.0) || total_fraction >= 1.0)
        throw ValidationError("total fraction must be in (0, 1)");

    CompressionSchedule s;
    s.total_fraction = total_fraction;
    s.steps = steps;
    s.mode = mode;
    s.fractions.resize(steps);
    s.epochs_per_step.resize(steps);

    if (mode == ScheduleMode::uniform) {
        for (std::size_t t = 0; t < steps; ++t)
            s.fractions[t] = total_fraction / static_cast<double>(steps);
        const std::size_t each = total_epochs / steps;
        for (std::size_t t = 0; t < steps; ++t) s.epochs_per_step[t] = each;
        s.epochs_per_step[steps - 1] += total_epochs - each * steps;
        return s;
    }

    // fractions ~ 2^-t, epochs ~ 2^t
    double wsum = 0.0;
    for (std::size_t t = 0; t < steps; ++t) wsum += std::pow(2.0, -static_cast<double>(t));
    for (std::size_t t = 0; t < steps; ++t)
        s.fractions[t] = total_fraction * std::pow(2.0, -static_cast<double>(t)) / wsum;

    double esum = 0.0;
    for (std::size_t t = 0; t < steps; ++t) esum += std::pow(2.0, static_cast<double>(t));
    std::size_t assigned = 0;
    for (std::size_t t = 0; t + 1 < steps; ++t) {
        s.epochs_per_step[t] = static_cast<std::size_t>(std::floor(
            static_cast<double>(total_epochs) * std::pow(2.0, static_cast<double>(t)) / esum));
        assigned += s.epochs_per_step[t];
    }
    s.epochs_per_step[steps - 1] = total_epochs - assigned;
    return s;
}

std::string compressor_name(CompressorKind k) {
    switch (k) {
        case CompressorKind::fuse_mean: return "fuse-mean";
        case CompressorKind::fuse_freeze: return "fuse-freeze";
        case CompressorKind::fuse_mix: return "fuse-mix";
        case CompressorKind::prune_layer: return "prune-layer";
        case CompressorKind::prune_global: return "prune-global";
        case CompressorKind::quantize: return "quantize";
        case CompressorKind::svd: return "svd";
    }
    return "fuse-mean";
}

CompressorKind compressor_from_name(const std::string& name) {
    for (CompressorKind k :
         {CompressorKind::fuse_mean, CompressorKind::fuse_freeze, CompressorKind::fuse_mix,
          CompressorKind::prune_layer, CompressorKind::prune_global, CompressorKind::quantize,
          CompressorKind::svd})
        if (compressor_name(k) == name) return k;
    throw ValidationError("unknown compressor: " + name);
}

std::string TrainReport::to_csv() const {
    std::string out = "epoch,step,fraction_cum,params,loss,accuracy\n";
    char buf[160];
    for (const TrainReportRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%zu,%zu,%.17g,%zu,%.17g,%.17g\n", r.epoch, r.step,
                      r.fraction_cum, r.params, r.loss, r.accuracy);
        out += buf;
    }
    return out;
}

std::string TrainReport::to_json() const {
    nlohmann::json j;
    j["schedule"] = {{"mode", schedule_mode_name(schedule.mode)},
                     {"total_fraction", schedule.total_fraction},
                     {"steps", schedule.steps},
                     {"fractions", schedule.fractions},
                     {"epochs_per_step", schedule.epochs_per_step}};
    j["notes"] = notes;
    j["rows"] = nlohmann::json::array();
    for (const TrainReportRow& r : rows)
        j["rows"].push_back({{"epoch", r.epoch},
                             {"step", r.step},
                             {"fraction_cum", r.fraction_cum},
                             {"params", r.params},
                             {"loss", r.loss},
                             {"accuracy", r.accuracy}});
    return j.dump(2);
}

namespace {

bool is_fusion(CompressorKind k) {
    return k == CompressorKind::fuse_mean || k == CompressorKind::fuse_freeze ||
           k == CompressorKind::fuse_mix;
}

std::size_t nonzero_params(const NetworkModel& model) {
    std::size_t n = 0;
    for (const Layer& l : model.layers) {
        for (double v : l.weights.data)
            if (v != 0.0) ++n;
        n += l.bias.size();
    }
    return n;
}

// parameter count with tied groups deduplicated and quantized layers counted
// as codebook entries
std::size_t logical_params(const NetworkModel& model, CompressorKind kind,
                           const FusionConstraints& constraints,
                           const std::vector<std::size_t>& codebook_sizes) {
    if (kind == CompressorKind::prune_layer || kind == CompressorKind::prune_global)
        return nonzero_params(model);
    if (kind == CompressorKind::quantize && !codebook_sizes.empty()) {
        std::size_t n = 0;
        for (std::size_t l = 0; l < model.layers.size(); ++l)
            n += codebook_sizes[l] + model.layers[l].bias.size();
        return n;
    }
    std::size_t n = model.param_count();
    for (const auto& group : constraints.tied_groups) {
        const Layer& rep = model.layers[group.front()];
        n -= (group.size() - 1) * (rep.weights.size() + rep.bias.size());
    }
    return n;
}

struct Components {
    std::vector<std::size_t> parent;
    void reset(std::size_t n) {
        parent.resize(n);
        std::iota(parent.begin(), parent.end(), std::size_t{0});
    }
    std::size_t find(std::size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    void unite(std::size_t a, std::size_t b) { parent[find(b)] = find(a); }
};

struct FusionState {
    FusionPlan plan; // accumulated pairs over all steps (mean/freeze)
    Components comps;
    std::set<std::size_t> frozen_used; // freeze links must stay disjoint
    std::size_t pairs_done = 0;
    FusionConstraints constraints;
};

// Select `need` new pairs on the current model. A layer may join several
// pairs (components are averaged as one group); a pair is skipped only when
// both layers already share a component, or, under the freeze strategy, when
// either layer is already linked.
std::size_t extend_fusion(FusionState& st, NetworkModel& model, CompressorKind kind,
                          std::size_t need, std::uint64_t seed, const RetrainOptions& opts) {
    if (need == 0) return 0;
    SimilarityReport report =
        pairwise_distances(model, opts.metric, opts.mode, opts.block_cap, opts.cca_ridge);
    std::vector<SimilarityReport::Entry> entries = report.entries();
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        if (a.distance != b.distance) return a.distance < b.distance;
        if (a.i != b.i) return a.i < b.i;
        return a.j < b.j;
    });

    // mix collapses per step, so its component tracking is per step too
    Components step_comps;
    step_comps.reset(model.layers.size());
    Components& comps = kind == CompressorKind::fuse_mix ? step_comps : st.comps;
    if (comps.parent.size() != model.layers.size()) comps.reset(model.layers.size());

    const double mid = static_cast<double>(model.layers.size()) / 2.0;
    std::size_t selected = 0;
    std::vector<FusionPair> fresh;
    for (const auto& e : entries) {
        if (selected >= need) break;
        if (comps.find(e.i) == comps.find(e.j)) continue;
        if (kind == CompressorKind::fuse_freeze &&
            (st.frozen_used.count(e.i) || st.frozen_used.count(e.j)))
            continue;
        if (!fusable_pair(model, e.i, e.j, opts.exclude_endpoints)) continue;
        if (!same_shape(model.layers[e.i].weights, model.layers[e.j].weights))
            continue; // retraining constraints need identical shapes
        FusionPair p;
        p.i = e.i;
        p.j = e.j;
        p.distance = e.distance;
        p.gamma = js_gamma(model.layers[e.i].weights, model.layers[e.j].weights);
        const double di = std::abs(static_cast<double>(e.i) - mid);
        const double dj = std::abs(static_cast<double>(e.j) - mid);
        p.frozen = (dj < di) ? e.j : (di < dj ? e.i : std::min(e.i, e.j));
        fresh.push_back(p);
        comps.unite(e.i, e.j);
        if (kind == CompressorKind::fuse_freeze) {
            st.frozen_used.insert(e.i);
            st.frozen_used.insert(e.j);
        }
        ++selected;
    }
    if (fresh.empty()) return 0;

    if (kind == CompressorKind::fuse_mix) {
        FusionPlan step_plan;
        step_plan.strategy = FusionStrategy::mix;
        step_plan.mix_probability = opts.mix_probability;
        step_plan.seed = seed;
        step_plan.pairs = fresh;
        model = fuse_mix(model, step_plan).model;
        st.comps.reset(model.layers.size()); // indices shifted
        st.pairs_done += fresh.size();
        return fresh.size();
    }

    for (const FusionPair& p : fresh) st.plan.pairs.push_back(p);
    st.pairs_done += fresh.size();
    if (kind == CompressorKind::fuse_mean) {
        FusionPlan tie_plan = st.plan;
        tie_plan.strategy = FusionStrategy::mean;
        model = apply_mean_tie(model, tie_plan);
        st.constraints = mean_constraints(model, tie_plan);
    } else {
        FusionPlan freeze_plan = st.plan;
        freeze_plan.strategy = FusionStrategy::freeze;
        st.constraints = freeze_constraints(model, freeze_plan);
    }
    return fresh.size();
}

} // namespace

CompressRetrainResult compress_retrain(const NetworkModel& input, const Dataset& data,
                                       CompressorKind compressor,
                                       const CompressionSchedule& schedule,
                                       std::uint64_t seed, const RetrainOptions& opts) {
    input.validate();
    if (schedule.fractions.size() != schedule.steps ||
        schedule.epochs_per_step.size() != schedule.steps)
        throw ValidationError("schedule fractions/epochs do not match step count");

    CompressRetrainResult result;
    result.report.schedule = schedule;
    NetworkModel model = input;
    const std::size_t layers_orig = input.layers.size();

    FusionState fusion;
    FusionConstraints constraints;
    std::vector<std::size_t> codebook_sizes;
    std::vector<char> left_factor_at; // svd bookkeeping: model positions holding left factors
    std::size_t epoch = 0;
    double cum = 0.0;

    auto record = [&](std::size_t step) {
        const FusionConstraints& active = is_fusion(compressor) ? fusion.constraints
                                                                : constraints;
        result.report.rows.push_back({epoch, step, cum,
                                      logical_params(model, compressor, active,
                                                     codebook_sizes),
                                      batch_loss(model, data), accuracy(model, data)});
    };

    record(0);

    for (std::size_t t = 0; t < schedule.steps; ++t) {
        cum += schedule.fractions[t];

        switch (compressor) {
            case CompressorKind::prune_layer:
            case CompressorKind::prune_global: {
                // re-prune the current weights at the cumulative fraction; the
                // old mask's zeros have the smallest magnitudes (exactly 0),
                // so they stay pruned and the mask only grows
                const PruneScope scope = compressor == CompressorKind::prune_layer
                                             ? PruneScope::layer
                                             : PruneScope::global;
                PruneResult pr = prune(model, scope, cum);
                model = std::move(pr.model);
                constraints.weight_masks = std::move(pr.mask.masks);
                break;
            }
            case CompressorKind::quantize: {
                QuantizeResult qr =
                    kmeans_quantize(model, 1.0 - cum, mix_key(seed, t), opts.kmeans_iters);
                model = std::move(qr.model);
                codebook_sizes.clear();
                for (const LayerCodebook& cb : qr.codebook.layers)
                    codebook_sizes.push_back(cb.centroids.size());
                break;
            }
            case CompressorKind::svd: {
                // collapse factor pairs back to dense (x L + bl) R + br =
                // x (LR) + (bl R + br), then refactor the retrained effective
                // weights at the tighter retained rank
                NetworkModel dense;
                dense.loss = model.loss;
                for (std::size_t l = 0; l < model.layers.size(); ++l) {
                    if (l < left_factor_at.size() && left_factor_at[l]) {
                        const Layer& left = model.layers[l];
                        const Layer& right = model.layers[l + 1];
                        Layer merged;
                        merged.weights = matmul(left.weights, right.weights);
                        merged.bias = right.bias;
                        for (std::size_t c = 0; c < merged.bias.size(); ++c)
                            for (std::size_t r = 0; r < left.bias.size(); ++r)
                                merged.bias[c] += left.bias[r] * right.weights(r, c);
                        merged.activation = right.activation;
                        dense.layers.push_back(std::move(merged));
                        ++l;
                    } else {
                        dense.layers.push_back(model.layers[l]);
                    }
                }
                std::vector<std::size_t> factored;
                model = truncated_svd_compress(dense, 1.0 - cum, mix_key(seed, t),
                                               opts.svd_oversample, &factored);
                left_factor_at.assign(model.layers.size(), 0);
                std::size_t shift = 0;
                for (std::size_t src : factored) left_factor_at[src + shift++] = 1;
                break;
            }
            case CompressorKind::fuse_mean:
            case CompressorKind::fuse_freeze:
            case CompressorKind::fuse_mix: {
                const std::size_t target = static_cast<std::size_t>(
                    std::llround(static_cast<double>(layers_orig) * cum));
                const std::size_t need =
                    target > fusion.pairs_done ? target - fusion.pairs_done : 0;
                const std::size_t got =
                    extend_fusion(fusion, model, compressor, need, mix_key(seed, t), opts);
                if (got < need)
                    result.report.notes.push_back(
                        "fusion exhausted at step " + std::to_string(t + 1) + ": wanted " +
                        std::to_string(need) + " more pairs, found " + std::to_string(got));
                break;
            }
        }

        record(t + 1);

        const FusionConstraints& active =
            is_fusion(compressor) ? fusion.constraints : constraints;
        for (std::size_t e = 0; e < schedule.epochs_per_step[t]; ++e) {
            TrainOptions per_epoch = opts.train;
            per_epoch.shuffle_seed = mix_key(opts.train.shuffle_seed, epoch);
            train(model, data, 1, per_epoch, active);
            ++epoch;
            record(t + 1);
        }
    }

    // finalize fusion: average each component into a single layer
    if ((compressor == CompressorKind::fuse_mean || compressor == CompressorKind::fuse_freeze) &&
        !fusion.plan.pairs.empty()) {
        fusion.plan.strategy = compressor == CompressorKind::fuse_mean ? FusionStrategy::mean
                                                                       : FusionStrategy::freeze;
        model = finalize_fusion(model, fusion.plan).model;
        fusion.constraints = {};
        record(schedule.steps);
    }

    result.model = std::move(model);
    return result;
}

} // namespace lf

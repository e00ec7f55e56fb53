#include "lf/fusion.hpp"

#include "lf/errors.hpp"
#include "lf/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lf {

std::string strategy_name(FusionStrategy s) {
    switch (s) {
        case FusionStrategy::mean: return "mean";
        case FusionStrategy::freeze: return "freeze";
        case FusionStrategy::mix: return "mix";
    }
    return "mean";
}

FusionStrategy strategy_from_name(const std::string& name) {
    if (name == "mean") return FusionStrategy::mean;
    if (name == "freeze") return FusionStrategy::freeze;
    if (name == "mix") return FusionStrategy::mix;
    throw ValidationError("unknown fusion strategy: " + name);
}

std::string FusionPlan::to_json() const {
    nlohmann::json j;
    j["strategy"] = strategy_name(strategy);
    j["fraction"] = fraction;
    j["seed"] = seed;
    j["pairs"] = nlohmann::json::array();
    for (const FusionPair& p : pairs) {
        j["pairs"].push_back({{"i", p.i},
                              {"j", p.j},
                              {"distance", p.distance},
                              {"gamma", p.gamma},
                              {"frozen", p.frozen}});
    }
    return j.dump(2);
}

std::pair<std::vector<double>, std::vector<double>> align_unequal(
    const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() == b.size()) return {a, b};

    const bool a_longer = a.size() > b.size();
    const std::vector<double>& longer = a_longer ? a : b;
    const std::vector<double>& shorter = a_longer ? b : a;
    const std::size_t excess = longer.size() - shorter.size();

    std::vector<std::size_t> order(longer.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        const double ax = std::abs(longer[x]);
        const double ay = std::abs(longer[y]);
        return ax != ay ? ax < ay : x < y;
    });
    std::vector<char> drop(longer.size(), 0);
    for (std::size_t k = 0; k < excess; ++k) drop[order[k]] = 1;

    std::vector<double> trimmed;
    trimmed.reserve(shorter.size());
    for (std::size_t i = 0; i < longer.size(); ++i)
        if (!drop[i]) trimmed.push_back(longer[i]);

    return a_longer ? std::make_pair(std::move(trimmed), b)
                    : std::make_pair(a, std::move(trimmed));
}

std::pair<LayerSummary, LayerSummary> align_summaries(const LayerSummary& a,
                                                      const LayerSummary& b) {
    if (a.rows == b.rows && a.cols == b.cols) return {a, b};

    // target shape: fewer weights wins, then lexicographically smaller shape
    auto key = [](const LayerSummary& s) {
        return std::make_tuple(s.flat_weights.size(), s.rows, s.cols);
    };
    const bool keep_a = key(a) <= key(b);
    const LayerSummary& keep = keep_a ? a : b;
    const LayerSummary& trim = keep_a ? b : a;

    auto [x, y] = align_unequal(keep.flat_weights, trim.flat_weights);
    (void)x;
    const Matrix reshaped(keep.rows, keep.cols, std::move(y));
    LayerSummary trimmed =
        summarize_matrix(reshaped, trim.layer_index, trim.activation);
    return keep_a ? std::make_pair(a, std::move(trimmed))
                  : std::make_pair(std::move(trimmed), b);
}

double js_gamma(const Matrix& wi, const Matrix& wj) {
    if (!same_shape(wi, wj))
        throw ValidationError("js_gamma requires equal shapes (align first)");
    const Matrix pi = row_softmax(wi);
    const Matrix pj = row_softmax(wj);
    double acc = 0.0;
    for (std::size_t r = 0; r < pi.rows; ++r) {
        double jsd = 0.0;
        for (std::size_t c = 0; c < pi.cols; ++c) {
            const double p = pi(r, c);
            const double q = pj(r, c);
            const double m = 0.5 * (p + q);
            if (p > 0.0) jsd += 0.5 * p * std::log(p / m);
            if (q > 0.0) jsd += 0.5 * q * std::log(q / m);
        }
        acc += jsd;
    }
    return acc / static_cast<double>(pi.rows);
}

bool fusable_pair(const NetworkModel& model, std::size_t i, std::size_t j,
                  bool exclude_endpoints) {
    const std::size_t n = model.layers.size();
    if (i >= j || j >= n) return false;
    if (exclude_endpoints && (i == 0 || j + 1 == n)) return false;
    const Layer& a = model.layers[i];
    const Layer& b = model.layers[j];
    if (a.activation != b.activation) return false;
    // the survivor sits at i and keeps its shape, so i must be the smaller
    // layer; the removed layer must be square for the chain to recompose
    if (a.weights.size() > b.weights.size()) return false;
    if (b.weights.rows != b.weights.cols) return false;
    return true;
}

namespace {

struct UnionFind {
    std::vector<std::size_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) {
        std::iota(parent.begin(), parent.end(), std::size_t{0});
    }
    std::size_t find(std::size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (a > b) std::swap(a, b);
        parent[b] = a; // root at the lowest index
    }
};

std::vector<std::vector<std::size_t>> components_of(const FusionPlan& plan,
                                                    std::size_t n_layers) {
    UnionFind uf(n_layers);
    for (const FusionPair& p : plan.pairs) {
        if (p.j >= n_layers) throw ValidationError("fusion pair index out of range");
        uf.unite(p.i, p.j);
    }
    std::map<std::size_t, std::vector<std::size_t>> groups;
    for (const FusionPair& p : plan.pairs) {
        groups[uf.find(p.i)];
    }
    for (std::size_t l = 0; l < n_layers; ++l) {
        const std::size_t root = uf.find(l);
        auto it = groups.find(root);
        if (it != groups.end()) it->second.push_back(l);
    }
    std::vector<std::vector<std::size_t>> out;
    for (auto& [root, members] : groups)
        if (members.size() >= 2) out.push_back(std::move(members));
    return out;
}

void check_pair_compatibility(const NetworkModel& model, const FusionPlan& plan) {
    for (const FusionPair& p : plan.pairs) {
        if (p.i >= p.j || p.j >= model.layers.size())
            throw ValidationError("invalid fusion pair (" + std::to_string(p.i) + "," +
                                  std::to_string(p.j) + ")");
        if (model.layers[p.i].activation != model.layers[p.j].activation)
            throw ValidationError("incompatible activation tags in fusion pair (" +
                                  std::to_string(p.i) + "," + std::to_string(p.j) + ")");
    }
}

// Average a component's layers into the shape of the survivor (the lowest
// index). Larger members are magnitude-trimmed onto the survivor's shape.
Layer average_component(const NetworkModel& model,
                        const std::vector<std::size_t>& members) {
    const Layer& keeper = model.layers[members.front()];
    const std::size_t wlen = keeper.weights.size();

    for (std::size_t idx : members) {
        const Layer& l = model.layers[idx];
        if (l.weights.size() < wlen)
            throw ValidationError("fusion survivor must be the smallest layer of its group");
        if (idx != members.front() && l.weights.rows != l.weights.cols &&
            (l.weights.rows != keeper.weights.rows || l.weights.cols != keeper.weights.cols))
            throw ValidationError("removed fusion layer must be square");
    }

    Layer fused;
    fused.activation = keeper.activation;
    fused.weights = Matrix(keeper.weights.rows, keeper.weights.cols);
    fused.bias.assign(keeper.bias.size(), 0.0);
    for (std::size_t idx : members) {
        const Layer& l = model.layers[idx];
        auto [kw, lw] = align_unequal(keeper.weights.data, l.weights.data);
        (void)kw;
        for (std::size_t k = 0; k < wlen; ++k) fused.weights.data[k] += lw[k];
        auto [kb, lb] = align_unequal(keeper.bias, l.bias);
        (void)kb;
        for (std::size_t k = 0; k < fused.bias.size(); ++k) fused.bias[k] += lb[k];
    }
    const double inv = 1.0 / static_cast<double>(members.size());
    for (double& v : fused.weights.data) v *= inv;
    for (double& v : fused.bias) v *= inv;
    return fused;
}

// check that a removed-layer set keeps the chain composable; broken chains
// are also caught by the final validate(), this just gives a clearer message
void check_removable(const NetworkModel& model,
                     const std::vector<std::size_t>& members) {
    for (std::size_t m = 1; m < members.size(); ++m) {
        const Matrix& w = model.layers[members[m]].weights;
        if (w.rows != w.cols)
            throw ValidationError("removed fusion layer " + std::to_string(members[m]) +
                                  " is not square");
    }
}

FusedModel collapse(const NetworkModel& model,
                    const std::vector<std::vector<std::size_t>>& comps,
                    std::vector<Layer> replacement_layers) {
    std::vector<char> removed(model.layers.size(), 0);
    std::vector<const Layer*> at(model.layers.size(), nullptr);
    for (std::size_t l = 0; l < model.layers.size(); ++l) at[l] = &model.layers[l];

    FusedModel out;
    for (std::size_t c = 0; c < comps.size(); ++c) {
        const std::vector<std::size_t>& members = comps[c];
        at[members.front()] = &replacement_layers[c];
        out.provenance[members.front()] =
            std::set<std::size_t>(members.begin(), members.end());
        for (std::size_t m = 1; m < members.size(); ++m) removed[members[m]] = 1;
    }

    out.model.loss = model.loss;
    for (std::size_t l = 0; l < model.layers.size(); ++l)
        if (!removed[l]) out.model.layers.push_back(*at[l]);
    out.model.validate();

    // re-key provenance to surviving positions
    std::map<std::size_t, std::set<std::size_t>> rekeyed;
    std::size_t new_index = 0;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        if (removed[l]) continue;
        auto it = out.provenance.find(l);
        if (it != out.provenance.end()) rekeyed[new_index] = it->second;
        ++new_index;
    }
    out.provenance = std::move(rekeyed);
    return out;
}

} // namespace

namespace {

// summary-level variant of fusable_pair for plans built from reports
bool fusable_summaries(const LayerSummary& a, const LayerSummary& b) {
    if (a.activation != b.activation) return false;
    if (a.flat_weights.size() > b.flat_weights.size()) return false;
    return b.rows == b.cols;
}

} // namespace

FusionPlan select_top_k(const SimilarityReport& report, double fraction,
                        const SelectOptions& opts) {
    if (!(fraction > 0.0) || fraction > 1.0)
        throw ValidationError("fusion fraction must be in (0, 1]");
    std::vector<SimilarityReport::Entry> entries = report.entries();
    if (entries.empty()) throw ValidationError("nothing to rank: empty similarity report");

    if (opts.exclude_endpoints) {
        std::vector<SimilarityReport::Entry> kept;
        for (const auto& e : entries)
            if (e.i > 0 && e.j + 1 < report.n_layers) kept.push_back(e);
        entries = std::move(kept);
    }
    if (opts.compatible_only && !report.summaries.empty()) {
        std::vector<SimilarityReport::Entry> kept;
        for (const auto& e : entries)
            if (fusable_summaries(report.summaries[e.i], report.summaries[e.j]))
                kept.push_back(e);
        entries = std::move(kept);
    }
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        if (a.distance != b.distance) return a.distance < b.distance;
        if (a.i != b.i) return a.i < b.i;
        return a.j < b.j;
    });

    const std::size_t k = static_cast<std::size_t>(
        std::llround(static_cast<double>(report.n_layers) * fraction));

    FusionPlan plan;
    plan.strategy = opts.strategy;
    plan.fraction = fraction;
    plan.mix_probability = opts.mix_probability;
    plan.seed = opts.seed;

    const double mid = static_cast<double>(report.n_layers) / 2.0;
    for (const auto& e : entries) {
        if (plan.pairs.size() >= k) break;
        FusionPair p;
        p.i = e.i;
        p.j = e.j;
        p.distance = e.distance;
        if (!report.summaries.empty()) {
            auto [sa, sb] = align_summaries(report.summaries[e.i], report.summaries[e.j]);
            p.gamma = js_gamma(sa.weights_matrix(), sb.weights_matrix());
        }
        const double di = std::abs(static_cast<double>(e.i) - mid);
        const double dj = std::abs(static_cast<double>(e.j) - mid);
        p.frozen = (dj < di) ? e.j : (di < dj ? e.i : std::min(e.i, e.j));
        plan.pairs.push_back(p);
    }
    return plan;
}

FusedModel finalize_fusion(const NetworkModel& model, const FusionPlan& plan) {
    if (plan.pairs.empty()) {
        FusedModel out;
        out.model = model;
        return out;
    }
    check_pair_compatibility(model, plan);
    const auto comps = components_of(plan, model.layers.size());
    std::vector<Layer> fused;
    fused.reserve(comps.size());
    for (const auto& members : comps) {
        check_removable(model, members);
        fused.push_back(average_component(model, members));
    }
    return collapse(model, comps, std::move(fused));
}

FusedModel fuse_mean(const NetworkModel& model, const FusionPlan& plan) {
    return finalize_fusion(model, plan);
}

FusedModel fuse_freeze(const NetworkModel& model, const FusionPlan& plan) {
    // with zero retraining, freezing then averaging is exactly the mean fuse
    return finalize_fusion(model, plan);
}

FusedModel fuse_mix(const NetworkModel& model, const FusionPlan& plan) {
    if (plan.pairs.empty()) {
        FusedModel out;
        out.model = model;
        return out;
    }
    check_pair_compatibility(model, plan);
    for (const FusionPair& p : plan.pairs) {
        if (!same_shape(model.layers[p.i].weights, model.layers[p.j].weights))
            throw ValidationError("mix fusion requires equal layer shapes");
    }

    const auto comps = components_of(plan, model.layers.size());
    std::vector<Layer> mixed;
    mixed.reserve(comps.size());
    for (const auto& members : comps) {
        check_removable(model, members);
        // fold partners into the survivor in ascending order; each fold keys
        // its row mask by (seed, partner index, row) so masks are
        // order-independent and reproducible
        Layer fused = model.layers[members.front()];
        for (std::size_t m = 1; m < members.size(); ++m) {
            const Layer& partner = model.layers[members[m]];
            for (std::size_t r = 0; r < fused.weights.rows; ++r) {
                const bool take_first =
                    keyed_uniform(plan.seed, members[m], r) < plan.mix_probability;
                if (!take_first)
                    for (std::size_t c = 0; c < fused.weights.cols; ++c)
                        fused.weights(r, c) = partner.weights(r, c);
            }
        }
        // bias terms are averaged across the whole group
        std::fill(fused.bias.begin(), fused.bias.end(), 0.0);
        for (std::size_t idx : members)
            for (std::size_t c = 0; c < fused.bias.size(); ++c)
                fused.bias[c] += model.layers[idx].bias[c];
        const double inv = 1.0 / static_cast<double>(members.size());
        for (double& v : fused.bias) v *= inv;
        mixed.push_back(std::move(fused));
    }
    return collapse(model, comps, std::move(mixed));
}

NetworkModel apply_mean_tie(const NetworkModel& model, const FusionPlan& plan) {
    if (plan.pairs.empty()) return model;
    check_pair_compatibility(model, plan);
    NetworkModel out = model;
    for (const auto& members : components_of(plan, model.layers.size())) {
        const Layer avg = average_component(model, members);
        for (std::size_t idx : members) {
            if (!same_shape(model.layers[idx].weights, avg.weights))
                throw ValidationError("mean tie requires equal shapes within a group");
            out.layers[idx] = avg;
        }
    }
    return out;
}

FusionConstraints mean_constraints(const NetworkModel& model, const FusionPlan& plan) {
    FusionConstraints c;
    for (const auto& members : components_of(plan, model.layers.size()))
        c.tied_groups.push_back(members);
    return c;
}

FusionConstraints freeze_constraints(const NetworkModel& model, const FusionPlan& plan) {
    check_pair_compatibility(model, plan);
    FusionConstraints c;
    std::set<std::size_t> used;
    for (const FusionPair& p : plan.pairs) {
        if (used.count(p.i) || used.count(p.j))
            throw ValidationError("freeze constraints require disjoint pairs");
        used.insert(p.i);
        used.insert(p.j);
        if (!same_shape(model.layers[p.i].weights, model.layers[p.j].weights))
            throw ValidationError("freeze fusion requires equal layer shapes");
        const std::size_t frozen = (p.frozen == p.i || p.frozen == p.j) ? p.frozen : p.j;
        const std::size_t trainable = frozen == p.i ? p.j : p.i;
        c.freeze_links.push_back({frozen, trainable, p.gamma});
    }
    return c;
}

} // namespace lf

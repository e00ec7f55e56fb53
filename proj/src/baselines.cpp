#include "lf/baselines.hpp"

#include "lf/errors.hpp"
#include "lf/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lf {

std::string prune_scope_name(PruneScope s) {
    return s == PruneScope::layer ? "layer" : "global";
}

PruneScope prune_scope_from_name(const std::string& name) {
    if (name == "layer") return PruneScope::layer;
    if (name == "global") return PruneScope::global;
    throw ValidationError("unknown prune scope: " + name);
}

std::size_t PruneMask::zero_count() const {
    std::size_t n = 0;
    for (const Matrix& m : masks)
        for (double v : m.data)
            if (v == 0.0) ++n;
    return n;
}

PruneResult prune(const NetworkModel& model, PruneScope scope, double fraction) {
    if (fraction < 0.0 || fraction >= 1.0)
        throw ValidationError("prune fraction must be in [0, 1)");

    PruneResult out;
    out.model = model;
    out.mask.scope = scope;
    out.mask.fraction = fraction;
    out.mask.masks.reserve(model.layers.size());
    for (const Layer& l : model.layers) {
        Matrix m(l.weights.rows, l.weights.cols);
        std::fill(m.data.begin(), m.data.end(), 1.0);
        out.mask.masks.push_back(std::move(m));
    }

    if (scope == PruneScope::layer) {
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            const std::vector<double>& w = model.layers[l].weights.data;
            const std::size_t z =
                static_cast<std::size_t>(std::llround(fraction * static_cast<double>(w.size())));
            if (z == 0) continue;
            std::vector<std::size_t> order(w.size());
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
                const double ax = std::abs(w[x]);
                const double ay = std::abs(w[y]);
                return ax != ay ? ax < ay : x < y;
            });
            for (std::size_t k = 0; k < z; ++k) {
                out.mask.masks[l].data[order[k]] = 0.0;
                out.model.layers[l].weights.data[order[k]] = 0.0;
            }
        }
        return out;
    }

    // global: one magnitude threshold across all layers
    struct Ref {
        double mag;
        std::size_t layer;
        std::size_t idx;
    };
    std::vector<Ref> refs;
    for (std::size_t l = 0; l < model.layers.size(); ++l)
        for (std::size_t i = 0; i < model.layers[l].weights.data.size(); ++i)
            refs.push_back({std::abs(model.layers[l].weights.data[i]), l, i});
    const std::size_t z =
        static_cast<std::size_t>(std::llround(fraction * static_cast<double>(refs.size())));
    std::sort(refs.begin(), refs.end(), [](const Ref& a, const Ref& b) {
        if (a.mag != b.mag) return a.mag < b.mag;
        if (a.layer != b.layer) return a.layer < b.layer;
        return a.idx < b.idx;
    });
    for (std::size_t k = 0; k < z; ++k) {
        out.mask.masks[refs[k].layer].data[refs[k].idx] = 0.0;
        out.model.layers[refs[k].layer].weights.data[refs[k].idx] = 0.0;
    }
    return out;
}

namespace {

// k-means++ seeding over scalars; re-seeds from the farthest point if a draw
// lands on an already-chosen value
std::vector<double> seed_centroids(const std::vector<double>& values, std::size_t k,
                                   Rng& rng) {
    std::vector<double> centroids;
    centroids.reserve(k);
    centroids.push_back(values[rng.index(values.size())]);
    std::vector<double> d2(values.size(), 0.0);
    while (centroids.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) {
            double best = std::abs(values[i] - centroids[0]);
            for (std::size_t c = 1; c < centroids.size(); ++c)
                best = std::min(best, std::abs(values[i] - centroids[c]));
            d2[i] = best * best;
            total += d2[i];
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            pick = values.size() - 1;
            for (std::size_t i = 0; i < values.size(); ++i) {
                acc += d2[i];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            // all mass at the centroids already; any point works
            pick = rng.index(values.size());
        }
        centroids.push_back(values[pick]);
    }
    return centroids;
}

struct LloydOutcome {
    std::vector<double> centroids;
    std::vector<std::size_t> assignments;
};

LloydOutcome lloyd_scalar(const std::vector<double>& values, std::size_t k, Rng& rng,
                          std::size_t max_iters) {
    LloydOutcome out;
    out.centroids = seed_centroids(values, k, rng);
    out.assignments.assign(values.size(), 0);

    double prev_objective = std::numeric_limits<double>::infinity();
    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        bool changed = false;
        double objective = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) {
            std::size_t best = 0;
            double bd = std::abs(values[i] - out.centroids[0]);
            for (std::size_t c = 1; c < k; ++c) {
                const double d = std::abs(values[i] - out.centroids[c]);
                if (d < bd) {
                    bd = d;
                    best = c;
                }
            }
            if (out.assignments[i] != best) {
                out.assignments[i] = best;
                changed = true;
            }
            objective += bd * bd;
        }
        if (objective > prev_objective + 1e-12 * (1.0 + prev_objective))
            throw Error("k-means objective increased; Lloyd invariant violated");
        prev_objective = objective;
        if (!changed && iter > 0) break;

        std::vector<double> sums(k, 0.0);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < values.size(); ++i) {
            sums[out.assignments[i]] += values[i];
            counts[out.assignments[i]] += 1;
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                out.centroids[c] = sums[c] / static_cast<double>(counts[c]);
            } else {
                // empty cluster: re-seed from the farthest point
                std::size_t far = 0;
                double fd = -1.0;
                for (std::size_t i = 0; i < values.size(); ++i) {
                    const double d = std::abs(values[i] - out.centroids[out.assignments[i]]);
                    if (d > fd) {
                        fd = d;
                        far = i;
                    }
                }
                out.centroids[c] = values[far];
            }
        }
    }
    // final assignment pass so values map to the latest centroids
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::size_t best = 0;
        double bd = std::abs(values[i] - out.centroids[0]);
        for (std::size_t c = 1; c < k; ++c) {
            const double d = std::abs(values[i] - out.centroids[c]);
            if (d < bd) {
                bd = d;
                best = c;
            }
        }
        out.assignments[i] = best;
    }
    return out;
}

} // namespace

QuantizeResult kmeans_quantize(const NetworkModel& model, double fraction,
                               std::uint64_t seed, std::size_t max_iters) {
    if (!(fraction > 0.0) || fraction > 1.0)
        throw ValidationError("quantize fraction must be in (0, 1]");

    QuantizeResult out;
    out.model = model;
    out.codebook.fraction = fraction;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const Layer& layer = model.layers[l];
        const std::size_t width = layer.weights.cols;
        const std::size_t k = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(width))));
        Rng rng(mix_key(seed, l));
        LloydOutcome lo = lloyd_scalar(layer.weights.data, k, rng, max_iters);
        for (std::size_t i = 0; i < layer.weights.data.size(); ++i)
            out.model.layers[l].weights.data[i] = lo.centroids[lo.assignments[i]];
        out.codebook.layers.push_back({std::move(lo.centroids), std::move(lo.assignments)});
    }
    return out;
}

LowRankLayer low_rank_factor(const Matrix& w, std::size_t k, std::uint64_t seed,
                             std::size_t oversample) {
    const std::size_t min_dim = std::min(w.rows, w.cols);
    if (k == 0 || k > min_dim)
        throw ValidationError("low rank k must be in [1, min(rows, cols)]");

    const std::size_t width = std::min(k + oversample, w.cols);
    Rng rng(seed);
    Matrix omega(w.cols, width);
    for (double& v : omega.data) v = rng.gaussian();

    const Matrix sample = matmul(w, omega);
    const QrResult qrs = qr(sample);
    const Matrix b = matmul(transpose(qrs.q), w); // q' x cols, small

    // exact SVD of b through the gram matrix b b^T
    const Matrix bbt = matmul(b, transpose(b));
    Matrix symm(bbt.rows, bbt.cols);
    for (std::size_t i = 0; i < bbt.rows; ++i)
        for (std::size_t j = 0; j < bbt.cols; ++j)
            symm(i, j) = 0.5 * (bbt(i, j) + bbt(j, i));
    EigenDecomposition eig = sym_eig(SymmetricPsd(std::move(symm)));

    const std::size_t kk = std::min(k, eig.eigenvalues.size());
    std::vector<double> sigma(kk, 0.0);
    for (std::size_t i = 0; i < kk; ++i)
        sigma[i] = std::sqrt(std::max(eig.eigenvalues[i], 0.0));
    const double sigma_max = sigma.empty() ? 0.0 : sigma[0];

    Matrix u_top(b.rows, kk);
    for (std::size_t i = 0; i < b.rows; ++i)
        for (std::size_t j = 0; j < kk; ++j) u_top(i, j) = eig.eigenvectors(i, j);

    // right factor rows: v_i^T = u_i^T b / sigma_i
    Matrix right(kk, w.cols);
    for (std::size_t i = 0; i < kk; ++i) {
        if (sigma[i] <= 1e-12 * std::max(sigma_max, 1.0)) continue; // null direction
        for (std::size_t c = 0; c < w.cols; ++c) {
            double acc = 0.0;
            for (std::size_t r = 0; r < b.rows; ++r) acc += u_top(r, i) * b(r, c);
            right(i, c) = acc / sigma[i];
        }
    }

    // left factor: q u_top diag(sigma)
    Matrix qu = matmul(qrs.q, u_top);
    for (std::size_t r = 0; r < qu.rows; ++r)
        for (std::size_t i = 0; i < kk; ++i) qu(r, i) *= sigma[i];

    LowRankLayer out;
    out.left = std::move(qu);
    out.right = std::move(right);
    out.rank = kk;
    out.reconstruction_error = frobenius_norm(subtract(w, matmul(out.left, out.right)));
    return out;
}

NetworkModel truncated_svd_compress(const NetworkModel& model, double rank_fraction,
                                    std::uint64_t seed, std::size_t oversample,
                                    std::vector<std::size_t>* factored_layers) {
    if (!(rank_fraction > 0.0) || rank_fraction >= 1.0)
        throw ValidationError("rank fraction must be in (0, 1)");

    NetworkModel out;
    out.loss = model.loss;
    if (factored_layers) factored_layers->clear();
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const Layer& layer = model.layers[l];
        const std::size_t rows = layer.weights.rows;
        const std::size_t cols = layer.weights.cols;
        const std::size_t min_dim = std::min(rows, cols);
        const std::size_t k = std::max<std::size_t>(
            1,
            static_cast<std::size_t>(std::llround(rank_fraction * static_cast<double>(min_dim))));
        // factor only when the pair actually shrinks the layer
        const bool shrinks = k * (rows + cols) + k + cols < rows * cols + cols;
        if (k >= min_dim || !shrinks) {
            out.layers.push_back(layer);
            continue;
        }
        if (factored_layers) factored_layers->push_back(l);
        LowRankLayer f = low_rank_factor(layer.weights, k, mix_key(seed, l), oversample);
        Layer left;
        left.weights = std::move(f.left);
        left.bias.assign(f.rank, 0.0);
        left.activation = Activation::identity;
        Layer right;
        right.weights = std::move(f.right);
        right.bias = layer.bias;
        right.activation = layer.activation;
        out.layers.push_back(std::move(left));
        out.layers.push_back(std::move(right));
    }
    out.validate();
    return out;
}

DaeLayers train_dae(const Matrix& activations, std::size_t hidden, std::size_t epochs,
                    double noise_std, std::uint64_t seed, double lr) {
    if (hidden == 0) throw ValidationError("dae hidden width rounds to 0");
    if (activations.rows == 0) throw ValidationError("dae needs a nonempty dataset");
    const std::size_t n = activations.cols;

    NetworkModel dae;
    dae.loss = LossKind::mse;
    Rng rng(mix_key(seed, 0xDAE));
    Layer enc;
    enc.weights = Matrix(n, hidden);
    {
        const double s = 1.0 / std::sqrt(static_cast<double>(n));
        for (double& v : enc.weights.data) v = s * rng.gaussian();
    }
    // positive bias init keeps the relu units alive at the start
    enc.bias.assign(hidden, 1.0);
    enc.activation = Activation::relu;
    Layer dec;
    dec.weights = Matrix(hidden, n);
    {
        const double s = 1.0 / std::sqrt(static_cast<double>(hidden));
        for (double& v : dec.weights.data) v = s * rng.gaussian();
    }
    dec.bias.assign(n, 0.0); // the reconstruction rule has no decoder bias
    dec.activation = Activation::identity;
    dae.layers.push_back(std::move(enc));
    dae.layers.push_back(std::move(dec));

    Dataset batch;
    batch.targets = activations;
    batch.labels.assign(activations.rows, 0);
    SgdOptions opts{lr, 0.0};
    double final_mse = 0.0;
    for (std::size_t e = 0; e < epochs; ++e) {
        batch.inputs = activations;
        if (noise_std > 0.0) {
            Rng noise(mix_key(seed, 0xE25, e));
            for (double& v : batch.inputs.data) v += noise_std * noise.gaussian();
        }
        LossGrad lg = loss_and_grad(dae, batch);
        lg.grads.bias[1].assign(n, 0.0); // keep the decoder bias pinned at zero
        sgd_step(dae, lg.grads, opts);
        final_mse = lg.loss;
    }
    // clean-input reconstruction error
    batch.inputs = activations;
    final_mse = batch_loss(dae, batch);

    DaeLayers out;
    out.encoder = dae.layers[0];
    out.decoder = dae.layers[1].weights;
    out.final_mse = final_mse;
    return out;
}

DaeResult dae_rollout(const NetworkModel& model, const Dataset& data,
                      double hidden_fraction, std::size_t epochs, double noise_std,
                      std::uint64_t seed, double lr) {
    if (data.size() == 0) throw ValidationError("dae rollout needs a nonempty dataset");
    if (!(hidden_fraction > 0.0) || hidden_fraction >= 1.0)
        throw ValidationError("hidden fraction must be in (0, 1)");

    const Matrix teacher_out = forward_batch(model, data.inputs);

    NetworkModel student;
    student.loss = model.loss;
    student.layers = model.layers;

    // walk the original layers bottom to top; each replacement inserts one
    // extra encoder layer, shifting later positions by one
    std::size_t pos = 0;
    for (std::size_t orig = 0; orig < model.layers.size(); ++orig, ++pos) {
        const std::size_t width = student.layers[pos].weights.rows;
        const std::size_t hidden = static_cast<std::size_t>(
            std::llround(hidden_fraction * static_cast<double>(width)));
        if (hidden == 0) throw ValidationError("dae hidden width rounds to 0");

        // input activations of this layer under the partially replaced model
        ForwardCache cache;
        forward_batch(student, data.inputs, &cache);
        const Matrix& z = cache.post[pos];

        DaeLayers dae = train_dae(z, hidden, epochs, noise_std, mix_key(seed, orig), lr);

        Layer original = student.layers[pos];
        Layer merged;
        merged.weights = matmul(dae.decoder, original.weights);
        merged.bias = original.bias;
        merged.activation = original.activation;

        student.layers[pos] = dae.encoder;
        student.layers.insert(student.layers.begin() + static_cast<std::ptrdiff_t>(pos) + 1,
                              std::move(merged));
        ++pos; // skip the merged layer we just inserted
    }
    student.validate();

    const Matrix student_out = forward_batch(student, data.inputs);
    double drift = 0.0;
    for (std::size_t i = 0; i < teacher_out.data.size(); ++i) {
        const double d = teacher_out.data[i] - student_out.data[i];
        drift += d * d;
    }
    drift /= static_cast<double>(teacher_out.data.size());

    DaeResult out;
    out.model = std::move(student);
    out.output_drift_mse = drift;
    return out;
}

} // namespace lf

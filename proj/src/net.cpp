#include "lf/net.hpp"

#include "lf/errors.hpp"
#include "lf/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace lf {

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::tanh_fn: return "tanh";
        case Activation::relu: return "relu";
        case Activation::identity: return "identity";
    }
    return "identity";
}

Activation activation_from_name(const std::string& name) {
    if (name == "tanh") return Activation::tanh_fn;
    if (name == "relu") return Activation::relu;
    if (name == "identity") return Activation::identity;
    throw ValidationError("unknown activation: " + name);
}

std::string loss_name(LossKind l) {
    return l == LossKind::mse ? "mse" : "cross_entropy_softmax";
}

LossKind loss_from_name(const std::string& name) {
    if (name == "mse") return LossKind::mse;
    if (name == "cross_entropy_softmax") return LossKind::cross_entropy_softmax;
    throw ValidationError("unknown loss: " + name);
}

void NetworkModel::validate() const {
    if (layers.empty()) throw ValidationError("model has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const Layer& layer = layers[l];
        if (layer.bias.size() != layer.weights.cols)
            throw ValidationError("layer " + std::to_string(l) + " bias length mismatch");
        if (l + 1 < layers.size() && layer.weights.cols != layers[l + 1].weights.rows)
            throw ValidationError("layer " + std::to_string(l) +
                                  " output does not match next layer input");
        for (double v : layer.weights.data)
            if (!std::isfinite(v)) throw ValidationError("non-finite weight");
    }
    if (loss == LossKind::cross_entropy_softmax &&
        layers.back().activation != Activation::identity)
        throw ValidationError("cross-entropy loss requires identity final activation");
}

std::size_t NetworkModel::param_count() const {
    std::size_t n = 0;
    for (const Layer& l : layers) n += l.weights.size() + l.bias.size();
    return n;
}

std::size_t NetworkModel::input_dim() const { return layers.front().weights.rows; }
std::size_t NetworkModel::output_dim() const { return layers.back().weights.cols; }

NetworkModel make_mlp(const std::vector<std::size_t>& dims, Activation hidden,
                      LossKind loss, std::uint64_t seed, double identity_noise) {
    if (dims.size() < 2) throw ValidationError("make_mlp needs at least 2 dims");
    Rng rng(seed);
    NetworkModel model;
    model.loss = loss;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Layer layer;
        layer.weights = Matrix(dims[l], dims[l + 1]);
        if (dims[l] == dims[l + 1]) {
            layer.weights = Matrix::identity(dims[l]);
            for (double& v : layer.weights.data) v += identity_noise * rng.gaussian();
        } else {
            const double s = 1.0 / std::sqrt(static_cast<double>(dims[l]));
            for (double& v : layer.weights.data) v = s * rng.gaussian();
        }
        layer.bias.assign(dims[l + 1], 0.0);
        layer.activation = (l + 2 == dims.size()) ? Activation::identity : hidden;
        model.layers.push_back(std::move(layer));
    }
    model.validate();
    return model;
}

Dataset synth_dataset(SynthKind kind, std::size_t n_per_class, std::size_t classes,
                      double noise, std::uint64_t seed) {
    if (classes < 2) throw ValidationError("synth_dataset needs >= 2 classes");
    Rng rng(seed);
    const std::size_t n = n_per_class * classes;
    Dataset data;
    data.inputs = Matrix(n, 2);
    data.targets = Matrix(n, classes);
    data.labels.resize(n);

    const double two_pi = 2.0 * 3.14159265358979323846;
    std::size_t row = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
            double x = 0.0;
            double y = 0.0;
            if (kind == SynthKind::blobs) {
                const double a = two_pi * static_cast<double>(c) / static_cast<double>(classes);
                x = 2.0 * std::cos(a) + noise * rng.gaussian();
                y = 2.0 * std::sin(a) + noise * rng.gaussian();
            } else {
                const double r = 1.0 + static_cast<double>(c) + noise * rng.gaussian();
                const double a = two_pi * rng.uniform();
                x = r * std::cos(a);
                y = r * std::sin(a);
            }
            data.inputs(row, 0) = x;
            data.inputs(row, 1) = y;
            data.targets(row, c) = 1.0;
            data.labels[row] = static_cast<int>(c);
        }
    }
    return data;
}

Dataset dataset_from_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open dataset: " + path);
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::vector<double> fields;
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                fields.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw ValidationError("dataset: unparsable value '" + cell + "'");
            }
        }
        if (fields.size() < 2) throw ValidationError("dataset row needs features + label");
        labels.push_back(static_cast<int>(std::llround(fields.back())));
        fields.pop_back();
        if (!rows.empty() && rows.front().size() != fields.size())
            throw ValidationError("inconsistent dataset row width");
        rows.push_back(std::move(fields));
    }
    if (rows.empty()) throw ValidationError("empty dataset: " + path);

    const int max_label = *std::max_element(labels.begin(), labels.end());
    const int min_label = *std::min_element(labels.begin(), labels.end());
    if (min_label < 0) throw ValidationError("negative class label");
    const std::size_t classes = static_cast<std::size_t>(max_label) + 1;

    Dataset data;
    data.inputs = Matrix(rows.size(), rows.front().size());
    data.targets = Matrix(rows.size(), classes);
    data.labels = labels;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) data.inputs(i, j) = rows[i][j];
        data.targets(i, static_cast<std::size_t>(labels[i])) = 1.0;
    }
    return data;
}

namespace {

void apply_activation(Matrix& m, Activation a) {
    switch (a) {
        case Activation::tanh_fn:
            for (double& v : m.data) v = std::tanh(v);
            break;
        case Activation::relu:
            for (double& v : m.data) v = v > 0.0 ? v : 0.0;
            break;
        case Activation::identity: break;
    }
}

// derivative w.r.t. pre-activation, expressed through the post-activation
double activation_grad(double post, double pre, Activation a) {
    switch (a) {
        case Activation::tanh_fn: return 1.0 - post * post;
        case Activation::relu: return pre > 0.0 ? 1.0 : 0.0;
        case Activation::identity: return 1.0;
    }
    return 1.0;
}

Matrix softmax_rows_of(const Matrix& m) { return row_softmax(m); }

} // namespace

Matrix forward_batch(const NetworkModel& model, const Matrix& x, ForwardCache* cache) {
    if (x.cols != model.input_dim())
        throw ValidationError("input dim " + std::to_string(x.cols) + " does not match model");
    Matrix z = x;
    if (cache) {
        cache->post.clear();
        cache->pre.clear();
        cache->post.push_back(z);
    }
    for (const Layer& layer : model.layers) {
        Matrix pre = matmul(z, layer.weights);
        for (std::size_t i = 0; i < pre.rows; ++i)
            for (std::size_t j = 0; j < pre.cols; ++j) pre(i, j) += layer.bias[j];
        z = pre;
        apply_activation(z, layer.activation);
        if (cache) {
            cache->pre.push_back(std::move(pre));
            cache->post.push_back(z);
        }
    }
    return z;
}

std::vector<double> forward(const NetworkModel& model, const std::vector<double>& x) {
    Matrix xb(1, x.size(), x);
    Matrix out = forward_batch(model, xb);
    return out.data;
}

LossGrad loss_and_grad(const NetworkModel& model, const Dataset& batch) {
    if (batch.size() == 0) throw ValidationError("empty batch");
    const std::size_t n = batch.size();
    const std::size_t num_layers = model.layers.size();

    ForwardCache cache;
    Matrix out = forward_batch(model, batch.inputs, &cache);
    if (out.cols != batch.targets.cols) throw ValidationError("target dim mismatch");

    LossGrad result;
    Matrix delta(n, out.cols);

    if (model.loss == LossKind::mse) {
        // per-sample loss: mean squared element error
        double acc = 0.0;
        const double inv = 1.0 / static_cast<double>(out.cols);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < out.cols; ++j) {
                const double d = out(i, j) - batch.targets(i, j);
                acc += d * d * inv;
                delta(i, j) = 2.0 * d * inv / static_cast<double>(n);
            }
        }
        result.loss = acc / static_cast<double>(n);
    } else {
        Matrix probs = softmax_rows_of(out);
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < out.cols; ++j) {
                if (batch.targets(i, j) > 0.0)
                    acc -= batch.targets(i, j) * std::log(std::max(probs(i, j), 1e-300));
                delta(i, j) = (probs(i, j) - batch.targets(i, j)) / static_cast<double>(n);
            }
        }
        result.loss = acc / static_cast<double>(n);
    }

    result.grads.weights.resize(num_layers);
    result.grads.bias.resize(num_layers);
    for (std::size_t li = num_layers; li-- > 0;) {
        // delta currently holds dL/d(post-activation of layer li) for the last
        // layer (loss gradients fold the final identity/softmax), otherwise
        // dL/d(pre-activation).
        if (li + 1 == num_layers && model.loss == LossKind::mse) {
            const Layer& layer = model.layers[li];
            for (std::size_t i = 0; i < delta.rows; ++i)
                for (std::size_t j = 0; j < delta.cols; ++j)
                    delta(i, j) *= activation_grad(cache.post[li + 1](i, j),
                                                   cache.pre[li](i, j), layer.activation);
        }
        result.grads.weights[li] = matmul(transpose(cache.post[li]), delta);
        std::vector<double> gb(delta.cols, 0.0);
        for (std::size_t i = 0; i < delta.rows; ++i)
            for (std::size_t j = 0; j < delta.cols; ++j) gb[j] += delta(i, j);
        result.grads.bias[li] = std::move(gb);

        if (li > 0) {
            Matrix next = matmul(delta, transpose(model.layers[li].weights));
            const Layer& prev = model.layers[li - 1];
            for (std::size_t i = 0; i < next.rows; ++i)
                for (std::size_t j = 0; j < next.cols; ++j)
                    next(i, j) *= activation_grad(cache.post[li](i, j), cache.pre[li - 1](i, j),
                                                  prev.activation);
            delta = std::move(next);
        }
    }
    return result;
}

double batch_loss(const NetworkModel& model, const Dataset& batch) {
    Matrix out = forward_batch(model, batch.inputs);
    const std::size_t n = batch.size();
    if (model.loss == LossKind::mse) {
        double acc = 0.0;
        const double inv = 1.0 / static_cast<double>(out.cols);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < out.cols; ++j) {
                const double d = out(i, j) - batch.targets(i, j);
                acc += d * d * inv;
            }
        return acc / static_cast<double>(n);
    }
    Matrix probs = softmax_rows_of(out);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < out.cols; ++j)
            if (batch.targets(i, j) > 0.0)
                acc -= batch.targets(i, j) * std::log(std::max(probs(i, j), 1e-300));
    return acc / static_cast<double>(n);
}

double accuracy(const NetworkModel& model, const Dataset& data) {
    Matrix out = forward_batch(model, data.inputs);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < out.rows; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < out.cols; ++j)
            if (out(i, j) > out(i, best)) best = j;
        if (static_cast<int>(best) == data.labels[i]) ++correct;
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(out.rows);
}

Matrix combine_gradients(const Matrix& g_frozen, const Matrix& g_trainable, double gamma) {
    if (!same_shape(g_frozen, g_trainable))
        throw ValidationError("gradient shapes differ in combine_gradients");
    Matrix out = g_trainable;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = gamma * g_frozen.data[i] + (1.0 - gamma) * g_trainable.data[i];
    return out;
}

void sgd_step(NetworkModel& model, const Gradients& grads, const SgdOptions& opts,
              const FusionConstraints& constraints) {
    if (opts.lr <= 0.0) throw ValidationError("learning rate must be positive");
    const std::size_t num_layers = model.layers.size();
    if (grads.weights.size() != num_layers || grads.bias.size() != num_layers)
        throw ValidationError("gradient count does not match layer count");

    Gradients eff = grads;

    for (const std::vector<std::size_t>& group : constraints.tied_groups) {
        if (group.size() < 2) continue;
        Matrix gw = eff.weights[group[0]];
        std::vector<double> gb = eff.bias[group[0]];
        for (std::size_t m = 1; m < group.size(); ++m) {
            gw = add(gw, eff.weights[group[m]]);
            for (std::size_t j = 0; j < gb.size(); ++j) gb[j] += eff.bias[group[m]][j];
        }
        const double inv = 1.0 / static_cast<double>(group.size());
        gw = scale(gw, inv);
        for (double& v : gb) v *= inv;
        for (std::size_t idx : group) {
            eff.weights[idx] = gw;
            eff.bias[idx] = gb;
        }
    }

    std::vector<bool> frozen(num_layers, false);
    for (const FusionConstraints::FreezeLink& link : constraints.freeze_links) {
        eff.weights[link.trainable] =
            combine_gradients(grads.weights[link.frozen], grads.weights[link.trainable],
                              link.gamma);
        std::vector<double> gb(grads.bias[link.trainable].size());
        for (std::size_t j = 0; j < gb.size(); ++j)
            gb[j] = link.gamma * grads.bias[link.frozen][j] +
                    (1.0 - link.gamma) * grads.bias[link.trainable][j];
        eff.bias[link.trainable] = std::move(gb);
        frozen[link.frozen] = true;
    }

    if (opts.clip_norm > 0.0) {
        double norm2 = 0.0;
        for (std::size_t l = 0; l < num_layers; ++l) {
            if (frozen[l]) continue;
            for (double v : eff.weights[l].data) norm2 += v * v;
            for (double v : eff.bias[l]) norm2 += v * v;
        }
        const double norm = std::sqrt(norm2);
        if (norm > opts.clip_norm) {
            const double f = opts.clip_norm / norm;
            for (std::size_t l = 0; l < num_layers; ++l) {
                for (double& v : eff.weights[l].data) v *= f;
                for (double& v : eff.bias[l]) v *= f;
            }
        }
    }

    for (std::size_t l = 0; l < num_layers; ++l) {
        if (frozen[l]) continue;
        Layer& layer = model.layers[l];
        for (std::size_t i = 0; i < layer.weights.data.size(); ++i)
            layer.weights.data[i] -= opts.lr * eff.weights[l].data[i];
        for (std::size_t j = 0; j < layer.bias.size(); ++j)
            layer.bias[j] -= opts.lr * eff.bias[l][j];
    }

    if (!constraints.weight_masks.empty()) {
        if (constraints.weight_masks.size() != num_layers)
            throw ValidationError("mask count does not match layer count");
        for (std::size_t l = 0; l < num_layers; ++l) {
            const Matrix& mask = constraints.weight_masks[l];
            if (mask.size() == 0) continue;
            if (!same_shape(mask, model.layers[l].weights))
                throw ValidationError("mask shape mismatch");
            for (std::size_t i = 0; i < mask.data.size(); ++i)
                model.layers[l].weights.data[i] *= mask.data[i];
        }
    }
}

void train(NetworkModel& model, const Dataset& data, std::size_t epochs,
           const TrainOptions& opts, const FusionConstraints& constraints) {
    SgdOptions step_opts{opts.lr, opts.clip_norm};
    if (opts.batch_size == 0 || opts.batch_size >= data.size()) {
        for (std::size_t e = 0; e < epochs; ++e) {
            LossGrad lg = loss_and_grad(model, data);
            sgd_step(model, lg.grads, step_opts, constraints);
        }
        return;
    }

    Rng rng(opts.shuffle_seed);
    std::vector<std::size_t> order(data.size());
    for (std::size_t e = 0; e < epochs; ++e) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.index(i)]);
        for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
            const std::size_t stop = std::min(start + opts.batch_size, order.size());
            Dataset mini;
            mini.inputs = Matrix(stop - start, data.inputs.cols);
            mini.targets = Matrix(stop - start, data.targets.cols);
            mini.labels.resize(stop - start);
            for (std::size_t r = start; r < stop; ++r) {
                const std::size_t src = order[r];
                for (std::size_t j = 0; j < data.inputs.cols; ++j)
                    mini.inputs(r - start, j) = data.inputs(src, j);
                for (std::size_t j = 0; j < data.targets.cols; ++j)
                    mini.targets(r - start, j) = data.targets(src, j);
                mini.labels[r - start] = data.labels[src];
            }
            LossGrad lg = loss_and_grad(model, mini);
            sgd_step(model, lg.grads, step_opts, constraints);
        }
    }
}

} // namespace lf

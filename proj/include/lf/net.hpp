#pragma once

#include "lf/matrix.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lf {

enum class Activation { tanh_fn, relu, identity };
enum class LossKind { mse, cross_entropy_softmax };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);
std::string loss_name(LossKind l);
LossKind loss_from_name(const std::string& name);

struct Layer {
    Matrix weights;           // n_in x n_out
    std::vector<double> bias; // n_out
    Activation activation = Activation::identity;
};

/// Ordered dense layers; activations are row vectors, so a layer computes
/// g(x W + b).
struct NetworkModel {
    std::vector<Layer> layers;
    LossKind loss = LossKind::mse;

    void validate() const;
    std::size_t param_count() const;
    std::size_t input_dim() const;
    std::size_t output_dim() const;
};

/// Random MLP. Square hidden layers start near the identity (I + noise*N(0,1))
/// so depth is removable, mirroring residual-style pretrained nets; the rest
/// use 1/sqrt(fan_in) gaussian init.
NetworkModel make_mlp(const std::vector<std::size_t>& dims, Activation hidden,
                      LossKind loss, std::uint64_t seed, double identity_noise = 0.2);

struct Dataset {
    Matrix inputs;           // n_samples x dim
    Matrix targets;          // n_samples x out_dim (one-hot or real)
    std::vector<int> labels; // argmax classes when classification

    std::size_t size() const { return inputs.rows; }
};

enum class SynthKind { blobs, rings };

/// Deterministic synthetic classification sets. blobs: gaussian clusters at
/// fixed centers on a circle; rings: concentric annuli.
Dataset synth_dataset(SynthKind kind, std::size_t n_per_class, std::size_t classes,
                      double noise, std::uint64_t seed);

/// Dataset from CSV rows "x1,...,xn,label" with integer labels.
Dataset dataset_from_csv(const std::string& path);

struct ForwardCache {
    // post[0] is the input batch; post[l+1] the activation after layer l.
    std::vector<Matrix> post;
    std::vector<Matrix> pre; // pre-activation per layer
};

Matrix forward_batch(const NetworkModel& model, const Matrix& x, ForwardCache* cache = nullptr);
std::vector<double> forward(const NetworkModel& model, const std::vector<double>& x);

struct Gradients {
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> bias;
};

struct LossGrad {
    double loss = 0.0;
    Gradients grads;
};

LossGrad loss_and_grad(const NetworkModel& model, const Dataset& batch);
double batch_loss(const NetworkModel& model, const Dataset& batch);

/// Fraction of argmax-correct predictions, in percent.
double accuracy(const NetworkModel& model, const Dataset& data);

/// Training-time constraints produced by the fusion engine and honored by
/// sgd_step: mean-tied groups share the group-average gradient, frozen layers
/// stay fixed but feed a gamma-weighted gradient into their partner, and
/// prune masks re-zero weights after every update.
struct FusionConstraints {
    std::vector<std::vector<std::size_t>> tied_groups;
    struct FreezeLink {
        std::size_t frozen;
        std::size_t trainable;
        double gamma;
    };
    std::vector<FreezeLink> freeze_links;
    std::vector<Matrix> weight_masks; // empty, or one mask per layer

    bool empty() const {
        return tied_groups.empty() && freeze_links.empty() && weight_masks.empty();
    }
};

/// Convex gradient combination from the fused-backprop rule:
/// gamma * g_frozen + (1 - gamma) * g_trainable.
Matrix combine_gradients(const Matrix& g_frozen, const Matrix& g_trainable, double gamma);

struct SgdOptions {
    double lr = 0.05;
    double clip_norm = 0.0; // 0 disables clipping
};

void sgd_step(NetworkModel& model, const Gradients& grads, const SgdOptions& opts,
              const FusionConstraints& constraints = {});

struct TrainOptions {
    double lr = 0.05;
    double clip_norm = 0.0;
    std::size_t batch_size = 0; // 0 = full batch
    std::uint64_t shuffle_seed = 1;
};

/// Plain (S)GD loop; full-batch by default for determinism.
void train(NetworkModel& model, const Dataset& data, std::size_t epochs,
           const TrainOptions& opts, const FusionConstraints& constraints = {});

} // namespace lf

#include "lf/cli.hpp"

#include "lf/baselines.hpp"
#include "lf/container.hpp"
#include "lf/errors.hpp"
#include "lf/fusion.hpp"
#include "lf/net.hpp"
#include "lf/pipeline.hpp"
#include "lf/rng.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cmath>
#include <iostream>

namespace lf {

std::string emit_heatmap(const SimilarityReport& report) {
    nlohmann::json j;
    j["metric"] = metric_name(report.metric);
    j["mode"] = rank_mode_name(report.mode);
    j["n_layers"] = report.n_layers;
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < report.n_layers; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t k = 0; k < report.n_layers; ++k) {
            const double d = report.distances(i, k);
            if (std::isnan(d))
                row.push_back(nullptr);
            else
                row.push_back(d);
        }
        rows.push_back(std::move(row));
    }
    j["distances"] = std::move(rows);
    return j.dump(2);
}

namespace {

struct DataFlags {
    std::string data = "blobs";
    std::size_t n_per_class = 64;
    std::size_t classes = 4;
    double noise = 0.1;
    std::uint64_t data_seed = 0;
};

void add_data_flags(CLI::App* cmd, DataFlags& f) {
    cmd->add_option("--data", f.data, "blobs | rings | csv:PATH");
    cmd->add_option("--n-per-class", f.n_per_class, "samples per class for synthetic data");
    cmd->add_option("--classes", f.classes, "class count for synthetic data");
    cmd->add_option("--noise", f.noise, "noise level for synthetic data");
    cmd->add_option("--data-seed", f.data_seed, "seed for synthetic data");
}

Dataset load_data(const DataFlags& f) {
    if (f.data.rfind("csv:", 0) == 0) return dataset_from_csv(f.data.substr(4));
    if (f.data == "blobs")
        return synth_dataset(SynthKind::blobs, f.n_per_class, f.classes, f.noise, f.data_seed);
    if (f.data == "rings")
        return synth_dataset(SynthKind::rings, f.n_per_class, f.classes, f.noise, f.data_seed);
    throw ValidationError("unknown dataset: " + f.data + " (use blobs, rings or csv:PATH)");
}

void check_fraction(double f, const std::string& what) {
    if (f < 0.0 || f >= 1.0) throw ValidationError(what + " must be in [0, 1)");
}

int run_parsed(const std::vector<std::string>& args) {
    CLI::App app{"layerfuse: similarity-ranked layer fusion and compression baselines"};
    app.require_subcommand(1);

    // similarity
    auto* sim = app.add_subcommand("similarity", "pairwise layer distances to CSV");
    std::string sim_model, sim_metric = "bures_ws2", sim_mode = "global", sim_out;
    sim->add_option("--model", sim_model, "input model container")->required();
    sim->add_option("--metric", sim_metric, "distance metric");
    sim->add_option("--mode", sim_mode, "global | adjacent");
    sim->add_option("--out", sim_out, "output CSV path")->required();

    // fuse
    auto* fuse = app.add_subcommand("fuse", "fuse the most similar layer pairs");
    std::string fu_model, fu_metric = "bures_ws2", fu_mode = "global";
    std::string fu_strategy = "mean", fu_out, fu_plan_out;
    double fu_fraction = 0.0;
    std::uint64_t fu_seed = 0;
    double fu_mixp = 0.5;
    bool fu_endpoints = false;
    fuse->add_option("--model", fu_model, "input model container")->required();
    fuse->add_option("--metric", fu_metric, "ranking metric");
    fuse->add_option("--mode", fu_mode, "global | adjacent");
    fuse->add_option("--fraction", fu_fraction, "pairs = round(L * fraction)")->required();
    fuse->add_option("--strategy", fu_strategy, "mean | freeze | mix");
    fuse->add_option("--seed", fu_seed, "seed for the mix strategy");
    fuse->add_option("--mix-probability", fu_mixp, "row-pick probability under mix");
    fuse->add_flag("--include-endpoints", fu_endpoints,
                   "allow fusing the input/output layers");
    fuse->add_option("--out", fu_out, "output model container")->required();
    fuse->add_option("--plan-out", fu_plan_out, "also write the fusion plan JSON");

    // prune
    auto* pr = app.add_subcommand("prune", "magnitude pruning");
    std::string pr_model, pr_scope = "layer", pr_out;
    double pr_fraction = 0.0;
    pr->add_option("--model", pr_model, "input model container")->required();
    pr->add_option("--scope", pr_scope, "layer | global");
    pr->add_option("--fraction", pr_fraction, "fraction of weights to zero")->required();
    pr->add_option("--out", pr_out, "output model container")->required();

    // quantize
    auto* qz = app.add_subcommand("quantize", "k-means weight quantization");
    std::string qz_model, qz_out;
    double qz_fraction = 0.5;
    std::uint64_t qz_seed = 0;
    std::size_t qz_iters = 100;
    qz->add_option("--model", qz_model, "input model container")->required();
    qz->add_option("--fraction", qz_fraction, "clusters = round(fraction * layer width)")
        ->required();
    qz->add_option("--seed", qz_seed, "k-means++ seed");
    qz->add_option("--max-iters", qz_iters, "lloyd iteration cap");
    qz->add_option("--out", qz_out, "output model container")->required();

    // svd
    auto* sv = app.add_subcommand("svd", "randomized truncated SVD factorization");
    std::string sv_model, sv_out;
    double sv_fraction = 0.5;
    std::uint64_t sv_seed = 0;
    std::size_t sv_oversample = 8;
    sv->add_option("--model", sv_model, "input model container")->required();
    sv->add_option("--rank-fraction", sv_fraction, "retained rank over min dim")->required();
    sv->add_option("--seed", sv_seed, "range-finder seed");
    sv->add_option("--oversample", sv_oversample, "extra test-matrix columns");
    sv->add_option("--out", sv_out, "output model container")->required();

    // dae
    auto* da = app.add_subcommand("dae", "denoising-autoencoder student rollout");
    std::string da_model, da_out;
    double da_fraction = 0.5, da_noise = 0.1, da_lr = 0.05;
    std::size_t da_epochs = 100;
    std::uint64_t da_seed = 0;
    DataFlags da_data;
    da->add_option("--model", da_model, "input model container")->required();
    da->add_option("--hidden-fraction", da_fraction, "student width over source width")->required();
    da->add_option("--noise-std", da_noise, "gaussian input noise std");
    da->add_option("--epochs", da_epochs, "reconstruction epochs per layer");
    da->add_option("--lr", da_lr, "reconstruction learning rate");
    da->add_option("--seed", da_seed, "noise and init seed");
    da->add_option("--out", da_out, "output model container")->required();
    add_data_flags(da, da_data);

    // train
    auto* tr = app.add_subcommand("train", "train a fresh or existing model");
    std::string tr_model, tr_out, tr_report, tr_activation = "tanh";
    std::string tr_loss = "cross_entropy_softmax";
    std::vector<std::size_t> tr_layers;
    double tr_lr = 0.05, tr_clip = 0.0, tr_init_noise = 0.2;
    std::size_t tr_epochs = 200, tr_batch = 0;
    std::uint64_t tr_seed = 0;
    DataFlags tr_data;
    tr->add_option("--model", tr_model, "continue training this container");
    tr->add_option("--layers", tr_layers, "fresh model dims, e.g. --layers 2 32 32 4");
    tr->add_option("--activation", tr_activation, "hidden activation for fresh models");
    tr->add_option("--loss", tr_loss, "mse | cross_entropy_softmax");
    tr->add_option("--epochs", tr_epochs, "training epochs");
    tr->add_option("--lr", tr_lr, "learning rate");
    tr->add_option("--clip-norm", tr_clip, "0 disables clipping");
    tr->add_option("--batch-size", tr_batch, "0 = full batch");
    tr->add_option("--seed", tr_seed, "init and shuffle seed");
    tr->add_option("--init-noise", tr_init_noise, "identity-init noise for square layers");
    tr->add_option("--out", tr_out, "output model container")->required();
    tr->add_option("--report", tr_report, "training CSV report path");
    add_data_flags(tr, tr_data);

    // compress-retrain
    auto* cr = app.add_subcommand("compress-retrain", "iterative compress + retrain");
    std::string cr_model, cr_out, cr_report, cr_report_json;
    std::string cr_compressor, cr_schedule = "uniform", cr_metric = "bures_ws2";
    std::string cr_mode = "global";
    double cr_total = 0.5, cr_lr = 0.05, cr_mixp = 0.5;
    std::size_t cr_steps = 4, cr_epochs = 20, cr_batch = 0;
    std::uint64_t cr_seed = 0;
    bool cr_endpoints = false;
    DataFlags cr_data;
    cr->add_option("--model", cr_model, "input model container")->required();
    cr->add_option("--compressor", cr_compressor,
                   "fuse-mean | fuse-freeze | fuse-mix | prune-layer | prune-global | "
                   "quantize | svd")
        ->required();
    cr->add_option("--schedule", cr_schedule, "uniform | exponential");
    cr->add_option("--total-fraction", cr_total, "overall compression amount")->required();
    cr->add_option("--steps", cr_steps, "compression steps");
    cr->add_option("--epochs", cr_epochs, "total retraining epochs across steps");
    cr->add_option("--metric", cr_metric, "ranking metric for fusion");
    cr->add_option("--mode", cr_mode, "global | adjacent");
    cr->add_option("--mix-probability", cr_mixp, "row-pick probability under fuse-mix");
    cr->add_option("--lr", cr_lr, "retraining learning rate");
    cr->add_option("--batch-size", cr_batch, "0 = full batch");
    cr->add_option("--seed", cr_seed, "compression and shuffle seed");
    cr->add_flag("--include-endpoints", cr_endpoints, "allow fusing the input/output layers");
    cr->add_option("--out", cr_out, "output model container")->required();
    cr->add_option("--report", cr_report, "trajectory CSV path");
    cr->add_option("--report-json", cr_report_json, "trajectory JSON path");
    add_data_flags(cr, cr_data);

    // report
    auto* rp = app.add_subcommand("report", "derive reports from artifacts");
    std::string rp_heatmap, rp_out, rp_mode;
    rp->add_option("--heatmap", rp_heatmap, "similarity CSV to turn into heatmap JSON")
        ->required();
    rp->add_option("--mode", rp_mode, "override the inferred ranking mode");
    rp->add_option("--out", rp_out, "output JSON path")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e); // prints usage or help
        return code == 0 ? 0 : 2;
    }

    if (sim->parsed()) {
        NetworkModel model = load_model(sim_model);
        SimilarityReport report = pairwise_distances(
            model, metric_from_name(sim_metric), rank_mode_from_name(sim_mode));
        write_file_atomic(sim_out, report.to_csv());
        std::cout << "wrote " << sim_out << " (" << report.entries().size() << " pairs)\n";
        return 0;
    }

    if (fuse->parsed()) {
        check_fraction(fu_fraction, "--fraction");
        NetworkModel model = load_model(fu_model);
        if (fu_fraction == 0.0) {
            save_model(model, fu_out); // nothing to fuse; canonical round trip
            if (!fu_plan_out.empty()) write_file_atomic(fu_plan_out, FusionPlan{}.to_json());
            std::cout << "wrote " << fu_out << " (0 pairs fused)\n";
            return 0;
        }
        SimilarityReport report = pairwise_distances(
            model, metric_from_name(fu_metric), rank_mode_from_name(fu_mode));
        SelectOptions sopts;
        sopts.exclude_endpoints = !fu_endpoints;
        sopts.strategy = strategy_from_name(fu_strategy);
        sopts.mix_probability = fu_mixp;
        sopts.seed = fu_seed;
        FusionPlan plan = select_top_k(report, fu_fraction, sopts);
        FusedModel fused;
        switch (sopts.strategy) {
            case FusionStrategy::mean: fused = fuse_mean(model, plan); break;
            case FusionStrategy::freeze: fused = fuse_freeze(model, plan); break;
            case FusionStrategy::mix: fused = fuse_mix(model, plan); break;
        }
        save_model(fused.model, fu_out);
        if (!fu_plan_out.empty()) write_file_atomic(fu_plan_out, plan.to_json());
        std::cout << "wrote " << fu_out << " (" << plan.pairs.size() << (plan.pairs.size() == 1 ? " pair, " : " pairs, ")
                  << fused.model.layers.size() << " layers)\n";
        return 0;
    }

    if (pr->parsed()) {
        check_fraction(pr_fraction, "--fraction");
        NetworkModel model = load_model(pr_model);
        PruneResult res = prune(model, prune_scope_from_name(pr_scope), pr_fraction);
        TensorContainer c = container_from_model(res.model);
        append_mask(c, res.mask);
        save_container(c, pr_out);
        std::cout << "wrote " << pr_out << " (" << res.mask.zero_count() << " weights zeroed)\n";
        return 0;
    }

    if (qz->parsed()) {
        NetworkModel model = load_model(qz_model);
        QuantizeResult res = kmeans_quantize(model, qz_fraction, qz_seed, qz_iters);
        TensorContainer c = container_from_model(res.model);
        append_codebook(c, res.codebook);
        save_container(c, qz_out);
        std::size_t k_total = 0;
        for (const LayerCodebook& cb : res.codebook.layers) k_total += cb.centroids.size();
        std::cout << "wrote " << qz_out << " (" << k_total << " centroids)\n";
        return 0;
    }

    if (sv->parsed()) {
        NetworkModel model = load_model(sv_model);
        NetworkModel out = truncated_svd_compress(model, sv_fraction, sv_seed, sv_oversample);
        save_model(out, sv_out);
        std::cout << "wrote " << sv_out << " (" << out.layers.size() << " layers, "
                  << out.param_count() << " params)\n";
        return 0;
    }

    if (da->parsed()) {
        NetworkModel model = load_model(da_model);
        Dataset data = load_data(da_data);
        DaeResult res =
            dae_rollout(model, data, da_fraction, da_epochs, da_noise, da_seed, da_lr);
        save_model(res.model, da_out);
        std::cout << "wrote " << da_out << " (output drift mse " << res.output_drift_mse
                  << ")\n";
        return 0;
    }

    if (tr->parsed()) {
        Dataset data = load_data(tr_data);
        NetworkModel model;
        if (!tr_model.empty()) {
            model = load_model(tr_model);
        } else {
            if (tr_layers.size() < 2)
                throw ValidationError("train needs --model or --layers with >= 2 dims");
            model = make_mlp(tr_layers, activation_from_name(tr_activation),
                             loss_from_name(tr_loss), tr_seed, tr_init_noise);
        }
        TrainOptions topts;
        topts.lr = tr_lr;
        topts.clip_norm = tr_clip;
        topts.batch_size = tr_batch;
        topts.shuffle_seed = tr_seed + 1;

        TrainReport report;
        report.rows.push_back({0, 0, 0.0, model.param_count(), batch_loss(model, data),
                               accuracy(model, data)});
        for (std::size_t e = 1; e <= tr_epochs; ++e) {
            TrainOptions per_epoch = topts;
            per_epoch.shuffle_seed = mix_key(topts.shuffle_seed, e);
            train(model, data, 1, per_epoch);
            report.rows.push_back({e, 0, 0.0, model.param_count(), batch_loss(model, data),
                                   accuracy(model, data)});
        }
        save_model(model, tr_out);
        if (!tr_report.empty()) write_file_atomic(tr_report, report.to_csv());
        std::cout << "wrote " << tr_out << " (accuracy " << accuracy(model, data) << ")\n";
        return 0;
    }

    if (cr->parsed()) {
        check_fraction(cr_total, "--total-fraction");
        if (cr_total == 0.0) throw ValidationError("--total-fraction must be positive");
        NetworkModel model = load_model(cr_model);
        Dataset data = load_data(cr_data);
        CompressionSchedule schedule = make_schedule(
            cr_total, cr_steps, schedule_mode_from_name(cr_schedule), cr_epochs);
        RetrainOptions opts;
        opts.train.lr = cr_lr;
        opts.train.batch_size = cr_batch;
        opts.train.shuffle_seed = cr_seed + 1;
        opts.metric = metric_from_name(cr_metric);
        opts.mode = rank_mode_from_name(cr_mode);
        opts.exclude_endpoints = !cr_endpoints;
        opts.mix_probability = cr_mixp;
        CompressRetrainResult res = compress_retrain(
            model, data, compressor_from_name(cr_compressor), schedule, cr_seed, opts);
        save_model(res.model, cr_out);
        if (!cr_report.empty()) write_file_atomic(cr_report, res.report.to_csv());
        if (!cr_report_json.empty()) write_file_atomic(cr_report_json, res.report.to_json());
        std::cout << "wrote " << cr_out << " (" << res.model.layers.size() << " layers, "
                  << res.model.param_count() << " params, accuracy "
                  << accuracy(res.model, data) << ")\n";
        return 0;
    }

    if (rp->parsed()) {
        SimilarityReport report = report_from_csv(read_file(rp_heatmap));
        if (!rp_mode.empty()) report.mode = rank_mode_from_name(rp_mode);
        write_file_atomic(rp_out, emit_heatmap(report));
        std::cout << "wrote " << rp_out << "\n";
        return 0;
    }

    return 0;
}

} // namespace

int run_cli(const std::vector<std::string>& args) {
    try {
        return run_parsed(args);
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

} // namespace lf

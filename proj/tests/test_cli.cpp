#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "lf/cli.hpp"
#include "lf/container.hpp"
#include "lf/net.hpp"
#include "lf/pipeline.hpp"
#include "test_util.hpp"

#include "json.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace lf;
using namespace lftest;

namespace {

struct TempDir {
    std::filesystem::path dir;
    TempDir() {
        dir = std::filesystem::temp_directory_path() /
              ("lfc_cli_" + std::to_string(::getpid()));
        std::filesystem::create_directories(dir);
    }
    ~TempDir() { std::filesystem::remove_all(dir); }
    std::string path(const std::string& name) const { return (dir / name).string(); }
};

int run(const std::string& args) {
    const std::string cmd = std::string(LFC_BINARY) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::size_t count_lines(const std::string& text) {
    std::size_t n = 0;
    for (char c : text) n += c == '\n' ? 1 : 0;
    return n;
}

void make_model(const TempDir& tmp, const std::string& name,
                const std::vector<std::size_t>& dims, std::uint64_t seed = 0) {
    NetworkModel m = make_mlp(dims, Activation::tanh_fn, LossKind::cross_entropy_softmax,
                              seed);
    save_model(m, tmp.path(name));
}

} // namespace

TEST_CASE("similarity emits one csv row per adjacent pair") {
    TempDir tmp;
    make_model(tmp, "m.lftc", {4, 4, 4, 4});
    REQUIRE(run("similarity --model " + tmp.path("m.lftc") +
                " --metric euclidean --mode adjacent --out " + tmp.path("sim.csv")) == 0);
    const std::string csv = read_file(tmp.path("sim.csv"));
    CHECK(count_lines(csv) == 1 + 2); // header + two adjacent pairs of a 3-layer model
    CHECK(csv.rfind("layer_i,layer_j,metric,distance\n", 0) == 0);
}

TEST_CASE("fuse at fraction zero emits a byte-identical model") {
    TempDir tmp;
    make_model(tmp, "m.lftc", {2, 8, 8, 3});
    REQUIRE(run("fuse --model " + tmp.path("m.lftc") + " --fraction 0 --out " +
                tmp.path("same.lftc")) == 0);
    CHECK(read_file(tmp.path("m.lftc")) == read_file(tmp.path("same.lftc")));
}

TEST_CASE("fuse reduces the layer count and writes the plan") {
    TempDir tmp;
    make_model(tmp, "m.lftc", {2, 8, 8, 8, 3});
    REQUIRE(run("fuse --model " + tmp.path("m.lftc") +
                " --fraction 0.2 --strategy mean --out " + tmp.path("fused.lftc") +
                " --plan-out " + tmp.path("plan.json")) == 0);
    NetworkModel fused = load_model(tmp.path("fused.lftc"));
    CHECK(fused.layers.size() == 3); // round(4 * 0.2) = 1 pair removed

    nlohmann::json plan = nlohmann::json::parse(read_file(tmp.path("plan.json")));
    CHECK(plan.at("strategy") == "mean");
    CHECK(plan.at("pairs").size() == 1);
}

TEST_CASE("fuse strategies freeze and mix work end to end") {
    TempDir tmp;
    make_model(tmp, "m.lftc", {2, 8, 8, 8, 3}, 7);
    for (const std::string strategy : {"freeze", "mix"}) {
        REQUIRE(run("fuse --model " + tmp.path("m.lftc") + " --fraction 0.2 --strategy " +
                    strategy + " --seed 9 --out " + tmp.path(strategy + ".lftc")) == 0);
        CHECK(load_model(tmp.path(strategy + ".lftc")).layers.size() == 3);
    }
    // mix is seed-deterministic at the file level
    REQUIRE(run("fuse --model " + tmp.path("m.lftc") +
                " --fraction 0.2 --strategy mix --seed 9 --out " +
                tmp.path("mix2.lftc")) == 0);
    CHECK(read_file(tmp.path("mix.lftc")) == read_file(tmp.path("mix2.lftc")));
}

TEST_CASE("train accepts rings and csv datasets") {
    TempDir tmp;
    REQUIRE(run("train --layers 2 8 8 3 --epochs 30 --data rings --classes 3 "
                "--n-per-class 16 --noise 0.02 --seed 2 --out " +
                tmp.path("rings.lftc")) == 0);

    std::ofstream csv(tmp.path("data.csv"));
    csv << "0.0,0.0,0\n1.0,1.0,1\n0.1,0.0,0\n0.9,1.1,1\n";
    csv.close();
    REQUIRE(run("train --layers 2 6 2 --epochs 50 --data csv:" + tmp.path("data.csv") +
                " --seed 3 --out " + tmp.path("csvmodel.lftc")) == 0);
    CHECK(load_model(tmp.path("csvmodel.lftc")).output_dim() == 2);
}

TEST_CASE("cli outputs are byte-deterministic") {
    TempDir tmp;
    make_model(tmp, "m.lftc", {2, 6, 6, 6, 3}, 5);
    REQUIRE(run("similarity --model " + tmp.path("m.lftc") +
                " --metric bures_ws2 --mode global --out " + tmp.path("a.csv")) == 0);
    REQUIRE(run("similarity --model " + tmp.path("m.lftc") +
                " --metric bures_ws2 --mode global --out " + tmp.path("b.csv")) == 0);
    CHECK(read_file(tmp.path("a.csv")) == read_file(tmp.path("b.csv")));

    REQUIRE(run("quantize --model " + tmp.path("m.lftc") +
                " --fraction 0.5 --seed 3 --out " + tmp.path("qa.lftc")) == 0);
    REQUIRE(run("quantize --model " + tmp.path("m.lftc") +
                " --fraction 0.5 --seed 3 --out " + tmp.path("qb.lftc")) == 0);
    CHECK(read_file(tmp.path("qa.lftc")) == read_file(tmp.path("qb.lftc")));
}

TEST_CASE("prune attaches mask tensors") {
    TempDir tmp;
    make_model(tmp, "m.lftc", {3, 6, 2});
    REQUIRE(run("prune --model " + tmp.path("m.lftc") +
                " --scope global --fraction 0.5 --out " + tmp.path("pruned.lftc")) == 0);
    TensorContainer c = load_container(tmp.path("pruned.lftc"));
    std::size_t masks = 0;
    for (const TensorEntry& e : c.entries)
        if (e.role == TensorRole::mask) ++masks;
    CHECK(masks == 2);
}

TEST_CASE("svd and dae write runnable models") {
    TempDir tmp;
    make_model(tmp, "m.lftc", {8, 16, 16, 4});
    REQUIRE(run("svd --model " + tmp.path("m.lftc") +
                " --rank-fraction 0.25 --seed 1 --out " + tmp.path("svd.lftc")) == 0);
    NetworkModel svd_model = load_model(tmp.path("svd.lftc"));
    CHECK(svd_model.layers.size() > 3);

    REQUIRE(run("dae --model " + tmp.path("m.lftc") +
                " --hidden-fraction 0.5 --epochs 20 --noise-std 0.05 --data blobs "
                "--classes 4 --n-per-class 8 --out " +
                tmp.path("dae.lftc")) == 2); // blobs are 2-d, model wants 8 inputs

    make_model(tmp, "m2.lftc", {2, 8, 8, 4});
    REQUIRE(run("dae --model " + tmp.path("m2.lftc") +
                " --hidden-fraction 0.5 --epochs 20 --noise-std 0.05 --data blobs "
                "--classes 4 --n-per-class 8 --out " +
                tmp.path("dae.lftc")) == 0);
    CHECK(load_model(tmp.path("dae.lftc")).layers.size() == 6);
}

TEST_CASE("train builds a model from scratch and reports progress") {
    TempDir tmp;
    REQUIRE(run("train --layers 2 8 8 4 --epochs 60 --data blobs --classes 4 "
                "--n-per-class 16 --noise 0.1 --seed 1 --out " +
                tmp.path("trained.lftc") + " --report " + tmp.path("train.csv")) == 0);
    const std::string csv = read_file(tmp.path("train.csv"));
    CHECK(csv.rfind("epoch,step,fraction_cum,params,loss,accuracy\n", 0) == 0);
    CHECK(count_lines(csv) == 1 + 61); // header + initial row + 60 epochs
    CHECK(load_model(tmp.path("trained.lftc")).layers.size() == 3);
}

TEST_CASE("compress-retrain reports the exponential fractions") {
    TempDir tmp;
    REQUIRE(run("train --layers 2 8 8 4 --epochs 40 --data blobs --classes 4 "
                "--n-per-class 8 --seed 1 --out " +
                tmp.path("m.lftc")) == 0);
    REQUIRE(run("compress-retrain --model " + tmp.path("m.lftc") +
                " --compressor prune-layer --schedule exponential --total-fraction 0.5 "
                "--steps 4 --epochs 8 --data blobs --classes 4 --n-per-class 8 --out " +
                tmp.path("out.lftc") + " --report " + tmp.path("report.csv") +
                " --report-json " + tmp.path("report.json")) == 0);

    nlohmann::json report = nlohmann::json::parse(read_file(tmp.path("report.json")));
    const std::vector<double> fr = report.at("schedule").at("fractions");
    REQUIRE(fr.size() == 4);
    CHECK(std::abs(fr[0] - 0.2667) < 1e-4);
    CHECK(std::abs(fr[1] - 0.1333) < 1e-4);
    CHECK(std::abs(fr[2] - 0.0667) < 1e-4);
    CHECK(std::abs(fr[3] - 0.0333) < 1e-4);
    CHECK(read_file(tmp.path("report.csv"))
              .rfind("epoch,step,fraction_cum,params,loss,accuracy\n", 0) == 0);
}

TEST_CASE("report turns similarity csv into heatmap json") {
    TempDir tmp;
    make_model(tmp, "m.lftc", {4, 4, 4, 4, 4}); // 4 layers
    REQUIRE(run("similarity --model " + tmp.path("m.lftc") +
                " --metric euclidean --mode adjacent --out " + tmp.path("sim.csv")) == 0);
    REQUIRE(run("report --heatmap " + tmp.path("sim.csv") + " --out " +
                tmp.path("heat.json")) == 0);

    nlohmann::json heat = nlohmann::json::parse(read_file(tmp.path("heat.json")));
    CHECK(heat.at("metric") == "euclidean");
    CHECK(heat.at("mode") == "adjacent");
    CHECK(heat.at("n_layers") == 4);
    std::size_t nulls = 0;
    for (const auto& row : heat.at("distances"))
        for (const auto& cell : row) nulls += cell.is_null() ? 1 : 0;
    CHECK(nulls == 6); // non-adjacent pairs above and below the first off-diagonal
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(heat.at("distances")[i][i] == 0.0);
}

TEST_CASE("emit_heatmap is symmetric with a zero diagonal") {
    Rng rng(9);
    NetworkModel m;
    for (int l = 0; l < 2; ++l) {
        Layer layer;
        layer.weights = random_matrix(3, 3, rng);
        layer.bias.assign(3, 0.0);
        layer.activation = Activation::tanh_fn;
        m.layers.push_back(std::move(layer));
    }
    m.layers.push_back(m.layers[0]); // duplicate
    SimilarityReport r = pairwise_distances(m, MetricKind::euclidean, RankMode::global);
    nlohmann::json heat = nlohmann::json::parse(emit_heatmap(r));
    CHECK(heat.at("distances")[0][2] == 0.0); // duplicate layers
    CHECK(heat.at("distances")[1][2] == heat.at("distances")[2][1]);
}

TEST_CASE("usage and format errors use the documented exit codes") {
    TempDir tmp;
    CHECK(run("similarity --frobnicate") == 2);
    CHECK(run("no-such-command") == 2);

    write_file_atomic(tmp.path("junk.lftc"), "this is not a container");
    CHECK(run("similarity --model " + tmp.path("junk.lftc") + " --out " +
              tmp.path("x.csv")) == 3);

    make_model(tmp, "m.lftc", {2, 4, 2});
    CHECK(run("prune --model " + tmp.path("m.lftc") + " --scope layer --fraction 1.5 "
              "--out " +
              tmp.path("x.lftc")) == 2);
    CHECK(run("fuse --model " + tmp.path("m.lftc") + " --fraction 0.9 --metric what "
              "--out " +
              tmp.path("x.lftc")) == 2);
}

TEST_CASE("malformed csv inputs map to the right exit codes") {
    TempDir tmp;
    write_file_atomic(tmp.path("bad.csv"),
                      "layer_i,layer_j,metric,distance\nx,y,euclidean,z\n");
    CHECK(run("report --heatmap " + tmp.path("bad.csv") + " --out " +
              tmp.path("h.json")) == 3);

    write_file_atomic(tmp.path("bad_data.csv"), "1.0,not_a_number,0\n");
    CHECK(run("train --layers 2 4 2 --epochs 1 --data csv:" + tmp.path("bad_data.csv") +
              " --out " + tmp.path("m.lftc")) == 2);
}

TEST_CASE("exact_ws over the assignment cap reports a validation error") {
    TempDir tmp;
    make_model(tmp, "wide.lftc", {32, 32, 32, 4}); // 1024 weights per layer
    CHECK(run("similarity --model " + tmp.path("wide.lftc") +
              " --metric exact_ws --mode adjacent --out " + tmp.path("x.csv")) == 2);
}

TEST_CASE("failed runs leave no partial outputs") {
    TempDir tmp;
    make_model(tmp, "m.lftc", {2, 4, 2});
    CHECK(run("prune --model " + tmp.path("m.lftc") +
              " --scope layer --fraction 1.5 --out " + tmp.path("never.lftc")) == 2);
    CHECK(!std::filesystem::exists(tmp.path("never.lftc")));
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "lf/errors.hpp"
#include "lf/metrics.hpp"
#include "test_util.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace lf;
using namespace lftest;

namespace {

LayerSummary summary_of(const Matrix& w, int index = 0) {
    return summarize_matrix(w, index, Activation::tanh_fn);
}

// summary with a prescribed gaussian fit, for closed-form checks
LayerSummary gaussian_summary(std::vector<double> diag_cov, double mean) {
    const std::size_t d = diag_cov.size();
    Matrix cov(d, d);
    for (std::size_t i = 0; i < d; ++i) cov(i, i) = diag_cov[i];
    LayerSummary s;
    s.rows = 2;
    s.cols = d;
    s.mean = mean;
    s.cov = SymmetricPsd(std::move(cov));
    s.softmax_rows = Matrix(1, 1, {1.0});
    s.flat_weights = {0.0};
    return s;
}

double brute_force_assignment(const Matrix& cost) {
    std::vector<std::size_t> perm(cost.rows);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    double best = 1e308;
    do {
        double total = 0.0;
        for (std::size_t i = 0; i < cost.rows; ++i) total += cost(i, perm[i]);
        best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

} // namespace

TEST_CASE("euclidean distance closed forms") {
    Matrix a(1, 3, {1.0, 2.0, 3.0});
    Matrix b(1, 3, {1.0, 2.0, 5.0});
    CHECK(euclidean_distance(summary_of(a), summary_of(a)) == 0.0);
    CHECK(euclidean_distance(summary_of(a), summary_of(b)) == doctest::Approx(2.0));
    CHECK(euclidean_distance(summary_of(a), summary_of(b)) ==
          euclidean_distance(summary_of(b), summary_of(a)));
}

TEST_CASE("euclidean distance demands equal lengths") {
    Matrix a(1, 3, {1.0, 2.0, 3.0});
    Matrix b(1, 4, {1.0, 2.0, 3.0, 4.0});
    CHECK_THROWS_AS(euclidean_distance(summary_of(a), summary_of(b)), ValidationError);
}

TEST_CASE("cos_cov closed forms") {
    LayerSummary self = gaussian_summary({1.0, 2.0}, 0.0);
    CHECK(cos_cov(self, self) == doctest::Approx(1.0));

    LayerSummary a = gaussian_summary({1.0, 2.0}, 0.0);
    LayerSummary b = gaussian_summary({2.0, 1.0}, 0.0);
    CHECK(cos_cov(a, b) == doctest::Approx(0.8));

    LayerSummary eye = gaussian_summary({1.0, 1.0, 1.0}, 0.0);
    LayerSummary eye5 = gaussian_summary({5.0, 5.0, 5.0}, 0.0);
    CHECK(cos_cov(eye, eye5) == doctest::Approx(1.0)); // scale invariant
}

TEST_CASE("cos_cov rejects zero covariance") {
    LayerSummary z = gaussian_summary({0.0, 0.0}, 0.0);
    LayerSummary a = gaussian_summary({1.0, 1.0}, 0.0);
    CHECK_THROWS_AS(cos_cov(z, a), ValidationError);
}

TEST_CASE("kl_cov closed forms include the -d term") {
    LayerSummary one = gaussian_summary({1.0}, 0.0);
    LayerSummary two = gaussian_summary({2.0}, 0.0);
    CHECK(kl_cov(two, two) == doctest::Approx(0.0).epsilon(1e-10));
    // KL(N(0,2) || N(0,1)) = (1/2)(2 - 1 + ln(1/2)) = (1/2)(1 - ln 2)
    CHECK(kl_cov(two, one) == doctest::Approx(0.15342640972002736));
    CHECK(skl_cov(one, two) == doctest::Approx(0.125));
    CHECK(skl_cov(one, two) == doctest::Approx(skl_cov(two, one)));
}

TEST_CASE("kl_cov self-divergence vanishes on random covariances") {
    Rng rng(71);
    for (int rep = 0; rep < 5; ++rep) {
        LayerSummary s;
        s.rows = 2;
        s.cols = 6;
        s.cov = random_pd(6, 0.3, 3.0, rng);
        s.softmax_rows = Matrix(1, 1, {1.0});
        s.flat_weights = {0.0};
        CHECK(std::abs(kl_cov(s, s)) < 1e-10);
    }
}

TEST_CASE("bures_ws2 closed forms") {
    LayerSummary n01 = gaussian_summary({1.0}, 0.0);
    LayerSummary n04 = gaussian_summary({4.0}, 0.0);
    CHECK(bures_ws2(n01, n01) == doctest::Approx(0.0));
    CHECK(bures_ws2(n01, n04) == doctest::Approx(1.0)); // |sigma_a - sigma_b|

    LayerSummary m0 = gaussian_summary({1.5, 0.5}, 0.0);
    LayerSummary m3 = gaussian_summary({1.5, 0.5}, 3.0);
    CHECK(bures_ws2(m0, m3) == doctest::Approx(3.0)); // pure mean shift
}

TEST_CASE("bures_ws2 on commuting covariances matches the diagonal closed form") {
    Rng rng(72);
    for (int rep = 0; rep < 10; ++rep) {
        const std::size_t d = 2 + rng.index(6);
        std::vector<double> la(d), lb(d);
        for (double& v : la) v = rng.uniform(0.1, 4.0);
        for (double& v : lb) v = rng.uniform(0.1, 4.0);
        LayerSummary a = gaussian_summary(la, 0.0);
        LayerSummary b = gaussian_summary(lb, 0.0);
        double expected = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double diff = std::sqrt(la[i]) - std::sqrt(lb[i]);
            expected += diff * diff;
        }
        expected = std::sqrt(expected);
        CHECK(bures_ws2(a, b) == doctest::Approx(expected).epsilon(1e-8));
    }
}

TEST_CASE("hungarian prefers the diagonal when it dominates") {
    Matrix cost(3, 3);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) cost(i, j) = i == j ? 0.1 : 5.0;
    Assignment a = hungarian(cost);
    for (std::size_t i = 0; i < 3; ++i) CHECK(a.permutation[i] == i);
    CHECK(a.total_cost == doctest::Approx(0.3));
}

TEST_CASE("hungarian 2x2 hand example") {
    Matrix cost(2, 2, {1.0, 2.0, 2.0, 1.0});
    Assignment a = hungarian(cost);
    CHECK(a.permutation[0] == 0);
    CHECK(a.permutation[1] == 1);
    CHECK(a.total_cost == doctest::Approx(2.0));
}

TEST_CASE("hungarian matches exhaustive search on random 5x5 matrices") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        Matrix cost(5, 5);
        for (double& v : cost.data) v = rng.uniform();
        Assignment a = hungarian(cost);
        CHECK(a.total_cost == doctest::Approx(brute_force_assignment(cost)).epsilon(1e-12));
        std::vector<char> seen(5, 0);
        for (std::size_t t : a.permutation) seen[t] = 1; // bijection
        for (char s : seen) CHECK(s == 1);
    }
}

TEST_CASE("hungarian enforces the size cap") {
    Matrix cost(kHungarianCap + 1, kHungarianCap + 1);
    CHECK_THROWS_AS(hungarian(cost), SizeLimitError);
}

TEST_CASE("exact_ws closed forms") {
    Matrix a(1, 2, {std::log(0.1), std::log(0.9)});
    Matrix b(1, 2, {std::log(0.9), std::log(0.1)});
    CHECK(exact_ws(summary_of(a), summary_of(a), 1.0) == 0.0);
    // permuted multiset: zero under the optimal assignment
    CHECK(exact_ws(summary_of(a), summary_of(b), 1.0) == doctest::Approx(0.0).epsilon(1e-12));

    Matrix c(1, 2, {std::log(0.2), std::log(0.8)});
    Matrix u(1, 2, {0.0, 0.0}); // softmax -> (0.5, 0.5)
    CHECK(exact_ws(summary_of(c), summary_of(u), 1.0) == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("exact_ws is invariant under permutations of either multiset") {
    Rng rng(73);
    std::vector<double> a(12), b(12);
    for (double& v : a) v = rng.uniform();
    for (double& v : b) v = rng.uniform();
    const double base = empirical_wasserstein(a, b, 2.0, false);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> pa = a;
        std::vector<double> pb = b;
        for (std::size_t i = pa.size(); i > 1; --i) std::swap(pa[i - 1], pa[rng.index(i)]);
        for (std::size_t i = pb.size(); i > 1; --i) std::swap(pb[i - 1], pb[rng.index(i)]);
        CHECK(empirical_wasserstein(pa, b, 2.0, false) == doctest::Approx(base).epsilon(1e-12));
        CHECK(empirical_wasserstein(a, pb, 2.0, false) == doctest::Approx(base).epsilon(1e-12));
    }
}

TEST_CASE("exact_ws under row permutations of a layer") {
    Rng rng(74);
    Matrix w = random_matrix(6, 4, rng);
    Matrix v = random_matrix(6, 4, rng);
    const double base = exact_ws(summary_of(w), summary_of(v));
    Matrix shuffled(6, 4);
    const std::size_t perm[6] = {3, 1, 5, 0, 2, 4};
    for (std::size_t r = 0; r < 6; ++r)
        for (std::size_t c = 0; c < 4; ++c) shuffled(perm[r], c) = v(r, c);
    CHECK(exact_ws(summary_of(w), summary_of(shuffled)) ==
          doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("empirical wasserstein approaches the gaussian closed form") {
    // 256 draws per side; normalized empirical W2 vs the two-gaussian formula
    Rng rng(7);
    std::vector<double> x(256), y(256);
    for (double& v : x) v = rng.gaussian();
    for (double& v : y) v = 0.3 + 1.2 * rng.gaussian();
    const double closed = std::sqrt(0.3 * 0.3 + (1.0 - 1.2) * (1.0 - 1.2));
    const double emp = empirical_wasserstein(x, y, 2.0, true);
    CHECK(std::abs(emp - closed) < 0.1);
}

TEST_CASE("riemannian metrics vanish at identical covariances") {
    Rng rng(75);
    LayerSummary s;
    s.rows = 2;
    s.cols = 5;
    s.cov = random_pd(5, 0.5, 2.0, rng);
    s.softmax_rows = Matrix(1, 1, {1.0});
    s.flat_weights = {0.0};
    CHECK(airm(s, s) == doctest::Approx(0.0).epsilon(1e-8));
    CHECK(lerm(s, s) == doctest::Approx(0.0).epsilon(1e-8));
    CHECK(std::abs(jbld(s, s)) < 1e-10);
}

TEST_CASE("airm and jbld 1-d closed forms") {
    LayerSummary one = gaussian_summary({1.0}, 0.0);
    LayerSummary esq = gaussian_summary({std::exp(2.0)}, 0.0);
    CHECK(airm(one, esq) == doctest::Approx(2.0));

    LayerSummary three = gaussian_summary({3.0}, 0.0);
    CHECK(jbld(one, three) == doctest::Approx(0.1438410362258904));
}

TEST_CASE("jbld is invariant under inversion") {
    Rng rng(76);
    LayerSummary a;
    a.rows = 2;
    a.cols = 4;
    a.cov = random_pd(4, 0.5, 3.0, rng);
    a.softmax_rows = Matrix(1, 1, {1.0});
    a.flat_weights = {0.0};
    LayerSummary b = a;
    b.cov = random_pd(4, 0.5, 3.0, rng);

    LayerSummary ai = a;
    ai.cov = psd_inverse(*a.cov);
    LayerSummary bi = b;
    bi.cov = psd_inverse(*b.cov);
    CHECK(jbld(ai, bi) == doctest::Approx(jbld(a, b)).epsilon(1e-8));
}

TEST_CASE("jbld theorem bounds against squared airm") {
    // eigenvalues in [m, M] = [0.5, 4]; jbld <= airm^2 and
    // airm^2 <= 2 ln(M/m) (jbld + d ln 2)
    const double m = 0.5;
    const double M = 4.0;
    Rng rng(77);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t d = 1 + rng.index(16);
        LayerSummary a;
        a.rows = 2;
        a.cols = d;
        a.cov = random_pd(d, m + 1e-6, M - 1e-6, rng);
        a.softmax_rows = Matrix(1, 1, {1.0});
        a.flat_weights = {0.0};
        LayerSummary b = a;
        b.cov = random_pd(d, m + 1e-6, M - 1e-6, rng);

        const double j = jbld(a, b);
        const double r2 = airm(a, b) * airm(a, b);
        CHECK(j <= r2 + 1e-6);
        CHECK(r2 <= 2.0 * std::log(M / m) * (j + static_cast<double>(d) * std::log(2.0)) + 1e-6);
    }
}

TEST_CASE("cca of a layer with itself approaches 1") {
    Rng rng(78);
    Matrix a = random_matrix(64, 6, rng);
    CcaResult r = cca_rho(a, a, 1e-6);
    CHECK(r.rho > 0.99);
    CHECK(r.rho <= 1.0 + 1e-9);
}

TEST_CASE("cca is invariant to a common orthonormal right factor") {
    Rng rng(79);
    Matrix a = random_matrix(48, 6, rng);
    Matrix u = random_orthonormal(6, rng);
    const double self = cca_rho(a, a, 1e-4).rho;
    const double rotated = cca_rho(a, matmul(a, u), 1e-4).rho;
    CHECK(std::abs(self - rotated) < 1e-6);
}

TEST_CASE("cca of independent wide samples stays small") {
    Rng rng(80);
    Matrix a = random_matrix(256, 8, rng);
    Matrix b = random_matrix(256, 8, rng);
    CHECK(cca_rho(a, b, 1e-4).rho < 0.5);
}

TEST_CASE("cca validates its inputs") {
    Rng rng(81);
    Matrix a = random_matrix(10, 3, rng);
    Matrix b = random_matrix(12, 3, rng);
    CHECK_THROWS_AS(cca_rho(a, b, 1e-4), ValidationError);
    Matrix c = random_matrix(10, 3, rng);
    CHECK_THROWS_AS(cca_rho(a, c, 0.0), ValidationError);
}

TEST_CASE("cca projections are unit vectors") {
    Rng rng(82);
    Matrix a = random_matrix(32, 5, rng);
    Matrix b = random_matrix(32, 4, rng);
    CcaResult r = cca_rho(a, b, 1e-4);
    double na = 0.0, nb = 0.0;
    for (double v : r.projection_a) na += v * v;
    for (double v : r.projection_b) nb += v * v;
    CHECK(std::sqrt(na) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::sqrt(nb) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("blocked cca averages the per-block coefficients") {
    Rng rng(83);
    Matrix a = random_matrix(40, 12, rng);
    const double dense = cca_rho(a, a, 1e-6, 128).rho;
    CHECK(dense > 0.99);
    // cap 6 forces two blocks of the same trivially self-similar matrix
    const double blocked = cca_rho(a, a, 1e-6, 6).rho;
    CHECK(blocked > 0.99);
}

TEST_CASE("metric axioms: identity and symmetry on random layers") {
    // tall layers so the sample covariances are full rank; the
    // inversion-based metrics are only this sharp away from singularity
    Rng rng(84);
    for (int rep = 0; rep < 5; ++rep) {
        Matrix wa = random_matrix(24, 8, rng);
        Matrix wb = random_matrix(24, 8, rng);
        LayerSummary a = summary_of(wa);
        LayerSummary b = summary_of(wb);
        for (MetricKind k : {MetricKind::euclidean, MetricKind::cos_cov, MetricKind::skl_cov,
                             MetricKind::bures_ws2, MetricKind::exact_ws, MetricKind::airm,
                             MetricKind::lerm, MetricKind::jbld, MetricKind::cca}) {
            const double dab = ranked_distance(a, b, k);
            const double dba = ranked_distance(b, a, k);
            CHECK(std::abs(dab - dba) <= 1e-10 * (1.0 + std::abs(dab)));
            const double self = ranked_distance(a, a, k);
            if (k == MetricKind::cca) {
                CHECK(self < 0.01); // rho > 0.99 under the default ridge
            } else {
                CHECK(std::abs(self) <= 1e-8);
            }
        }
    }
}

TEST_CASE("orthogonal invariance of cos_cov and zero-mean bures") {
    Rng rng(85);
    Matrix wa = random_matrix(10, 6, rng);
    Matrix wb = random_matrix(10, 6, rng);
    Matrix u = random_orthonormal(6, rng);
    LayerSummary a = summary_of(wa);
    LayerSummary b = summary_of(wb);
    LayerSummary au = summary_of(matmul(wa, u));
    LayerSummary bu = summary_of(matmul(wb, u));

    CHECK(std::abs(cos_cov(a, b) - cos_cov(au, bu)) < 1e-8);

    // zero-mean variant: the bures term depends on the covariances alone
    a.mean = b.mean = au.mean = bu.mean = 0.0;
    CHECK(std::abs(bures_ws2(a, b) - bures_ws2(au, bu)) < 1e-8);
}

TEST_CASE("pairwise_distances counts entries per mode") {
    Rng rng(86);
    NetworkModel m;
    for (int l = 0; l < 3; ++l) {
        Layer layer;
        layer.weights = random_matrix(4, 4, rng);
        layer.bias.assign(4, 0.0);
        layer.activation = Activation::tanh_fn;
        m.layers.push_back(std::move(layer));
    }

    SimilarityReport adj = pairwise_distances(m, MetricKind::euclidean, RankMode::adjacent);
    CHECK(adj.entries().size() == 2);
    SimilarityReport glob = pairwise_distances(m, MetricKind::euclidean, RankMode::global);
    CHECK(glob.entries().size() == 3);

    // symmetric with zero diagonal
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(glob.distances(i, i) == 0.0);
        for (std::size_t j = i + 1; j < 3; ++j)
            CHECK(glob.distances(i, j) == glob.distances(j, i));
    }
}

TEST_CASE("duplicate layers have zero distance under every metric") {
    Rng rng(87);
    NetworkModel m;
    Layer proto;
    proto.weights = random_matrix(12, 5, rng);
    proto.bias.assign(5, 0.0);
    proto.activation = Activation::tanh_fn;
    m.layers.push_back(proto);
    Layer middle;
    middle.weights = random_matrix(12, 5, rng);
    middle.bias.assign(5, 0.0);
    middle.activation = Activation::tanh_fn;
    m.layers.push_back(middle);
    m.layers.push_back(proto); // duplicate of layer 0

    for (MetricKind k : {MetricKind::euclidean, MetricKind::cos_cov, MetricKind::kl_cov,
                         MetricKind::skl_cov, MetricKind::bures_ws2, MetricKind::exact_ws,
                         MetricKind::airm, MetricKind::lerm, MetricKind::jbld,
                         MetricKind::cca}) {
        SimilarityReport r = pairwise_distances(m, k, RankMode::global);
        if (k == MetricKind::cca) {
            CHECK(r.distances(0, 2) < 0.01);
        } else {
            CHECK(std::abs(r.distances(0, 2)) <= 1e-8);
        }
    }
}

TEST_CASE("pairwise_distances rejects single-layer models") {
    NetworkModel m;
    Layer l;
    l.weights = Matrix(2, 2);
    l.bias.assign(2, 0.0);
    m.layers.push_back(l);
    CHECK_THROWS_AS(pairwise_distances(m, MetricKind::euclidean, RankMode::global),
                    ValidationError);
}

TEST_CASE("similarity csv round trips through report_from_csv") {
    Rng rng(88);
    NetworkModel m;
    for (int l = 0; l < 4; ++l) {
        Layer layer;
        layer.weights = random_matrix(3, 3, rng);
        layer.bias.assign(3, 0.0);
        layer.activation = Activation::tanh_fn;
        m.layers.push_back(std::move(layer));
    }
    SimilarityReport r = pairwise_distances(m, MetricKind::bures_ws2, RankMode::adjacent);
    SimilarityReport back = report_from_csv(r.to_csv());
    CHECK(back.metric == MetricKind::bures_ws2);
    CHECK(back.mode == RankMode::adjacent);
    CHECK(back.n_layers == 4);
    for (const auto& e : r.entries())
        CHECK(back.distances(e.i, e.j) == e.distance); // 17 digits round-trip exactly
}

#include "lf/metrics.hpp"

#include "lf/errors.hpp"
#include "lf/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace lf {

Matrix LayerSummary::weights_matrix() const { return Matrix(rows, cols, flat_weights); }

const SymmetricPsd& LayerSummary::covariance() const {
    if (!cov)
        throw ValidationError("degenerate layer: covariance undefined for layer " +
                              std::to_string(layer_index));
    return *cov;
}

LayerSummary summarize_matrix(const Matrix& w, int layer_index, Activation activation,
                              std::size_t block_cap) {
    LayerSummary s;
    s.layer_index = layer_index;
    s.rows = w.rows;
    s.cols = w.cols;
    s.activation = activation;
    s.flat_weights = w.data;
    double acc = 0.0;
    for (double v : w.data) acc += v;
    s.mean = w.size() ? acc / static_cast<double>(w.size()) : 0.0;
    if (w.rows >= 2) s.cov = covariance(w, block_cap);
    s.softmax_rows = row_softmax(w);
    return s;
}

LayerSummary summarize_layer(const NetworkModel& model, std::size_t index,
                             std::size_t block_cap) {
    if (index >= model.layers.size()) throw ValidationError("layer index out of range");
    const Layer& layer = model.layers[index];
    return summarize_matrix(layer.weights, static_cast<int>(index), layer.activation,
                            block_cap);
}

std::string metric_name(MetricKind k) {
    switch (k) {
        case MetricKind::euclidean: return "euclidean";
        case MetricKind::cos_cov: return "cos_cov";
        case MetricKind::kl_cov: return "kl_cov";
        case MetricKind::skl_cov: return "skl_cov";
        case MetricKind::bures_ws2: return "bures_ws2";
        case MetricKind::exact_ws: return "exact_ws";
        case MetricKind::airm: return "airm";
        case MetricKind::lerm: return "lerm";
        case MetricKind::jbld: return "jbld";
        case MetricKind::cca: return "cca";
    }
    return "euclidean";
}

MetricKind metric_from_name(const std::string& name) {
    for (MetricKind k : {MetricKind::euclidean, MetricKind::cos_cov, MetricKind::kl_cov,
                         MetricKind::skl_cov, MetricKind::bures_ws2, MetricKind::exact_ws,
                         MetricKind::airm, MetricKind::lerm, MetricKind::jbld,
                         MetricKind::cca})
        if (metric_name(k) == name) return k;
    throw ValidationError("unknown metric: " + name);
}

double euclidean_distance(const LayerSummary& a, const LayerSummary& b) {
    if (a.flat_weights.size() != b.flat_weights.size())
        throw ValidationError("alignment required: flattened lengths differ");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.flat_weights.size(); ++i) {
        const double d = a.flat_weights[i] - b.flat_weights[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

namespace {

void require_same_cov_dim(const LayerSummary& a, const LayerSummary& b) {
    if (a.covariance().dim != b.covariance().dim)
        throw ValidationError("covariance dimensions differ; align layers first");
}

double sym_trace_product(const Matrix& a, const Matrix& b) {
    // tr(AB) = sum_ij A_ij B_ij for symmetric A, B
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) acc += a.data[i] * b.data[i];
    return acc;
}

} // namespace

double cos_cov(const LayerSummary& a, const LayerSummary& b) {
    require_same_cov_dim(a, b);
    const Matrix& sa = a.covariance().mat;
    const Matrix& sb = b.covariance().mat;
    const double na = frobenius_norm(sa);
    const double nb = frobenius_norm(sb);
    if (na <= 0.0 || nb <= 0.0)
        throw ValidationError("degenerate layer: zero covariance norm");
    return sym_trace_product(sa, sb) / (na * nb);
}

double kl_cov(const LayerSummary& a, const LayerSummary& b) {
    require_same_cov_dim(a, b);
    const SymmetricPsd sa = ridge_floor(a.covariance());
    const SymmetricPsd sb = ridge_floor(b.covariance());
    const std::size_t d = sa.dim;
    const SymmetricPsd sb_inv = psd_inverse(sb);
    const double tr_term = sym_trace_product(sb_inv.mat, sa.mat);
    return 0.5 * (tr_term - static_cast<double>(d) + logdet(sb) - logdet(sa));
}

double skl_cov(const LayerSummary& a, const LayerSummary& b) {
    return 0.5 * (kl_cov(a, b) + kl_cov(b, a));
}

double bures_ws2(const LayerSummary& a, const LayerSummary& b) {
    require_same_cov_dim(a, b);
    const SymmetricPsd& sa = a.covariance();
    const SymmetricPsd& sb = b.covariance();
    // identical gaussians are exactly at distance zero; the spectral route
    // below would return sqrt(cancellation noise) instead
    if (a.mean == b.mean && sa.mat.data == sb.mat.data) return 0.0;
    const SymmetricPsd root = matrix_sqrt(sa);
    const Matrix inner = matmul(matmul(root.mat, sb.mat), root.mat);
    // inner is PSD up to roundoff; symmetrize before the eigensolve
    Matrix symm(inner.rows, inner.cols);
    for (std::size_t i = 0; i < inner.rows; ++i)
        for (std::size_t j = 0; j < inner.cols; ++j)
            symm(i, j) = 0.5 * (inner(i, j) + inner(j, i));
    EigenDecomposition eig = sym_eig(SymmetricPsd(std::move(symm)));
    double cross = 0.0;
    for (double lambda : eig.eigenvalues) cross += std::sqrt(std::max(lambda, 0.0));
    const double dmu = a.mean - b.mean;
    const double w2 = dmu * dmu + trace(sa.mat) + trace(sb.mat) - 2.0 * cross;
    return std::sqrt(std::max(w2, 0.0));
}

Assignment hungarian(const Matrix& cost) {
    if (cost.rows != cost.cols) throw ValidationError("hungarian needs a square cost matrix");
    const std::size_t n = cost.rows;
    if (n == 0) return {};
    if (n > kHungarianCap)
        throw SizeLimitError("assignment size " + std::to_string(n) + " exceeds cap " +
                             std::to_string(kHungarianCap) + "; use bures_ws2 instead");

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0);
    std::vector<double> v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0);
    std::vector<std::size_t> way(n + 1, 0);

    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            std::size_t j1 = 0;
            double delta = inf;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    Assignment out;
    out.permutation.assign(n, 0);
    for (std::size_t j = 1; j <= n; ++j)
        if (p[j] != 0) out.permutation[p[j] - 1] = j - 1;
    // canonical (sorted) summation: the total depends only on the multiset of
    // selected costs, so permuted inputs give bit-identical totals
    std::vector<double> picked(n);
    for (std::size_t i = 0; i < n; ++i) picked[i] = cost(i, out.permutation[i]);
    std::sort(picked.begin(), picked.end());
    for (double v : picked) out.total_cost += v;
    return out;
}

double empirical_wasserstein(const std::vector<double>& a, const std::vector<double>& b,
                             double p, bool normalized) {
    if (a.size() != b.size())
        throw ValidationError("alignment required: multiset sizes differ");
    if (p < 1.0) throw ValidationError("wasserstein order must be >= 1");
    const std::size_t d = a.size();
    if (d == 0) return 0.0;
    if (d > kHungarianCap)
        throw SizeLimitError("exact wasserstein limited to " +
                             std::to_string(kHungarianCap) + " elements; use bures_ws2");
    Matrix cost(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            cost(i, j) = std::pow(std::abs(a[i] - b[j]), p);
    Assignment asg = hungarian(cost);
    double total = asg.total_cost;
    if (normalized) total /= static_cast<double>(d);
    return std::pow(total, 1.0 / p);
}

double exact_ws(const LayerSummary& a, const LayerSummary& b, double p) {
    return empirical_wasserstein(a.softmax_rows.data, b.softmax_rows.data, p,
                                 /*normalized=*/false);
}

double airm(const LayerSummary& a, const LayerSummary& b) {
    require_same_cov_dim(a, b);
    const SymmetricPsd sa = ridge_floor(a.covariance());
    const SymmetricPsd sb = ridge_floor(b.covariance());
    const SymmetricPsd isqrt = inverse_sqrt(sa, 0.0);
    const Matrix inner = matmul(matmul(isqrt.mat, sb.mat), isqrt.mat);
    Matrix symm(inner.rows, inner.cols);
    for (std::size_t i = 0; i < inner.rows; ++i)
        for (std::size_t j = 0; j < inner.cols; ++j)
            symm(i, j) = 0.5 * (inner(i, j) + inner(j, i));
    const Matrix lg = matrix_log(SymmetricPsd(std::move(symm)));
    return frobenius_norm(lg);
}

double lerm(const LayerSummary& a, const LayerSummary& b) {
    require_same_cov_dim(a, b);
    const Matrix la = matrix_log(ridge_floor(a.covariance()));
    const Matrix lb = matrix_log(ridge_floor(b.covariance()));
    return frobenius_norm(subtract(la, lb));
}

double jbld(const LayerSummary& a, const LayerSummary& b) {
    require_same_cov_dim(a, b);
    const SymmetricPsd sa = ridge_floor(a.covariance());
    const SymmetricPsd sb = ridge_floor(b.covariance());
    Matrix avg = scale(add(sa.mat, sb.mat), 0.5);
    const double ld_avg = logdet(SymmetricPsd(std::move(avg)));
    return ld_avg - 0.5 * (logdet(sa) + logdet(sb));
}

namespace {

Matrix center_columns(const Matrix& w) {
    Matrix out = w;
    for (std::size_t j = 0; j < w.cols; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < w.rows; ++i) mean += w(i, j);
        mean /= static_cast<double>(w.rows);
        for (std::size_t i = 0; i < w.rows; ++i) out(i, j) -= mean;
    }
    return out;
}

CcaResult cca_dense(const Matrix& a, const Matrix& b, double ridge) {
    const std::size_t n = a.rows;
    const double inv = 1.0 / static_cast<double>(n - 1);
    const Matrix za = center_columns(a);
    const Matrix zb = center_columns(b);
    const Matrix saa = scale(matmul(transpose(za), za), inv);
    const Matrix sbb = scale(matmul(transpose(zb), zb), inv);
    const Matrix sab = scale(matmul(transpose(za), zb), inv);

    const SymmetricPsd wa = inverse_sqrt(SymmetricPsd(saa), ridge);
    const SymmetricPsd wb = inverse_sqrt(SymmetricPsd(sbb), ridge);
    const Matrix t = matmul(matmul(wa.mat, sab), wb.mat);

    const Matrix tt = matmul(transpose(t), t);
    Matrix symm(tt.rows, tt.cols);
    for (std::size_t i = 0; i < tt.rows; ++i)
        for (std::size_t j = 0; j < tt.cols; ++j) symm(i, j) = 0.5 * (tt(i, j) + tt(j, i));
    EigenDecomposition eig = sym_eig(SymmetricPsd(std::move(symm)));

    CcaResult out;
    out.ridge = ridge;
    const double lmax = eig.eigenvalues.empty() ? 0.0 : std::max(eig.eigenvalues[0], 0.0);
    out.rho = std::sqrt(lmax);

    // canonical directions mapped back through the whitening transforms
    std::vector<double> v(t.cols, 0.0);
    for (std::size_t i = 0; i < t.cols; ++i) v[i] = eig.eigenvectors(i, 0);
    std::vector<double> tv(t.rows, 0.0);
    for (std::size_t i = 0; i < t.rows; ++i)
        for (std::size_t j = 0; j < t.cols; ++j) tv[i] += t(i, j) * v[j];

    auto apply_and_normalize = [](const Matrix& m, const std::vector<double>& x) {
        std::vector<double> y(m.rows, 0.0);
        for (std::size_t i = 0; i < m.rows; ++i)
            for (std::size_t j = 0; j < m.cols; ++j) y[i] += m(i, j) * x[j];
        double norm = 0.0;
        for (double e : y) norm += e * e;
        norm = std::sqrt(norm);
        if (norm > 0.0)
            for (double& e : y) e /= norm;
        return y;
    };
    out.projection_a = apply_and_normalize(wa.mat, tv);
    out.projection_b = apply_and_normalize(wb.mat, v);
    return out;
}

} // namespace

CcaResult cca_rho(const Matrix& a, const Matrix& b, double ridge, std::size_t block_cap) {
    if (a.rows != b.rows)
        throw ValidationError("cca requires equal observation (row) counts");
    if (a.rows < 2) throw ValidationError("cca needs at least 2 rows");
    if (ridge <= 0.0) throw ValidationError("cca ridge must be positive");
    if (block_cap == 0) block_cap = 128;

    if (a.cols <= block_cap && b.cols <= block_cap) return cca_dense(a, b, ridge);

    // expectation over corresponding column-block pairs for wide layers
    auto slice = [](const Matrix& m, std::size_t c0, std::size_t c1) {
        Matrix out(m.rows, c1 - c0);
        for (std::size_t i = 0; i < m.rows; ++i)
            for (std::size_t j = c0; j < c1; ++j) out(i, j - c0) = m(i, j);
        return out;
    };
    const std::size_t na = (a.cols + block_cap - 1) / block_cap;
    const std::size_t nb = (b.cols + block_cap - 1) / block_cap;
    const std::size_t blocks = std::min(na, nb);
    CcaResult first;
    double acc = 0.0;
    for (std::size_t bi = 0; bi < blocks; ++bi) {
        const Matrix pa = slice(a, bi * block_cap, std::min((bi + 1) * block_cap, a.cols));
        const Matrix pb = slice(b, bi * block_cap, std::min((bi + 1) * block_cap, b.cols));
        CcaResult r = cca_dense(pa, pb, ridge);
        if (bi == 0) first = r;
        acc += r.rho;
    }
    first.rho = acc / static_cast<double>(blocks);
    return first;
}

CcaResult cca_rho(const LayerSummary& a, const LayerSummary& b, double ridge,
                  std::size_t block_cap) {
    return cca_rho(a.weights_matrix(), b.weights_matrix(), ridge, block_cap);
}

std::string rank_mode_name(RankMode m) {
    return m == RankMode::global ? "global" : "adjacent";
}

RankMode rank_mode_from_name(const std::string& name) {
    if (name == "global") return RankMode::global;
    if (name == "adjacent") return RankMode::adjacent;
    throw ValidationError("unknown ranking mode: " + name);
}

double ranked_distance(const LayerSummary& a, const LayerSummary& b, MetricKind metric,
                       double cca_ridge) {
    const LayerSummary* pa = &a;
    const LayerSummary* pb = &b;
    std::pair<LayerSummary, LayerSummary> aligned;
    if (a.rows != b.rows || a.cols != b.cols) {
        aligned = align_summaries(a, b);
        pa = &aligned.first;
        pb = &aligned.second;
    }
    switch (metric) {
        case MetricKind::euclidean: return euclidean_distance(*pa, *pb);
        case MetricKind::cos_cov: return 1.0 - cos_cov(*pa, *pb);
        case MetricKind::kl_cov: // ranking uses the symmetrized divergence
        case MetricKind::skl_cov: return skl_cov(*pa, *pb);
        case MetricKind::bures_ws2: return bures_ws2(*pa, *pb);
        case MetricKind::exact_ws: return exact_ws(*pa, *pb, 2.0);
        case MetricKind::airm: return airm(*pa, *pb);
        case MetricKind::lerm: return lerm(*pa, *pb);
        case MetricKind::jbld: return jbld(*pa, *pb);
        case MetricKind::cca: return 1.0 - cca_rho(*pa, *pb, cca_ridge).rho;
    }
    throw ValidationError("unknown metric");
}

std::vector<SimilarityReport::Entry> SimilarityReport::entries() const {
    std::vector<Entry> out;
    for (std::size_t i = 0; i < n_layers; ++i)
        for (std::size_t j = i + 1; j < n_layers; ++j)
            if (!std::isnan(distances(i, j))) out.push_back({i, j, distances(i, j)});
    return out;
}

std::string SimilarityReport::to_csv() const {
    std::string out = "layer_i,layer_j,metric,distance\n";
    char buf[64];
    for (const Entry& e : entries()) {
        std::snprintf(buf, sizeof(buf), "%.17g", e.distance);
        out += std::to_string(e.i) + "," + std::to_string(e.j) + "," +
               metric_name(metric) + "," + buf + "\n";
    }
    return out;
}

SimilarityReport pairwise_distances(const NetworkModel& model, MetricKind metric,
                                    RankMode mode, std::size_t block_cap,
                                    double cca_ridge) {
    const std::size_t n = model.layers.size();
    if (n < 2) throw ValidationError("nothing to rank: model has fewer than 2 layers");

    SimilarityReport report;
    report.metric = metric;
    report.mode = mode;
    report.n_layers = n;
    report.distances = Matrix(n, n);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (double& v : report.distances.data) v = nan;
    for (std::size_t i = 0; i < n; ++i) report.distances(i, i) = 0.0;

    report.summaries.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        report.summaries.push_back(summarize_layer(model, i, block_cap));

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (mode == RankMode::adjacent && j != i + 1) continue;
            const double d =
                ranked_distance(report.summaries[i], report.summaries[j], metric, cca_ridge);
            report.distances(i, j) = d;
            report.distances(j, i) = d;
        }
    }
    return report;
}

SimilarityReport report_from_csv(const std::string& csv_text) {
    std::stringstream ss(csv_text);
    std::string line;
    if (!std::getline(ss, line) || line != "layer_i,layer_j,metric,distance")
        throw FormatError("similarity csv: bad header");

    struct Row {
        std::size_t i, j;
        double d;
    };
    std::vector<Row> rows;
    std::string metric;
    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string ci, cj, cm, cd;
        if (!std::getline(ls, ci, ',') || !std::getline(ls, cj, ',') ||
            !std::getline(ls, cm, ',') || !std::getline(ls, cd, ','))
            throw FormatError("similarity csv: bad row: " + line);
        if (metric.empty()) metric = cm;
        else if (metric != cm)
            throw FormatError("similarity csv: mixed metrics");
        try {
            rows.push_back({static_cast<std::size_t>(std::stoull(ci)),
                            static_cast<std::size_t>(std::stoull(cj)), std::stod(cd)});
        } catch (const std::exception&) {
            throw FormatError("similarity csv: unparsable row: " + line);
        }
    }
    if (rows.empty()) throw FormatError("similarity csv: no data rows");

    std::size_t n = 0;
    for (const Row& r : rows) n = std::max({n, r.i + 1, r.j + 1});

    SimilarityReport report;
    report.metric = metric_from_name(metric);
    report.n_layers = n;
    report.distances = Matrix(n, n);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (double& v : report.distances.data) v = nan;
    for (std::size_t i = 0; i < n; ++i) report.distances(i, i) = 0.0;
    bool all_adjacent = true;
    for (const Row& r : rows) {
        report.distances(r.i, r.j) = r.d;
        report.distances(r.j, r.i) = r.d;
        if (r.j != r.i + 1) all_adjacent = false;
    }
    const std::size_t full = n * (n - 1) / 2;
    report.mode =
        (rows.size() == full) ? RankMode::global
                              : (all_adjacent ? RankMode::adjacent : RankMode::global);
    return report;
}

} // namespace lf

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>

#include "leosinr/dmhsa.hpp"
#include "leosinr/rng.hpp"

using namespace leosinr;
using namespace leosinr::dmhsa;

namespace {

FeatureMatrix geo_features(size_t n_beams, const std::vector<std::pair<double, double>>& uv) {
    std::vector<geo::UvCoordinate> coords;
    for (const auto& [u, v] : uv) coords.push_back({u, v});
    return extract_features_geo(coords, n_beams);
}

// Straight-line re-implementation of the forward pass, written as one long
// per-user computation with its own conventions; the reference for both
// production paths.
std::vector<double> oracle_forward(const FeatureMatrix& f, const DmhsaParams& p) {
    const DmhsaConfig& cfg = p.config();
    const size_t nb = cfg.n_beams, nc = cfg.n_channels, nh = cfg.n_heads, dk = cfg.head_dim();
    const size_t delta = cfg.feature_dim();
    auto at = [](std::span<const double> m, size_t cols, size_t r, size_t c) {
        return m[r * cols + c];
    };

    // embedding stack, one user at a time
    std::vector<std::vector<double>> emb(nb, std::vector<double>(nc, 0.0));
    for (size_t u = 0; u < nb; ++u) {
        std::vector<double> h1(nc, 0.0);
        for (size_t j = 0; j < nc; ++j) {
            h1[j] = p.view("fc1_b")[j];
            for (size_t i = 0; i < delta; ++i)
                h1[j] += at(f.rows, delta, u, i) * at(p.view("fc1_w"), nc, i, j);
        }
        auto ln = [&](std::vector<double>& v, const char* gname, const char* bname) {
            double mean = 0.0;
            for (double x : v) mean += x;
            mean /= static_cast<double>(v.size());
            double var = 0.0;
            for (double x : v) var += (x - mean) * (x - mean);
            var /= static_cast<double>(v.size());
            const double inv = 1.0 / std::sqrt(var + 1e-5);
            for (size_t j = 0; j < v.size(); ++j)
                v[j] = p.view(gname)[j] * ((v[j] - mean) * inv) + p.view(bname)[j];
        };
        auto lrelu = [&](std::vector<double>& v) {
            for (double& x : v)
                if (x < 0.0) x *= cfg.leaky_slope;
        };
        ln(h1, "ln1_gamma", "ln1_beta");
        lrelu(h1);
        std::vector<double> h2(nc, 0.0);
        for (size_t j = 0; j < nc; ++j) {
            h2[j] = p.view("fc2_b")[j];
            for (size_t i = 0; i < nc; ++i) h2[j] += h1[i] * at(p.view("fc2_w"), nc, i, j);
        }
        ln(h2, "ln2_gamma", "ln2_beta");
        lrelu(h2);
        for (size_t j = 0; j < nc; ++j) emb[u][j] = h2[j] + at(p.view("pos_embedding"), nc, u, j);
    }

    auto run_module = [&](const std::string& mod, bool exclude_diagonal) {
        std::vector<std::vector<double>> merged(nb, std::vector<double>(nc, 0.0));
        for (size_t h = 0; h < nh; ++h) {
            const std::string hp = mod + "_h" + std::to_string(h);
            auto project = [&](const char* wname, const char* bname, size_t u) {
                std::vector<double> out(dk, 0.0);
                for (size_t j = 0; j < dk; ++j) {
                    out[j] = p.view(hp + bname)[j];
                    for (size_t i = 0; i < nc; ++i)
                        out[j] += emb[u][i] * at(p.view(hp + wname), dk, i, j);
                }
                return out;
            };
            for (size_t qu = 0; qu < nb; ++qu) {
                if (qu >= f.n_valid) continue;  // padded queries keep a zero context
                const std::vector<double> q = project("_wq", "_bq", qu);
                std::vector<double> weights(nb, 0.0);
                double max_score = -std::numeric_limits<double>::infinity();
                std::vector<double> scores(nb, 0.0);
                for (size_t ku = 0; ku < f.n_valid; ++ku) {
                    if (exclude_diagonal && ku == qu) continue;
                    const std::vector<double> k = project("_wk", "_bk", ku);
                    double s = 0.0;
                    for (size_t j = 0; j < dk; ++j) s += q[j] * k[j];
                    s /= std::sqrt(static_cast<double>(dk));
                    scores[ku] = s;
                    max_score = std::max(max_score, s);
                }
                if (!std::isfinite(max_score)) continue;
                double denom = 0.0;
                for (size_t ku = 0; ku < f.n_valid; ++ku) {
                    if (exclude_diagonal && ku == qu) continue;
                    weights[ku] = std::exp(scores[ku] - max_score);
                    denom += weights[ku];
                }
                for (size_t ku = 0; ku < f.n_valid; ++ku) {
                    if (exclude_diagonal && ku == qu) continue;
                    const std::vector<double> v = project("_wv", "_bv", ku);
                    for (size_t j = 0; j < dk; ++j)
                        merged[qu][h * dk + j] += weights[ku] / denom * v[j];
                }
            }
        }
        std::vector<double> head(nb, 0.0);
        for (size_t u = 0; u < nb; ++u) {
            std::vector<double> proj(nc, 0.0);
            for (size_t j = 0; j < nc; ++j) {
                proj[j] = p.view(mod + "_out_b")[j];
                for (size_t i = 0; i < nc; ++i)
                    proj[j] += merged[u][i] * at(p.view(mod + "_out_w"), nc, i, j);
            }
            head[u] = p.view(mod + "_head_b")[0];
            for (size_t i = 0; i < nc; ++i) head[u] += proj[i] * p.view(mod + "_head_w")[i];
        }
        return head;
    };

    const std::vector<double> snr = run_module("snr", false);
    const std::vector<double> inr = run_module("inr", true);
    std::vector<double> out(nb);
    for (size_t u = 0; u < nb; ++u) out[u] = snr[u] - inr[u];
    return out;
}

}  // namespace

TEST_CASE("csi features: phase scaling, standardization zero point, rho") {
    channel::ChannelMatrix h;
    h.coefficients = CxMatrix(2, 4);
    for (size_t n = 0; n < 4; ++n) {
        h.coefficients(0, n) = cxd{-1.0, 0.0};  // phase pi
        h.coefficients(1, n) = cxd{2.0, 0.0};   // |.|^2 = 4
    }
    LabelStandardizer s;
    s.mu_h = 4.0;
    s.sigma_h = 2.0;
    const FeatureMatrix f = extract_features_csi(h, 8, s);
    CHECK(f.feature_dim == 6);
    CHECK(f.n_valid == 2);
    const double expected_phase = kPi / kPhaseSigma;  // = sqrt(3)
    CHECK(f.rows[0] == doctest::Approx(expected_phase).epsilon(1e-12));
    CHECK(f.rows[0] == doctest::Approx(std::sqrt(3.0)).epsilon(1e-4));
    // user 1: mean |H|^2 = 4 = mu_h, so psi = 0
    CHECK(f.rows[1 * 6 + 4] == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(f.rows[5] == doctest::Approx(2.0 / 8.0).epsilon(1e-15));  // rho
    // padded rows all zero
    for (size_t u = 2; u < 8; ++u)
        for (size_t j = 0; j < 6; ++j) CHECK(f.rows[u * 6 + j] == 0.0);

    channel::ChannelMatrix full;
    full.coefficients = CxMatrix(8, 4);
    for (size_t u = 0; u < 8; ++u)
        for (size_t n = 0; n < 4; ++n) full.coefficients(u, n) = cxd{1.0, 0.0};
    const FeatureMatrix ff = extract_features_csi(full, 8, s);
    for (size_t u = 0; u < 8; ++u) CHECK(ff.rows[u * 6 + 5] == 1.0);  // rho = 1
}

TEST_CASE("geo features") {
    const FeatureMatrix f = geo_features(24, {{0.0, 0.0}, {0.3, -0.4}});
    CHECK(f.feature_dim == 3);
    CHECK(f.rows[0] == 0.0);
    CHECK(f.rows[1] == 0.0);
    CHECK(f.rows[2] == doctest::Approx(2.0 / 24.0).epsilon(1e-15));
    CHECK(f.rows[3] == 0.3);
    CHECK(f.rows[4] == -0.4);

    std::vector<std::pair<double, double>> twelve(12, {0.1, 0.1});
    CHECK(geo_features(24, twelve).rows[2] == doctest::Approx(0.5).epsilon(1e-15));

    // permuting users permutes rows identically
    const FeatureMatrix a = geo_features(8, {{0.1, 0.2}, {0.3, 0.4}});
    const FeatureMatrix b = geo_features(8, {{0.3, 0.4}, {0.1, 0.2}});
    CHECK(a.rows[0] == b.rows[3]);
    CHECK(a.rows[3] == b.rows[0]);

    CHECK_THROWS_AS(geo_features(8, {{0.9, 0.9}}), ConfigError);
}

TEST_CASE("parameter counts sit in the published bands") {
    DmhsaConfig geo_cfg;
    geo_cfg.variant = Variant::kGeo;
    geo_cfg.n_beams = 24;
    const DmhsaParams geo_params(geo_cfg, 1);
    const size_t geo_count = count_parameters(geo_params);
    CHECK(geo_count >= 530);
    CHECK(geo_count <= 1000);
    CHECK(geo_count == 922);  // two FC blocks + PE + two 4-head modules with biases

    DmhsaConfig csi_cfg;
    csi_cfg.variant = Variant::kCsi;
    csi_cfg.n_beams = 24;
    csi_cfg.n_elements = 512;
    const DmhsaParams csi_params(csi_cfg, 1);
    const size_t csi_count = count_parameters(csi_params);
    CHECK(csi_count >= 4400);
    CHECK(csi_count <= 5400);
    CHECK(csi_count == 5010);
}

TEST_CASE("closed-form recount tracks N_C") {
    auto closed_form = [](size_t nb, size_t nc, size_t h, size_t delta) {
        const size_t dk = nc / h;
        const size_t embedding = (delta * nc + nc) + 2 * nc + (nc * nc + nc) + 2 * nc;
        const size_t pe = nb * nc;
        const size_t per_module = h * 3 * (nc * dk + dk) + (nc * nc + nc) + (nc + 1);
        return embedding + pe + 2 * per_module;
    };
    for (size_t nc : {8ul, 16ul}) {
        DmhsaConfig cfg;
        cfg.variant = Variant::kGeo;
        cfg.n_beams = 24;
        cfg.n_channels = nc;
        cfg.n_heads = 4;
        const DmhsaParams p(cfg, 3);
        CHECK(count_parameters(p) == closed_form(24, nc, 4, 3));
    }
}

TEST_CASE("attention masks: diagonal structure and padding restriction") {
    const AttentionMasks m = attention_masks(8, 3);
    for (size_t i = 0; i < 3; ++i) {
        CHECK(m.inr[i * 8 + i] < -1e8);
        CHECK(m.snr[i * 8 + i] == 0.0);
        for (size_t j = 0; j < 3; ++j)
            if (i != j) CHECK(m.inr[i * 8 + j] == 0.0);
    }
    for (size_t i = 3; i < 8; ++i)
        for (size_t j = 0; j < 8; ++j) {
            CHECK(m.snr[i * 8 + j] < -1e8);
            CHECK(m.inr[i * 8 + j] < -1e8);
        }
}

TEST_CASE("plain forward, taped forward, and the straight-line oracle agree") {
    DmhsaConfig cfg;
    cfg.variant = Variant::kGeo;
    cfg.n_beams = 6;
    const DmhsaParams params(cfg, 1234);
    const FeatureMatrix f = geo_features(6, {{0.1, 0.2}, {-0.3, 0.1}, {0.4, -0.2}});

    const ForwardResult plain = forward(f, params);
    const std::vector<double> oracle = oracle_forward(f, params);

    ad::Graph g;
    const GraphForward taped = build_forward(g, f, params);
    const std::vector<double>& taped_out = g.value(taped.output);

    for (size_t u = 0; u < f.n_valid; ++u) {
        CHECK(plain.estimate[u] == doctest::Approx(oracle[u]).epsilon(1e-12));
        CHECK(taped_out[u] == doctest::Approx(oracle[u]).epsilon(1e-12));
        CHECK(plain.estimate[u] == taped_out[u]);  // both paths mirror loop-for-loop
    }
    // output decomposition is exact
    for (size_t u = 0; u < cfg.n_beams; ++u)
        CHECK(plain.estimate[u] == plain.snr_head[u] - plain.inr_head[u]);

    // determinism
    const ForwardResult again = forward(f, params);
    for (size_t u = 0; u < cfg.n_beams; ++u) CHECK(plain.estimate[u] == again.estimate[u]);
}

TEST_CASE("padded rows cannot influence valid outputs") {
    DmhsaConfig cfg;
    cfg.variant = Variant::kGeo;
    cfg.n_beams = 8;
    const DmhsaParams params(cfg, 4321);
    FeatureMatrix f = geo_features(8, {{0.2, 0.1}, {-0.1, 0.3}});
    const ForwardResult base = forward(f, params);

    FeatureMatrix poisoned = f;
    Rng rng(5);
    for (size_t u = 2; u < 8; ++u)
        for (size_t j = 0; j < 3; ++j) poisoned.rows[u * 3 + j] = 1e6 * rng.normal();
    const ForwardResult after = forward(poisoned, params);
    for (size_t u = 0; u < 2; ++u) {
        CHECK(base.estimate[u] == after.estimate[u]);
        CHECK(base.snr_head[u] == after.snr_head[u]);
        CHECK(base.inr_head[u] == after.inr_head[u]);
    }
}

TEST_CASE("single valid user: the INR head follows the declared zero-context policy") {
    DmhsaConfig cfg;
    cfg.variant = Variant::kGeo;
    cfg.n_beams = 4;
    const DmhsaParams p(cfg, 99);
    const FeatureMatrix f = geo_features(4, {{0.25, -0.1}});
    const ForwardResult r = forward(f, p);

    // fully masked INR row -> zero context -> out projection bias -> head FC
    double expected = p.view("inr_head_b")[0];
    for (size_t i = 0; i < cfg.n_channels; ++i)
        expected += p.view("inr_out_b")[i] * p.view("inr_head_w")[i];
    CHECK(r.inr_head[0] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("masked mse loss") {
    const std::vector<double> pred = {1.0, 2.0};
    const std::vector<double> labels = {0.0, 0.0};
    const std::vector<double> mask = {1.0, 0.0};
    CHECK(masked_mse_loss(pred, labels, mask) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(masked_mse_loss(labels, labels, mask) == 0.0);

    const std::vector<double> other_labels = {0.0, 1e9};
    CHECK(masked_mse_loss(pred, labels, mask) == masked_mse_loss(pred, other_labels, mask));
    const std::vector<double> none = {0.0, 0.0};
    CHECK_THROWS_AS(masked_mse_loss(pred, labels, none), NumericalError);
}

TEST_CASE("standardizer round trip and bias") {
    LabelStandardizer s;
    s.mu_sinr_db = 12.5;
    s.sigma_sinr_db = 3.0;
    CHECK(s.standardize(12.5) == 0.0);
    for (double x : {-5.0, 0.0, 17.25})
        CHECK(s.destandardize(s.standardize(x)) == doctest::Approx(x).epsilon(1e-12));
    s.bias_db = 2.0;
    CHECK(s.destandardize(s.standardize(10.0)) == doctest::Approx(8.0).epsilon(1e-12));
}

TEST_CASE("bias calibration") {
    const std::vector<double> truth = {10.0, 12.0, 9.0, 11.0};
    CHECK(calibrate_bias(truth, truth) == 0.0);
    std::vector<double> offset = truth;
    for (double& x : offset) x += 2.0;
    CHECK(calibrate_bias(offset, truth) == doctest::Approx(2.0).epsilon(1e-9));
    CHECK_THROWS_AS(calibrate_bias({}, {}), ShapeError);
}

TEST_CASE("complexity estimates reproduce the published operating points") {
    CHECK(complexity_estimate(EstimationMethod::kMmse, 24, 512, 8) == 294912);
    CHECK(complexity_estimate(EstimationMethod::kCsiDmhsa, 24, 512, 8) == 98304);
    CHECK(complexity_estimate(EstimationMethod::kGeoDmhsa, 24, 512, 8) == 4608);
    // the MMSE count does not depend on N_C
    for (uint64_t nc = 1; nc <= 32; ++nc)
        CHECK(complexity_estimate(EstimationMethod::kMmse, 24, 512, nc) == 294912);
    // location-based stays an order of magnitude under the benchmark
    for (uint64_t nc = 1; nc <= 24; ++nc)
        CHECK(complexity_estimate(EstimationMethod::kGeoDmhsa, 24, 512, nc) <
              complexity_estimate(EstimationMethod::kMmse, 24, 512, nc));
}

TEST_CASE("model file round trip") {
    DmhsaConfig cfg;
    cfg.variant = Variant::kGeo;
    cfg.n_beams = 8;
    const DmhsaParams params(cfg, 777);
    LabelStandardizer s;
    s.mu_sinr_db = 4.5;
    s.sigma_sinr_db = 2.25;
    s.mu_h = 1e-7;
    s.sigma_h = 5e-8;
    s.bias_db = -0.75;

    const std::string path = "test_model_roundtrip.bin";
    save_model(path, params, s);
    const LoadedModel loaded = load_model(path);
    CHECK(loaded.params.count() == params.count());
    for (size_t i = 0; i < params.count(); ++i)
        CHECK(loaded.params.flat()[i] == params.flat()[i]);
    CHECK(loaded.standardizer.mu_sinr_db == s.mu_sinr_db);
    CHECK(loaded.standardizer.sigma_sinr_db == s.sigma_sinr_db);
    CHECK(loaded.standardizer.mu_h == s.mu_h);
    CHECK(loaded.standardizer.sigma_h == s.sigma_h);
    CHECK(loaded.standardizer.bias_db == s.bias_db);
    CHECK(loaded.params.config().variant == Variant::kGeo);
    std::remove(path.c_str());

    CHECK_THROWS_AS(load_model("does_not_exist.bin"), ConfigError);
}

TEST_CASE("head arithmetic reconstructs the channel width") {
    DmhsaConfig cfg;
    CHECK(cfg.n_heads * cfg.head_dim() == cfg.n_channels);
    DmhsaConfig bad;
    bad.n_channels = 9;
    bad.n_heads = 4;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

#include <functional>
#include <iostream>

#include "leosinr/experiment.hpp"
#include "leosinr/rng.hpp"
#include "leosinr/verify.hpp"

namespace leosinr::exp {

namespace {

CxMatrix random_channel(Rng& rng, size_t rows, size_t cols) {
    CxMatrix h(rows, cols);
    for (size_t i = 0; i < rows; ++i)
        for (size_t j = 0; j < cols; ++j) h(i, j) = cxd{rng.normal(), rng.normal()};
    return h;
}

bool check_mmse_vs_naive(std::ostream& out) {
    Rng rng(20240901);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const size_t rows = static_cast<size_t>(rng.uniform_int(1, 24));
        const size_t cols = static_cast<size_t>(rng.uniform_int(rows, 64));
        const CxMatrix h = random_channel(rng, rows, cols);
        bf::BeamformerConfig cfg{cols, 0.065};
        channel::ChannelMatrix cm;
        cm.coefficients = h;
        const CxMatrix solved = bf::mmse_beamformer(cm, cfg);
        const CxMatrix brute = verify::naive_mmse(h, cfg.regularization());
        worst = std::max(worst, verify::max_relative_deviation(solved, brute));
    }
    out << "mmse solve vs explicit inverse (1000 trials): max rel dev " << worst << "\n";
    return worst <= 1e-9;
}

bool check_per_antenna_norms(std::ostream& out) {
    Rng rng(20240902);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const size_t rows = static_cast<size_t>(rng.uniform_int(2, 12));
        const size_t cols = static_cast<size_t>(rng.uniform_int(rows, 48));
        const CxMatrix h = random_channel(rng, rows, cols);
        bf::BeamformerConfig cfg{cols, 0.065};
        channel::ChannelMatrix cm;
        cm.coefficients = h;
        const bf::BeamformingMatrix bm =
            bf::per_antenna_normalize(bf::mmse_beamformer(cm, cfg), cfg);
        const double target = std::sqrt(cfg.total_power_w() / static_cast<double>(cols));
        for (size_t r = 0; r < bm.normalized.rows(); ++r) {
            const double n = bm.normalized.row_norm(r);
            if (n == 0.0) continue;
            worst = std::max(worst, std::abs(n - target) / target);
        }
    }
    out << "per-antenna row norms (100 trials): max rel dev " << worst << "\n";
    return worst <= 1e-10;
}

bool check_single_user_sinr(std::ostream& out) {
    Rng rng(20240903);
    bool ok = true;
    for (int trial = 0; trial < 50; ++trial) {
        const CxMatrix h = random_channel(rng, 1, 32);
        bf::BeamformerConfig cfg{32, 0.065};
        channel::ChannelMatrix cm;
        cm.coefficients = h;
        const bf::BeamformingMatrix bm =
            bf::per_antenna_normalize(bf::mmse_beamformer(cm, cfg), cfg);
        const bf::SinrReport rep = bf::evaluate_sinr(cm, bm.normalized);
        ok = ok && rep.sinr_db[0] == rep.snr_db[0] && std::isinf(rep.inr_db[0]) &&
             rep.inr_db[0] < 0.0;
    }
    out << "single-user SINR == SNR with INR = -inf dB: " << (ok ? "exact" : "violated") << "\n";
    return ok;
}

// Probes d(loss)/d(entry) for one taped op against a central finite
// difference through a fresh forward evaluation.
bool fd_check(std::ostream& out, const std::string& name,
              const std::function<double(std::span<const double>)>& loss_of,
              const std::function<std::vector<double>(std::span<const double>)>& grad_of,
              std::vector<double> x0, int probes, double tol, Rng& rng) {
    const std::vector<double> analytic = grad_of(x0);
    double worst = 0.0;
    for (int p = 0; p < probes; ++p) {
        const size_t i = static_cast<size_t>(rng.uniform_int(0, x0.size() - 1));
        const double numeric = verify::finite_difference(
            [&](double v) {
                std::vector<double> x = x0;
                x[i] = v;
                return loss_of(x);
            },
            x0[i]);
        worst = std::max(worst, verify::gradient_error(analytic[i], numeric));
    }
    out << "gradient check [" << name << "]: max err " << worst << " (tol " << tol << ")\n";
    return worst <= tol;
}

bool check_primitive_gradients(std::ostream& out) {
    Rng rng(20240904);
    bool ok = true;
    const size_t n = 4, d = 5, m = 3;
    auto rand_vec = [&](size_t len) {
        std::vector<double> v(len);
        for (double& x : v) x = rng.normal();
        return v;
    };
    const std::vector<double> w_aff = rand_vec(d * m);
    const std::vector<double> b_aff = rand_vec(m);

    // reduces an op output to a scalar via masked_mse against zero labels
    auto reduce_loss = [&](ad::Graph& g, ad::Var y, size_t len) {
        const std::vector<double> zeros(len, 0.0);
        std::vector<double> weights(len);
        for (size_t i = 0; i < len; ++i) weights[i] = 1.0 + 0.1 * static_cast<double>(i % 7);
        return g.masked_mse(y, zeros, weights);
    };

    struct Case {
        std::string name;
        size_t rows_in, cols_in;
        std::function<ad::Var(ad::Graph&, ad::Var)> build;
        size_t out_len;  // 1 = already scalar
    };
    std::vector<Case> cases;
    cases.push_back({"affine", n, d,
                     [&](ad::Graph& g, ad::Var x) {
                         return g.affine(x, g.constant(d, m, w_aff), g.constant(1, m, b_aff));
                     },
                     n * m});
    cases.push_back({"matmul", n, d,
                     [&](ad::Graph& g, ad::Var x) { return g.matmul(x, g.constant(d, m, w_aff)); },
                     n * m});
    const std::vector<double> other_nt = rand_vec(m * d);
    cases.push_back({"matmul_nt", n, d,
                     [&](ad::Graph& g, ad::Var x) {
                         return g.matmul_nt(x, g.constant(m, d, other_nt));
                     },
                     n * m});
    const std::vector<double> gamma = rand_vec(d);
    const std::vector<double> beta = rand_vec(d);
    cases.push_back({"layer_norm", n, d,
                     [&](ad::Graph& g, ad::Var x) {
                         return g.layer_norm(x, g.constant(1, d, gamma), g.constant(1, d, beta));
                     },
                     n * d});
    cases.push_back({"leaky_relu", n, d,
                     [&](ad::Graph& g, ad::Var x) { return g.leaky_relu(x, 0.01); }, n * d});
    std::vector<double> soft_mask(n * n, 0.0);
    soft_mask[1] = -1e9;
    soft_mask[n + 2] = -1e9;
    for (size_t j = 0; j < n; ++j) soft_mask[3 * n + j] = -1e9;  // one fully masked row
    cases.push_back({"masked_softmax", n, n,
                     [&](ad::Graph& g, ad::Var x) { return g.masked_softmax(x, soft_mask); },
                     n * n});
    const std::vector<double> addend = rand_vec(n * d);
    cases.push_back({"add", n, d,
                     [&](ad::Graph& g, ad::Var x) { return g.add(x, g.constant(n, d, addend)); },
                     n * d});
    cases.push_back({"subtract", n, d,
                     [&](ad::Graph& g, ad::Var x) {
                         return g.subtract(g.constant(n, d, addend), x);
                     },
                     n * d});
    cases.push_back({"scale", n, d,
                     [&](ad::Graph& g, ad::Var x) { return g.scale(x, -1.7); }, n * d});
    cases.push_back({"concat_heads", n, d,
                     [&](ad::Graph& g, ad::Var x) {
                         return g.concat_cols({x, g.constant(n, d, addend), x});
                     },
                     n * 3 * d});
    const std::vector<double> mse_labels = rand_vec(n * d);
    std::vector<double> mse_mask(n * d, 1.0);
    mse_mask[2] = 0.0;
    mse_mask[5] = 0.0;
    cases.push_back({"masked_mse", n, d,
                     [&](ad::Graph& g, ad::Var x) { return g.masked_mse(x, mse_labels, mse_mask); },
                     1});

    for (const Case& c : cases) {
        auto eval_loss = [&](std::span<const double> x) {
            ad::Graph g;
            ad::Var xin = g.param(c.rows_in, c.cols_in, x);
            ad::Var y = c.build(g, xin);
            ad::Var l = c.out_len == 1 ? y : reduce_loss(g, y, c.out_len);
            return g.value(l)[0];
        };
        auto eval_grad = [&](std::span<const double> x) {
            ad::Graph g;
            ad::Var xin = g.param(c.rows_in, c.cols_in, x);
            ad::Var y = c.build(g, xin);
            ad::Var l = c.out_len == 1 ? y : reduce_loss(g, y, c.out_len);
            g.backward(l);
            return g.grad(xin);
        };
        ok = fd_check(out, c.name, eval_loss, eval_grad, rand_vec(c.rows_in * c.cols_in), 100,
                      1e-4, rng) &&
             ok;
    }
    return ok;
}

bool check_composite_gradient(std::ostream& out) {
    dmhsa::DmhsaConfig cfg;
    cfg.variant = dmhsa::Variant::kGeo;
    cfg.n_beams = 6;
    cfg.n_channels = 8;
    cfg.n_heads = 4;
    Rng rng(20240905);
    double worst = 0.0;
    for (int input_case = 0; input_case < 5; ++input_case) {
        dmhsa::FeatureMatrix f;
        f.n_beams = cfg.n_beams;
        f.feature_dim = 3;
        f.n_valid = 3;
        f.rows.assign(cfg.n_beams * 3, 0.0);
        f.mask.assign(cfg.n_beams, 0.0);
        for (size_t u = 0; u < f.n_valid; ++u) {
            f.mask[u] = 1.0;
            f.rows[u * 3 + 0] = rng.uniform(-0.7, 0.7);
            f.rows[u * 3 + 1] = rng.uniform(-0.7, 0.7);
            f.rows[u * 3 + 2] = 0.5;
        }
        std::vector<double> labels(cfg.n_beams, 0.0);
        std::vector<double> mask(cfg.n_beams, 0.0);
        for (size_t u = 0; u < f.n_valid; ++u) {
            labels[u] = rng.normal();
            mask[u] = 1.0;
        }
        dmhsa::DmhsaParams params(cfg, 77 + static_cast<uint64_t>(input_case));

        auto loss_at = [&](const dmhsa::DmhsaParams& p) {
            ad::Graph g;
            const auto pv = dmhsa::register_params(g, p);
            ad::Var y = dmhsa::build_forward_shared(g, f, p, pv);
            ad::Var l = g.masked_mse(y, labels, mask);
            return g.value(l)[0];
        };

        ad::Graph g;
        const auto pv = dmhsa::register_params(g, params);
        ad::Var y = dmhsa::build_forward_shared(g, f, params, pv);
        ad::Var l = g.masked_mse(y, labels, mask);
        g.backward(l);

        for (int probe = 0; probe < 20; ++probe) {
            const size_t flat_i =
                static_cast<size_t>(rng.uniform_int(0, params.count() - 1));
            // locate the owning block for the analytic gradient
            size_t bi = 0;
            for (size_t i = 0; i < params.blocks().size(); ++i)
                if (params.blocks()[i].offset <= flat_i &&
                    flat_i < params.blocks()[i].offset + params.blocks()[i].size())
                    bi = i;
            const double analytic =
                g.grad(pv[bi])[flat_i - params.blocks()[bi].offset];
            const double numeric = verify::finite_difference(
                [&](double v) {
                    dmhsa::DmhsaParams p2 = params;
                    p2.flat()[flat_i] = v;
                    return loss_at(p2);
                },
                params.flat()[flat_i]);
            worst = std::max(worst, verify::gradient_error(analytic, numeric));
        }
    }
    out << "gradient check [composite dmhsa graph]: max err " << worst << " (tol 1e-3)\n";
    return worst <= 1e-3;
}

bool check_masking_invariants(std::ostream& out) {
    dmhsa::DmhsaConfig cfg;
    cfg.variant = dmhsa::Variant::kGeo;
    cfg.n_beams = 8;
    dmhsa::DmhsaParams params(cfg, 99);
    Rng rng(20240906);

    dmhsa::FeatureMatrix f;
    f.n_beams = cfg.n_beams;
    f.feature_dim = 3;
    f.n_valid = 4;
    f.rows.assign(cfg.n_beams * 3, 0.0);
    f.mask.assign(cfg.n_beams, 0.0);
    for (size_t u = 0; u < f.n_valid; ++u) {
        f.mask[u] = 1.0;
        f.rows[u * 3 + 0] = rng.uniform(-0.5, 0.5);
        f.rows[u * 3 + 1] = rng.uniform(-0.5, 0.5);
        f.rows[u * 3 + 2] = 0.5;
    }
    const dmhsa::ForwardResult base = dmhsa::forward(f, params);

    dmhsa::FeatureMatrix perturbed = f;
    for (size_t u = f.n_valid; u < cfg.n_beams; ++u)
        for (size_t j = 0; j < 3; ++j) perturbed.rows[u * 3 + j] = rng.normal() * 100.0;
    const dmhsa::ForwardResult pert = dmhsa::forward(perturbed, params);

    bool identical = true;
    for (size_t u = 0; u < f.n_valid; ++u)
        identical = identical && base.estimate[u] == pert.estimate[u];
    out << "padded-slot perturbation leaves valid outputs bit-identical: "
        << (identical ? "yes" : "no") << "\n";

    const dmhsa::AttentionMasks masks = dmhsa::attention_masks(cfg.n_beams, f.n_valid);
    bool diag_ok = true;
    for (size_t i = 0; i < f.n_valid; ++i)
        diag_ok = diag_ok && masks.inr[i * cfg.n_beams + i] < -1e8 &&
                  masks.snr[i * cfg.n_beams + i] == 0.0;
    out << "inr mask removes the diagonal, snr mask keeps it: " << (diag_ok ? "yes" : "no")
        << "\n";

    std::vector<double> labels(cfg.n_beams, 0.0), labels2(cfg.n_beams, 0.0);
    for (size_t u = 0; u < cfg.n_beams; ++u) {
        labels[u] = rng.normal();
        labels2[u] = u < f.n_valid ? labels[u] : labels[u] + 1e6;
    }
    const double l1 = dmhsa::masked_mse_loss(base.estimate, labels, f.mask);
    const double l2 = dmhsa::masked_mse_loss(base.estimate, labels2, f.mask);
    out << "loss invariant to masked-out labels: " << (l1 == l2 ? "yes" : "no") << "\n";

    // gradient of the loss with respect to padded features is exactly zero
    ad::Graph g;
    const auto pv = dmhsa::register_params(g, params);
    ad::Var feat_var;
    ad::Var y = dmhsa::build_forward_shared(g, f, params, pv, &feat_var);
    ad::Var l = g.masked_mse(y, labels, f.mask);
    g.backward(l);
    bool pad_grad_zero = true;
    const std::vector<double>& fg = g.grad(feat_var);
    for (size_t u = f.n_valid; u < cfg.n_beams; ++u)
        for (size_t j = 0; j < 3; ++j) pad_grad_zero = pad_grad_zero && fg[u * 3 + j] == 0.0;
    out << "loss gradient on padded features exactly zero: " << (pad_grad_zero ? "yes" : "no")
        << "\n";

    return identical && diag_ok && l1 == l2 && pad_grad_zero;
}

}  // namespace

std::vector<SelftestResult> run_selftest_checks(std::ostream& out) {
    std::vector<SelftestResult> results;
    results.push_back({"oracle: mmse solve vs explicit inverse", check_mmse_vs_naive(out)});
    results.push_back({"oracle: per-antenna power constraint", check_per_antenna_norms(out)});
    results.push_back({"oracle: single-user sinr equals snr", check_single_user_sinr(out)});
    results.push_back(
        {"gradients: primitives vs finite differences", check_primitive_gradients(out)});
    results.push_back(
        {"gradients: composite model vs finite differences", check_composite_gradient(out)});
    results.push_back({"masking invariants", check_masking_invariants(out)});
    return results;
}

int selftest(std::ostream& out) {
    int failures = 0;
    for (const SelftestResult& r : run_selftest_checks(out)) {
        out << (r.passed ? "[PASS] " : "[FAIL] ") << r.name << "\n";
        if (!r.passed) ++failures;
    }
    return failures;
}

}  // namespace leosinr::exp

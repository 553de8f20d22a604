#include "leosinr/dmhsa.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "leosinr/rng.hpp"

namespace leosinr::dmhsa {

void DmhsaConfig::validate() const {
    if (n_beams < 1) throw ConfigError("dmhsa: n_beams must be >= 1");
    if (n_heads < 1 || n_channels % n_heads != 0)
        throw ConfigError("dmhsa: n_channels must be a positive multiple of n_heads");
    if (variant == Variant::kCsi && n_elements < 1)
        throw ConfigError("dmhsa: CSI variant needs n_elements >= 1");
}

FeatureMatrix extract_features_csi(const channel::ChannelMatrix& h_hat, size_t n_beams,
                                   const LabelStandardizer& s) {
    const CxMatrix& h = h_hat.coefficients;
    const size_t n_sched = h.rows();
    const size_t n_r = h.cols();
    if (n_sched > n_beams) throw ShapeError("extract_features_csi: more users than beams");

    FeatureMatrix f;
    f.n_beams = n_beams;
    f.feature_dim = n_r + 2;
    f.n_valid = n_sched;
    f.rows.assign(n_beams * f.feature_dim, 0.0);
    f.mask.assign(n_beams, 0.0);
    const double rho = static_cast<double>(n_sched) / static_cast<double>(n_beams);
    for (size_t k = 0; k < n_sched; ++k) {
        f.mask[k] = 1.0;
        double* row = f.rows.data() + k * f.feature_dim;
        double mean_sq = 0.0;
        for (size_t n = 0; n < n_r; ++n) {
            const cxd c = h(k, n);
            row[n] = std::arg(c) / kPhaseSigma;
            mean_sq += std::norm(c);
        }
        mean_sq /= static_cast<double>(n_r);
        row[n_r] = (mean_sq - s.mu_h) / s.sigma_h;
        row[n_r + 1] = rho;
    }
    return f;
}

FeatureMatrix extract_features_geo(const std::vector<geo::UvCoordinate>& users, size_t n_beams) {
    if (users.size() > n_beams) throw ShapeError("extract_features_geo: more users than beams");
    FeatureMatrix f;
    f.n_beams = n_beams;
    f.feature_dim = 3;
    f.n_valid = users.size();
    f.rows.assign(n_beams * 3, 0.0);
    f.mask.assign(n_beams, 0.0);
    const double rho = static_cast<double>(users.size()) / static_cast<double>(n_beams);
    for (size_t k = 0; k < users.size(); ++k) {
        const auto& uv = users[k];
        if (uv.u * uv.u + uv.v * uv.v > 1.0 + 1e-12)
            throw ConfigError("extract_features_geo: (u,v) outside the unit disc");
        f.mask[k] = 1.0;
        f.rows[k * 3 + 0] = uv.u;
        f.rows[k * 3 + 1] = uv.v;
        f.rows[k * 3 + 2] = rho;
    }
    return f;
}

void DmhsaParams::build_layout() {
    cfg_.validate();
    const size_t nc = cfg_.n_channels;
    const size_t dk = cfg_.head_dim();
    const size_t delta = cfg_.feature_dim();
    blocks_.clear();
    size_t offset = 0;
    auto add = [&](const std::string& name, size_t rows, size_t cols) {
        blocks_.push_back({name, rows, cols, offset});
        offset += rows * cols;
    };
    add("fc1_w", delta, nc);
    add("fc1_b", 1, nc);
    add("ln1_gamma", 1, nc);
    add("ln1_beta", 1, nc);
    add("fc2_w", nc, nc);
    add("fc2_b", 1, nc);
    add("ln2_gamma", 1, nc);
    add("ln2_beta", 1, nc);
    add("pos_embedding", cfg_.n_beams, nc);
    for (const char* mod : {"snr", "inr"}) {
        for (size_t h = 0; h < cfg_.n_heads; ++h) {
            const std::string p = std::string(mod) + "_h" + std::to_string(h);
            add(p + "_wq", nc, dk);
            add(p + "_bq", 1, dk);
            add(p + "_wk", nc, dk);
            add(p + "_bk", 1, dk);
            add(p + "_wv", nc, dk);
            add(p + "_bv", 1, dk);
        }
        add(std::string(mod) + "_out_w", nc, nc);
        add(std::string(mod) + "_out_b", 1, nc);
        add(std::string(mod) + "_head_w", nc, 1);
        add(std::string(mod) + "_head_b", 1, 1);
    }
    values_.assign(offset, 0.0);
}

DmhsaParams::DmhsaParams(const DmhsaConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
    build_layout();
    Rng rng(init_seed);
    for (const ParamBlock& b : blocks_) {
        double* data = values_.data() + b.offset;
        if (b.name.ends_with("_gamma")) {
            std::fill(data, data + b.size(), 1.0);
        } else if (b.name == "pos_embedding") {
            for (size_t i = 0; i < b.size(); ++i) data[i] = rng.normal(0.0, 0.02);
        } else if (b.name.ends_with("_w") || b.name.ends_with("_wq") ||
                   b.name.ends_with("_wk") || b.name.ends_with("_wv")) {
            // Kaiming-style uniform fan-in scaling
            const double slope = cfg_.leaky_slope;
            const double bound =
                std::sqrt(6.0 / ((1.0 + slope * slope) * static_cast<double>(b.rows)));
            for (size_t i = 0; i < b.size(); ++i) data[i] = rng.uniform(-bound, bound);
        }
        // biases and LN beta stay zero
    }
}

std::span<const double> DmhsaParams::view(const std::string& name) const {
    const ParamBlock& b = block(name);
    return {values_.data() + b.offset, b.size()};
}

std::span<double> DmhsaParams::view(const std::string& name) {
    const ParamBlock& b = block(name);
    return {values_.data() + b.offset, b.size()};
}

const ParamBlock& DmhsaParams::block(const std::string& name) const {
    for (const ParamBlock& b : blocks_)
        if (b.name == name) return b;
    throw ConfigError("DmhsaParams: unknown block " + name);
}

size_t count_parameters(const DmhsaParams& params) { return params.count(); }

AttentionMasks attention_masks(size_t n_beams, size_t n_valid) {
    constexpr double kForbidden = -1e9;
    AttentionMasks m;
    m.snr.assign(n_beams * n_beams, kForbidden);
    m.inr.assign(n_beams * n_beams, kForbidden);
    for (size_t i = 0; i < n_valid; ++i) {
        for (size_t j = 0; j < n_valid; ++j) {
            m.snr[i * n_beams + j] = 0.0;
            if (i != j) m.inr[i * n_beams + j] = 0.0;
        }
    }
    return m;
}

namespace {

// The plain forward mirrors the tape ops loop-for-loop so both paths agree
// to the last bit.

void affine_plain(const double* x, size_t n, size_t d, const double* w, size_t m,
                  const double* b, double* out) {
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < m; ++j) {
            double s = b[j];
            for (size_t k = 0; k < d; ++k) s += x[i * d + k] * w[k * m + j];
            out[i * m + j] = s;
        }
}

void layer_norm_plain(double* x, size_t n, size_t c, const double* gamma, const double* beta,
                      double eps) {
    for (size_t i = 0; i < n; ++i) {
        double mean = 0.0;
        for (size_t j = 0; j < c; ++j) mean += x[i * c + j];
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (size_t j = 0; j < c; ++j) {
            const double d = x[i * c + j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(c);
        const double inv_std = 1.0 / std::sqrt(var + eps);
        for (size_t j = 0; j < c; ++j) {
            const double xhat = (x[i * c + j] - mean) * inv_std;
            x[i * c + j] = gamma[j] * xhat + beta[j];
        }
    }
}

void leaky_plain(double* x, size_t n, double slope) {
    for (size_t i = 0; i < n; ++i)
        if (x[i] < 0.0) x[i] *= slope;
}

void masked_softmax_plain(double* s, size_t n, size_t c, const double* mask) {
    for (size_t i = 0; i < n; ++i) {
        double max_logit = -std::numeric_limits<double>::infinity();
        for (size_t j = 0; j < c; ++j)
            if (mask[i * c + j] > -1e8) max_logit = std::max(max_logit, s[i * c + j]);
        if (!std::isfinite(max_logit)) {
            for (size_t j = 0; j < c; ++j) s[i * c + j] = 0.0;
            continue;
        }
        double denom = 0.0;
        std::vector<double> e(c, 0.0);
        for (size_t j = 0; j < c; ++j) {
            if (mask[i * c + j] > -1e8) {
                e[j] = std::exp(s[i * c + j] - max_logit);
                denom += e[j];
            }
        }
        for (size_t j = 0; j < c; ++j) s[i * c + j] = e[j] / denom;
    }
}

std::vector<double> attention_module_plain(const DmhsaParams& p, const std::string& mod,
                                           const std::vector<double>& emb, size_t nb, size_t nc,
                                           size_t n_heads, size_t dk,
                                           const std::vector<double>& mask) {
    std::vector<double> concat(nb * nc, 0.0);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    for (size_t h = 0; h < n_heads; ++h) {
        const std::string hp = mod + "_h" + std::to_string(h);
        std::vector<double> q(nb * dk), k(nb * dk), v(nb * dk);
        affine_plain(emb.data(), nb, nc, p.view(hp + "_wq").data(), dk,
                     p.view(hp + "_bq").data(), q.data());
        affine_plain(emb.data(), nb, nc, p.view(hp + "_wk").data(), dk,
                     p.view(hp + "_bk").data(), k.data());
        affine_plain(emb.data(), nb, nc, p.view(hp + "_wv").data(), dk,
                     p.view(hp + "_bv").data(), v.data());
        std::vector<double> scores(nb * nb);
        for (size_t i = 0; i < nb; ++i)
            for (size_t j = 0; j < nb; ++j) {
                double s = 0.0;
                for (size_t t = 0; t < dk; ++t) s += q[i * dk + t] * k[j * dk + t];
                scores[i * nb + j] = s;
            }
        for (double& s : scores) s *= scale;
        masked_softmax_plain(scores.data(), nb, nb, mask.data());
        // context = A V, written into the head's column slice
        for (size_t i = 0; i < nb; ++i)
            for (size_t t = 0; t < dk; ++t) {
                double s = 0.0;
                for (size_t j = 0; j < nb; ++j) s += scores[i * nb + j] * v[j * dk + t];
                concat[i * nc + h * dk + t] = s;
            }
    }
    std::vector<double> proj(nb * nc);
    affine_plain(concat.data(), nb, nc, p.view(mod + "_out_w").data(), nc,
                 p.view(mod + "_out_b").data(), proj.data());
    std::vector<double> head(nb);
    affine_plain(proj.data(), nb, nc, p.view(mod + "_head_w").data(), 1,
                 p.view(mod + "_head_b").data(), head.data());
    return head;
}

}  // namespace

ForwardResult forward(const FeatureMatrix& f, const DmhsaParams& params) {
    const DmhsaConfig& cfg = params.config();
    if (f.n_beams != cfg.n_beams || f.feature_dim != cfg.feature_dim())
        throw ShapeError("forward: feature matrix does not match the model configuration");
    const size_t nb = cfg.n_beams;
    const size_t nc = cfg.n_channels;

    std::vector<double> emb(nb * nc);
    affine_plain(f.rows.data(), nb, f.feature_dim, params.view("fc1_w").data(), nc,
                 params.view("fc1_b").data(), emb.data());
    layer_norm_plain(emb.data(), nb, nc, params.view("ln1_gamma").data(),
                     params.view("ln1_beta").data(), 1e-5);
    leaky_plain(emb.data(), emb.size(), cfg.leaky_slope);
    std::vector<double> emb2(nb * nc);
    affine_plain(emb.data(), nb, nc, params.view("fc2_w").data(), nc,
                 params.view("fc2_b").data(), emb2.data());
    layer_norm_plain(emb2.data(), nb, nc, params.view("ln2_gamma").data(),
                     params.view("ln2_beta").data(), 1e-5);
    leaky_plain(emb2.data(), emb2.size(), cfg.leaky_slope);
    std::span<const double> pe = params.view("pos_embedding");
    for (size_t i = 0; i < emb2.size(); ++i) emb2[i] += pe[i];

    const AttentionMasks masks = attention_masks(nb, f.n_valid);
    ForwardResult r;
    r.snr_head = attention_module_plain(params, "snr", emb2, nb, nc, cfg.n_heads,
                                        cfg.head_dim(), masks.snr);
    r.inr_head = attention_module_plain(params, "inr", emb2, nb, nc, cfg.n_heads,
                                        cfg.head_dim(), masks.inr);
    r.estimate.resize(nb);
    for (size_t i = 0; i < nb; ++i) r.estimate[i] = r.snr_head[i] - r.inr_head[i];
    return r;
}

std::vector<ad::Var> register_params(ad::Graph& g, const DmhsaParams& params) {
    std::vector<ad::Var> pv;
    pv.reserve(params.blocks().size());
    for (const ParamBlock& b : params.blocks())
        pv.push_back(g.param(b.rows, b.cols, params.flat().subspan(b.offset, b.size())));
    return pv;
}

ad::Var build_forward_shared(ad::Graph& g, const FeatureMatrix& f, const DmhsaParams& params,
                             const std::vector<ad::Var>& param_vars, ad::Var* features_out) {
    const DmhsaConfig& cfg = params.config();
    if (f.n_beams != cfg.n_beams || f.feature_dim != cfg.feature_dim())
        throw ShapeError("build_forward: feature matrix does not match the model configuration");
    const size_t nb = cfg.n_beams;
    const size_t dk = cfg.head_dim();

    auto var_of = [&](const std::string& name) -> ad::Var {
        const auto& blocks = params.blocks();
        for (size_t i = 0; i < blocks.size(); ++i)
            if (blocks[i].name == name) return param_vars[i];
        throw ConfigError("build_forward: unknown block " + name);
    };

    ad::Var features = g.constant(nb, f.feature_dim, f.rows);
    if (features_out) *features_out = features;
    ad::Var x = g.affine(features, var_of("fc1_w"), var_of("fc1_b"));
    x = g.layer_norm(x, var_of("ln1_gamma"), var_of("ln1_beta"));
    x = g.leaky_relu(x, cfg.leaky_slope);
    x = g.affine(x, var_of("fc2_w"), var_of("fc2_b"));
    x = g.layer_norm(x, var_of("ln2_gamma"), var_of("ln2_beta"));
    x = g.leaky_relu(x, cfg.leaky_slope);
    x = g.add(x, var_of("pos_embedding"));

    const AttentionMasks masks = attention_masks(nb, f.n_valid);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    auto module = [&](const std::string& mod, const std::vector<double>& mask) -> ad::Var {
        std::vector<ad::Var> heads;
        for (size_t h = 0; h < cfg.n_heads; ++h) {
            const std::string hp = mod + "_h" + std::to_string(h);
            ad::Var q = g.affine(x, var_of(hp + "_wq"), var_of(hp + "_bq"));
            ad::Var k = g.affine(x, var_of(hp + "_wk"), var_of(hp + "_bk"));
            ad::Var v = g.affine(x, var_of(hp + "_wv"), var_of(hp + "_bv"));
            ad::Var scores = g.scale(g.matmul_nt(q, k), scale);
            ad::Var attn = g.masked_softmax(scores, mask);
            heads.push_back(g.matmul(attn, v));
        }
        ad::Var concat = g.concat_cols(heads);
        ad::Var proj = g.affine(concat, var_of(mod + "_out_w"), var_of(mod + "_out_b"));
        return g.affine(proj, var_of(mod + "_head_w"), var_of(mod + "_head_b"));
    };
    ad::Var snr = module("snr", masks.snr);
    ad::Var inr = module("inr", masks.inr);
    return g.subtract(snr, inr);
}

GraphForward build_forward(ad::Graph& g, const FeatureMatrix& f, const DmhsaParams& params) {
    GraphForward out;
    out.param_vars = register_params(g, params);
    out.output = build_forward_shared(g, f, params, out.param_vars, &out.features);
    return out;
}

double masked_mse_loss(std::span<const double> pred, std::span<const double> labels,
                       std::span<const double> mask) {
    if (pred.size() != labels.size() || pred.size() != mask.size())
        throw ShapeError("masked_mse_loss: shape mismatch");
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - labels[i];
        num += mask[i] * d * d;
        den += mask[i];
    }
    if (den <= 0.0) throw NumericalError("masked_mse_loss: all entries masked out");
    return num / den;
}

double calibrate_bias(std::span<const double> predicted_db, std::span<const double> true_db) {
    if (predicted_db.empty() || predicted_db.size() != true_db.size())
        throw ShapeError("calibrate_bias: empty or mismatched calibration set");
    double s = 0.0;
    for (size_t i = 0; i < predicted_db.size(); ++i) s += predicted_db[i] - true_db[i];
    return s / static_cast<double>(predicted_db.size());
}

uint64_t complexity_estimate(EstimationMethod method, uint64_t n_sched, uint64_t n_r,
                             uint64_t n_c) {
    switch (method) {
        case EstimationMethod::kMmse:
            return n_sched * n_sched * n_r;
        case EstimationMethod::kCsiDmhsa:
            return n_sched * n_c * n_r;
        case EstimationMethod::kGeoDmhsa:
            return n_sched * n_sched * n_c;
    }
    throw ConfigError("complexity_estimate: unknown method");
}

namespace {

constexpr char kMagic[4] = {'D', 'M', 'H', 'S'};
constexpr uint32_t kFormatVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw NumericalError("model file: truncated read");
    return v;
}

}  // namespace

void save_model(const std::string& path, const DmhsaParams& params,
                const LabelStandardizer& s) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("save_model: cannot open " + path);
    const DmhsaConfig& cfg = params.config();
    out.write(kMagic, 4);
    write_pod(out, kFormatVersion);
    write_pod(out, static_cast<uint8_t>(cfg.variant));
    write_pod(out, static_cast<uint32_t>(cfg.n_beams));
    write_pod(out, static_cast<uint32_t>(cfg.n_channels));
    write_pod(out, static_cast<uint32_t>(cfg.n_heads));
    write_pod(out, static_cast<uint32_t>(cfg.feature_dim()));
    write_pod(out, static_cast<uint32_t>(cfg.n_elements));
    write_pod(out, s.mu_sinr_db);
    write_pod(out, s.sigma_sinr_db);
    write_pod(out, s.mu_h);
    write_pod(out, s.sigma_h);
    write_pod(out, s.bias_db);
    write_pod(out, static_cast<uint32_t>(params.blocks().size()));
    for (const ParamBlock& b : params.blocks()) {
        write_pod(out, static_cast<uint32_t>(b.name.size()));
        out.write(b.name.data(), static_cast<long>(b.name.size()));
        write_pod(out, static_cast<uint32_t>(b.rows));
        write_pod(out, static_cast<uint32_t>(b.cols));
        out.write(reinterpret_cast<const char*>(params.flat().data() + b.offset),
                  static_cast<long>(b.size() * sizeof(double)));
    }
    if (!out) throw ConfigError("save_model: write failed for " + path);
}

LoadedModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("load_model: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw ConfigError("load_model: bad magic in " + path);
    const auto version = read_pod<uint32_t>(in);
    if (version != kFormatVersion)
        throw ConfigError("load_model: unsupported format version " + std::to_string(version));

    DmhsaConfig cfg;
    cfg.variant = static_cast<Variant>(read_pod<uint8_t>(in));
    cfg.n_beams = read_pod<uint32_t>(in);
    cfg.n_channels = read_pod<uint32_t>(in);
    cfg.n_heads = read_pod<uint32_t>(in);
    const uint32_t feature_dim = read_pod<uint32_t>(in);
    cfg.n_elements = read_pod<uint32_t>(in);

    LoadedModel m;
    m.standardizer.mu_sinr_db = read_pod<double>(in);
    m.standardizer.sigma_sinr_db = read_pod<double>(in);
    m.standardizer.mu_h = read_pod<double>(in);
    m.standardizer.sigma_h = read_pod<double>(in);
    m.standardizer.bias_db = read_pod<double>(in);

    m.params = DmhsaParams(cfg, /*init_seed=*/0);
    if (cfg.feature_dim() != feature_dim)
        throw ConfigError("load_model: header feature_dim inconsistent with variant");
    const auto n_blocks = read_pod<uint32_t>(in);
    if (n_blocks != m.params.blocks().size())
        throw ConfigError("load_model: block count mismatch");
    for (const ParamBlock& b : m.params.blocks()) {
        const auto name_len = read_pod<uint32_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const auto rows = read_pod<uint32_t>(in);
        const auto cols = read_pod<uint32_t>(in);
        if (!in || name != b.name || rows != b.rows || cols != b.cols)
            throw ConfigError("load_model: block layout mismatch at " + b.name);
        in.read(reinterpret_cast<char*>(m.params.flat().data() + b.offset),
                static_cast<long>(b.size() * sizeof(double)));
        if (!in) throw ConfigError("load_model: truncated block " + b.name);
    }
    return m;
}

}  // namespace leosinr::dmhsa

#include "leosinr/beamforming.hpp"

namespace leosinr::bf {

CxMatrix mmse_beamformer(const channel::ChannelMatrix& h, const BeamformerConfig& cfg) {
    const CxMatrix& hm = h.coefficients;
    const size_t n_sched = hm.rows();
    if (n_sched == 0 || n_sched > hm.cols())
        throw ShapeError("mmse_beamformer: need 1 <= N_sched <= N_R");

    CxMatrix gram = hm.gram();
    const double alpha = cfg.regularization();
    for (size_t i = 0; i < n_sched; ++i) gram(i, i) += alpha;

    // (G + alpha I) Z = H  =>  B = Z^H = H^H (G + alpha I)^-1
    CxMatrix z;
    try {
        z = cholesky_solve(gram, hm);
    } catch (const NumericalError& e) {
        throw NumericalError(std::string("mmse_beamformer: Gram solve failed: ") + e.what());
    }
    return z.hermitian();
}

BeamformingMatrix per_antenna_normalize(const CxMatrix& raw, const BeamformerConfig& cfg) {
    BeamformingMatrix out;
    out.raw = raw;
    out.normalized = raw;
    const double target = std::sqrt(cfg.total_power_w() / static_cast<double>(cfg.n_elements));
    for (size_t r = 0; r < raw.rows(); ++r) {
        const double norm = raw.row_norm(r);
        if (norm == 0.0) {
            ++out.zero_rows;
            continue;
        }
        const double scale = target / norm;
        for (size_t c = 0; c < raw.cols(); ++c) out.normalized(r, c) *= scale;
    }
    return out;
}

SinrReport evaluate_sinr(const channel::ChannelMatrix& h_true, const CxMatrix& b_norm) {
    const CxMatrix& hm = h_true.coefficients;
    const size_t n_sched = hm.rows();
    if (b_norm.rows() != hm.cols() || b_norm.cols() != n_sched)
        throw ShapeError("evaluate_sinr: channel/beamformer dimensions do not conform");

    // cross(k, l) = |H_{k,:} Btilde_{:,l}|^2
    CxMatrix prod = hm.multiply(b_norm);  // N_sched x N_sched
    SinrReport rep;
    rep.sinr_db.resize(n_sched);
    rep.snr_db.resize(n_sched);
    rep.inr_db.resize(n_sched);
    for (size_t k = 0; k < n_sched; ++k) {
        const double snr = std::norm(prod(k, k));
        double inr = 0.0;
        for (size_t l = 0; l < n_sched; ++l)
            if (l != k) inr += std::norm(prod(k, l));
        rep.snr_db[k] = to_db(snr);
        rep.inr_db[k] = to_db(inr);
        rep.sinr_db[k] = to_db(snr / (1.0 + inr));
    }
    return rep;
}

SinrReport sinr_oracle(const std::vector<channel::UserGeometry>& users,
                       const channel::LinkBudget& lb, const channel::ArrayConfig& array,
                       const BeamformerConfig& cfg, ReportMode mode,
                       const std::vector<double>* per_user_loss_db) {
    const channel::ChannelMatrix h_true =
        channel::build_channel_matrix(users, lb, array, /*clear_sky=*/false, per_user_loss_db);
    const bool clear_sky = (mode == ReportMode::kGeo);
    const channel::ChannelMatrix h_report =
        clear_sky ? channel::build_channel_matrix(users, lb, array, /*clear_sky=*/true)
                  : h_true;
    const CxMatrix raw = mmse_beamformer(h_report, cfg);
    const BeamformingMatrix bm = per_antenna_normalize(raw, cfg);
    return evaluate_sinr(h_true, bm.normalized);
}

}  // namespace leosinr::bf

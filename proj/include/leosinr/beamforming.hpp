#pragma once

#include <vector>

#include "leosinr/channel.hpp"
#include "leosinr/linalg.hpp"

namespace leosinr::bf {

struct BeamformerConfig {
    size_t n_elements = 512;
    double per_element_power_w = 0.065;

    double total_power_w() const { return static_cast<double>(n_elements) * per_element_power_w; }
    double regularization() const { return static_cast<double>(n_elements) / total_power_w(); }
};

struct BeamformingMatrix {
    CxMatrix raw;         // B, N_R x N_sched
    CxMatrix normalized;  // B tilde, per-antenna power constraint applied
    size_t zero_rows = 0; // raw rows with zero norm, left untouched
};

struct SinrReport {
    std::vector<double> sinr_db;
    std::vector<double> snr_db;
    std::vector<double> inr_db;
};

enum class ReportMode { kCsi, kGeo };

/// B = H^H (H H^H + alpha I)^-1, realized as a Cholesky solve of the
/// regularized Gram system; the inverse is never formed.
CxMatrix mmse_beamformer(const channel::ChannelMatrix& h, const BeamformerConfig& cfg);

/// Scales every row of the raw beamformer to norm sqrt(P_av / N_R).
/// Zero rows are left zero and counted.
BeamformingMatrix per_antenna_normalize(const CxMatrix& raw, const BeamformerConfig& cfg);

/// Exact SNR/INR/SINR of each scheduled user against the true channel.
SinrReport evaluate_sinr(const channel::ChannelMatrix& h_true, const CxMatrix& b_norm);

/// End-to-end oracle: builds the beamformer from the reported channel
/// (CSI mode) or the clear-sky theoretical channel (GEO mode) and always
/// evaluates the result against the true channel.
SinrReport sinr_oracle(const std::vector<channel::UserGeometry>& users,
                       const channel::LinkBudget& lb, const channel::ArrayConfig& array,
                       const BeamformerConfig& cfg, ReportMode mode,
                       const std::vector<double>* per_user_loss_db = nullptr);

}  // namespace leosinr::bf

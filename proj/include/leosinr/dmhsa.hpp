#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "leosinr/autodiff.hpp"
#include "leosinr/channel.hpp"
#include "leosinr/geometry.hpp"

namespace leosinr::dmhsa {

enum class Variant : uint8_t { kCsi = 0, kGeo = 1 };

struct DmhsaConfig {
    Variant variant = Variant::kGeo;
    size_t n_beams = 24;     // N_B
    size_t n_channels = 8;   // N_C
    size_t n_heads = 4;      // h
    size_t n_elements = 512; // N_R, sets the CSI feature width
    double leaky_slope = 0.01;

    size_t head_dim() const { return n_channels / n_heads; }
    size_t feature_dim() const { return variant == Variant::kCsi ? n_elements + 2 : 3; }
    void validate() const;
};

/// Fixed-height feature matrix with its padding mask: the first n_valid
/// rows carry user features, the rest are zero.
struct FeatureMatrix {
    size_t n_beams = 0;
    size_t feature_dim = 0;
    size_t n_valid = 0;
    std::vector<double> rows;  // n_beams x feature_dim, row-major
    std::vector<double> mask;  // n_beams entries, 1.0 valid / 0.0 padded
};

inline constexpr double kPhaseSigma = 1.8137993642342178;  // pi / sqrt(3)

/// Label / feature standardization constants plus the deployment bias.
struct LabelStandardizer {
    double mu_sinr_db = 0.0;
    double sigma_sinr_db = 1.0;
    double mu_h = 0.0;
    double sigma_h = 1.0;
    double bias_db = 0.0;

    double standardize(double sinr_db) const { return (sinr_db - mu_sinr_db) / sigma_sinr_db; }
    double destandardize(double output) const {
        return output * sigma_sinr_db + mu_sinr_db - bias_db;
    }
};

FeatureMatrix extract_features_csi(const channel::ChannelMatrix& h_hat, size_t n_beams,
                                   const LabelStandardizer& s);
FeatureMatrix extract_features_geo(const std::vector<geo::UvCoordinate>& users, size_t n_beams);

/// One named parameter block inside the flat parameter vector.
struct ParamBlock {
    std::string name;
    size_t rows = 0, cols = 0, offset = 0;

    size_t size() const { return rows * cols; }
};

/// All learnable weights of one model, stored flat with named views in a
/// fixed, serialized order (embedding stack, position embedding, then the
/// SNR and INR attention modules).
class DmhsaParams {
public:
    DmhsaParams() = default;
    DmhsaParams(const DmhsaConfig& cfg, uint64_t init_seed);

    const DmhsaConfig& config() const { return cfg_; }
    const std::vector<ParamBlock>& blocks() const { return blocks_; }

    std::span<double> flat() { return values_; }
    std::span<const double> flat() const { return values_; }
    size_t count() const { return values_.size(); }

    std::span<const double> view(const std::string& name) const;
    std::span<double> view(const std::string& name);
    const ParamBlock& block(const std::string& name) const;

private:
    friend DmhsaParams layout_only(const DmhsaConfig& cfg);
    void build_layout();

    DmhsaConfig cfg_;
    std::vector<double> values_;
    std::vector<ParamBlock> blocks_;
};

size_t count_parameters(const DmhsaParams& params);

/// Inference output: the estimate and both head contributions, per slot.
struct ForwardResult {
    std::vector<double> estimate;  // snr_head - inr_head, length n_beams
    std::vector<double> snr_head;
    std::vector<double> inr_head;
};

/// Plain (non-taped) forward pass used for inference and evaluation.
ForwardResult forward(const FeatureMatrix& f, const DmhsaParams& params);

/// Handles to the taped forward so the trainer can read parameter grads.
struct GraphForward {
    ad::Var output;                      // n_beams x 1 estimate
    std::vector<ad::Var> param_vars;     // one per ParamBlock, block order
    ad::Var features;
};

/// Records the same computation on an autodiff tape.
GraphForward build_forward(ad::Graph& g, const FeatureMatrix& f, const DmhsaParams& params);

/// Registers each parameter block on the tape, in block order.
std::vector<ad::Var> register_params(ad::Graph& g, const DmhsaParams& params);

/// Taped forward over already-registered parameters, so one tape can carry
/// a whole batch with shared parameter leaves. Returns the n_beams x 1
/// estimate (snr head minus inr head); `features_out`, when given, receives
/// the feature-constant leaf.
ad::Var build_forward_shared(ad::Graph& g, const FeatureMatrix& f, const DmhsaParams& params,
                             const std::vector<ad::Var>& param_vars,
                             ad::Var* features_out = nullptr);

/// Additive attention masks (0 allowed / -1e9 forbidden) for both modules,
/// restricted to the first n_valid slots. The INR mask removes the diagonal.
struct AttentionMasks {
    std::vector<double> snr;  // n_beams x n_beams
    std::vector<double> inr;
};
AttentionMasks attention_masks(size_t n_beams, size_t n_valid);

/// Sum of mask*(pred-label)^2 / sum of mask over any flat layout.
double masked_mse_loss(std::span<const double> pred, std::span<const double> labels,
                       std::span<const double> mask);

/// Mean signed error of destandardized predictions against oracle labels;
/// the value stored as the deployment bias.
double calibrate_bias(std::span<const double> predicted_db, std::span<const double> true_db);

enum class EstimationMethod { kMmse, kCsiDmhsa, kGeoDmhsa };

/// Leading-term operation count for one SINR estimation pass.
uint64_t complexity_estimate(EstimationMethod method, uint64_t n_sched, uint64_t n_r,
                             uint64_t n_c);

/// Versioned binary model file: header, standardizer, then the named
/// parameter blocks in layout order as little-endian float64.
void save_model(const std::string& path, const DmhsaParams& params, const LabelStandardizer& s);
struct LoadedModel {
    DmhsaParams params;
    LabelStandardizer standardizer;
};
LoadedModel load_model(const std::string& path);

}  // namespace leosinr::dmhsa

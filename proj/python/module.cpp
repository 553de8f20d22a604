#include <sstream>

#include <pybind11/complex.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "leosinr/experiment.hpp"
#include "leosinr/verify.hpp"

namespace py = pybind11;
using namespace leosinr;

namespace {

channel::ChannelMatrix channel_from_rows(const std::vector<std::vector<cxd>>& rows) {
    if (rows.empty()) throw ShapeError("channel rows must be non-empty");
    channel::ChannelMatrix h;
    h.coefficients = CxMatrix(rows.size(), rows[0].size());
    for (size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows[0].size())
            throw ShapeError("channel rows must have equal length");
        for (size_t j = 0; j < rows[i].size(); ++j) h.coefficients(i, j) = rows[i][j];
    }
    return h;
}

py::dict sinr_report_dict(const bf::SinrReport& rep) {
    py::dict d;
    d["sinr_db"] = rep.sinr_db;
    d["snr_db"] = rep.snr_db;
    d["inr_db"] = rep.inr_db;
    return d;
}

/// Loaded estimator with its standardization constants.
struct Model {
    dmhsa::LoadedModel loaded;

    std::string variant() const {
        return loaded.params.config().variant == dmhsa::Variant::kCsi ? "csi" : "geo";
    }
    size_t parameter_count() const { return loaded.params.count(); }
    double bias_db() const { return loaded.standardizer.bias_db; }

    std::vector<double> predict_geo(const std::vector<std::pair<double, double>>& uv) const {
        if (loaded.params.config().variant != dmhsa::Variant::kGeo)
            throw ConfigError("predict_geo: model is not the GEO variant");
        std::vector<geo::UvCoordinate> coords;
        coords.reserve(uv.size());
        for (const auto& [u, v] : uv) coords.push_back({u, v});
        const dmhsa::FeatureMatrix f =
            dmhsa::extract_features_geo(coords, loaded.params.config().n_beams);
        const dmhsa::ForwardResult r = dmhsa::forward(f, loaded.params);
        std::vector<double> out(uv.size());
        for (size_t i = 0; i < out.size(); ++i)
            out[i] = loaded.standardizer.destandardize(r.estimate[i]);
        return out;
    }

    std::vector<double> predict_csi(const std::vector<std::vector<cxd>>& rows) const {
        if (loaded.params.config().variant != dmhsa::Variant::kCsi)
            throw ConfigError("predict_csi: model is not the CSI variant");
        const channel::ChannelMatrix h = channel_from_rows(rows);
        const dmhsa::FeatureMatrix f = dmhsa::extract_features_csi(
            h, loaded.params.config().n_beams, loaded.standardizer);
        const dmhsa::ForwardResult r = dmhsa::forward(f, loaded.params);
        std::vector<double> out(rows.size());
        for (size_t i = 0; i < out.size(); ++i)
            out[i] = loaded.standardizer.destandardize(r.estimate[i]);
        return out;
    }
};

}  // namespace

PYBIND11_MODULE(_leosinr, m) {
    m.doc() = "LEO user-centric beamforming SINR lab: channel and geometry models, the MMSE "
              "SINR oracle, and the dual-attention estimators";

    py::class_<geo::OrbitConfig>(m, "OrbitConfig")
        .def(py::init<>())
        .def_readwrite("altitude_km", &geo::OrbitConfig::altitude_km)
        .def_readwrite("earth_radius_km", &geo::OrbitConfig::earth_radius_km)
        .def_readwrite("min_elevation_deg", &geo::OrbitConfig::min_elevation_deg);

    py::class_<geo::GroundPosition>(m, "GroundPosition")
        .def(py::init<double, double>(), py::arg("latitude_deg"), py::arg("longitude_deg"))
        .def_readwrite("latitude_deg", &geo::GroundPosition::latitude_deg)
        .def_readwrite("longitude_deg", &geo::GroundPosition::longitude_deg);

    py::class_<geo::SatState>(m, "SatState")
        .def_readonly("time_s", &geo::SatState::time_s);

    py::class_<geo::Pass>(m, "Pass")
        .def(py::init<const geo::OrbitConfig&, const geo::GroundPosition&, double>(),
             py::arg("orbit"), py::arg("start"), py::arg("heading_deg"))
        .def("state_at", &geo::Pass::state_at, py::arg("time_s"));

    m.def("slant_range_m", &geo::slant_range_m, py::arg("sat"), py::arg("user"),
          py::arg("orbit"));
    m.def("elevation_angle_deg", &geo::elevation_angle_deg, py::arg("sat"), py::arg("user"),
          py::arg("orbit"));
    m.def(
        "uv_of_user",
        [](const geo::SatState& sat, const geo::GroundPosition& user,
           const geo::OrbitConfig& orbit) {
            const geo::UvCoordinate uv = geo::uv_of_user(sat, user, orbit);
            return std::make_pair(uv.u, uv.v);
        },
        py::arg("sat"), py::arg("user"), py::arg("orbit"));

    m.def(
        "mmse_sinr",
        [](const std::vector<std::vector<cxd>>& channel_rows, double per_element_power_w) {
            const channel::ChannelMatrix h = channel_from_rows(channel_rows);
            const bf::BeamformerConfig cfg{h.coefficients.cols(), per_element_power_w};
            const bf::BeamformingMatrix bm =
                bf::per_antenna_normalize(bf::mmse_beamformer(h, cfg), cfg);
            return sinr_report_dict(bf::evaluate_sinr(h, bm.normalized));
        },
        py::arg("channel_rows"), py::arg("per_element_power_w") = 0.065,
        "MMSE beamforming with the per-antenna power constraint; returns the oracle "
        "SINR/SNR/INR in dB for each user row");

    m.def("channel_correlation",
          [](const std::vector<cxd>& a, const std::vector<cxd>& b) {
              return sched::channel_correlation(a, b);
          });

    m.def(
        "complexity_estimate",
        [](const std::string& method, uint64_t n_sched, uint64_t n_r, uint64_t n_c) {
            dmhsa::EstimationMethod mm;
            if (method == "mmse") mm = dmhsa::EstimationMethod::kMmse;
            else if (method == "csi") mm = dmhsa::EstimationMethod::kCsiDmhsa;
            else if (method == "geo") mm = dmhsa::EstimationMethod::kGeoDmhsa;
            else throw ConfigError("complexity_estimate: method must be mmse|csi|geo");
            return dmhsa::complexity_estimate(mm, n_sched, n_r, n_c);
        },
        py::arg("method"), py::arg("n_sched"), py::arg("n_r") = 512, py::arg("n_c") = 8);

    m.def(
        "lr_at_epoch",
        [](long epoch, long warmup, long cycle, double lr_min, double lr_max) {
            return ad::lr_at_epoch(epoch, {warmup, cycle, lr_min, lr_max});
        },
        py::arg("epoch"), py::arg("warmup_epochs") = 40, py::arg("cycle_epochs") = 100,
        py::arg("lr_min") = 1e-4, py::arg("lr_max") = 5e-3);

    py::class_<Model>(m, "Model")
        .def_property_readonly("variant", &Model::variant)
        .def_property_readonly("parameter_count", &Model::parameter_count)
        .def_property_readonly("bias_db", &Model::bias_db)
        .def("predict_geo", &Model::predict_geo, py::arg("uv"),
             "SINR estimates in dB from (u, v) user coordinates")
        .def("predict_csi", &Model::predict_csi, py::arg("channel_rows"),
             "SINR estimates in dB from reported channel rows");

    m.def("load_model", [](const std::string& path) { return Model{dmhsa::load_model(path)}; });

    m.def(
        "selftest",
        []() {
            std::ostringstream out;
            const int failures = exp::selftest(out);
            return std::make_pair(failures, out.str());
        },
        "runs the oracle/gradient property suites; returns (failure_count, log)");

    m.attr("__version__") = "0.1.0";
}

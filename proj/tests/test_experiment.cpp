#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "leosinr/experiment.hpp"

using namespace leosinr;
using namespace leosinr::exp;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

ExperimentConfig tiny_config() {
    ExperimentConfig cfg = ExperimentConfig::from_profile(Profile::kDesk);
    cfg.seed = 424242;
    cfg.batch_size = 8;
    cfg.max_epochs = 6;
    cfg.lr.warmup_epochs = 2;
    cfg.lr.cycle_epochs = 2;
    cfg.calibration_samples = 32;
    cfg.eval_test_samples = 40;
    cfg.population_count = 16;
    cfg.pqs_periods_per_cell = 1;
    cfg.pqs_calibration_periods = 1;
    cfg.pqs.scheduling_period_s = 0.2;
    return cfg;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("config: profiles, strict parsing, overrides") {
    const ExperimentConfig desk = ExperimentConfig::from_profile(Profile::kDesk);
    CHECK(desk.array.n_elements == 64);
    CHECK(desk.n_beams == 8);
    CHECK(desk.batch_size == 256);
    desk.validate();

    const ExperimentConfig paper = ExperimentConfig::from_profile(Profile::kPaper);
    CHECK(paper.array.n_elements == 512);
    CHECK(paper.n_beams == 24);
    CHECK(paper.batch_size == 8192);
    CHECK(paper.max_epochs == 15000);
    CHECK(paper.lr.warmup_epochs == 40);
    CHECK(paper.lr.cycle_epochs == 100);
    CHECK(paper.lr.lr_min == 1e-4);
    CHECK(paper.lr.lr_max == 5e-3);
    CHECK(paper.l2 == 1e-6);
    CHECK(paper.patience_cycles == 4);
    paper.validate();

    ExperimentConfig cfg = ExperimentConfig::from_profile(Profile::kDesk);
    cfg.apply_key("array.n_elements", "16");
    CHECK(cfg.array.n_elements == 16);
    CHECK_THROWS_AS(cfg.apply_key("array.bogus", "1"), ConfigError);
    CHECK_THROWS_AS(cfg.apply_key("seed", "abc"), ConfigError);
    CHECK_THROWS_AS(cfg.apply_key("variant", "lidar"), ConfigError);

    TempDir dir("leosinr_cfg_test");
    {
        std::ofstream f(dir.path / "exp.cfg");
        f << "# comment line\n"
          << "array.n_elements = 16\n"
          << "array.grid_rows = 4\n"
          << "array.grid_cols = 4   # trailing comment\n"
          << "model.n_beams = 4\n"
          << "sched.min_group_size = 2\n"
          << "population.cluster_along_km = -50, 80\n"
          << "population.cluster_sigma_km = 40, 40\n";
    }
    ExperimentConfig from_file = ExperimentConfig::from_profile(Profile::kDesk);
    from_file.apply_file((dir.path / "exp.cfg").string());
    CHECK(from_file.array.n_elements == 16);
    CHECK(from_file.n_beams == 4);
    CHECK(from_file.clusters.size() == 3);  // lists shorter than the default keep the tail
    CHECK(from_file.clusters[0].along_km == -50.0);
    CHECK(from_file.clusters[1].sigma_km == 40.0);

    {
        std::ofstream f(dir.path / "bad.cfg");
        f << "not a key value line\n";
    }
    ExperimentConfig bad = ExperimentConfig::from_profile(Profile::kDesk);
    CHECK_THROWS_AS(bad.apply_file((dir.path / "bad.cfg").string()), ConfigError);
}

TEST_CASE("instances are deterministic in the seed and vary across epochs") {
    ExperimentConfig cfg = tiny_config();
    const geo::Pass pass = cfg.make_pass();
    dmhsa::LabelStandardizer s;

    const Instance a = generate_instance(cfg, pass, s, derive_seed(cfg.seed, "train-epoch", 0));
    const Instance b = generate_instance(cfg, pass, s, derive_seed(cfg.seed, "train-epoch", 0));
    CHECK(a.features.n_valid == b.features.n_valid);
    CHECK(a.features.rows == b.features.rows);
    CHECK(a.labels_db == b.labels_db);

    const Instance c = generate_instance(cfg, pass, s, derive_seed(cfg.seed, "train-epoch", 1));
    CHECK(a.features.rows != c.features.rows);

    CHECK(a.features.n_valid >= cfg.min_group_size);
    CHECK(a.features.n_valid <= cfg.n_beams);
    for (size_t u = 0; u < a.features.n_valid; ++u) {
        CHECK(a.features.mask[u] == 1.0);
        CHECK(std::isfinite(a.labels_db[u]));
    }
    for (size_t u = a.features.n_valid; u < cfg.n_beams; ++u) CHECK(a.features.mask[u] == 0.0);
}

TEST_CASE("labels replay the oracle sample by sample") {
    ExperimentConfig cfg = tiny_config();
    const geo::Pass pass = cfg.make_pass();
    dmhsa::LabelStandardizer s;
    for (uint64_t i = 0; i < 5; ++i) {
        const uint64_t seed = derive_seed(cfg.seed, "replay", i);
        const Instance first = generate_instance(cfg, pass, s, seed);
        const Instance replay = generate_instance(cfg, pass, s, seed);
        for (size_t u = 0; u < first.features.n_valid; ++u)
            CHECK(first.labels_db[u] == doctest::Approx(replay.labels_db[u]).epsilon(1e-9));
    }
}

TEST_CASE("calibration statistics are finite and scale-consistent") {
    ExperimentConfig cfg = tiny_config();
    const geo::Pass pass = cfg.make_pass();
    const CalibrationStats st = estimate_calibration(cfg, pass);
    CHECK(std::isfinite(st.mu_h));
    CHECK(st.sigma_h > 0.0);
    CHECK(std::isfinite(st.mu_sinr_db));
    CHECK(st.sigma_sinr_db > 0.0);
    CHECK(st.mu_h > 0.0);  // mean squared magnitude is positive
}

TEST_CASE("training writes a curve whose lr column replays the schedule") {
    ExperimentConfig cfg = tiny_config();
    TempDir dir("leosinr_train_test");
    const TrainSummary summary = train(cfg, dir.str());
    CHECK(summary.epochs_run == 6);
    CHECK(fs::exists(summary.model_path));

    std::ifstream curve(summary.curve_path);
    std::string header;
    std::getline(curve, header);
    CHECK(header == "epoch,lr,loss");
    long epoch = 0;
    std::string line;
    while (std::getline(curve, line)) {
        std::stringstream ss(line);
        std::string field;
        std::getline(ss, field, ',');
        CHECK(std::stol(field) == epoch);
        std::getline(ss, field, ',');
        CHECK(std::stod(field) == ad::lr_at_epoch(epoch, cfg.lr));  // %.17g round trips
        std::getline(ss, field, ',');
        CHECK(std::isfinite(std::stod(field)));
        ++epoch;
    }
    CHECK(epoch == summary.epochs_run);

    // the saved model reloads with the desk architecture
    const dmhsa::LoadedModel model = dmhsa::load_model(summary.model_path);
    CHECK(model.params.config().n_beams == cfg.n_beams);
    CHECK(model.standardizer.sigma_sinr_db > 0.0);
}

TEST_CASE("end-to-end determinism of a tiny run") {
    ExperimentConfig cfg = tiny_config();
    TempDir dir_a("leosinr_det_a");
    TempDir dir_b("leosinr_det_b");
    const TrainSummary sa = train(cfg, dir_a.str());
    const TrainSummary sb = train(cfg, dir_b.str());
    CHECK(read_file(sa.model_path) == read_file(sb.model_path));
    CHECK(read_file(sa.curve_path) == read_file(sb.curve_path));
}

TEST_CASE("random evaluation emits normalized histograms and consistent rmse") {
    ExperimentConfig cfg = tiny_config();
    TempDir dir("leosinr_eval_test");
    const TrainSummary ts = train(cfg, dir.str());
    const EvalRandomSummary es = eval_random(cfg, ts.model_path, dir.str());
    CHECK(es.n_estimates > 0);
    CHECK(es.baseline_rmse_db > 0.0);

    // histogram: per-bucket mass times width sums to one
    std::ifstream hist(dir.path / "error_histogram.csv");
    std::string line;
    std::getline(hist, line);
    CHECK(line == "n_sched,bin_lo,bin_hi,pdf");
    std::map<long, double> mass;
    while (std::getline(hist, line)) {
        std::stringstream ss(line);
        std::string ns, lo, hi, pdf;
        std::getline(ss, ns, ',');
        std::getline(ss, lo, ',');
        std::getline(ss, hi, ',');
        std::getline(ss, pdf, ',');
        mass[std::stol(ns)] += std::stod(pdf) * (std::stod(hi) - std::stod(lo));
    }
    for (const auto& [ns, m] : mass) CHECK(m == doctest::Approx(1.0).epsilon(1e-9));

    // rmse_by_nsched rows recompute from the summary buckets
    std::ifstream rb(dir.path / "rmse_by_nsched.csv");
    std::getline(rb, line);
    CHECK(line == "n_sched,count,rmse_db");
    size_t row = 0;
    while (std::getline(rb, line)) {
        std::stringstream ss(line);
        std::string ns, count, rmse;
        std::getline(ss, ns, ',');
        std::getline(ss, count, ',');
        std::getline(ss, rmse, ',');
        REQUIRE(row < es.bucket_rmse_db.size());
        CHECK(std::stoul(ns) == es.bucket_n_sched[row]);
        CHECK(std::stod(rmse) == doctest::Approx(es.bucket_rmse_db[row]).epsilon(1e-12));
        ++row;
    }
    CHECK(row == es.bucket_rmse_db.size());
}

TEST_CASE("pqs evaluation and bias calibration run end to end") {
    ExperimentConfig cfg = tiny_config();
    TempDir dir("leosinr_pqs_test");
    const TrainSummary ts = train(cfg, dir.str());

    const double bias = calibrate_model_bias(cfg, ts.model_path);
    CHECK(std::isfinite(bias));
    const dmhsa::LoadedModel model = dmhsa::load_model(ts.model_path);
    CHECK(model.standardizer.bias_db == doctest::Approx(bias).epsilon(1e-12));

    const EvalPqsSummary es = eval_pqs(cfg, ts.model_path, dir.str());
    CHECK(es.cells.size() == 4);
    for (const PqsCellStats& c : es.cells) {
        CHECK(c.n_estimates > 0);
        CHECK(c.constraint_violations == 0);
        CHECK(std::isfinite(c.rmse_db));
        CHECK(c.median_abs_err_db >= 0.0);
        CHECK(c.mean_group_size >= 1.0);
    }

    // CDF is non-decreasing from >0 to 1 within each cell
    std::ifstream cdf(dir.path / "pqs_abs_error_cdf.csv");
    std::string line;
    std::getline(cdf, line);
    CHECK(line == "c_min_mbps,c_max_mbps,abs_err_db,cdf");
    std::map<std::string, std::pair<double, double>> cell_range;  // first, last cdf
    std::map<std::string, double> prev;
    while (std::getline(cdf, line)) {
        std::stringstream ss(line);
        std::string cmin, cmax, err, f;
        std::getline(ss, cmin, ',');
        std::getline(ss, cmax, ',');
        std::getline(ss, err, ',');
        std::getline(ss, f, ',');
        const std::string key = cmin + "/" + cmax;
        const double fv = std::stod(f);
        if (!prev.count(key)) {
            cell_range[key].first = fv;
        } else {
            CHECK(fv >= prev[key]);
        }
        prev[key] = fv;
        cell_range[key].second = fv;
    }
    CHECK(cell_range.size() == 4);
    for (const auto& [key, range] : cell_range) {
        CHECK(range.first > 0.0);
        CHECK(range.second == doctest::Approx(1.0).epsilon(1e-12));
    }

    // emitted schedules: header plus unique, within-bounds user ids per slot
    std::ifstream sched(dir.path / "pqs_schedules.csv");
    std::getline(sched, line);
    CHECK(line == "c_min_mbps,c_max_mbps,period,slot_index,user_ids");
    size_t schedule_rows = 0;
    while (std::getline(sched, line)) {
        ++schedule_rows;
        const auto last_comma = line.rfind(',');
        std::stringstream ids(line.substr(last_comma + 1));
        std::string id;
        std::set<unsigned long> seen;
        while (std::getline(ids, id, ';')) {
            const unsigned long u = std::stoul(id);
            CHECK(u < cfg.population_count);
            CHECK(seen.insert(u).second);  // no duplicate users in a group
        }
        CHECK_FALSE(seen.empty());
        CHECK(seen.size() <= cfg.n_beams);
    }
    CHECK(schedule_rows > 0);
}

TEST_CASE("complexity report reproduces the published row") {
    TempDir dir("leosinr_cx_test");
    write_complexity_report(dir.str());
    std::ifstream in(dir.path / "complexity.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "n_c,mmse_ops,csi_dmhsa_ops,geo_dmhsa_ops");
    bool found_nc8 = false;
    long prev_mmse = -1;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string nc, mmse, csi, geo;
        std::getline(ss, nc, ',');
        std::getline(ss, mmse, ',');
        std::getline(ss, csi, ',');
        std::getline(ss, geo, ',');
        if (prev_mmse >= 0) CHECK(std::stol(mmse) == prev_mmse);  // constant in N_C
        prev_mmse = std::stol(mmse);
        if (nc == "8") {
            found_nc8 = true;
            CHECK(mmse == "294912");
            CHECK(csi == "98304");
            CHECK(geo == "4608");
        }
    }
    CHECK(found_nc8);
}

TEST_CASE("gen-calibration writes the constants and a config fragment") {
    ExperimentConfig cfg = tiny_config();
    TempDir dir("leosinr_gencal_test");
    const CalibrationStats st = gen_calibration(cfg, dir.str());
    CHECK(fs::exists(dir.path / "calibration.json"));
    const std::string frag = read_file((dir.path / "calibration.cfg").string());
    CHECK(frag.find("calib.mu_h = ") != std::string::npos);
    CHECK(frag.find("calib.sigma_sinr = ") != std::string::npos);

    // the fragment parses back and pins the standardizer
    ExperimentConfig cfg2 = tiny_config();
    cfg2.apply_file((dir.path / "calibration.cfg").string());
    CHECK(cfg2.has_calibration());
    CHECK(cfg2.calib_mu_h == doctest::Approx(st.mu_h).epsilon(1e-15));
}

TEST_CASE("paper-profile dimensions flow through generation and inference") {
    ExperimentConfig cfg = ExperimentConfig::from_profile(Profile::kPaper);
    cfg.seed = 31;
    const geo::Pass pass = cfg.make_pass();
    dmhsa::LabelStandardizer s;
    s.mu_h = 1e-7;
    s.sigma_h = 1e-7;

    for (dmhsa::Variant variant : {dmhsa::Variant::kGeo, dmhsa::Variant::kCsi}) {
        cfg.variant = variant;
        const Instance inst = generate_instance(cfg, pass, s, derive_seed(cfg.seed, "pp", 1));
        CHECK(inst.features.n_beams == 24);
        CHECK(inst.features.n_valid >= 8);
        CHECK(inst.features.n_valid <= 24);
        CHECK(inst.features.feature_dim == (variant == dmhsa::Variant::kCsi ? 514u : 3u));
        for (size_t u = 0; u < inst.features.n_valid; ++u) CHECK(std::isfinite(inst.labels_db[u]));

        const dmhsa::DmhsaParams params(cfg.model(), 5);
        CHECK(params.count() == (variant == dmhsa::Variant::kCsi ? 5010u : 922u));
        const dmhsa::ForwardResult r = dmhsa::forward(inst.features, params);
        for (size_t u = 0; u < inst.features.n_valid; ++u) CHECK(std::isfinite(r.estimate[u]));

        // one taped step at full width keeps gradients finite
        ad::Graph g;
        const auto pv = dmhsa::register_params(g, params);
        const ad::Var y = dmhsa::build_forward_shared(g, inst.features, params, pv);
        std::vector<double> labels(24, 0.0), mask(24, 0.0);
        for (size_t u = 0; u < inst.features.n_valid; ++u) {
            labels[u] = s.standardize(inst.labels_db[u]);
            mask[u] = 1.0;
        }
        g.backward(g.masked_mse(y, labels, mask));
        for (size_t b = 0; b < pv.size(); ++b)
            for (double gr : g.grad(pv[b])) CHECK(std::isfinite(gr));
    }
}

TEST_CASE("worker count does not change any output byte") {
    ExperimentConfig cfg = tiny_config();
    TempDir dir_serial("leosinr_w1");
    TempDir dir_parallel("leosinr_w4");
    cfg.workers = 1;
    const TrainSummary a = train(cfg, dir_serial.str());
    cfg.workers = 4;
    const TrainSummary b = train(cfg, dir_parallel.str());
    CHECK(read_file(a.model_path) == read_file(b.model_path));
    CHECK(read_file(a.curve_path) == read_file(b.curve_path));

    const EvalRandomSummary ea = eval_random(cfg, a.model_path, dir_serial.str());
    cfg.workers = 1;
    const EvalRandomSummary eb = eval_random(cfg, b.model_path, dir_parallel.str());
    CHECK(ea.rmse_db == eb.rmse_db);
    CHECK(read_file((dir_serial.path / "error_histogram.csv").string()) ==
          read_file((dir_parallel.path / "error_histogram.csv").string()));
}

TEST_CASE("train and eval streams are domain separated") {
    CHECK(derive_seed(1, "train-epoch", 0) != derive_seed(1, "eval-random", 0));
    CHECK(derive_seed(1, "calibration", 5) != derive_seed(1, "train-epoch", 5));
    CHECK(derive_seed(1, "x", 0) != derive_seed(2, "x", 0));
}

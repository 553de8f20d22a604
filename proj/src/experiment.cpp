#include "leosinr/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <thread>

#include "json.hpp"
#include "leosinr/rng.hpp"

namespace leosinr::exp {

namespace {

using nlohmann::json;

std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void parallel_for(size_t n, int workers, const std::function<void(size_t)>& fn) {
    if (workers <= 1 || n < 2) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const size_t n_threads = std::min<size_t>(static_cast<size_t>(workers), n);
    std::vector<std::thread> pool;
    std::atomic<size_t> next{0};
    for (size_t t = 0; t < n_threads; ++t)
        pool.emplace_back([&] {
            for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    for (auto& th : pool) th.join();
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError("cannot open output file " + path);
    return out;
}

struct ScenarioDraw {
    std::vector<channel::UserGeometry> geoms;
    std::vector<double> losses_db;  // empty when the constant budget loss applies
};

geo::ClusterSpec anchored_clusters(const ExperimentConfig& cfg, const geo::SatState& sat) {
    geo::ClusterSpec spec;
    const Vec3 ground = sat.nadir * -1.0;
    for (const RelativeCluster& rc : cfg.clusters) {
        geo::ClusterComponent comp;
        const double dist = std::hypot(rc.along_km, rc.cross_km);
        if (dist == 0.0) {
            comp.center = geo::GroundPosition::from_unit_vector(ground);
        } else {
            const Vec3 dir = (sat.along_track * (rc.along_km / dist) +
                              sat.cross_track * (rc.cross_km / dist));
            comp.center = geo::displace_ground(ground, dir, dist, cfg.orbit.earth_radius_km);
        }
        comp.sigma_km = rc.sigma_km;
        comp.weight = rc.weight;
        spec.components.push_back(comp);
    }
    return spec;
}

/// One random-scheduler scenario: pass instant, group size, user drop,
/// per-user losses. Drawing exactly the group keeps the i.i.d. mixture
/// distribution of a subset of a larger drop.
ScenarioDraw draw_scenario(const ExperimentConfig& cfg, const geo::Pass& pass,
                           uint64_t instance_seed) {
    Rng rng(instance_seed);
    const double t = rng.uniform(0.0, cfg.pass_duration_s);
    const geo::SatState sat = pass.state_at(t);
    const size_t group_size =
        static_cast<size_t>(rng.uniform_int(cfg.min_group_size, cfg.n_beams));
    const geo::UserPopulation pop = geo::drop_users(rng.next_u64(), group_size,
                                                    anchored_clusters(cfg, sat), sat, cfg.orbit);
    ScenarioDraw draw;
    draw.geoms.reserve(group_size);
    for (const geo::GroundPosition& p : pop.positions)
        draw.geoms.push_back(channel::user_geometry(sat, p, cfg.orbit));
    if (cfg.shadow_sigma_db > 0.0) {
        draw.losses_db.resize(group_size);
        for (double& l : draw.losses_db)
            l = cfg.link.stochastic_loss_db + cfg.shadow_sigma_db * rng.normal();
    }
    return draw;
}

dmhsa::FeatureMatrix features_for(const ScenarioDraw& draw, const ExperimentConfig& cfg,
                                  const dmhsa::LabelStandardizer& s) {
    if (cfg.variant == dmhsa::Variant::kCsi) {
        const channel::ChannelMatrix h = channel::build_channel_matrix(
            draw.geoms, cfg.link, cfg.array, /*clear_sky=*/false,
            draw.losses_db.empty() ? nullptr : &draw.losses_db);
        return dmhsa::extract_features_csi(h, cfg.n_beams, s);
    }
    std::vector<geo::UvCoordinate> uv;
    uv.reserve(draw.geoms.size());
    for (const channel::UserGeometry& g : draw.geoms) uv.push_back({g.dir_x, g.dir_y});
    return dmhsa::extract_features_geo(uv, cfg.n_beams);
}

std::vector<double> labels_for(const ScenarioDraw& draw, const ExperimentConfig& cfg) {
    const bf::ReportMode mode = cfg.variant == dmhsa::Variant::kCsi ? bf::ReportMode::kCsi
                                                                    : bf::ReportMode::kGeo;
    const bf::SinrReport rep =
        bf::sinr_oracle(draw.geoms, cfg.link, cfg.array, cfg.beamformer(), mode,
                        draw.losses_db.empty() ? nullptr : &draw.losses_db);
    return rep.sinr_db;
}

std::vector<double> predict_db(const Instance& inst, const dmhsa::DmhsaParams& params,
                               const dmhsa::LabelStandardizer& s) {
    const dmhsa::ForwardResult r = dmhsa::forward(inst.features, params);
    std::vector<double> out(inst.features.n_valid);
    for (size_t u = 0; u < out.size(); ++u) out[u] = s.destandardize(r.estimate[u]);
    return out;
}

double mean_of(std::span<const double> xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

double rmse_of(std::span<const double> errs) {
    double s = 0.0;
    for (double e : errs) s += e * e;
    return errs.empty() ? 0.0 : std::sqrt(s / static_cast<double>(errs.size()));
}

std::vector<double> mean_ranks(std::span<const double> xs) {
    const size_t n = xs.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return xs[a] < xs[b]; });
    std::vector<double> rank(n, 0.0);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
        const double mr = 0.5 * static_cast<double>(i + j);
        for (size_t k = i; k <= j; ++k) rank[order[k]] = mr;
        i = j + 1;
    }
    return rank;
}

double spearman(std::span<const double> a, std::span<const double> b) {
    const size_t n = a.size();
    if (n < 2) return 0.0;
    const std::vector<double> ra = mean_ranks(a);
    const std::vector<double> rb = mean_ranks(b);
    const double ma = mean_of(ra), mb = mean_of(rb);
    double num = 0.0, da = 0.0, db = 0.0;
    for (size_t i = 0; i < n; ++i) {
        num += (ra[i] - ma) * (rb[i] - mb);
        da += (ra[i] - ma) * (ra[i] - ma);
        db += (rb[i] - mb) * (rb[i] - mb);
    }
    if (da == 0.0 || db == 0.0) return 0.0;
    return num / std::sqrt(da * db);
}

json config_echo(const ExperimentConfig& cfg) {
    json j;
    j["profile"] = cfg.profile == Profile::kDesk ? "desk" : "paper";
    j["variant"] = cfg.variant == dmhsa::Variant::kCsi ? "csi" : "geo";
    j["seed"] = cfg.seed;
    j["array.n_elements"] = cfg.array.n_elements;
    j["model.n_beams"] = cfg.n_beams;
    j["model.n_channels"] = cfg.n_channels;
    j["model.n_heads"] = cfg.n_heads;
    j["train.batch_size"] = cfg.batch_size;
    j["train.max_epochs"] = cfg.max_epochs;
    j["train.l2"] = cfg.l2;
    j["train.lr_min"] = cfg.lr.lr_min;
    j["train.lr_max"] = cfg.lr.lr_max;
    j["train.warmup_epochs"] = cfg.lr.warmup_epochs;
    j["train.cycle_epochs"] = cfg.lr.cycle_epochs;
    j["sched.min_group_size"] = cfg.min_group_size;
    j["population.count"] = cfg.population_count;
    return j;
}

std::string model_filename(const ExperimentConfig& cfg) {
    return cfg.variant == dmhsa::Variant::kCsi ? "model_csi.bin" : "model_geo.bin";
}

}  // namespace

Instance generate_instance(const ExperimentConfig& cfg, const geo::Pass& pass,
                           const dmhsa::LabelStandardizer& s, uint64_t instance_seed) {
    const ScenarioDraw draw = draw_scenario(cfg, pass, instance_seed);
    Instance inst;
    inst.features = features_for(draw, cfg, s);
    const std::vector<double> sinr = labels_for(draw, cfg);
    inst.labels_db.assign(cfg.n_beams, 0.0);
    std::copy(sinr.begin(), sinr.end(), inst.labels_db.begin());
    return inst;
}

CalibrationStats estimate_calibration(const ExperimentConfig& cfg, const geo::Pass& pass) {
    const size_t n = cfg.calibration_samples;
    std::vector<std::vector<double>> sinrs(n);
    std::vector<std::vector<double>> mean_sq(n);
    parallel_for(n, cfg.workers, [&](size_t i) {
        const ScenarioDraw draw =
            draw_scenario(cfg, pass, derive_seed(cfg.seed, "calibration", i));
        sinrs[i] = labels_for(draw, cfg);
        const channel::ChannelMatrix h = channel::build_channel_matrix(
            draw.geoms, cfg.link, cfg.array, /*clear_sky=*/false,
            draw.losses_db.empty() ? nullptr : &draw.losses_db);
        mean_sq[i].resize(h.coefficients.rows());
        for (size_t k = 0; k < h.coefficients.rows(); ++k) {
            double acc = 0.0;
            for (size_t e = 0; e < h.coefficients.cols(); ++e)
                acc += std::norm(h.coefficients(k, e));
            mean_sq[i][k] = acc / static_cast<double>(h.coefficients.cols());
        }
    });

    auto moments = [](const std::vector<std::vector<double>>& groups) {
        double sum = 0.0, sum_sq = 0.0;
        size_t count = 0;
        for (const auto& g : groups)
            for (double v : g) {
                sum += v;
                sum_sq += v * v;
                ++count;
            }
        const double mean = sum / static_cast<double>(count);
        const double var = std::max(sum_sq / static_cast<double>(count) - mean * mean, 0.0);
        return std::pair<double, double>{mean, std::sqrt(var)};
    };
    CalibrationStats stats;
    auto [mh, sh] = moments(mean_sq);
    auto [ms, ss] = moments(sinrs);
    stats.mu_h = mh;
    stats.sigma_h = sh > 0.0 ? sh : 1.0;
    stats.mu_sinr_db = ms;
    stats.sigma_sinr_db = ss > 0.0 ? ss : 1.0;
    return stats;
}

dmhsa::LabelStandardizer resolve_standardizer(const ExperimentConfig& cfg,
                                              const geo::Pass& pass) {
    dmhsa::LabelStandardizer s;
    if (cfg.has_calibration()) {
        s.mu_h = cfg.calib_mu_h;
        s.sigma_h = cfg.calib_sigma_h;
        s.mu_sinr_db = cfg.calib_mu_sinr;
        s.sigma_sinr_db = cfg.calib_sigma_sinr;
        return s;
    }
    const CalibrationStats stats = estimate_calibration(cfg, pass);
    s.mu_h = stats.mu_h;
    s.sigma_h = stats.sigma_h;
    s.mu_sinr_db = stats.mu_sinr_db;
    s.sigma_sinr_db = stats.sigma_sinr_db;
    return s;
}

TrainSummary train(const ExperimentConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    std::filesystem::create_directories(out_dir);
    const geo::Pass pass = cfg.make_pass();
    const dmhsa::LabelStandardizer standardizer = resolve_standardizer(cfg, pass);

    dmhsa::DmhsaParams params(cfg.model(), derive_seed(cfg.seed, "init", 0));
    ad::AdamState adam(params.count());
    ad::EarlyStopper stopper(cfg.patience_cycles);

    TrainSummary summary;
    summary.model_path = out_dir + "/" + model_filename(cfg);
    summary.curve_path = out_dir + "/training_curve.csv";

    std::vector<double> best_params(params.flat().begin(), params.flat().end());
    double best_loss = std::numeric_limits<double>::infinity();
    long best_epoch = -1;

    std::ofstream curve = open_out(summary.curve_path);
    curve << "epoch,lr,loss\n";

    double cycle_sum = 0.0;
    long cycle_count = 0;
    bool stopped = false;

    const size_t nb = cfg.n_beams;
    const size_t n_batch = cfg.batch_size;

    for (long epoch = 0; epoch < cfg.max_epochs && !stopped; ++epoch) {
        const uint64_t epoch_seed = derive_seed(cfg.seed, "train-epoch", epoch);
        std::vector<Instance> batch(n_batch);
        parallel_for(n_batch, cfg.workers, [&](size_t i) {
            batch[i] =
                generate_instance(cfg, pass, standardizer, derive_seed(epoch_seed, "sample", i));
        });

        // one tape over the whole batch; parameters registered once
        ad::Graph g;
        std::vector<ad::Var> param_vars;
        param_vars.reserve(params.blocks().size());
        for (const dmhsa::ParamBlock& b : params.blocks())
            param_vars.push_back(
                g.param(b.rows, b.cols, params.flat().subspan(b.offset, b.size())));

        std::vector<ad::Var> outputs;
        outputs.reserve(n_batch);
        for (const Instance& inst : batch)
            outputs.push_back(
                dmhsa::build_forward_shared(g, inst.features, params, param_vars));
        const ad::Var pred = g.concat_cols(outputs);  // n_beams x n_batch

        std::vector<double> labels_std(nb * n_batch, 0.0);
        std::vector<double> mask(nb * n_batch, 0.0);
        for (size_t s = 0; s < n_batch; ++s)
            for (size_t u = 0; u < batch[s].features.n_valid; ++u) {
                labels_std[u * n_batch + s] = standardizer.standardize(batch[s].labels_db[u]);
                mask[u * n_batch + s] = 1.0;
            }
        const ad::Var loss_var = g.masked_mse(pred, labels_std, mask);
        const double loss = g.value(loss_var)[0];
        if (!std::isfinite(loss)) {
            json diag;
            diag["epoch"] = epoch;
            diag["loss"] = "non-finite";
            diag["lr"] = ad::lr_at_epoch(epoch, cfg.lr);
            std::ofstream d = open_out(out_dir + "/diagnostic.json");
            d << diag.dump(2) << "\n";
            throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch));
        }
        if (epoch == 0) summary.first_epoch_loss = loss;
        if (loss < best_loss) {
            best_loss = loss;
            best_epoch = epoch;
            std::copy(params.flat().begin(), params.flat().end(), best_params.begin());
        }

        const std::vector<ad::Var> disconnected = g.backward(loss_var);
        if (!disconnected.empty() && epoch == 0)
            std::cerr << "train: warning: " << disconnected.size()
                      << " parameter block(s) do not influence the loss\n";
        std::vector<double> grads(params.count(), 0.0);
        const auto& blocks = params.blocks();
        for (size_t i = 0; i < blocks.size(); ++i) {
            const std::vector<double>& bg = g.grad(param_vars[i]);
            std::copy(bg.begin(), bg.end(), grads.begin() + static_cast<long>(blocks[i].offset));
        }
        const double lr = ad::lr_at_epoch(epoch, cfg.lr);
        ad::adam_step(params.flat(), grads, adam, lr, cfg.l2);

        curve << epoch << "," << g17(lr) << "," << g17(loss) << "\n";
        summary.epochs_run = epoch + 1;

        const long cycle = ad::annealing_cycle_of_epoch(epoch, cfg.lr);
        if (cycle >= 0) {
            cycle_sum += loss;
            ++cycle_count;
            const bool cycle_ends =
                ad::annealing_cycle_of_epoch(epoch + 1, cfg.lr) != cycle ||
                epoch + 1 == cfg.max_epochs;
            if (cycle_ends) {
                const double cycle_mean = cycle_sum / static_cast<double>(cycle_count);
                summary.final_cycle_mean_loss = cycle_mean;
                cycle_sum = 0.0;
                cycle_count = 0;
                if (!stopper.update(cycle_mean)) {
                    stopped = true;
                    summary.early_stopped = true;
                }
            }
        }
    }
    curve.close();

    summary.best_loss = best_loss;
    summary.best_epoch = best_epoch;
    std::copy(best_params.begin(), best_params.end(), params.flat().begin());
    dmhsa::save_model(summary.model_path, params, standardizer);

    json meta;
    meta["config"] = config_echo(cfg);
    meta["standardizer"] = {{"mu_sinr_db", standardizer.mu_sinr_db},
                            {"sigma_sinr_db", standardizer.sigma_sinr_db},
                            {"mu_h", standardizer.mu_h},
                            {"sigma_h", standardizer.sigma_h},
                            {"bias_db", standardizer.bias_db}};
    meta["epochs_run"] = summary.epochs_run;
    meta["final_cycle_mean_loss"] = summary.final_cycle_mean_loss;
    meta["first_epoch_loss"] = summary.first_epoch_loss;
    meta["best_loss"] = summary.best_loss;
    meta["best_epoch"] = summary.best_epoch;
    meta["early_stopped"] = summary.early_stopped;
    meta["parameter_count"] = params.count();
    std::ofstream mj = open_out(out_dir + "/train_metadata.json");
    mj << meta.dump(2) << "\n";
    return summary;
}

EvalRandomSummary eval_random(const ExperimentConfig& cfg, const std::string& model_path,
                              const std::string& out_dir) {
    cfg.validate();
    std::filesystem::create_directories(out_dir);
    const geo::Pass pass = cfg.make_pass();
    const dmhsa::LoadedModel model = dmhsa::load_model(model_path);
    if (model.params.config().variant != cfg.variant)
        throw ConfigError("eval_random: model variant does not match the configuration");

    const size_t n = cfg.eval_test_samples;
    struct PerSample {
        size_t n_sched = 0;
        std::vector<double> errs;
        std::vector<double> labels;
    };
    std::vector<PerSample> results(n);
    parallel_for(n, cfg.workers, [&](size_t i) {
        const Instance inst = generate_instance(cfg, pass, model.standardizer,
                                                derive_seed(cfg.seed, "eval-random", i));
        const std::vector<double> pred = predict_db(inst, model.params, model.standardizer);
        PerSample& r = results[i];
        r.n_sched = inst.features.n_valid;
        r.errs.resize(pred.size());
        r.labels.resize(pred.size());
        for (size_t u = 0; u < pred.size(); ++u) {
            r.errs[u] = pred[u] - inst.labels_db[u];
            r.labels[u] = inst.labels_db[u];
        }
    });

    std::map<size_t, std::vector<double>> buckets;
    std::vector<double> all_errs;
    std::vector<double> all_labels;
    for (const PerSample& r : results) {
        auto& b = buckets[r.n_sched];
        b.insert(b.end(), r.errs.begin(), r.errs.end());
        all_errs.insert(all_errs.end(), r.errs.begin(), r.errs.end());
        all_labels.insert(all_labels.end(), r.labels.begin(), r.labels.end());
    }

    EvalRandomSummary summary;
    summary.n_estimates = all_errs.size();
    summary.rmse_db = rmse_of(all_errs);
    // constant-mean predictor on the same set: rmse = population std of labels
    const double label_mean = mean_of(all_labels);
    double var = 0.0;
    for (double l : all_labels) var += (l - label_mean) * (l - label_mean);
    summary.baseline_rmse_db = std::sqrt(var / static_cast<double>(all_labels.size()));

    std::ofstream hist = open_out(out_dir + "/error_histogram.csv");
    hist << "n_sched,bin_lo,bin_hi,pdf\n";
    std::ofstream rb = open_out(out_dir + "/rmse_by_nsched.csv");
    rb << "n_sched,count,rmse_db\n";
    for (auto& [n_sched, errs] : buckets) {
        summary.bucket_n_sched.push_back(n_sched);
        summary.bucket_rmse_db.push_back(rmse_of(errs));
        rb << n_sched << "," << errs.size() << "," << g17(rmse_of(errs)) << "\n";

        double lo = *std::min_element(errs.begin(), errs.end());
        double hi = *std::max_element(errs.begin(), errs.end());
        if (lo == hi) {
            lo -= 0.5;
            hi += 0.5;
        }
        const size_t bins = cfg.histogram_bins;
        const double width = (hi - lo) / static_cast<double>(bins);
        std::vector<size_t> counts(bins, 0);
        for (double e : errs) {
            size_t b = static_cast<size_t>((e - lo) / width);
            if (b >= bins) b = bins - 1;
            ++counts[b];
        }
        for (size_t b = 0; b < bins; ++b) {
            const double pdf = static_cast<double>(counts[b]) /
                               (static_cast<double>(errs.size()) * width);
            hist << n_sched << "," << g17(lo + width * static_cast<double>(b)) << ","
                 << g17(lo + width * static_cast<double>(b + 1)) << "," << g17(pdf) << "\n";
        }
    }

    std::vector<double> ns(summary.bucket_n_sched.begin(), summary.bucket_n_sched.end());
    summary.spearman_rmse_vs_nsched = spearman(ns, summary.bucket_rmse_db);

    json j;
    j["n_estimates"] = summary.n_estimates;
    j["rmse_db"] = summary.rmse_db;
    j["baseline_rmse_db"] = summary.baseline_rmse_db;
    j["rmse_ratio_vs_constant_mean"] = summary.rmse_db / summary.baseline_rmse_db;
    j["spearman_rmse_vs_nsched"] = summary.spearman_rmse_vs_nsched;
    std::ofstream sj = open_out(out_dir + "/eval_random_summary.json");
    sj << j.dump(2) << "\n";
    return summary;
}

namespace {

struct ScheduleRow {
    long period = 0;
    long slot = 0;
    std::vector<size_t> users;
};

struct PqsCellRun {
    std::vector<double> signed_err_db;
    std::vector<double> abs_err_db;
    std::vector<ScheduleRow> schedule;
    size_t constraint_violations = 0;
    size_t group_size_sum = 0;
    size_t slots = 0;
};

PqsCellRun run_pqs_cell(const ExperimentConfig& cfg, const geo::Pass& pass,
                        const dmhsa::DmhsaParams& params, const dmhsa::LabelStandardizer& s,
                        double c_min, double c_max, long periods, const char* seed_tag) {
    PqsCellRun run;
    const sched::SchedulerMode mode = cfg.variant == dmhsa::Variant::kCsi
                                          ? sched::SchedulerMode::kCsi
                                          : sched::SchedulerMode::kGeo;
    std::vector<PqsCellRun> per_period(periods);
    parallel_for(static_cast<size_t>(periods), cfg.workers, [&](size_t p) {
        // the seed ignores the traffic cell: every cell replays the same
        // populations and pass instants, so cell comparisons are paired
        const uint64_t seed = derive_seed(cfg.seed, seed_tag, p);
        Rng rng(seed);
        const double max_start =
            std::max(cfg.pass_duration_s - cfg.pqs.scheduling_period_s, 0.0);
        const double start = rng.uniform(0.0, max_start);
        const geo::SatState sat0 = pass.state_at(start);

        sched::PqsScenario scen;
        scen.pass = &pass;
        scen.link = cfg.link;
        scen.array = cfg.array;
        scen.beamformer = cfg.beamformer();
        scen.population = geo::drop_users(rng.next_u64(), cfg.population_count,
                                          anchored_clusters(cfg, sat0), sat0, cfg.orbit);
        scen.demand_rate_mbps = sched::assign_traffic(scen.population, {c_min, c_max});
        scen.period_start_s = start;

        const sched::PqsPeriodResult res =
            sched::pqs_schedule(scen, cfg.pqs, mode, rng.next_u64(), cfg.n_beams);

        PqsCellRun& out = per_period[p];
        out.constraint_violations = res.constraint_violations;
        for (const sched::PqsSlotRecord& rec : res.slots) {
            out.slots += 1;
            out.group_size_sum += rec.users.size();
            out.schedule.push_back({static_cast<long>(p), rec.slot_index, rec.users});
            const double slot_time =
                start + static_cast<double>(rec.slot_index) * cfg.pqs.slot_duration_s;
            const geo::SatState sat = pass.state_at(slot_time);
            ScenarioDraw draw;
            draw.geoms.reserve(rec.users.size());
            for (size_t u : rec.users)
                draw.geoms.push_back(
                    channel::user_geometry(sat, scen.population.positions[u], cfg.orbit));
            Instance inst;
            inst.features = features_for(draw, cfg, s);
            const dmhsa::ForwardResult fr = dmhsa::forward(inst.features, params);
            for (size_t i = 0; i < rec.users.size(); ++i) {
                const double pred = s.destandardize(fr.estimate[i]);
                const double err = pred - rec.oracle.sinr_db[i];
                out.signed_err_db.push_back(err);
                out.abs_err_db.push_back(std::abs(err));
            }
        }
    });
    for (const PqsCellRun& p : per_period) {
        run.signed_err_db.insert(run.signed_err_db.end(), p.signed_err_db.begin(),
                                 p.signed_err_db.end());
        run.abs_err_db.insert(run.abs_err_db.end(), p.abs_err_db.begin(), p.abs_err_db.end());
        run.schedule.insert(run.schedule.end(), p.schedule.begin(), p.schedule.end());
        run.constraint_violations += p.constraint_violations;
        run.group_size_sum += p.group_size_sum;
        run.slots += p.slots;
    }
    return run;
}

}  // namespace

EvalPqsSummary eval_pqs(const ExperimentConfig& cfg, const std::string& model_path,
                        const std::string& out_dir) {
    cfg.validate();
    std::filesystem::create_directories(out_dir);
    const geo::Pass pass = cfg.make_pass();
    const dmhsa::LoadedModel model = dmhsa::load_model(model_path);
    if (model.params.config().variant != cfg.variant)
        throw ConfigError("eval_pqs: model variant does not match the configuration");

    EvalPqsSummary summary;
    std::ofstream cdf = open_out(out_dir + "/pqs_abs_error_cdf.csv");
    cdf << "c_min_mbps,c_max_mbps,abs_err_db,cdf\n";
    std::ofstream sched_csv = open_out(out_dir + "/pqs_schedules.csv");
    sched_csv << "c_min_mbps,c_max_mbps,period,slot_index,user_ids\n";

    for (double c_min : cfg.pqs_c_min_grid) {
        for (double c_max : cfg.pqs_c_max_grid) {
            PqsCellRun run =
                run_pqs_cell(cfg, pass, model.params, model.standardizer, c_min, c_max,
                             cfg.pqs_periods_per_cell, "pqs-eval");
            PqsCellStats stats;
            stats.c_min_mbps = c_min;
            stats.c_max_mbps = c_max;
            stats.n_estimates = run.signed_err_db.size();
            stats.rmse_db = rmse_of(run.signed_err_db);
            stats.mean_signed_err_db = mean_of(run.signed_err_db);
            std::sort(run.abs_err_db.begin(), run.abs_err_db.end());
            stats.median_abs_err_db =
                run.abs_err_db.empty() ? 0.0 : run.abs_err_db[run.abs_err_db.size() / 2];
            stats.mean_group_size = run.slots > 0 ? static_cast<double>(run.group_size_sum) /
                                                        static_cast<double>(run.slots)
                                                  : 0.0;
            stats.constraint_violations = run.constraint_violations;
            summary.cells.push_back(stats);

            const size_t n = run.abs_err_db.size();
            for (size_t i = 0; i < n; ++i)
                cdf << g17(c_min) << "," << g17(c_max) << "," << g17(run.abs_err_db[i]) << ","
                    << g17(static_cast<double>(i + 1) / static_cast<double>(n)) << "\n";
            for (const ScheduleRow& row : run.schedule) {
                sched_csv << g17(c_min) << "," << g17(c_max) << "," << row.period << ","
                          << row.slot << ",";
                for (size_t i = 0; i < row.users.size(); ++i)
                    sched_csv << (i ? ";" : "") << row.users[i];
                sched_csv << "\n";
            }
        }
    }

    json j;
    j["cells"] = json::array();
    for (const PqsCellStats& c : summary.cells)
        j["cells"].push_back({{"c_min_mbps", c.c_min_mbps},
                              {"c_max_mbps", c.c_max_mbps},
                              {"n_estimates", c.n_estimates},
                              {"rmse_db", c.rmse_db},
                              {"median_abs_err_db", c.median_abs_err_db},
                              {"mean_signed_err_db", c.mean_signed_err_db},
                              {"mean_group_size", c.mean_group_size},
                              {"constraint_violations", c.constraint_violations}});
    std::ofstream tj = open_out(out_dir + "/pqs_rmse_table.json");
    tj << j.dump(2) << "\n";
    return summary;
}

double calibrate_model_bias(const ExperimentConfig& cfg, const std::string& model_path) {
    cfg.validate();
    const geo::Pass pass = cfg.make_pass();
    dmhsa::LoadedModel model = dmhsa::load_model(model_path);
    if (model.params.config().variant != cfg.variant)
        throw ConfigError("calibrate_model_bias: model variant does not match the configuration");

    dmhsa::LabelStandardizer unbiased = model.standardizer;
    unbiased.bias_db = 0.0;
    std::vector<double> signed_errs;
    for (double c_min : cfg.pqs_c_min_grid)
        for (double c_max : cfg.pqs_c_max_grid) {
            const PqsCellRun run =
                run_pqs_cell(cfg, pass, model.params, unbiased, c_min, c_max,
                             cfg.pqs_calibration_periods, "pqs-calib");
            signed_errs.insert(signed_errs.end(), run.signed_err_db.begin(),
                               run.signed_err_db.end());
        }
    if (signed_errs.empty())
        throw NumericalError("calibrate_model_bias: empty calibration sample");
    const double bias = mean_of(signed_errs);
    model.standardizer.bias_db = bias;
    dmhsa::save_model(model_path, model.params, model.standardizer);
    return bias;
}

double pqs_mean_signed_error(const ExperimentConfig& cfg, const std::string& model_path,
                             const char* seed_tag, long periods_per_cell) {
    cfg.validate();
    const geo::Pass pass = cfg.make_pass();
    const dmhsa::LoadedModel model = dmhsa::load_model(model_path);
    double sum = 0.0;
    size_t count = 0;
    for (double c_min : cfg.pqs_c_min_grid)
        for (double c_max : cfg.pqs_c_max_grid) {
            const PqsCellRun run = run_pqs_cell(cfg, pass, model.params, model.standardizer,
                                                c_min, c_max, periods_per_cell, seed_tag);
            for (double e : run.signed_err_db) sum += e;
            count += run.signed_err_db.size();
        }
    if (count == 0) throw NumericalError("pqs_mean_signed_error: empty sample");
    return sum / static_cast<double>(count);
}

void write_complexity_report(const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::ofstream out = open_out(out_dir + "/complexity.csv");
    out << "n_c,mmse_ops,csi_dmhsa_ops,geo_dmhsa_ops\n";
    constexpr uint64_t n_sched = 24;
    constexpr uint64_t n_r = 512;
    for (uint64_t n_c = 1; n_c <= 32; ++n_c) {
        out << n_c << ","
            << dmhsa::complexity_estimate(dmhsa::EstimationMethod::kMmse, n_sched, n_r, n_c)
            << ","
            << dmhsa::complexity_estimate(dmhsa::EstimationMethod::kCsiDmhsa, n_sched, n_r, n_c)
            << ","
            << dmhsa::complexity_estimate(dmhsa::EstimationMethod::kGeoDmhsa, n_sched, n_r, n_c)
            << "\n";
    }
}

CalibrationStats gen_calibration(const ExperimentConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    std::filesystem::create_directories(out_dir);
    const geo::Pass pass = cfg.make_pass();
    const CalibrationStats stats = estimate_calibration(cfg, pass);
    json j;
    j["mu_h"] = stats.mu_h;
    j["sigma_h"] = stats.sigma_h;
    j["mu_sinr_db"] = stats.mu_sinr_db;
    j["sigma_sinr_db"] = stats.sigma_sinr_db;
    j["samples"] = cfg.calibration_samples;
    std::ofstream cj = open_out(out_dir + "/calibration.json");
    cj << j.dump(2) << "\n";
    std::ofstream frag = open_out(out_dir + "/calibration.cfg");
    frag << "calib.mu_h = " << g17(stats.mu_h) << "\n"
         << "calib.sigma_h = " << g17(stats.sigma_h) << "\n"
         << "calib.mu_sinr = " << g17(stats.mu_sinr_db) << "\n"
         << "calib.sigma_sinr = " << g17(stats.sigma_sinr_db) << "\n";
    return stats;
}

}  // namespace leosinr::exp

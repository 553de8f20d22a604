#include "leosinr/scheduling.hpp"

#include <algorithm>
#include <numeric>

namespace leosinr::sched {

void PqsConfig::validate() const {
    if (!(slot_duration_s > 0.0) || !(scheduling_period_s >= slot_duration_s))
        throw ConfigError("pqs: slot/period durations inconsistent");
    if (n_priority_classes < 2) throw ConfigError("pqs: need at least two priority classes");
    if (!(correlation_threshold > 0.0 && correlation_threshold <= 1.0))
        throw ConfigError("pqs: correlation threshold must lie in (0, 1]");
    if (!(distance_threshold_km > 0.0)) throw ConfigError("pqs: distance threshold must be positive");
    if (!(packet_mbit > 0.0)) throw ConfigError("pqs: packet size must be positive");
}

std::vector<size_t> random_schedule(Rng& rng, size_t population_size, size_t n_beams,
                                    size_t min_group) {
    if (population_size < min_group)
        throw ConfigError("random_schedule: population smaller than the minimum group size");
    const size_t hi = std::min(n_beams, population_size);
    const size_t size = static_cast<size_t>(rng.uniform_int(min_group, hi));
    return rng.sample_without_replacement(population_size, size);
}

double channel_correlation(std::span<const cxd> h_i, std::span<const cxd> h_j) {
    if (h_i.size() != h_j.size()) throw ShapeError("channel_correlation: length mismatch");
    cxd dot{};
    double ni = 0.0, nj = 0.0;
    for (size_t n = 0; n < h_i.size(); ++n) {
        dot += h_i[n] * std::conj(h_j[n]);
        ni += std::norm(h_i[n]);
        nj += std::norm(h_j[n]);
    }
    if (ni == 0.0 || nj == 0.0) throw NumericalError("channel_correlation: zero vector");
    return std::abs(dot) / std::sqrt(ni * nj);
}

std::vector<double> assign_traffic(const geo::UserPopulation& population, const TrafficModel& t) {
    t.validate();
    const size_t n = population.positions.size();
    std::vector<double> c_req(n, 0.5 * (t.c_min_mbps + t.c_max_mbps));
    if (n <= 1) return c_req;

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return population.density_weight[a] < population.density_weight[b];
    });
    // mean rank over ties, normalized to [0, 1]
    std::vector<double> quantile(n, 0.0);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && population.density_weight[order[j + 1]] ==
                                population.density_weight[order[i]])
            ++j;
        const double mean_rank = 0.5 * static_cast<double>(i + j);
        for (size_t k = i; k <= j; ++k)
            quantile[order[k]] = mean_rank / static_cast<double>(n - 1);
        i = j + 1;
    }
    for (size_t k = 0; k < n; ++k)
        c_req[k] = t.c_min_mbps + (t.c_max_mbps - t.c_min_mbps) * quantile[k];
    return c_req;
}

namespace {

/// First time at or after `from_s` when the user's elevation drops below the
/// orbit's minimum, found by a coarse scan and bisection. Returns from_s if
/// the user is already below.
double visibility_end_s(const geo::Pass& pass, const geo::GroundPosition& user, double from_s) {
    const geo::OrbitConfig& orbit = pass.orbit();
    auto above = [&](double t) {
        return geo::elevation_angle_deg(pass.state_at(t), user, orbit) >=
               orbit.min_elevation_deg;
    };
    if (!above(from_s)) return from_s;
    const double horizon = from_s + 0.75 * 2.0 * kPi / orbit.angular_rate();
    double lo = from_s;
    double hi = from_s;
    double step = 1.0;
    while (hi < horizon) {
        hi = std::min(lo + step, horizon);
        if (!above(hi)) break;
        lo = hi;
        step *= 2.0;
    }
    if (above(hi)) return hi;  // visible through the whole horizon window
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (above(mid) ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

PqsPeriodResult pqs_schedule(const PqsScenario& scenario, const PqsConfig& cfg,
                             SchedulerMode mode, uint64_t seed, size_t n_beams) {
    cfg.validate();
    if (!scenario.pass) throw ConfigError("pqs_schedule: scenario has no pass");
    const geo::Pass& pass = *scenario.pass;
    const geo::OrbitConfig& orbit = pass.orbit();
    const size_t n_users = scenario.population.positions.size();
    if (scenario.demand_rate_mbps.size() != n_users)
        throw ShapeError("pqs_schedule: demand vector size mismatch");

    PqsPeriodResult result;
    result.served_mbit.assign(n_users, 0.0);

    std::vector<double> vis_end(n_users);
    for (size_t u = 0; u < n_users; ++u)
        vis_end[u] = visibility_end_s(pass, scenario.population.positions[u],
                                      scenario.period_start_s);

    Rng rng(seed);
    const long n_slots = cfg.slots_per_period();
    double total_served = 0.0;
    bool any_eligible_ever = false;
    std::vector<double> backlog(n_users, 0.0);

    for (long slot = 0; slot < n_slots; ++slot) {
        const double slot_time = scenario.period_start_s +
                                 static_cast<double>(slot) * cfg.slot_duration_s;
        const geo::SatState sat = pass.state_at(slot_time);

        // backlog accrues at the requested rate; a user queues only while
        // its accrued demand is not yet served
        std::vector<size_t> eligible;
        size_t n_active = 0;
        for (size_t u = 0; u < n_users; ++u) {
            const double accrued = scenario.demand_rate_mbps[u] * cfg.slot_duration_s *
                                   static_cast<double>(slot + 1);
            backlog[u] = accrued - result.served_mbit[u];
            if (backlog[u] <= 1e-12) continue;
            ++n_active;
            // packetized traffic: nothing to schedule until a packet is pending
            if (backlog[u] < cfg.packet_mbit) continue;
            if (geo::elevation_angle_deg(sat, scenario.population.positions[u], orbit) <
                orbit.min_elevation_deg)
                continue;
            eligible.push_back(u);
        }
        if (eligible.empty()) continue;
        any_eligible_ever = true;

        const double fair_share = n_active > 0 ? total_served / static_cast<double>(n_active)
                                               : 0.0;
        std::vector<size_t> high, low;
        for (size_t u : eligible) {
            const double remaining_slots = (vis_end[u] - slot_time) / cfg.slot_duration_s;
            const bool urgent_visibility =
                remaining_slots < static_cast<double>(cfg.max_residual_visibility_slots);
            const bool urgent_demand = backlog[u] > cfg.unmet_capacity_factor * fair_share;
            (urgent_visibility || urgent_demand ? high : low).push_back(u);
        }
        std::vector<size_t>& queue = high.empty() ? low : high;

        // lazily computed channel rows for the pairwise constraint
        std::vector<std::optional<std::vector<cxd>>> rows(n_users);
        auto channel_row = [&](size_t u) -> const std::vector<cxd>& {
            if (!rows[u]) {
                const channel::UserGeometry g =
                    channel::user_geometry(sat, scenario.population.positions[u], orbit);
                const channel::ChannelMatrix m = channel::build_channel_matrix(
                    {g}, scenario.link, scenario.array, /*clear_sky=*/false);
                rows[u] = m.coefficients.data();
            }
            return *rows[u];
        };
        auto compatible = [&](size_t cand, const std::vector<size_t>& selected) {
            for (size_t s : selected) {
                if (mode == SchedulerMode::kCsi) {
                    if (channel_correlation(channel_row(cand), channel_row(s)) >=
                        cfg.correlation_threshold)
                        return false;
                } else {
                    if (geo::great_circle_distance_km(scenario.population.positions[cand],
                                                      scenario.population.positions[s],
                                                      orbit) <= cfg.distance_threshold_km)
                        return false;
                }
            }
            return true;
        };

        std::vector<size_t> selected;
        const std::vector<size_t> draw_order =
            rng.sample_without_replacement(queue.size(), queue.size());
        for (size_t di : draw_order) {
            if (selected.size() >= n_beams) break;
            const size_t cand = queue[di];
            if (compatible(cand, selected)) selected.push_back(cand);
        }
        if (selected.empty()) continue;

        PqsSlotRecord rec;
        rec.slot_index = slot;
        rec.users = selected;

        std::vector<channel::UserGeometry> geoms;
        geoms.reserve(selected.size());
        for (size_t u : selected)
            geoms.push_back(channel::user_geometry(sat, scenario.population.positions[u], orbit));
        rec.oracle = bf::sinr_oracle(geoms, scenario.link, scenario.array, scenario.beamformer,
                                     mode == SchedulerMode::kCsi ? bf::ReportMode::kCsi
                                                                 : bf::ReportMode::kGeo);

        rec.served_mbit.resize(selected.size());
        for (size_t i = 0; i < selected.size(); ++i) {
            const size_t u = selected[i];
            const double sinr_lin = from_db(rec.oracle.sinr_db[i]);
            const double rate_mbps =
                scenario.link.user_bandwidth_hz * std::log2(1.0 + sinr_lin) / 1e6;
            const double served = std::min(backlog[u], rate_mbps * cfg.slot_duration_s);
            rec.served_mbit[i] = served;
            result.served_mbit[u] += served;
            total_served += served;
        }

        // post-hoc audit of the emitted group
        for (size_t i = 0; i < selected.size(); ++i)
            for (size_t j = i + 1; j < selected.size(); ++j) {
                bool ok;
                if (mode == SchedulerMode::kCsi)
                    ok = channel_correlation(channel_row(selected[i]), channel_row(selected[j])) <
                         cfg.correlation_threshold;
                else
                    ok = geo::great_circle_distance_km(scenario.population.positions[selected[i]],
                                                       scenario.population.positions[selected[j]],
                                                       orbit) > cfg.distance_threshold_km;
                if (!ok) ++result.constraint_violations;
            }

        result.slots.push_back(std::move(rec));
    }

    if (!any_eligible_ever)
        throw ConfigError("pqs_schedule: no eligible users in the scheduling period");
    result.unmet_mbit.resize(n_users);
    for (size_t u = 0; u < n_users; ++u)
        result.unmet_mbit[u] = scenario.demand_rate_mbps[u] * cfg.scheduling_period_s -
                               result.served_mbit[u];
    return result;
}

}  // namespace leosinr::sched

#pragma once

#include <optional>
#include <span>
#include <vector>

#include "leosinr/beamforming.hpp"
#include "leosinr/geometry.hpp"
#include "leosinr/rng.hpp"

namespace leosinr::sched {

struct TrafficModel {
    double c_min_mbps = 5.0;
    double c_max_mbps = 100.0;

    void validate() const {
        if (!(c_min_mbps > 0.0) || !(c_max_mbps >= c_min_mbps))
            throw ConfigError("traffic: need 0 < c_min <= c_max");
    }
};

struct PqsConfig {
    double slot_duration_s = 0.01;          // T_slot^(sched)
    double scheduling_period_s = 2.0;       // T_sched
    long max_residual_visibility_slots = 50;  // sigma_vis
    double unmet_capacity_factor = 2.0;     // sigma_cap
    int n_priority_classes = 2;             // N_PC
    double correlation_threshold = 0.5;     // CSI-mode pairwise constraint
    double distance_threshold_km = 30.0;    // GEO-mode pairwise constraint
    double packet_mbit = 20.0;              // burst quantum: a user queues once this much is pending

    long slots_per_period() const {
        return static_cast<long>(std::round(scheduling_period_s / slot_duration_s));
    }
    void validate() const;
};

enum class SchedulerMode { kCsi, kGeo };

struct ScheduledGroup {
    std::vector<size_t> user_indices;
    long slot_index = 0;
    SchedulerMode mode = SchedulerMode::kCsi;
};

/// Random scheduler: group size uniform over {min_group, ..., n_beams}
/// (clipped to the population), members drawn without replacement.
std::vector<size_t> random_schedule(Rng& rng, size_t population_size, size_t n_beams,
                                    size_t min_group);

/// |h_i h_j^H| / (||h_i|| ||h_j||), in [0, 1].
double channel_correlation(std::span<const cxd> h_i, std::span<const cxd> h_j);

/// Per-user requested rate in Mbps from the population density rank:
/// densest user gets c_max, sparsest c_min, ties share their mean rank.
std::vector<double> assign_traffic(const geo::UserPopulation& population, const TrafficModel& t);

struct PqsSlotRecord {
    long slot_index = 0;
    std::vector<size_t> users;
    bf::SinrReport oracle;            // mode-consistent oracle for the emitted group
    std::vector<double> served_mbit;  // per group member
};

struct PqsPeriodResult {
    std::vector<PqsSlotRecord> slots;
    std::vector<double> served_mbit;  // total delivered per user
    std::vector<double> unmet_mbit;   // end-of-period shortfall vs the rate request
    size_t constraint_violations = 0;  // post-hoc pairwise audit, must stay 0
};

/// Everything the PQS needs to serve one scheduling period.
struct PqsScenario {
    const geo::Pass* pass = nullptr;
    channel::LinkBudget link;
    channel::ArrayConfig array;
    bf::BeamformerConfig beamformer;
    geo::UserPopulation population;
    std::vector<double> demand_rate_mbps;  // requested rate per user
    double period_start_s = 0.0;
};

/// Priority-queue scheduler over one period. Traffic is a rate request, so
/// each user's backlog accrues at demand_rate_mbps and a user queues only
/// while backlogged; light traffic therefore yields groups well under the
/// beam count. Per slot: backlogged users are classified into two priority
/// classes (low residual visibility or backlog above sigma_cap times the
/// running fair share go high), the highest non-empty queue is drawn from
/// at random, and a draw joins the group only if it clears the mode's
/// pairwise constraint against everyone already selected. Served volume
/// follows the Shannon rate at the oracle SINR, capped by the backlog, so
/// no user is ever served past its request.
PqsPeriodResult pqs_schedule(const PqsScenario& scenario, const PqsConfig& cfg,
                             SchedulerMode mode, uint64_t seed, size_t n_beams);

}  // namespace leosinr::sched

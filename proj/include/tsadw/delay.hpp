#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tsadw/phasor.hpp"

namespace tsadw {

/// Per-packet communication delay. The default is a shifted gamma
/// distribution; `constant` mode collapses every delay to the shift and
/// exists so baselines have analytic expectations.
struct DelayModel {
    enum class Kind { shifted_gamma, constant };
    Kind kind = Kind::shifted_gamma;
    double shape_k = 20.0;
    double scale_theta_ms = 2.0;
    double shift_ms = 10.0;
    std::uint64_t seed = 0;

    void validate() const;
    double mean_ms() const { return shift_ms + (kind == Kind::constant ? 0.0 : shape_k * scale_theta_ms); }

    DelayModel with_seed(std::uint64_t s) const {
        DelayModel m = *this;
        m.seed = s;
        return m;
    }
};

/// Truncated complex-normal measurement noise. The perturbation is
/// resampled until its magnitude fits under cap * 1.0 pu, so the total
/// vector error never exceeds the cap.
struct NoiseModel {
    double sigma_pu = 0.004;
    double tve_cap = 0.01;
    std::uint64_t seed = 0;

    void validate() const;
};

/// One synchrophasor packet: measurement cycle t from PMU p arriving at
/// t * cycle_ms + delay.
struct ArrivalEvent {
    int pmu = 0;
    int cycle = 1;
    double arrival_ms = 0.0;
    double magnitude = 0.0;
    double angle = 0.0;
};

/// Delay draw for packet (p, t). Independent across packets and across
/// evaluation order: the stream is derived from (seed, p, t).
double sample_delay(const DelayModel& model, int pmu, int cycle);

/// Adds the truncated complex perturbation to one phasor.
std::pair<double, double> apply_noise(double magnitude, double angle, const NoiseModel& model,
                                      int pmu, int cycle);

/// Expands a case into its arrival stream: one event per (bus, cycle)
/// within the horizon, payload optionally noise-perturbed, sorted by
/// arrival time with ties broken by (cycle, bus).
std::vector<ArrivalEvent> schedule_arrivals(const ContingencyCase& c, const DelayModel& delay,
                                            const std::optional<NoiseModel>& noise,
                                            int horizon_cycles, double cycle_ms);

/// CSV export (`pmu,cycle,delay_ms,arrival_ms`) for distribution audits.
void write_delay_trace_csv(const std::vector<ArrivalEvent>& events, double cycle_ms,
                           const std::string& path);

}  // namespace tsadw

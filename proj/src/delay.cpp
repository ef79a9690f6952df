#include "tsadw/delay.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>

#include "tsadw/errors.hpp"
#include "tsadw/rng.hpp"

namespace tsadw {

void DelayModel::validate() const {
    if (kind == Kind::shifted_gamma && (shape_k <= 0.0 || scale_theta_ms <= 0.0))
        throw ConfigError("gamma delay needs positive shape and scale");
    if (shift_ms < 0.0) throw ConfigError("delay shift must be non-negative");
}

void NoiseModel::validate() const {
    if (sigma_pu < 0.0) throw ConfigError("noise sigma must be non-negative");
    if (!(tve_cap > 0.0 && tve_cap < 1.0)) throw ConfigError("TVE cap must lie in (0,1)");
}

double sample_delay(const DelayModel& model, int pmu, int cycle) {
    model.validate();
    if (model.kind == DelayModel::Kind::constant) return model.shift_ms;
    rng::Stream stream(rng::mix({model.seed, 0x44454c41u, static_cast<std::uint64_t>(pmu),
                                 static_cast<std::uint64_t>(cycle)}));
    return model.shift_ms + stream.gamma(model.shape_k, model.scale_theta_ms);
}

std::pair<double, double> apply_noise(double magnitude, double angle, const NoiseModel& model,
                                      int pmu, int cycle) {
    model.validate();
    if (magnitude < 0.0) throw ConfigError("phasor magnitude must be non-negative");
    if (model.sigma_pu == 0.0) return {magnitude, angle};

    rng::Stream stream(rng::mix({model.seed, 0x4e4f4953u, static_cast<std::uint64_t>(pmu),
                                 static_cast<std::uint64_t>(cycle)}));
    // rejection sampling gives the exactly truncated distribution;
    // the cap is relative to the 1.0 pu nominal phasor
    double re, im;
    do {
        re = stream.normal(0.0, model.sigma_pu);
        im = stream.normal(0.0, model.sigma_pu);
    } while (std::hypot(re, im) > model.tve_cap);

    const std::complex<double> noisy = std::polar(magnitude, angle) + std::complex<double>(re, im);
    return {std::abs(noisy), wrap_angle(std::arg(noisy))};
}

std::vector<ArrivalEvent> schedule_arrivals(const ContingencyCase& c, const DelayModel& delay,
                                            const std::optional<NoiseModel>& noise,
                                            int horizon_cycles, double cycle_ms) {
    if (horizon_cycles > c.matrix.cycle_count())
        throw ShapeError("arrival horizon " + std::to_string(horizon_cycles) + " exceeds case T = " +
                         std::to_string(c.matrix.cycle_count()));

    std::vector<ArrivalEvent> events;
    events.reserve(static_cast<std::size_t>(c.matrix.bus_count()) * horizon_cycles);
    for (int b = 0; b < c.matrix.bus_count(); ++b) {
        for (int t = 1; t <= horizon_cycles; ++t) {
            ArrivalEvent e;
            e.pmu = b;
            e.cycle = t;
            e.arrival_ms = t * cycle_ms + sample_delay(delay, b, t);
            e.magnitude = c.matrix.magnitude(b, t);
            e.angle = c.matrix.angle(b, t);
            if (noise) std::tie(e.magnitude, e.angle) = apply_noise(e.magnitude, e.angle, *noise, b, t);
            events.push_back(e);
        }
    }
    std::sort(events.begin(), events.end(), [](const ArrivalEvent& a, const ArrivalEvent& b) {
        if (a.arrival_ms != b.arrival_ms) return a.arrival_ms < b.arrival_ms;
        if (a.cycle != b.cycle) return a.cycle < b.cycle;
        return a.pmu < b.pmu;
    });
    return events;
}

void write_delay_trace_csv(const std::vector<ArrivalEvent>& events, double cycle_ms,
                           const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open " + path + " for writing");
    out << "pmu,cycle,delay_ms,arrival_ms\n";
    char buf[128];
    for (const auto& e : events) {
        std::snprintf(buf, sizeof buf, "%d,%d,%.6f,%.6f\n", e.pmu, e.cycle,
                      e.arrival_ms - e.cycle * cycle_ms, e.arrival_ms);
        out << buf;
    }
}

}  // namespace tsadw

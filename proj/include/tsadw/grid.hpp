#pragma once

#include <complex>
#include <string>
#include <vector>

#include "tsadw/errors.hpp"

namespace tsadw {

/// Classical second-order machine: constant EMF magnitude behind
/// transient reactance.
struct MachineParams {
    int bus = -1;
    double inertia_h = 5.0;      // s
    double damping = 0.0;        // pu torque per pu speed deviation
    double emf = 1.0;            // pu, internal voltage magnitude
    double mech_power = 0.0;     // pu, at nominal load level
    double xd_transient = 0.1;   // pu
};

struct BranchSpec {
    int from = -1;
    int to = -1;
    double r = 0.0;        // pu series resistance
    double x = 0.0;        // pu series reactance
    double b_shunt = 0.0;  // pu total line charging (split half per end)
    bool removable = true;
    std::string id;

    std::complex<double> series_admittance() const {
        return 1.0 / std::complex<double>(r, x);
    }
};

struct LoadSpec {
    int bus = -1;
    double p = 0.0;  // pu consumed active power at nominal voltage
    double q = 0.0;  // pu consumed reactive power at nominal voltage
};

/// Static network description. Loads are constant-impedance; their
/// admittance is S*/|V|^2 evaluated at 1.0 pu nominal voltage.
struct GridModel {
    int buses = 0;
    double base_hz = 60.0;
    std::vector<BranchSpec> branches;
    std::vector<MachineParams> machines;
    std::vector<LoadSpec> loads;

    /// Validates counts, indices, and finiteness. Throws ConfigError.
    void validate() const;

    /// True when the in-service branch graph connects every bus.
    /// `out` lists branch indices to treat as out of service.
    bool connected_without(const std::vector<int>& out) const;
};

/// Reads a grid description file: TOML-style sections [grid], [machines],
/// [branches], [loads] with repeated `m = ...` / `b = ...` / `l = ...`
/// rows (see configs/grid9.toml for the bundled system).
GridModel load_grid(const std::string& path);
GridModel parse_grid(const std::string& text, const std::string& name = "<string>");

}  // namespace tsadw

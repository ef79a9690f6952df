#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "tsadw/grid.hpp"
#include "tsadw/phasor.hpp"

namespace tsadw {

/// Schur complement Y_rr - Y_re * Y_ee^-1 * Y_er where `retained` indexes
/// the kept nodes and every other node is eliminated. Throws
/// SingularMatrixError (naming the pivot) when the eliminated block is
/// singular.
Eigen::MatrixXcd kron_reduce(const Eigen::MatrixXcd& y, const std::vector<int>& retained);

/// One contingency scenario. `removed_branches` lists branch indices in
/// outage order: the first entries are out of service before the fault
/// (the N-1 part), the last entry is the faulted component that is
/// isolated when the fault clears.
struct FaultSpec {
    int faulted_bus = -1;
    double clearance_s = 0.2;
    std::vector<int> removed_branches;
    double load_scale = 1.0;
};

/// Machine-node equivalent of one network condition.
struct ReducedNetwork {
    Eigen::MatrixXcd y_red;  // M x M admittance among machine internal nodes
    Eigen::VectorXd emf;     // machine EMF magnitudes
};

/// Builds the reduced machine network for the grid with `out_branches`
/// removed, loads scaled by `load_scale`, and an optional bolted fault
/// (large shunt) at `fault_bus`.
ReducedNetwork reduce_to_machines(const GridModel& grid, double load_scale,
                                  const std::vector<int>& out_branches, int fault_bus = -1);

/// P_e per machine for rotor angles `delta` on the given reduced network.
Eigen::VectorXd electrical_power(const ReducedNetwork& net, const Eigen::VectorXd& delta);

struct Equilibrium {
    Eigen::VectorXd delta;       // rotor angles, machine 0 is the reference
    Eigen::VectorXd mech_power;  // effective P_m; machine 0 absorbs network losses
};

/// Solves P_e(delta) = P_m by Newton iteration with machine 0 as slack.
/// Non-slack mechanical powers scale with the load level so generation
/// tracks demand. Throws TrainError-like ConfigError on divergence.
Equilibrium find_equilibrium(const GridModel& grid, double load_scale,
                             const std::vector<int>& out_branches = {});

struct Trajectory {
    double dt = 1e-3;
    double start_s = 0.0;                 // sim time of the first stored step
    std::vector<Eigen::VectorXd> angles;  // rotor angle per machine per step (rad)
    std::vector<Eigen::VectorXd> speeds;  // pu speed deviation per machine per step
    MeasurementMatrix phasors;            // bus phasors per output cycle after clearance
    bool divergent = false;
};

/// Integrates the classical swing equations with RK4 through the
/// fault-on and post-fault networks. Phasor output starts at the first
/// cycle after clearance (cycle 1). `record_cycles` <= horizon in cycles.
Trajectory simulate_contingency(const GridModel& grid, const FaultSpec& fault, double horizon_s,
                                double dt_s, double frame_hz, int record_cycles);

/// Integrates the unfaulted system from its equilibrium; used to verify
/// that the equilibrium is a fixed point of the dynamics.
Trajectory simulate_unfaulted(const GridModel& grid, double load_scale, double horizon_s, double dt_s);

/// 1 = stable, 0 = unstable. Unstable iff any machine departs more than
/// pi radians from the inertia-weighted center of inertia at any stored
/// step, or the integration diverged.
int label_stability(const Trajectory& traj, const GridModel& grid);

struct DatagenConfig {
    std::vector<double> load_levels_pct = {80.0, 90.0, 100.0, 110.0};
    double clearance_s = 0.2;
    double horizon_s = 10.0;
    double dt_s = 1e-3;
    int record_cycles = 60;       // cycles of phasor data kept per case
    bool both_fault_buses = true; // fault at each terminal of the cleared branch
};

struct DatagenSkip {
    std::string contingency;
    std::string reason;
};

/// Enumerates N-2 contingencies: every surviving removable branch after
/// each removable N-1 outage, at every load level, fault applied at the
/// terminal bus(es) of the cleared branch. Islanding outages are skipped
/// with a logged reason.
Dataset generate_dataset(const GridModel& grid, const DatagenConfig& cfg,
                         std::vector<DatagenSkip>* skip_log = nullptr);

}  // namespace tsadw

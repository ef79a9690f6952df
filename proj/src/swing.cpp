#include "tsadw/swing.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

namespace tsadw {

namespace {

constexpr double kPi = 3.141592653589793238462643383280;
constexpr double kFaultShunt = 1e6;      // pu admittance of the bolted fault
constexpr double kDivergedAngle = 1e6;   // rad; beyond this the case is marked divergent

using Cplx = std::complex<double>;

/// Full (buses + machine internal nodes) admittance matrix.
Eigen::MatrixXcd build_full_admittance(const GridModel& grid, double load_scale,
                                       const std::vector<int>& out_branches, int fault_bus) {
    const int b = grid.buses;
    const int m = static_cast<int>(grid.machines.size());
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(b + m, b + m);

    std::vector<bool> removed(grid.branches.size(), false);
    for (int i : out_branches) removed[i] = true;

    for (std::size_t i = 0; i < grid.branches.size(); ++i) {
        if (removed[i]) continue;
        const auto& br = grid.branches[i];
        const Cplx ys = br.series_admittance();
        const Cplx yc(0.0, br.b_shunt / 2.0);
        y(br.from, br.from) += ys + yc;
        y(br.to, br.to) += ys + yc;
        y(br.from, br.to) -= ys;
        y(br.to, br.from) -= ys;
    }
    for (const auto& load : grid.loads) {
        // constant impedance at 1.0 pu nominal voltage: y = (P - jQ) / |V|^2
        y(load.bus, load.bus) += load_scale * Cplx(load.p, -load.q);
    }
    for (int i = 0; i < m; ++i) {
        const auto& mc = grid.machines[i];
        const Cplx ym = 1.0 / Cplx(0.0, mc.xd_transient);
        y(mc.bus, mc.bus) += ym;
        y(b + i, b + i) += ym;
        y(mc.bus, b + i) -= ym;
        y(b + i, mc.bus) -= ym;
    }
    if (fault_bus >= 0) y(fault_bus, fault_bus) += Cplx(kFaultShunt, 0.0);
    return y;
}

/// Bus-voltage solver for one network condition: buses eliminated against
/// machine EMF sources.
struct BusSolver {
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu;  // factorized bus block
    Eigen::MatrixXcd coupling;                 // bus x machine block (Y_bg)

    Eigen::VectorXcd solve(const Eigen::VectorXcd& machine_emf) const {
        return lu.solve(-(coupling * machine_emf));
    }
};

BusSolver make_bus_solver(const GridModel& grid, double load_scale,
                          const std::vector<int>& out_branches, int fault_bus) {
    const int b = grid.buses;
    const int m = static_cast<int>(grid.machines.size());
    const Eigen::MatrixXcd y = build_full_admittance(grid, load_scale, out_branches, fault_bus);
    BusSolver s;
    s.lu = Eigen::PartialPivLU<Eigen::MatrixXcd>(y.topLeftCorner(b, b));
    s.coupling = y.topRightCorner(b, m);
    return s;
}

Eigen::VectorXcd machine_emf_phasors(const ReducedNetwork& net, const Eigen::VectorXd& delta) {
    Eigen::VectorXcd e(net.emf.size());
    for (Eigen::Index i = 0; i < e.size(); ++i)
        e(i) = std::polar(net.emf(i), delta(i));
    return e;
}

/// dP_e/d(delta) Jacobian on the reduced network.
Eigen::MatrixXd power_jacobian(const ReducedNetwork& net, const Eigen::VectorXd& delta) {
    const int m = static_cast<int>(delta.size());
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) {
        for (int k = 0; k < m; ++k) {
            if (k == i) continue;
            const double g = net.y_red(i, k).real();
            const double bsus = net.y_red(i, k).imag();
            const double dik = delta(i) - delta(k);
            const double term = net.emf(i) * net.emf(k) * (-g * std::sin(dik) + bsus * std::cos(dik));
            j(i, k) = -term;
            j(i, i) += term;
        }
    }
    return j;
}

}  // namespace

Eigen::MatrixXcd kron_reduce(const Eigen::MatrixXcd& y, const std::vector<int>& retained) {
    const Eigen::Index n = y.rows();
    if (y.cols() != n) throw ShapeError("kron_reduce requires a square matrix");

    std::vector<bool> keep(static_cast<std::size_t>(n), false);
    for (int r : retained) {
        if (r < 0 || r >= n) throw ShapeError("retained node " + std::to_string(r) + " out of range");
        keep[static_cast<std::size_t>(r)] = true;
    }
    std::vector<int> eliminated;
    for (Eigen::Index i = 0; i < n; ++i)
        if (!keep[static_cast<std::size_t>(i)]) eliminated.push_back(static_cast<int>(i));

    const auto nr = static_cast<Eigen::Index>(retained.size());
    const auto ne = static_cast<Eigen::Index>(eliminated.size());
    if (ne == 0) {
        Eigen::MatrixXcd out(nr, nr);
        for (Eigen::Index i = 0; i < nr; ++i)
            for (Eigen::Index k = 0; k < nr; ++k) out(i, k) = y(retained[i], retained[k]);
        return out;
    }

    Eigen::MatrixXcd y_rr(nr, nr), y_re(nr, ne), y_er(ne, nr), y_ee(ne, ne);
    for (Eigen::Index i = 0; i < nr; ++i) {
        for (Eigen::Index k = 0; k < nr; ++k) y_rr(i, k) = y(retained[i], retained[k]);
        for (Eigen::Index k = 0; k < ne; ++k) y_re(i, k) = y(retained[i], eliminated[k]);
    }
    for (Eigen::Index i = 0; i < ne; ++i) {
        for (Eigen::Index k = 0; k < nr; ++k) y_er(i, k) = y(eliminated[i], retained[k]);
        for (Eigen::Index k = 0; k < ne; ++k) y_ee(i, k) = y(eliminated[i], eliminated[k]);
    }

    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(y_ee);
    const Eigen::MatrixXcd& combined = lu.matrixLU();
    double max_pivot = 0.0;
    for (Eigen::Index i = 0; i < ne; ++i) max_pivot = std::max(max_pivot, std::abs(combined(i, i)));
    for (Eigen::Index i = 0; i < ne; ++i) {
        if (std::abs(combined(i, i)) <= 1e-13 * std::max(max_pivot, 1.0))
            throw SingularMatrixError("eliminated block singular at pivot " + std::to_string(i) +
                                          " (node " + std::to_string(eliminated[i]) + ")",
                                      static_cast<int>(i));
    }
    return y_rr - y_re * lu.solve(y_er);
}

ReducedNetwork reduce_to_machines(const GridModel& grid, double load_scale,
                                  const std::vector<int>& out_branches, int fault_bus) {
    const int b = grid.buses;
    const int m = static_cast<int>(grid.machines.size());
    const Eigen::MatrixXcd y = build_full_admittance(grid, load_scale, out_branches, fault_bus);
    std::vector<int> retained(m);
    for (int i = 0; i < m; ++i) retained[i] = b + i;

    ReducedNetwork net;
    net.y_red = kron_reduce(y, retained);
    net.emf.resize(m);
    for (int i = 0; i < m; ++i) net.emf(i) = grid.machines[i].emf;
    return net;
}

Eigen::VectorXd electrical_power(const ReducedNetwork& net, const Eigen::VectorXd& delta) {
    const Eigen::VectorXcd e = machine_emf_phasors(net, delta);
    const Eigen::VectorXcd i = net.y_red * e;
    return (e.array() * i.array().conjugate()).real();
}

Equilibrium find_equilibrium(const GridModel& grid, double load_scale,
                             const std::vector<int>& out_branches) {
    const int m = static_cast<int>(grid.machines.size());
    const ReducedNetwork net = reduce_to_machines(grid, load_scale, out_branches);

    Eigen::VectorXd target(m);
    for (int i = 0; i < m; ++i) target(i) = load_scale * grid.machines[i].mech_power;

    // Newton on machines 1..m-1 with machine 0 fixed as angle reference.
    // The load level is ramped when a cold start fails to converge.
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(m);
    auto solve_at = [&](double scale, Eigen::VectorXd& d) -> bool {
        const ReducedNetwork n = reduce_to_machines(grid, scale, out_branches);
        Eigen::VectorXd tgt(m);
        for (int i = 0; i < m; ++i) tgt(i) = scale * grid.machines[i].mech_power;
        for (int iter = 0; iter < 80; ++iter) {
            const Eigen::VectorXd pe = electrical_power(n, d);
            Eigen::VectorXd g = pe - tgt;
            double res = 0.0;
            for (int i = 1; i < m; ++i) res = std::max(res, std::abs(g(i)));
            if (res < 1e-12) return true;

            const Eigen::MatrixXd j = power_jacobian(n, d);
            Eigen::MatrixXd jr = j.block(1, 1, m - 1, m - 1);
            Eigen::VectorXd gr = g.segment(1, m - 1);
            Eigen::VectorXd step = jr.partialPivLu().solve(gr);
            if (!step.allFinite()) return false;

            // backtracking line search on the residual norm
            double alpha = 1.0;
            for (int ls = 0; ls < 30; ++ls) {
                Eigen::VectorXd trial = d;
                trial.segment(1, m - 1) -= alpha * step;
                const Eigen::VectorXd pe2 = electrical_power(n, trial);
                double res2 = 0.0;
                for (int i = 1; i < m; ++i) res2 = std::max(res2, std::abs(pe2(i) - tgt(i)));
                if (res2 < res || alpha < 1e-6) {
                    d = trial;
                    break;
                }
                alpha *= 0.5;
            }
        }
        return false;
    };

    if (!solve_at(load_scale, delta)) {
        delta.setZero();
        bool ok = true;
        for (double frac : {0.25, 0.5, 0.75, 1.0}) {
            ok = solve_at(frac * load_scale, delta);
            if (!ok) break;
        }
        if (!ok)
            throw ConfigError("equilibrium solve failed at load scale " + std::to_string(load_scale));
    }

    Equilibrium eq;
    eq.delta = delta;
    eq.mech_power = target;
    eq.mech_power(0) = electrical_power(net, delta)(0);  // slack absorbs losses
    return eq;
}

namespace {

struct SwingSystem {
    const ReducedNetwork* net = nullptr;
    Eigen::VectorXd mech_power;
    Eigen::VectorXd inv_2h;    // 1 / (2 H_i)
    Eigen::VectorXd damping;
    double omega_s = 0.0;      // 2 pi f, rad/s

    // state: x = [delta; omega_pu]
    void derivative(const Eigen::VectorXd& x, Eigen::VectorXd& dx) const {
        const int m = static_cast<int>(mech_power.size());
        const Eigen::VectorXd delta = x.head(m);
        const Eigen::VectorXd omega = x.tail(m);
        const Eigen::VectorXd pe = electrical_power(*net, delta);
        dx.resize(2 * m);
        dx.head(m) = omega_s * omega;
        dx.tail(m) = (mech_power - pe - damping.cwiseProduct(omega)).cwiseProduct(inv_2h);
    }

    void rk4_step(Eigen::VectorXd& x, double h) const {
        Eigen::VectorXd k1, k2, k3, k4;
        derivative(x, k1);
        derivative(x + 0.5 * h * k1, k2);
        derivative(x + 0.5 * h * k2, k3);
        derivative(x + h * k3, k4);
        x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
};

SwingSystem make_system(const GridModel& grid, const ReducedNetwork& net,
                        const Eigen::VectorXd& mech_power) {
    const int m = static_cast<int>(grid.machines.size());
    SwingSystem s;
    s.net = &net;
    s.mech_power = mech_power;
    s.inv_2h.resize(m);
    s.damping.resize(m);
    for (int i = 0; i < m; ++i) {
        s.inv_2h(i) = 1.0 / (2.0 * grid.machines[i].inertia_h);
        s.damping(i) = grid.machines[i].damping;
    }
    s.omega_s = 2.0 * kPi * grid.base_hz;
    return s;
}

}  // namespace

Trajectory simulate_contingency(const GridModel& grid, const FaultSpec& fault, double horizon_s,
                                double dt_s, double frame_hz, int record_cycles) {
    if (dt_s > 2e-3) throw ConfigError("integration step must be <= 2 ms");
    if (horizon_s < fault.clearance_s) throw ConfigError("horizon shorter than clearance time");
    if (fault.removed_branches.empty()) throw ConfigError("contingency removes no component");
    if (record_cycles * (1.0 / frame_hz) > horizon_s + 1e-9)
        throw ConfigError("record_cycles extends past the simulation horizon");

    const int m = static_cast<int>(grid.machines.size());
    const int b = grid.buses;

    // Network conditions: pre-fault carries every outage except the cleared
    // one; the cleared branch is isolated when the fault clears.
    std::vector<int> pre_out(fault.removed_branches.begin(), fault.removed_branches.end() - 1);
    const std::vector<int>& post_out = fault.removed_branches;

    const Equilibrium eq = find_equilibrium(grid, fault.load_scale, pre_out);
    const ReducedNetwork net_fault =
        reduce_to_machines(grid, fault.load_scale, pre_out, fault.faulted_bus);
    const ReducedNetwork net_post = reduce_to_machines(grid, fault.load_scale, post_out);
    const BusSolver post_bus = make_bus_solver(grid, fault.load_scale, post_out, -1);

    SwingSystem sys_fault = make_system(grid, net_fault, eq.mech_power);
    SwingSystem sys_post = make_system(grid, net_post, eq.mech_power);

    Trajectory traj;
    traj.dt = dt_s;
    traj.start_s = -fault.clearance_s;
    traj.phasors = MeasurementMatrix(b, record_cycles);

    Eigen::VectorXd x(2 * m);
    x.head(m) = eq.delta;
    x.tail(m).setZero();

    const double cycle_s = 1.0 / frame_hz;
    int next_cycle = 1;
    double t = -fault.clearance_s;

    traj.angles.push_back(x.head(m));
    traj.speeds.push_back(x.tail(m));

    auto record_phasor = [&](const Eigen::VectorXd& state, int cycle) {
        const Eigen::VectorXcd emf = machine_emf_phasors(net_post, state.head(m));
        const Eigen::VectorXcd v = post_bus.solve(emf);
        for (int i = 0; i < b; ++i)
            traj.phasors.set(i, cycle, std::abs(v(i)), wrap_angle(std::arg(v(i))));
    };

    const long long total_steps = std::llround((horizon_s + fault.clearance_s) / dt_s);
    for (long long step = 0; step < total_steps; ++step) {
        const SwingSystem& sys = (t < -1e-12) ? sys_fault : sys_post;

        // record any output cycles inside this step via a sub-step copy
        double t_next = t + dt_s;
        while (next_cycle <= record_cycles && next_cycle * cycle_s <= t_next + 1e-12 &&
               next_cycle * cycle_s > t - 1e-12) {
            const double h = next_cycle * cycle_s - t;
            if (h > 1e-12 && t >= -1e-12) {
                Eigen::VectorXd probe = x;
                sys_post.rk4_step(probe, h);
                record_phasor(probe, next_cycle);
            } else if (h <= 1e-12) {
                record_phasor(x, next_cycle);
            }
            ++next_cycle;
        }

        sys.rk4_step(x, dt_s);
        t += dt_s;

        traj.angles.push_back(x.head(m));
        traj.speeds.push_back(x.tail(m));

        if (x.head(m).cwiseAbs().maxCoeff() > kDivergedAngle) {
            traj.divergent = true;
            break;
        }
    }

    // Fill any cycles the loop did not reach (divergence cut the run short):
    // mark the rest of the phasor record from the last state.
    while (next_cycle <= record_cycles && traj.divergent) {
        record_phasor(x, next_cycle);
        ++next_cycle;
    }
    return traj;
}

Trajectory simulate_unfaulted(const GridModel& grid, double load_scale, double horizon_s,
                              double dt_s) {
    const int m = static_cast<int>(grid.machines.size());
    const Equilibrium eq = find_equilibrium(grid, load_scale, {});
    const ReducedNetwork net = reduce_to_machines(grid, load_scale, {});
    SwingSystem sys = make_system(grid, net, eq.mech_power);

    Trajectory traj;
    traj.dt = dt_s;
    traj.start_s = 0.0;
    traj.phasors = MeasurementMatrix(grid.buses, 0);

    Eigen::VectorXd x(2 * m);
    x.head(m) = eq.delta;
    x.tail(m).setZero();
    traj.angles.push_back(x.head(m));
    traj.speeds.push_back(x.tail(m));

    const long long steps = std::llround(horizon_s / dt_s);
    for (long long i = 0; i < steps; ++i) {
        sys.rk4_step(x, dt_s);
        traj.angles.push_back(x.head(m));
        traj.speeds.push_back(x.tail(m));
    }
    return traj;
}

int label_stability(const Trajectory& traj, const GridModel& grid) {
    if (traj.divergent) return 0;
    const int m = static_cast<int>(grid.machines.size());
    double h_total = 0.0;
    Eigen::VectorXd h(m);
    for (int i = 0; i < m; ++i) {
        h(i) = grid.machines[i].inertia_h;
        h_total += h(i);
    }
    for (const auto& delta : traj.angles) {
        const double coi = h.dot(delta) / h_total;
        for (int i = 0; i < m; ++i)
            if (std::abs(delta(i) - coi) > kPi) return 0;
    }
    return 1;
}

Dataset generate_dataset(const GridModel& grid, const DatagenConfig& cfg,
                         std::vector<DatagenSkip>* skip_log) {
    grid.validate();
    const double frame_hz = grid.base_hz;

    std::vector<int> removable;
    for (std::size_t i = 0; i < grid.branches.size(); ++i)
        if (grid.branches[i].removable) removable.push_back(static_cast<int>(i));

    auto skip = [&](const std::string& what, const std::string& why) {
        if (skip_log) skip_log->push_back({what, why});
    };

    Dataset ds;
    ds.frame_hz = frame_hz;

    int case_no = 0;
    for (int c1 : removable) {
        const std::string n1 = grid.branches[c1].id;
        if (!grid.connected_without({c1})) {
            skip(n1, "N-1 outage islands the network");
            continue;
        }
        for (int c2 : removable) {
            if (c2 == c1) continue;
            const std::string name = n1 + "+" + grid.branches[c2].id;
            if (!grid.connected_without({c1, c2})) {
                skip(name, "N-2 outage islands the network");
                continue;
            }
            for (double level : cfg.load_levels_pct) {
                const double scale = level / 100.0;
                std::vector<int> fault_buses{grid.branches[c2].from};
                if (cfg.both_fault_buses) fault_buses.push_back(grid.branches[c2].to);

                for (int fb : fault_buses) {
                    FaultSpec fault;
                    fault.faulted_bus = fb;
                    fault.clearance_s = cfg.clearance_s;
                    fault.removed_branches = {c1, c2};
                    fault.load_scale = scale;
                    Trajectory traj;
                    try {
                        traj = simulate_contingency(grid, fault, cfg.horizon_s, cfg.dt_s, frame_hz,
                                                    cfg.record_cycles);
                    } catch (const ConfigError& e) {
                        skip(name + "@" + std::to_string(level), e.what());
                        continue;
                    }

                    ContingencyCase c;
                    c.id = "c" + std::to_string(case_no++) + "-" + name + "-b" + std::to_string(fb) +
                           "-l" + std::to_string(static_cast<int>(level));
                    c.label = label_stability(traj, grid);
                    c.matrix = traj.phasors;
                    c.meta.load_pct = level;
                    c.meta.fault_bus = fb;
                    c.meta.removed = {grid.branches[c1].id, grid.branches[c2].id};
                    ds.cases.push_back(std::move(c));
                }
            }
        }
    }
    return ds;
}

}  // namespace tsadw

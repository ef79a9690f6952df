#include "tsadw/grid.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "tsadw/config.hpp"

namespace tsadw {

void GridModel::validate() const {
    if (buses < 2) throw ConfigError("grid needs at least 2 buses");
    if (machines.size() < 2) throw ConfigError("grid needs at least 2 machines");
    if (base_hz <= 0.0) throw ConfigError("base frequency must be positive");
    for (const auto& b : branches) {
        if (b.from < 0 || b.from >= buses || b.to < 0 || b.to >= buses || b.from == b.to)
            throw ConfigError("branch " + b.id + " endpoints out of range");
        const auto y = b.series_admittance();
        if (!std::isfinite(y.real()) || !std::isfinite(y.imag()))
            throw ConfigError("branch " + b.id + " has non-finite admittance");
    }
    for (const auto& m : machines) {
        if (m.bus < 0 || m.bus >= buses) throw ConfigError("machine bus out of range");
        if (m.inertia_h <= 0.0) throw ConfigError("machine inertia must be positive");
        if (m.emf <= 0.0) throw ConfigError("machine EMF must be positive");
        if (m.damping < 0.0) throw ConfigError("machine damping must be non-negative");
        if (m.xd_transient <= 0.0) throw ConfigError("machine transient reactance must be positive");
    }
    for (const auto& l : loads)
        if (l.bus < 0 || l.bus >= buses) throw ConfigError("load bus out of range");
    if (!connected_without({}))
        throw ConfigError("grid graph is not connected with all branches in service");
}

bool GridModel::connected_without(const std::vector<int>& out) const {
    std::vector<bool> removed(branches.size(), false);
    for (int i : out)
        if (i >= 0 && static_cast<std::size_t>(i) < branches.size()) removed[i] = true;

    std::vector<std::vector<int>> adj(buses);
    for (std::size_t i = 0; i < branches.size(); ++i) {
        if (removed[i]) continue;
        adj[branches[i].from].push_back(branches[i].to);
        adj[branches[i].to].push_back(branches[i].from);
    }
    std::vector<bool> seen(buses, false);
    std::vector<int> stack{0};
    seen[0] = true;
    int count = 1;
    while (!stack.empty()) {
        const int v = stack.back();
        stack.pop_back();
        for (int w : adj[v]) {
            if (!seen[w]) {
                seen[w] = true;
                ++count;
                stack.push_back(w);
            }
        }
    }
    return count == buses;
}

GridModel parse_grid(const std::string& text, const std::string& name) {
    const ConfigFile cf = ConfigFile::parse_string(text, name);
    GridModel g;
    g.buses = static_cast<int>(cf.get_int("grid", "buses"));
    g.base_hz = cf.get_double("grid", "base_hz", 60.0);

    auto fields = [&](const std::string& row, std::size_t expected_min, const std::string& what) {
        auto parts = ConfigFile::split_list(row);
        if (parts.size() < expected_min)
            throw ConfigError(name + ": " + what + " row `" + row + "` needs at least " +
                              std::to_string(expected_min) + " fields");
        return parts;
    };

    for (const auto& row : cf.all("machines", "m")) {
        auto p = fields(row, 6, "machine");
        MachineParams m;
        m.bus = std::stoi(p[0]);
        m.inertia_h = std::stod(p[1]);
        m.damping = std::stod(p[2]);
        m.emf = std::stod(p[3]);
        m.mech_power = std::stod(p[4]);
        m.xd_transient = std::stod(p[5]);
        g.machines.push_back(m);
    }

    int branch_no = 0;
    for (const auto& row : cf.all("branches", "b")) {
        auto p = fields(row, 5, "branch");
        BranchSpec b;
        b.from = std::stoi(p[0]);
        b.to = std::stoi(p[1]);
        b.r = std::stod(p[2]);
        b.x = std::stod(p[3]);
        b.b_shunt = std::stod(p[4]);
        b.removable = p.size() > 5 ? std::stoi(p[5]) != 0 : true;
        b.id = "br" + std::to_string(branch_no++) + ":" + p[0] + "-" + p[1];
        g.branches.push_back(b);
    }

    for (const auto& row : cf.all("loads", "l")) {
        auto p = fields(row, 3, "load");
        LoadSpec l;
        l.bus = std::stoi(p[0]);
        l.p = std::stod(p[1]);
        l.q = std::stod(p[2]);
        g.loads.push_back(l);
    }

    g.validate();
    return g;
}

GridModel load_grid(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_grid(buf.str(), path);
}

}  // namespace tsadw

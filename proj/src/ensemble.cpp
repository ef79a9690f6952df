#include "tsadw/ensemble.hpp"

#include <json.hpp>

#include <algorithm>
#include <numeric>
#include <set>

#include "tsadw/rng.hpp"

namespace tsadw {

ObservabilityGraph ObservabilityGraph::from_grid(const GridModel& grid) {
    std::vector<std::pair<int, int>> edges;
    for (const auto& b : grid.branches) edges.emplace_back(b.from, b.to);
    return from_edges(grid.buses, edges);
}

ObservabilityGraph ObservabilityGraph::from_edges(int buses,
                                                  const std::vector<std::pair<int, int>>& edges) {
    ObservabilityGraph g;
    g.buses = buses;
    g.adjacency.resize(static_cast<std::size_t>(buses));
    for (auto [a, b] : edges) {
        if (a < 0 || a >= buses || b < 0 || b >= buses)
            throw ConfigError("edge endpoint out of range");
        g.adjacency[static_cast<std::size_t>(a)].push_back(b);
        g.adjacency[static_cast<std::size_t>(b)].push_back(a);
    }
    for (auto& adj : g.adjacency) {
        std::sort(adj.begin(), adj.end());
        adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
    }
    g.pmu_locations.resize(static_cast<std::size_t>(buses));
    std::iota(g.pmu_locations.begin(), g.pmu_locations.end(), 0);
    return g;
}

void ObservabilityGraph::validate() const {
    if (buses <= 0) throw ConfigError("observability graph needs at least one bus");
    if (adjacency.size() != static_cast<std::size_t>(buses))
        throw ConfigError("adjacency list size does not match the bus count");
    for (int p : pmu_locations)
        if (p < 0 || p >= buses) throw ConfigError("PMU location out of range");
}

int observability(const std::vector<int>& pmu_set, const ObservabilityGraph& graph) {
    std::set<int> locations(graph.pmu_locations.begin(), graph.pmu_locations.end());
    std::vector<bool> seen(static_cast<std::size_t>(graph.buses), false);
    for (int p : pmu_set) {
        if (!locations.count(p))
            throw ConfigError("PMU " + std::to_string(p) + " is not an installed location");
        seen[static_cast<std::size_t>(p)] = true;
        for (int nb : graph.adjacency[static_cast<std::size_t>(p)]) seen[static_cast<std::size_t>(nb)] = true;
    }
    return static_cast<int>(std::count(seen.begin(), seen.end(), true));
}

void PmuAllocation::validate(const ObservabilityGraph& graph) const {
    const std::size_t n = sets.size();
    if (n == 0) throw ConfigError("allocation has no sets");
    const std::size_t p = graph.pmu_locations.size();
    const std::size_t base = p / n;

    std::set<int> all;
    for (std::size_t i = 0; i < n; ++i) {
        if (i + 1 < n && sets[i].size() != base)
            throw ConfigError("set " + std::to_string(i + 1) + " has " +
                              std::to_string(sets[i].size()) + " PMUs, expected " +
                              std::to_string(base));
        for (int pmu : sets[i]) {
            if (!all.insert(pmu).second)
                throw ConfigError("PMU " + std::to_string(pmu) + " appears in more than one set");
        }
    }
    std::set<int> expected(graph.pmu_locations.begin(), graph.pmu_locations.end());
    if (all != expected) throw ConfigError("allocation does not cover every PMU exactly once");
}

double allocation_objective(const PmuAllocation& alloc, const ObservabilityGraph& graph) {
    alloc.validate(graph);
    const auto n = static_cast<double>(alloc.sets.size());
    std::vector<double> o;
    o.reserve(alloc.sets.size());
    for (const auto& s : alloc.sets) o.push_back(static_cast<double>(observability(s, graph)));

    const double total = std::accumulate(o.begin(), o.end(), 0.0);
    const double mean = total / n;
    double deviations = 0.0;
    for (double v : o) deviations += v - mean;
    return (total + deviations) / n;
}

double allocation_objective_variance_penalized(const PmuAllocation& alloc,
                                               const ObservabilityGraph& graph, double lambda) {
    alloc.validate(graph);
    const auto n = static_cast<double>(alloc.sets.size());
    std::vector<double> o;
    for (const auto& s : alloc.sets) o.push_back(static_cast<double>(observability(s, graph)));
    const double mean = std::accumulate(o.begin(), o.end(), 0.0) / n;
    double var = 0.0;
    for (double v : o) var += (v - mean) * (v - mean);
    var /= n;
    return mean - lambda * var;
}

namespace {

PmuAllocation decode_keys(const Eigen::VectorXd& keys, const ObservabilityGraph& graph, int n_sets) {
    const auto p = static_cast<int>(graph.pmu_locations.size());
    std::vector<int> order(static_cast<std::size_t>(p));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return keys(a) < keys(b); });

    const int base = p / n_sets;
    PmuAllocation alloc;
    alloc.sets.resize(static_cast<std::size_t>(n_sets));
    int at = 0;
    for (int i = 0; i < n_sets; ++i) {
        const int take = (i + 1 < n_sets) ? base : p - at;
        for (int k = 0; k < take; ++k)
            alloc.sets[static_cast<std::size_t>(i)].push_back(graph.pmu_locations[static_cast<std::size_t>(order[static_cast<std::size_t>(at++)])]);
        std::sort(alloc.sets[static_cast<std::size_t>(i)].begin(), alloc.sets[static_cast<std::size_t>(i)].end());
    }
    return alloc;
}

}  // namespace

PmuAllocation solve_allocation(const ObservabilityGraph& graph, int n_sets,
                               const MetaheuristicConfig& cfg, double* objective_out) {
    graph.validate();
    const auto p = static_cast<int>(graph.pmu_locations.size());
    if (n_sets < 1) throw ConfigError("need at least one PMU set");
    if (n_sets > p)
        throw ConfigError("cannot split " + std::to_string(p) + " PMUs into " +
                          std::to_string(n_sets) + " nonempty sets");

    auto objective = [&](const Eigen::VectorXd& keys) {
        return -allocation_objective(decode_keys(keys, graph, n_sets), graph);
    };

    // identity ordering as one deterministic starting individual
    Eigen::VectorXd identity(p);
    for (int i = 0; i < p; ++i) identity(i) = (i + 0.5) / p;

    const auto result = ssa::minimize(p, Eigen::VectorXd::Zero(p), Eigen::VectorXd::Ones(p),
                                      objective, cfg, {identity});
    PmuAllocation best = decode_keys(result.best, graph, n_sets);
    if (objective_out) *objective_out = -result.best_value;
    return best;
}

std::string allocation_to_json(const PmuAllocation& alloc, double objective, std::uint64_t seed) {
    nlohmann::json j;
    j["N"] = alloc.sets.size();
    j["sets"] = alloc.sets;
    j["objective"] = objective;
    j["seed"] = seed;
    return j.dump();
}

PmuAllocation allocation_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    PmuAllocation a;
    a.sets = j.at("sets").get<std::vector<std::vector<int>>>();
    if (a.sets.size() != j.at("N").get<std::size_t>())
        throw ParseError("allocation JSON: N does not match the number of sets");
    return a;
}

void BlockSpec::validate() const {
    net.validate();
    if (kind == BlockKind::main) {
        if (!subset.empty()) throw ConfigError("main block spec must not carry a bus subset");
        if (net.lstm_widths.size() != 4 || net.dense_widths.size() != 2)
            throw ConfigError("main block requires 4 LSTM and 2 dense hidden layers");
    } else {
        if (subset.empty()) throw ConfigError("ensemble block requires a nonempty bus subset");
        if (net.lstm_widths.size() != 2 || net.dense_widths.size() != 1)
            throw ConfigError("ensemble block requires 2 LSTM and 1 dense hidden layer");
        if (net.input_dim != 2 * static_cast<int>(subset.size()))
            throw ConfigError("ensemble input dimension must be twice the subset size");
    }
}

std::vector<BlockSpec> build_ensemble_suite(const ObservabilityGraph& graph,
                                            const std::vector<int>& n_values,
                                            const MetaheuristicConfig& cfg,
                                            const SuiteLayout& layout) {
    std::vector<BlockSpec> specs;

    BlockSpec main;
    main.kind = BlockKind::main;
    main.id = "main";
    main.net.input_dim = 2 * graph.buses;
    main.net.lstm_widths = layout.main_lstm;
    main.net.dense_widths = layout.main_dense;
    main.validate();
    specs.push_back(std::move(main));

    for (int n : n_values) {
        MetaheuristicConfig per_n = cfg;
        per_n.seed = rng::mix({cfg.seed, 0x414c4c4fu, static_cast<std::uint64_t>(n)});
        const PmuAllocation alloc = solve_allocation(graph, n, per_n);
        for (std::size_t i = 0; i < alloc.sets.size(); ++i) {
            BlockSpec spec;
            spec.kind = BlockKind::ensemble;
            spec.id = "ens_n" + std::to_string(n) + "_s" + std::to_string(i);
            spec.subset = alloc.sets[i];
            spec.net.input_dim = 2 * static_cast<int>(spec.subset.size());
            spec.net.lstm_widths = layout.ensemble_lstm;
            spec.net.dense_widths = layout.ensemble_dense;
            spec.validate();
            specs.push_back(std::move(spec));
        }
    }
    return specs;
}

}  // namespace tsadw

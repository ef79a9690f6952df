#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsadw/grid.hpp"
#include "tsadw/nn.hpp"
#include "tsadw/ssa.hpp"

namespace tsadw {

/// Bus adjacency derived from in-service branches, plus the set of buses
/// hosting PMUs (every bus by default).
struct ObservabilityGraph {
    int buses = 0;
    std::vector<std::vector<int>> adjacency;
    std::vector<int> pmu_locations;

    static ObservabilityGraph from_grid(const GridModel& grid);
    static ObservabilityGraph from_edges(int buses, const std::vector<std::pair<int, int>>& edges);

    void validate() const;
};

/// Number of buses whose voltage phasor the PMU set provides: the hosting
/// buses plus their immediate neighbors (topological observability).
int observability(const std::vector<int>& pmu_set, const ObservabilityGraph& graph);

/// Disjoint PMU sets S_1..S_N. Feasibility: |S_i| = floor(P/N) for
/// i < N, the union covers all PMUs, and the sets are pairwise disjoint.
struct PmuAllocation {
    std::vector<std::vector<int>> sets;

    std::size_t n_sets() const { return sets.size(); }
    void validate(const ObservabilityGraph& graph) const;
};

/// Mean-observability objective, evaluated literally as
/// (1/N) (sum O_i + sum(O_i - mean O)) — the deviation terms cancel, so
/// the value equals mean(O_i); kept in the written form on purpose.
double allocation_objective(const PmuAllocation& alloc, const ObservabilityGraph& graph);

/// Optional variant penalizing uneven coverage: mean(O) - lambda * var(O).
double allocation_objective_variance_penalized(const PmuAllocation& alloc,
                                               const ObservabilityGraph& graph, double lambda);

/// Searches the random-key encoding (sorted keys give a PMU permutation,
/// chopped into floor(P/N)-sized blocks with the remainder in the last
/// set) so every candidate is feasible by construction. Deterministic
/// under cfg.seed.
PmuAllocation solve_allocation(const ObservabilityGraph& graph, int n_sets,
                               const MetaheuristicConfig& cfg, double* objective_out = nullptr);

std::string allocation_to_json(const PmuAllocation& alloc, double objective, std::uint64_t seed);
PmuAllocation allocation_from_json(const std::string& text);

enum class BlockKind { main, ensemble };

/// One classifier block of the suite: the main block reads every bus
/// (4 LSTM + 2 dense layers), an ensemble block reads a PMU subset
/// (2 LSTM + 1 dense layer).
struct BlockSpec {
    BlockKind kind = BlockKind::main;
    std::string id;
    std::vector<int> subset;  // empty for the main block
    NetworkConfig net;

    void validate() const;
};

/// Layer widths for the two block shapes. Layer counts are fixed by the
/// block contracts; widths are free.
struct SuiteLayout {
    std::vector<int> main_lstm = {64, 64, 64, 64};
    std::vector<int> main_dense = {32, 16};
    std::vector<int> ensemble_lstm = {32, 32};
    std::vector<int> ensemble_dense = {16};
};

/// Runs solve_allocation once per N value and emits one ensemble spec per
/// resulting PMU set, plus the main-block spec (first element).
std::vector<BlockSpec> build_ensemble_suite(const ObservabilityGraph& graph,
                                            const std::vector<int>& n_values,
                                            const MetaheuristicConfig& cfg,
                                            const SuiteLayout& layout = {});

}  // namespace tsadw

#include <doctest.h>

#include <algorithm>
#include <functional>
#include <numeric>

#include "oracles.hpp"
#include "tsadw/ensemble.hpp"
#include "tsadw/rng.hpp"

using namespace tsadw;

namespace {

ObservabilityGraph path3() {
    return ObservabilityGraph::from_edges(3, {{0, 1}, {1, 2}});
}

ObservabilityGraph cycle_graph(int n) {
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i) edges.emplace_back(i, (i + 1) % n);
    return ObservabilityGraph::from_edges(n, edges);
}

ObservabilityGraph random_connected_graph(int n, double extra_edge_prob, rng::Stream& stream) {
    std::vector<std::pair<int, int>> edges;
    for (int i = 1; i < n; ++i)
        edges.emplace_back(static_cast<int>(stream.below(static_cast<std::uint64_t>(i))), i);
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b)
            if (stream.uniform01() < extra_edge_prob) edges.emplace_back(a, b);
    return ObservabilityGraph::from_edges(n, edges);
}

/// Exhaustive search over every feasible labeled partition.
double brute_force_optimum(const ObservabilityGraph& graph, int n_sets) {
    const int p = static_cast<int>(graph.pmu_locations.size());
    const int base = p / n_sets;

    std::vector<int> remaining(graph.pmu_locations);
    PmuAllocation alloc;
    alloc.sets.resize(static_cast<std::size_t>(n_sets));
    double best = -1e300;

    std::function<void(int)> place = [&](int set_idx) {
        if (set_idx == n_sets - 1) {
            alloc.sets[static_cast<std::size_t>(set_idx)] = remaining;
            best = std::max(best, allocation_objective(alloc, graph));
            return;
        }
        // choose `base` elements of `remaining` for this set
        std::vector<int> mask(remaining.size(), 0);
        std::fill(mask.begin(), mask.begin() + base, 1);
        std::sort(mask.begin(), mask.end(), std::greater<>());
        do {
            std::vector<int> chosen, rest;
            for (std::size_t i = 0; i < remaining.size(); ++i)
                (mask[i] ? chosen : rest).push_back(remaining[i]);
            alloc.sets[static_cast<std::size_t>(set_idx)] = chosen;
            auto saved = remaining;
            remaining = rest;
            place(set_idx + 1);
            remaining = saved;
        } while (std::prev_permutation(mask.begin(), mask.end()));
    };
    place(0);
    return best;
}

}  // namespace

TEST_CASE("observability counts closed neighborhoods") {
    const auto g = path3();
    CHECK(observability({1}, g) == 3);  // middle bus sees everything
    CHECK(observability({0}, g) == 2);
    CHECK(observability({}, g) == 0);
    CHECK(observability({0, 1, 2}, g) == 3);
    CHECK_THROWS_AS(observability({7}, g), ConfigError);
}

TEST_CASE("allocation objective equals the mean observability") {
    rng::Stream stream(21);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 6 + static_cast<int>(stream.below(5));
        const auto g = random_connected_graph(n, 0.3, stream);

        const int n_sets = 2 + static_cast<int>(stream.below(3));
        // random feasible allocation via a shuffled chop
        std::vector<int> perm(g.pmu_locations);
        stream.shuffle(perm);
        PmuAllocation alloc;
        alloc.sets.resize(static_cast<std::size_t>(n_sets));
        const int base = n / n_sets;
        int at = 0;
        for (int i = 0; i < n_sets; ++i) {
            const int take = i + 1 < n_sets ? base : n - at;
            for (int k = 0; k < take; ++k) alloc.sets[static_cast<std::size_t>(i)].push_back(perm[static_cast<std::size_t>(at++)]);
        }

        double mean = 0.0;
        for (const auto& s : alloc.sets) mean += observability(s, g);
        mean /= static_cast<double>(n_sets);
        CHECK(allocation_objective(alloc, g) == doctest::Approx(mean).epsilon(1e-12));

        // invariant under relabeling the sets
        PmuAllocation shuffled = alloc;
        std::reverse(shuffled.sets.begin(), shuffled.sets.end());
        if (shuffled.sets.front().size() == shuffled.sets.back().size())
            CHECK(allocation_objective(shuffled, g) ==
                  doctest::Approx(allocation_objective(alloc, g)).epsilon(1e-12));
    }
    SUBCASE("single set degenerates to its own observability") {
        const auto g = path3();
        PmuAllocation alloc;
        alloc.sets = {{0, 1, 2}};
        CHECK(allocation_objective(alloc, g) == doctest::Approx(3.0));
    }
    SUBCASE("infeasible allocations are rejected") {
        const auto g = path3();
        PmuAllocation missing;
        missing.sets = {{0}, {1}};  // PMU 2 uncovered
        CHECK_THROWS_AS(allocation_objective(missing, g), ConfigError);
        PmuAllocation dup;
        dup.sets = {{0, 1}, {1, 2}};
        CHECK_THROWS_AS(allocation_objective(dup, g), ConfigError);
    }
}

TEST_CASE("solve_allocation reaches the exhaustive optimum on small graphs") {
    MetaheuristicConfig cfg;
    cfg.population = 20;
    cfg.max_iterations = 200;

    SUBCASE("6-cycle split three ways") {
        const auto g = cycle_graph(6);
        cfg.seed = 1;
        double objective = 0.0;
        const auto alloc = solve_allocation(g, 3, cfg, &objective);
        alloc.validate(g);
        CHECK(objective == doctest::Approx(brute_force_optimum(g, 3)).epsilon(1e-12));
    }
    SUBCASE("random graphs, P <= 8, N <= 3") {
        rng::Stream stream(50);
        for (int trial = 0; trial < 10; ++trial) {
            const int n = 5 + static_cast<int>(stream.below(4));
            const auto g = random_connected_graph(n, 0.25, stream);
            const int n_sets = 2 + static_cast<int>(stream.below(2));
            cfg.seed = 100 + static_cast<std::uint64_t>(trial);
            double objective = 0.0;
            const auto alloc = solve_allocation(g, n_sets, cfg, &objective);
            alloc.validate(g);
            CHECK(objective == doctest::Approx(brute_force_optimum(g, n_sets)).epsilon(1e-12));
        }
    }
}

TEST_CASE("solve_allocation feasibility and determinism at larger sizes") {
    rng::Stream stream(60);
    MetaheuristicConfig cfg;
    cfg.population = 10;
    cfg.max_iterations = 30;
    for (int p : {12, 25, 40}) {
        const auto g = random_connected_graph(p, 0.1, stream);
        for (int n_sets : {3, 5, 7}) {
            cfg.seed = static_cast<std::uint64_t>(p * 100 + n_sets);
            const auto a = solve_allocation(g, n_sets, cfg);
            a.validate(g);  // constraints hold by construction
            const auto b = solve_allocation(g, n_sets, cfg);
            CHECK(a.sets == b.sets);  // same seed, same allocation
        }
    }
    SUBCASE("more sets than PMUs is rejected") {
        const auto g = path3();
        CHECK_THROWS_AS(solve_allocation(g, 4, cfg), ConfigError);
    }
    SUBCASE("beats 1000 random feasible allocations under the same seed") {
        const auto g = random_connected_graph(12, 0.15, stream);
        cfg.seed = 77;
        cfg.population = 20;
        cfg.max_iterations = 100;
        double objective = 0.0;
        solve_allocation(g, 4, cfg, &objective);

        rng::Stream baseline(cfg.seed);
        double best_random = -1e300;
        for (int i = 0; i < 1000; ++i) {
            std::vector<int> perm(g.pmu_locations);
            baseline.shuffle(perm);
            PmuAllocation alloc;
            alloc.sets.resize(4);
            const int base = 12 / 4;
            int at = 0;
            for (int s = 0; s < 4; ++s)
                for (int k = 0; k < base; ++k) alloc.sets[static_cast<std::size_t>(s)].push_back(perm[static_cast<std::size_t>(at++)]);
            best_random = std::max(best_random, allocation_objective(alloc, g));
        }
        CHECK(objective >= best_random - 1e-12);
    }
}

TEST_CASE("ssa best-so-far history is non-increasing") {
    MetaheuristicConfig cfg;
    cfg.population = 16;
    cfg.max_iterations = 150;
    cfg.seed = 5;
    const auto res = ssa::minimize(
        3, Eigen::VectorXd::Constant(3, -2.0), Eigen::VectorXd::Constant(3, 2.0),
        [](const Eigen::VectorXd& x) { return (x.array() - 0.5).square().sum(); }, cfg);
    for (std::size_t i = 1; i < res.history.size(); ++i)
        CHECK(res.history[i] <= res.history[i - 1]);
    CHECK(res.best_value < 0.01);  // simple bowl is easy to descend
}

TEST_CASE("build_ensemble_suite") {
    rng::Stream stream(70);
    const auto g = random_connected_graph(9, 0.25, stream);
    MetaheuristicConfig cfg;
    cfg.population = 10;
    cfg.max_iterations = 20;
    cfg.seed = 4;

    SuiteLayout layout;
    layout.main_lstm = {8, 8, 8, 8};
    layout.main_dense = {6, 4};
    layout.ensemble_lstm = {6, 6};
    layout.ensemble_dense = {4};

    SUBCASE("N values 3..7 give 25 ensemble specs plus one main spec") {
        const auto specs = build_ensemble_suite(g, {3, 4, 5, 6, 7}, cfg, layout);
        CHECK(specs.size() == 26);
        CHECK(specs.front().kind == BlockKind::main);
        int ensembles = 0;
        for (const auto& s : specs)
            if (s.kind == BlockKind::ensemble) ++ensembles;
        CHECK(ensembles == 25);

        // per N value, every bus appears in exactly one subset
        for (int n : {3, 4, 5, 6, 7}) {
            std::vector<int> count(9, 0);
            for (const auto& s : specs) {
                if (s.id.rfind("ens_n" + std::to_string(n) + "_", 0) == 0)
                    for (int b : s.subset) ++count[static_cast<std::size_t>(b)];
            }
            for (int b = 0; b < 9; ++b) CHECK(count[static_cast<std::size_t>(b)] == 1);
        }
        // input dimension always matches the subset
        for (const auto& s : specs)
            if (s.kind == BlockKind::ensemble)
                CHECK(s.net.input_dim == 2 * static_cast<int>(s.subset.size()));
    }
    SUBCASE("N=2 over four PMUs gives two sets of two") {
        const auto g4 = cycle_graph(4);
        const auto specs = build_ensemble_suite(g4, {2}, cfg, layout);
        REQUIRE(specs.size() == 3);
        CHECK(specs[1].subset.size() == 2);
        CHECK(specs[2].subset.size() == 2);
    }
}

TEST_CASE("allocation JSON round-trip") {
    PmuAllocation alloc;
    alloc.sets = {{0, 2}, {1, 3}, {4, 5, 6}};
    const auto text = allocation_to_json(alloc, 4.25, 99);
    const auto back = allocation_from_json(text);
    CHECK(back.sets == alloc.sets);
}

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <vector>

#include "tsadw/errors.hpp"

namespace tsadw {

/// Population-based search parameters. Defaults follow the solver
/// configuration used throughout the experiments (population 30,
/// 2000 iterations, attenuation 1.0, change probability 0.7, mask
/// probability 0.1).
struct MetaheuristicConfig {
    int population = 30;
    int max_iterations = 2000;
    double attenuation = 1.0;   // r_a: vibration attenuation over distance
    double change_prob = 0.7;   // p_c: probability of keeping the previous mask
    double mask_prob = 0.1;     // p_m: per-dimension mask probability
    std::uint64_t seed = 0;

    void validate() const {
        if (population < 2) throw ConfigError("metaheuristic population must be >= 2");
        if (max_iterations < 1) throw ConfigError("metaheuristic needs >= 1 iteration");
        for (double p : {change_prob, mask_prob})
            if (p < 0.0 || p > 1.0) throw ConfigError("metaheuristic probabilities must lie in [0,1]");
        if (attenuation <= 0.0) throw ConfigError("attenuation rate must be positive");
    }
};

namespace ssa {

struct Result {
    Eigen::VectorXd best;
    double best_value = 0.0;
    std::vector<double> history;  // best-so-far per iteration, non-increasing
};

/// Minimizes `objective` over the box [lower, upper]^dim with a social
/// spider style population search: spiders emit fitness-driven vibrations,
/// follow the strongest attenuated vibration they perceive, and random-walk
/// toward it with a per-dimension mask. Deterministic under cfg.seed.
/// `seeds` are optional starting individuals (clamped into the box).
Result minimize(int dim, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                const std::function<double(const Eigen::VectorXd&)>& objective,
                const MetaheuristicConfig& cfg, const std::vector<Eigen::VectorXd>& seeds = {});

}  // namespace ssa
}  // namespace tsadw

#include "tsadw/ssa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tsadw/rng.hpp"

namespace tsadw::ssa {

Result minimize(int dim, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                const std::function<double(const Eigen::VectorXd&)>& objective,
                const MetaheuristicConfig& cfg, const std::vector<Eigen::VectorXd>& seeds) {
    cfg.validate();
    if (dim <= 0) throw ConfigError("ssa::minimize needs a positive dimension");
    if (lower.size() != dim || upper.size() != dim)
        throw ShapeError("ssa::minimize bounds do not match the dimension");

    rng::Stream stream(rng::mix({cfg.seed, 0x53534175u}));
    const int pop = cfg.population;

    auto clamp_box = [&](Eigen::VectorXd& x) {
        for (int d = 0; d < dim; ++d) x(d) = std::clamp(x(d), lower(d), upper(d));
    };

    std::vector<Eigen::VectorXd> pos(pop, Eigen::VectorXd(dim));
    for (int i = 0; i < pop; ++i) {
        if (static_cast<std::size_t>(i) < seeds.size()) {
            pos[i] = seeds[static_cast<std::size_t>(i)];
            clamp_box(pos[i]);
        } else {
            for (int d = 0; d < dim; ++d) pos[i](d) = stream.uniform(lower(d), upper(d));
        }
    }

    std::vector<double> fit(pop);
    for (int i = 0; i < pop; ++i) fit[i] = objective(pos[i]);

    // per-spider memory: previous move, followed target, dimension mask
    std::vector<Eigen::VectorXd> last_move(pop, Eigen::VectorXd::Zero(dim));
    std::vector<Eigen::VectorXd> target_pos = pos;
    std::vector<double> target_intensity(pop, -std::numeric_limits<double>::infinity());
    std::vector<std::vector<bool>> mask(pop, std::vector<bool>(dim, false));

    Result result;
    int best_idx = static_cast<int>(std::min_element(fit.begin(), fit.end()) - fit.begin());
    result.best = pos[best_idx];
    result.best_value = fit[best_idx];

    for (int iter = 0; iter < cfg.max_iterations; ++iter) {
        // Source intensity: monotone decreasing in the objective value.
        const double floor = *std::min_element(fit.begin(), fit.end()) - 1e-9;
        std::vector<double> intensity(pop);
        for (int i = 0; i < pop; ++i) intensity[i] = std::log(1.0 / (fit[i] - floor + 1e-12) + 1.0);

        // Mean positional spread controls the attenuation length scale.
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
        for (const auto& p : pos) mean += p;
        mean /= static_cast<double>(pop);
        double spread = 0.0;
        for (const auto& p : pos) spread += (p - mean).cwiseAbs().sum();
        spread /= static_cast<double>(pop) * dim;
        if (spread < 1e-12) spread = 1e-12;

        for (int i = 0; i < pop; ++i) {
            // strongest perceived vibration over all spiders
            double best_recv = -std::numeric_limits<double>::infinity();
            int src = i;
            for (int j = 0; j < pop; ++j) {
                const double dist = (pos[i] - pos[j]).cwiseAbs().sum();
                const double recv = intensity[j] * std::exp(-dist / (spread * cfg.attenuation));
                if (recv > best_recv) {
                    best_recv = recv;
                    src = j;
                }
            }
            if (best_recv > target_intensity[i]) {
                target_intensity[i] = best_recv;
                target_pos[i] = pos[src];
            }

            // refresh the random-walk mask with probability 1 - p_c
            if (stream.uniform01() > cfg.change_prob) {
                for (int d = 0; d < dim; ++d) mask[i][d] = stream.uniform01() < cfg.mask_prob;
            }

            Eigen::VectorXd follow(dim);
            for (int d = 0; d < dim; ++d) {
                follow(d) = mask[i][d] ? pos[static_cast<int>(stream.below(static_cast<std::uint64_t>(pop)))](d)
                                       : target_pos[i](d);
            }

            Eigen::VectorXd step = Eigen::VectorXd::Zero(dim);
            for (int d = 0; d < dim; ++d) {
                step(d) = 0.8 * last_move[i](d) * stream.uniform01() +
                          (follow(d) - pos[i](d)) * stream.uniform01();
            }
            pos[i] += step;
            clamp_box(pos[i]);
            last_move[i] = step;

            fit[i] = objective(pos[i]);
            // vibration memory fades so stale targets get replaced
            target_intensity[i] *= 0.9;

            if (fit[i] < result.best_value) {
                result.best_value = fit[i];
                result.best = pos[i];
            }
        }
        result.history.push_back(result.best_value);
    }
    return result;
}

}  // namespace tsadw::ssa

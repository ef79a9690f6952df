// End-to-end acceptance suite. Each numbered check prints one PASS/FAIL
// line; the exit status is the number of failed checks.
//
// usage: acceptance <path-to-cli-binary> <configs-dir>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "oracles.hpp"
#include "tsadw/pipeline.hpp"

using namespace tsadw;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int number, const std::string& name, bool ok, const std::string& detail) {
    std::printf("%s  criterion %2d: %s (%s)\n", ok ? "PASS" : "FAIL", number, name.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// --- 1: gradient correctness ------------------------------------------------

void criterion_gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    NetworkConfig cfg;
    cfg.input_dim = 3;
    cfg.lstm_widths = {4, 3};  // two LSTM layers + dense head
    cfg.dense_widths = {3};

    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        auto net = LstmNetwork::init(cfg, seed);
        rng::Stream stream(seed * 977 + 5);
        std::vector<InputWindow> windows(3);
        std::vector<int> labels;
        for (auto& w : windows) {
            w.data.resize(3, 5);
            for (Eigen::Index i = 0; i < w.data.size(); ++i) w.data.data()[i] = stream.uniform(-1, 1);
            labels.push_back(static_cast<int>(stream.below(2)));
        }
        std::vector<const InputWindow*> batch;
        for (auto& w : windows) batch.push_back(&w);

        const auto [grad, loss] = network_gradients(batch, labels, net, LossAttachment::final_step);
        (void)loss;
        Eigen::VectorXd params = net.flatten();
        const double h = 1e-5;
        for (Eigen::Index i = 0; i < params.size(); ++i) {
            Eigen::VectorXd p = params;
            p(i) += h;
            net.assign(p);
            const double up = network_loss(batch, labels, net, LossAttachment::final_step);
            p(i) = params(i) - h;
            net.assign(p);
            const double down = network_loss(batch, labels, net, LossAttachment::final_step);
            net.assign(params);
            const double fd = (up - down) / (2.0 * h);
            const double denom = std::max({std::fabs(fd), std::fabs(grad(i)), 1e-6});
            worst = std::max(worst, std::fabs(fd - grad(i)) / denom);
        }
    }
    char detail[128];
    std::snprintf(detail, sizeof detail, "max rel err %.2e over 20 seeds, %.1f s", worst,
                  seconds_since(t0));
    report(1, "gradient correctness", worst < 1e-4, detail);
}

// --- 2: LSTM cell fidelity ---------------------------------------------------

void criterion_cell_fidelity() {
    rng::Stream stream(8101);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int in = 1 + static_cast<int>(stream.below(6));
        const int hid = 1 + static_cast<int>(stream.below(8));
        const auto p = oracles::random_lstm_layer(in, hid, stream, 0.9);

        Eigen::VectorXd h = Eigen::VectorXd::Zero(hid), c = Eigen::VectorXd::Zero(hid);
        Eigen::VectorXd h_ref = h, c_ref = c;
        for (int step = 0; step < 3; ++step) {
            Eigen::VectorXd x(in);
            for (int j = 0; j < in; ++j) x(j) = stream.uniform(-2, 2);
            std::tie(h, c) = lstm_cell_forward(x, h, c, p);
            std::tie(h_ref, c_ref) = oracles::lstm_cell_reference(x, h_ref, c_ref, p);
            worst = std::max(worst, (h - h_ref).cwiseAbs().maxCoeff());
            worst = std::max(worst, (c - c_ref).cwiseAbs().maxCoeff());
        }
    }
    char detail[96];
    std::snprintf(detail, sizeof detail, "max deviation %.2e over 1000 configurations", worst);
    report(2, "LSTM cell fidelity", worst < 1e-12, detail);
}

// --- 3: decision machine equals the rule-table oracle ------------------------

void criterion_decision_oracle() {
    long long checked = 0, mismatches = 0;
    for (int len = 1; len <= 5; ++len) {
        long long total = 1;
        for (int i = 0; i < len; ++i) total *= 6;
        for (long long code = 0; code < total; ++code) {
            long long c = code;
            std::vector<oracles::OracleVerdict> seq;
            DecisionMachine machine;
            bool machine_decided = false;
            int machine_label = -1, machine_at = -1;

            for (int i = 0; i < len; ++i) {
                const int sym = static_cast<int>(c % 6);
                c /= 6;
                const int block = sym / 2;
                const int label = sym % 2;
                seq.push_back({block, label});
                if (machine_decided) continue;

                BlockVerdict v;
                v.block_id = block == 0 ? "main" : "e" + std::to_string(block);
                v.role = block == 0 ? BlockRole::primary : BlockRole::secondary;
                v.label = label;
                v.cycle = 1;
                v.emitted_ms = i;
                if (const auto fa = machine.step(v)) {
                    machine_decided = true;
                    machine_label = fa->label;
                    machine_at = i;
                }
            }
            const auto expected = oracles::oracle_decide(seq);
            if (machine_decided != expected.decided ||
                (expected.decided &&
                 (machine_label != expected.label || machine_at != expected.at_index)))
                ++mismatches;
            ++checked;
        }
    }
    char detail[96];
    std::snprintf(detail, sizeof detail, "%lld sequences, %lld mismatches", checked, mismatches);
    report(3, "decision-machine oracle equivalence", mismatches == 0 && checked == 9330, detail);
}

// --- 4: delay model statistics -----------------------------------------------

void criterion_delay_statistics() {
    DelayModel model;
    model.shape_k = 20.0;
    model.scale_theta_ms = 2.0;
    model.shift_ms = 10.0;
    model.seed = 424243;

    const int n = 1'000'000;
    double sum = 0.0, sum_sq = 0.0, min_v = 1e300;
    for (int i = 0; i < n; ++i) {
        const double d = sample_delay(model, i % 1024, i / 1024);
        sum += d;
        sum_sq += d * d;
        min_v = std::min(min_v, d);
    }
    const double mean = sum / n;
    const double var = sum_sq / n - mean * mean;
    const bool ok = std::fabs(mean - 50.0) < 0.005 * 50.0 && std::fabs(var - 80.0) < 0.02 * 80.0 &&
                    min_v >= model.shift_ms;
    char detail[128];
    std::snprintf(detail, sizeof detail, "mean %.3f (want 50 +- 0.25), var %.2f (want 80 +- 1.6), min %.2f",
                  mean, var, min_v);
    report(4, "delay-model statistics", ok, detail);
}

// --- 5: noise cap --------------------------------------------------------------

void criterion_noise_cap() {
    NoiseModel noise;
    noise.sigma_pu = 0.004;
    noise.tve_cap = 0.01;
    noise.seed = 515151;

    int violations = 0;
    double worst = 0.0;
    for (int i = 0; i < 1'000'000; ++i) {
        const double mag = 0.9 + 0.2 * ((i * 7919) % 100) / 100.0;
        const double ang = -3.0 + 6.0 * ((i * 104729) % 1000) / 1000.0;
        const auto [m, a] = apply_noise(mag, ang, noise, i % 2048, i / 2048);
        const double tve = std::abs(std::polar(m, a) - std::polar(mag, ang));
        worst = std::max(worst, tve);
        if (tve > 0.01 + 1e-12) ++violations;
    }
    NoiseModel off = noise;
    off.sigma_pu = 0.0;
    const auto [m0, a0] = apply_noise(0.97, 0.44, off, 3, 4);
    const bool identity = m0 == 0.97 && a0 == 0.44;

    char detail[96];
    std::snprintf(detail, sizeof detail, "%d violations, worst TVE %.5f, zero-sigma identity %s",
                  violations, worst, identity ? "exact" : "BROKEN");
    report(5, "noise TVE cap", violations == 0 && identity, detail);
}

// --- 6: allocation optimality ---------------------------------------------------

double brute_force_allocation(const ObservabilityGraph& graph, int n_sets) {
    const int p = static_cast<int>(graph.pmu_locations.size());
    const int base = p / n_sets;
    std::vector<int> remaining(graph.pmu_locations);
    PmuAllocation alloc;
    alloc.sets.resize(static_cast<std::size_t>(n_sets));
    double best = -1e300;
    std::function<void(int, std::vector<int>)> place = [&](int set_idx, std::vector<int> rest) {
        if (set_idx == n_sets - 1) {
            alloc.sets[static_cast<std::size_t>(set_idx)] = rest;
            best = std::max(best, allocation_objective(alloc, graph));
            return;
        }
        std::vector<int> mask(rest.size(), 0);
        std::fill(mask.begin(), mask.begin() + base, 1);
        std::sort(mask.begin(), mask.end(), std::greater<>());
        do {
            std::vector<int> chosen, next;
            for (std::size_t i = 0; i < rest.size(); ++i) (mask[i] ? chosen : next).push_back(rest[i]);
            alloc.sets[static_cast<std::size_t>(set_idx)] = chosen;
            place(set_idx + 1, next);
        } while (std::prev_permutation(mask.begin(), mask.end()));
    };
    place(0, remaining);
    return best;
}

ObservabilityGraph random_graph(int n, double extra, rng::Stream& stream) {
    std::vector<std::pair<int, int>> edges;
    for (int i = 1; i < n; ++i)
        edges.emplace_back(static_cast<int>(stream.below(static_cast<std::uint64_t>(i))), i);
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b)
            if (stream.uniform01() < extra) edges.emplace_back(a, b);
    return ObservabilityGraph::from_edges(n, edges);
}

void criterion_allocation() {
    const auto t0 = std::chrono::steady_clock::now();
    rng::Stream stream(606061);
    MetaheuristicConfig cfg;
    cfg.population = 24;
    cfg.max_iterations = 250;

    int optimal = 0;
    for (int trial = 0; trial < 10; ++trial) {
        const int p = 5 + static_cast<int>(stream.below(4));  // 5..8
        const int n_sets = 2 + static_cast<int>(stream.below(2));
        const auto g = random_graph(p, 0.3, stream);
        cfg.seed = 4000 + static_cast<std::uint64_t>(trial);
        double objective = 0.0;
        const auto alloc = solve_allocation(g, n_sets, cfg, &objective);
        alloc.validate(g);
        if (std::fabs(objective - brute_force_allocation(g, n_sets)) < 1e-12) ++optimal;
    }

    bool feasible_large = true;
    for (int p : {20, 40}) {
        const auto g = random_graph(p, 0.08, stream);
        for (int n_sets : {3, 5, 7}) {
            cfg.seed = static_cast<std::uint64_t>(p * 10 + n_sets);
            MetaheuristicConfig small = cfg;
            small.max_iterations = 30;
            try {
                solve_allocation(g, n_sets, small).validate(g);
            } catch (const std::exception&) {
                feasible_large = false;
            }
        }
    }
    char detail[128];
    std::snprintf(detail, sizeof detail, "%d/10 exhaustive optima, feasibility to P=40 %s, %.1f s",
                  optimal, feasible_large ? "holds" : "BROKEN", seconds_since(t0));
    report(6, "allocation optimality at small scale", optimal == 10 && feasible_large, detail);
}

// --- 7-9: end-to-end pipeline ----------------------------------------------------

struct PipelineRun {
    BenchmarkReport clean;
    BenchmarkReport noisy;
    double wall_s = 0.0;
    std::size_t cases = 0;
};

PipelineRun run_pipeline(const std::string& config_path) {
    const auto t0 = std::chrono::steady_clock::now();
    auto progress = [](const std::string& msg) { std::fprintf(stderr, "  [pipeline] %s\n", msg.c_str()); };

    const auto cfg = PipelineConfig::load(config_path);
    PipelineRun run;
    const Dataset full = pipeline_generate(cfg, nullptr, progress);
    run.cases = full.cases.size();
    const auto trained = pipeline_train(cfg, full, progress);
    run.clean = pipeline_bench(cfg, trained.suite, trained.test_split, false, progress);
    run.noisy = pipeline_bench(cfg, trained.suite, trained.test_split, true, progress);
    run.wall_s = seconds_since(t0);
    return run;
}

void criteria_pipeline(const std::string& config_path) {
    PipelineRun run;
    try {
        run = run_pipeline(config_path);
    } catch (const std::exception& e) {
        const std::string why = std::string("pipeline failed: ") + e.what();
        report(7, "end-to-end speedup", false, why);
        report(8, "phi trade-off direction", false, why);
        report(9, "noise robustness", false, why);
        return;
    }

    {  // 7: speedup + accuracy + corpus size + wall time
        const auto* da = run.clean.find("delay_aware");
        const auto* sync = run.clean.find("synchronous");
        char detail[224];
        if (da && sync) {
            const double ratio = da->avg_ms / sync->avg_ms;
            const bool ok = run.cases >= 400 && ratio <= 0.75 && da->accuracy >= 0.95 &&
                            run.wall_s < 900.0;
            std::snprintf(detail, sizeof detail,
                          "%zu cases, avg %.1f vs %.1f ms (ratio %.3f <= 0.75), accuracy %.4f >= 0.95, "
                          "%.0f s < 900 s",
                          run.cases, da->avg_ms, sync->avg_ms, ratio, da->accuracy, run.wall_s);
            report(7, "end-to-end speedup", ok, detail);
        } else {
            report(7, "end-to-end speedup", false, "mechanisms missing from the report");
        }
    }

    {  // 8: phi sweep direction
        const char* names[4] = {"main_phi0.40", "main_phi0.60", "main_phi0.80", "main_phi1.00"};
        const MechanismSummary* s[4];
        bool present = true;
        for (int i = 0; i < 4; ++i) {
            s[i] = run.clean.find(names[i]);
            present = present && s[i];
        }
        if (present) {
            const bool monotone =
                s[0]->avg_ms <= s[1]->avg_ms && s[1]->avg_ms <= s[2]->avg_ms && s[2]->avg_ms <= s[3]->avg_ms;
            const bool accuracy_dir = s[3]->accuracy >= s[0]->accuracy - 0.01;
            char detail[224];
            std::snprintf(detail, sizeof detail,
                          "avg ms %.1f -> %.1f -> %.1f -> %.1f (monotone %s), acc %.3f@1.0 vs %.3f@0.4",
                          s[0]->avg_ms, s[1]->avg_ms, s[2]->avg_ms, s[3]->avg_ms,
                          monotone ? "yes" : "NO", s[3]->accuracy, s[0]->accuracy);
            report(8, "phi trade-off direction", monotone && accuracy_dir, detail);
        } else {
            report(8, "phi trade-off direction", false, "phi sweep missing from the report");
        }
    }

    {  // 9: noise robustness
        const auto* clean = run.clean.find("delay_aware");
        const auto* noisy = run.noisy.find("delay_aware");
        if (clean && noisy) {
            const double diff = std::fabs(clean->accuracy - noisy->accuracy);
            char detail[160];
            std::snprintf(detail, sizeof detail, "accuracy %.4f noiseless vs %.4f noisy (|diff| %.4f <= 0.015)",
                          clean->accuracy, noisy->accuracy, diff);
            report(9, "noise robustness", diff <= 0.015, detail);
        } else {
            report(9, "noise robustness", false, "mechanisms missing from the report");
        }
    }
}

// --- 10: byte-identical reproducibility through the CLI ---------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void criterion_reproducibility(const std::string& cli, const std::string& config_path) {
    const fs::path base = fs::temp_directory_path() / "tsadw_acceptance_repro";
    fs::remove_all(base);
    fs::create_directories(base);

    auto run_all = [&](const std::string& dir) {
        for (const std::string sub : {"gen-data", "train", "bench"}) {
            const std::string cmd = cli + " " + sub + " --config " + config_path + " --out " + dir +
                                    " >> " + dir + "-log.txt 2>&1";
            if (std::system(cmd.c_str()) != 0) return false;
        }
        return true;
    };

    const std::string d1 = (base / "run1").string();
    const std::string d2 = (base / "run2").string();
    if (!run_all(d1) || !run_all(d2)) {
        report(10, "reproducibility", false, "a pipeline invocation failed; see logs under " + base.string());
        return;
    }

    bool identical = true;
    std::string compared;
    for (const std::string rel : {"bench/rows.csv", "bench/cdf.csv", "dataset.bin"}) {
        const bool same = slurp(fs::path(d1) / rel) == slurp(fs::path(d2) / rel);
        identical = identical && same;
        compared += rel + (same ? " ok; " : " DIFFERS; ");
    }
    report(10, "reproducibility", identical, compared);
}

}  // namespace

int main(int argc, char** argv) {
    const std::string cli = argc > 1 ? argv[1] : "./build/tools/tsadw";
    const std::string config_dir = argc > 2 ? argv[2] : "configs";

    criterion_gradients();
    criterion_cell_fidelity();
    criterion_decision_oracle();
    criterion_delay_statistics();
    criterion_noise_cap();
    criterion_allocation();
    criteria_pipeline(config_dir + "/pipeline.toml");
    criterion_reproducibility(cli, config_dir + "/pipeline_smoke.toml");

    if (g_failures == 0) {
        std::printf("acceptance: all criteria passed\n");
    } else {
        std::printf("acceptance: %d criterion(s) failed\n", g_failures);
    }
    return g_failures;
}

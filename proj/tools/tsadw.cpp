// Command-line pipeline: generate contingency data, train the classifier
// suite, optimize allocations/thresholds, benchmark, and export response
// curves. Every run writes a manifest echoing its configuration and seeds.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "tsadw/dataset_io.hpp"
#include "tsadw/pipeline.hpp"
#include "tsadw/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitMissingArtifact = 3;
constexpr int kExitRuntime = 4;

int log_level() {
    const char* env = std::getenv("TSADW_LOG");
    if (!env) return 1;
    const std::string v = env;
    if (v == "quiet" || v == "0") return 0;
    if (v == "debug" || v == "2") return 2;
    return 1;
}

void info(const std::string& msg) {
    if (log_level() >= 1) std::cerr << "[tsadw] " << msg << "\n";
}

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    double phi = -1.0;
    double shift_ms = -1.0;
    int jobs = 0;
};

tsadw::PipelineConfig load_config(const CommonArgs& args) {
    if (!fs::exists(args.config_path))
        throw tsadw::ConfigError("config file not found: " + args.config_path);
    auto cfg = tsadw::PipelineConfig::load(args.config_path);
    if (args.seed_set) {
        // one seed flag reseeds every stage, keeping them distinct
        cfg.seeds.data = tsadw::rng::mix({args.seed, 1});
        cfg.seeds.split = tsadw::rng::mix({args.seed, 2});
        cfg.seeds.train = tsadw::rng::mix({args.seed, 3});
        cfg.seeds.allocation = tsadw::rng::mix({args.seed, 4});
        cfg.seeds.thresholds = tsadw::rng::mix({args.seed, 5});
        cfg.seeds.bench = tsadw::rng::mix({args.seed, 6});
        cfg.allocation.seed = cfg.seeds.allocation;
        cfg.thresholds.seed = cfg.seeds.thresholds;
        cfg.train_main.seed = tsadw::rng::mix({cfg.seeds.train, 0x4d41494eu});
        cfg.bench.seed = cfg.seeds.bench;
    }
    if (args.phi >= 0.0) cfg.phi = args.phi;
    if (args.shift_ms >= 0.0) cfg.delay.shift_ms = args.shift_ms;
    if (args.jobs > 0) cfg.bench.jobs = args.jobs;
    return cfg;
}

json seeds_json(const tsadw::PipelineConfig& cfg) {
    return json{{"data", cfg.seeds.data},           {"split", cfg.seeds.split},
                {"train", cfg.seeds.train},         {"allocation", cfg.seeds.allocation},
                {"thresholds", cfg.seeds.thresholds}, {"bench", cfg.seeds.bench}};
}

void write_manifest(const CommonArgs& args, const tsadw::PipelineConfig& cfg,
                    const std::string& command, const json& artifacts) {
    std::ifstream in(args.config_path);
    std::string config_text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    json m;
    m["command"] = command;
    m["version"] = 1;
    m["config_path"] = args.config_path;
    m["config_echo"] = config_text;
    m["seeds"] = seeds_json(cfg);
    m["overrides"] = {{"phi", cfg.phi}, {"shift_ms", cfg.delay.shift_ms}, {"jobs", cfg.bench.jobs}};
    m["artifacts"] = artifacts;

    std::ofstream out(fs::path(args.out_dir) / ("manifest-" + command + ".json"));
    out << m.dump(1) << "\n";
}

void require_fresh(const fs::path& p) {
    if (fs::exists(p))
        throw tsadw::ConfigError("refusing to overwrite existing artifact: " + p.string());
}

void require_artifact(const fs::path& p, const std::string& hint) {
    if (!fs::exists(p)) {
        std::cerr << "error: missing artifact " << p.string() << " (" << hint << ")\n";
        std::exit(kExitMissingArtifact);
    }
}

int cmd_gen_data(const CommonArgs& args, bool also_text) {
    const auto cfg = load_config(args);
    fs::create_directories(args.out_dir);
    const fs::path data_path = fs::path(args.out_dir) / "dataset.bin";
    require_fresh(data_path);

    std::vector<tsadw::DatagenSkip> skips;
    const auto ds = tsadw::pipeline_generate(cfg, &skips, info);
    for (const auto& s : skips)
        if (log_level() >= 2) std::cerr << "[tsadw]   skipped " << s.contingency << ": " << s.reason << "\n";
    info("skipped " + std::to_string(skips.size()) + " islanding/infeasible combinations");

    tsadw::save_dataset_binary(ds, data_path.string());
    json artifacts{{"dataset", data_path.string()}, {"cases", ds.cases.size()}, {"skipped", skips.size()}};
    if (also_text) {
        const fs::path text_path = fs::path(args.out_dir) / "dataset.jsonl";
        require_fresh(text_path);
        tsadw::save_dataset_text(ds, text_path.string());
        artifacts["dataset_text"] = text_path.string();
    }
    write_manifest(args, cfg, "gen-data", artifacts);
    info("dataset written to " + data_path.string());
    return kExitOk;
}

int cmd_train(const CommonArgs& args) {
    const auto cfg = load_config(args);
    const fs::path data_path = fs::path(args.out_dir) / "dataset.bin";
    require_artifact(data_path, "run gen-data first");
    const fs::path suite_dir = fs::path(args.out_dir) / "suite";
    require_fresh(suite_dir / "suite.json");

    const auto full = tsadw::load_dataset_binary(data_path.string());
    const auto trained = tsadw::pipeline_train(cfg, full, info);
    tsadw::save_suite(trained.suite, suite_dir.string());

    // allocation summary for audit (same artifact `optimize` produces)
    double objective = 0.0;
    const auto graph = tsadw::ObservabilityGraph::from_grid(tsadw::load_grid(cfg.grid_path));
    json allocs = json::array();
    for (int n : cfg.n_values) {
        tsadw::MetaheuristicConfig per_n = cfg.allocation;
        per_n.seed = tsadw::rng::mix({cfg.allocation.seed, 0x414c4c4fu, static_cast<std::uint64_t>(n)});
        const auto alloc = tsadw::solve_allocation(graph, n, per_n, &objective);
        allocs.push_back(json::parse(tsadw::allocation_to_json(alloc, objective, per_n.seed)));
    }
    std::ofstream alloc_out(suite_dir / "allocation.json");
    alloc_out << allocs.dump(1) << "\n";

    write_manifest(args, cfg, "train",
                   json{{"suite", suite_dir.string()}, {"blocks", trained.suite.blocks.size()}});
    info("suite written to " + suite_dir.string());
    return kExitOk;
}

int cmd_optimize(const CommonArgs& args) {
    const auto cfg = load_config(args);
    const fs::path data_path = fs::path(args.out_dir) / "dataset.bin";
    const fs::path suite_dir = fs::path(args.out_dir) / "suite";
    require_artifact(data_path, "run gen-data first");
    require_artifact(suite_dir / "suite.json", "run train first");
    const fs::path opt_dir = fs::path(args.out_dir) / "optimize";
    require_fresh(opt_dir / "thresholds.json");
    fs::create_directories(opt_dir);

    const auto full = tsadw::load_dataset_binary(data_path.string());
    auto suite = tsadw::load_suite(suite_dir.string());

    auto [train_raw, test_raw] = tsadw::split_dataset(full, cfg.split_ratio, cfg.seeds.split);
    std::vector<tsadw::ContingencyCase> train_norm;
    std::vector<int> labels;
    for (const auto& c : train_raw.cases) {
        train_norm.push_back(tsadw::normalize_case(c, suite.stats));
        labels.push_back(c.label);
    }

    const auto graph = tsadw::ObservabilityGraph::from_grid(tsadw::load_grid(cfg.grid_path));
    json allocs = json::array();
    for (int n : cfg.n_values) {
        tsadw::MetaheuristicConfig per_n = cfg.allocation;
        per_n.seed = tsadw::rng::mix({cfg.allocation.seed, 0x414c4c4fu, static_cast<std::uint64_t>(n)});
        double objective = 0.0;
        const auto alloc = tsadw::solve_allocation(graph, n, per_n, &objective);
        allocs.push_back(json::parse(tsadw::allocation_to_json(alloc, objective, per_n.seed)));
    }
    std::ofstream alloc_out(opt_dir / "allocation.json");
    alloc_out << allocs.dump(1) << "\n";

    json thetas = json::array();
    for (std::size_t i = 0; i < suite.blocks.size(); ++i) {
        const auto& block = suite.blocks[i];
        info("optimizing thresholds for " + block.spec.id);
        const auto outputs = tsadw::offline_block_outputs(block.net, block.spec.subset, train_norm,
                                                          suite.horizon_cycles);
        tsadw::MetaheuristicConfig theta_cfg = cfg.thresholds;
        theta_cfg.seed = tsadw::rng::mix({cfg.seeds.thresholds, 0x54485253u, static_cast<std::uint64_t>(i)});
        const auto schedule = tsadw::optimize_thresholds(outputs, labels, suite.horizon_cycles,
                                                         cfg.omega, theta_cfg, block.spec.id);
        thetas.push_back({{"block", block.spec.id}, {"seed", theta_cfg.seed}, {"theta", schedule.theta}});
    }
    std::ofstream theta_out(opt_dir / "thresholds.json");
    theta_out << thetas.dump(1) << "\n";

    write_manifest(args, cfg, "optimize",
                   json{{"allocation", (opt_dir / "allocation.json").string()},
                        {"thresholds", (opt_dir / "thresholds.json").string()}});
    info("optimization artifacts written to " + opt_dir.string());
    return kExitOk;
}

int cmd_bench(const CommonArgs& args, bool with_noise) {
    const auto cfg = load_config(args);
    const fs::path data_path = fs::path(args.out_dir) / "dataset.bin";
    const fs::path suite_dir = fs::path(args.out_dir) / "suite";
    require_artifact(data_path, "run gen-data first");
    require_artifact(suite_dir / "suite.json", "run train first");
    const fs::path bench_dir = fs::path(args.out_dir) / (with_noise ? "bench-noisy" : "bench");
    require_fresh(bench_dir / "report.json");
    fs::create_directories(bench_dir);

    const auto full = tsadw::load_dataset_binary(data_path.string());
    auto suite = tsadw::load_suite(suite_dir.string());
    if (args.phi >= 0.0) suite.phi = args.phi;

    auto [train_raw, test_raw] = tsadw::split_dataset(full, cfg.split_ratio, cfg.seeds.split);
    const auto report =
        tsadw::pipeline_bench(cfg, suite, test_raw, with_noise || cfg.bench.with_noise, info);

    tsadw::write_report_json(report, (bench_dir / "report.json").string());
    tsadw::write_rows_csv(report, (bench_dir / "rows.csv").string());
    tsadw::write_cdf_csv(tsadw::response_time_cdf(report.rows), (bench_dir / "cdf.csv").string());

    for (const auto& s : report.summaries) {
        char buf[256];
        std::snprintf(buf, sizeof buf, "%-16s acc %.4f  avg %.1f ms  best %.1f  worst %.1f  decided %.3f",
                      s.mechanism.c_str(), s.accuracy, s.avg_ms, s.best_ms, s.worst_ms,
                      s.decided_fraction);
        info(buf);
    }

    write_manifest(args, cfg, with_noise ? "bench-noisy" : "bench",
                   json{{"report", (bench_dir / "report.json").string()},
                        {"rows", (bench_dir / "rows.csv").string()},
                        {"cdf", (bench_dir / "cdf.csv").string()}});
    info("benchmark written to " + bench_dir.string());
    return kExitOk;
}

int cmd_export_curves(const std::string& report_path, const std::string& out_dir) {
    require_artifact(report_path, "run bench first");
    fs::create_directories(out_dir);
    const auto report = tsadw::load_report_json(report_path);
    const auto samples = tsadw::response_time_cdf(report.rows, 1.0);

    // one file per mechanism plus the combined table
    std::map<std::string, std::vector<tsadw::CdfSample>> per_mech;
    for (const auto& s : samples) per_mech[s.mechanism].push_back(s);
    for (const auto& [mech, rows] : per_mech) {
        const fs::path p = fs::path(out_dir) / ("cdf_" + mech + ".csv");
        require_fresh(p);
        tsadw::write_cdf_csv(rows, p.string());
    }
    const fs::path all = fs::path(out_dir) / "cdf_all.csv";
    require_fresh(all);
    tsadw::write_cdf_csv(samples, all.string());
    info("curves written to " + out_dir);
    return kExitOk;
}

// Small built-in property checks, runnable without any artifacts.
int cmd_selftest() {
    int failures = 0;
    auto report = [&](const std::string& name, bool ok) {
        std::cout << (ok ? "PASS" : "FAIL") << "  " << name << "\n";
        if (!ok) ++failures;
    };

    {  // window prefix property under random masks
        tsadw::rng::Stream stream(1);
        bool ok = true;
        for (int trial = 0; trial < 200 && ok; ++trial) {
            tsadw::MeasurementMatrix m(5, 8);
            for (int b = 0; b < 5; ++b)
                for (int t = 1; t <= 8; ++t)
                    if (stream.uniform01() < 0.7) m.set(b, t, 1.0, 0.1);
            const auto w = tsadw::build_input_window(m, 0.5);
            for (int t = 1; t <= w.cycles(); ++t) {
                const double f = m.known_fraction(t);
                if (!(f > 0.5 || f == 1.0)) ok = false;
            }
        }
        report("input window admits a contiguous gated prefix", ok);
    }
    {  // gradient check on a tiny network
        tsadw::NetworkConfig cfg;
        cfg.input_dim = 2;
        cfg.lstm_widths = {3, 3};
        cfg.dense_widths = {2};
        auto net = tsadw::LstmNetwork::init(cfg, 9);
        tsadw::rng::Stream stream(10);
        tsadw::InputWindow w;
        w.data.resize(2, 4);
        for (Eigen::Index i = 0; i < w.data.size(); ++i) w.data.data()[i] = stream.uniform(-1, 1);
        const std::vector<const tsadw::InputWindow*> batch{&w};
        const std::vector<int> labels{1};
        const auto [grad, loss] = tsadw::network_gradients(batch, labels, net,
                                                           tsadw::LossAttachment::final_step);
        (void)loss;
        auto params = net.flatten();
        bool ok = true;
        const double h = 1e-5;
        for (Eigen::Index i = 0; i < params.size(); i += 7) {  // sample coordinates
            Eigen::VectorXd p = params;
            p(i) += h;
            net.assign(p);
            const double up = tsadw::network_loss(batch, labels, net, tsadw::LossAttachment::final_step);
            p(i) = params(i) - h;
            net.assign(p);
            const double down = tsadw::network_loss(batch, labels, net, tsadw::LossAttachment::final_step);
            net.assign(params);
            const double fd = (up - down) / (2 * h);
            if (std::fabs(fd - grad(i)) / std::max({std::fabs(fd), std::fabs(grad(i)), 1e-6}) > 1e-4)
                ok = false;
        }
        report("analytic gradients match finite differences", ok);
    }
    {  // delay sampler statistics
        tsadw::DelayModel model;
        model.seed = 3;
        double sum = 0.0, min_v = 1e300;
        const int n = 100000;
        for (int i = 0; i < n; ++i) {
            const double d = tsadw::sample_delay(model, i % 100, i / 100);
            sum += d;
            min_v = std::min(min_v, d);
        }
        report("delay sampler mean and lower bound",
               std::fabs(sum / n - 50.0) < 0.5 && min_v >= model.shift_ms);
    }
    {  // noise cap
        tsadw::NoiseModel noise;
        noise.seed = 4;
        bool ok = true;
        for (int i = 0; i < 20000; ++i) {
            const auto [m, a] = tsadw::apply_noise(1.0, 0.3, noise, i, 1);
            if (std::abs(std::polar(m, a) - std::polar(1.0, 0.3)) > noise.tve_cap + 1e-12) ok = false;
        }
        report("measurement noise respects the TVE cap", ok);
    }
    {  // threshold map band structure
        bool ok = true;
        for (double y = 0.01; y < 1.0; y += 0.01) {
            for (double theta : {0.1, 0.3, 0.45}) {
                const auto z = tsadw::map_to_binary(y, theta);
                const bool reliable = z != tsadw::Verdict::unknown;
                if (reliable != (y < theta || y > 1.0 - theta)) ok = false;
            }
        }
        report("threshold map has the expected reliable bands", ok);
    }
    {  // decision machine smoke
        tsadw::DecisionMachine m;
        tsadw::BlockVerdict v;
        v.block_id = "e1";
        v.role = tsadw::BlockRole::secondary;
        v.label = 1;
        v.emitted_ms = 1;
        bool ok = !m.step(v).has_value();
        v.block_id = "e2";
        v.emitted_ms = 2;
        const auto fa = m.step(v);
        ok = ok && fa && fa->label == 1;
        report("decision machine concludes on two agreeing secondaries", ok);
    }

    std::cout << (failures == 0 ? "selftest: all checks passed\n"
                                : "selftest: " + std::to_string(failures) + " check(s) failed\n");
    return failures == 0 ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"delay-aware transient stability assessment pipeline"};
    app.require_subcommand(1);

    CommonArgs args;
    bool gen_text = false;
    bool bench_noise = false;
    std::string report_path;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", args.config_path, "pipeline config file")->required();
        cmd->add_option("--out", args.out_dir, "output/workspace directory")->required();
        cmd->add_option("--seed", args.seed, "override every stage seed")
            ->each([&args](const std::string&) { args.seed_set = true; });
        cmd->add_option("--phi", args.phi, "override the column admission threshold");
        cmd->add_option("--shift-ms", args.shift_ms, "override the delay shift (ms)");
        cmd->add_option("--jobs", args.jobs, "parallel case-level workers");
    };

    auto* gen = app.add_subcommand("gen-data", "simulate the labeled contingency corpus");
    add_common(gen);
    gen->add_flag("--text", gen_text, "also write the JSON-lines dataset");

    auto* train = app.add_subcommand("train", "split, allocate, train all blocks, fit thresholds");
    add_common(train);

    auto* optimize = app.add_subcommand("optimize", "recompute allocation and threshold artifacts");
    add_common(optimize);

    auto* bench = app.add_subcommand("bench", "run the delay-aware and synchronous benchmarks");
    add_common(bench);
    bench->add_flag("--noise", bench_noise, "perturb test measurements with the noise model");

    auto* curves = app.add_subcommand("export-curves", "emit response-time CDF curves from a report");
    curves->add_option("report", report_path, "benchmark report.json")->required();
    curves->add_option("--out", args.out_dir, "output directory")->required();

    auto* selftest = app.add_subcommand("selftest", "run built-in property checks");
    (void)selftest;

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(args, gen_text);
        if (train->parsed()) return cmd_train(args);
        if (optimize->parsed()) return cmd_optimize(args);
        if (bench->parsed()) return cmd_bench(args, bench_noise);
        if (curves->parsed()) return cmd_export_curves(report_path, args.out_dir);
        if (selftest->parsed()) return cmd_selftest();
    } catch (const tsadw::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const tsadw::VersionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const tsadw::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitConfig;
}

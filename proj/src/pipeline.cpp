#include "tsadw/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <numeric>

#include "tsadw/rng.hpp"

namespace tsadw {

namespace fs = std::filesystem;

PipelineConfig PipelineConfig::load(const std::string& path) {
    const auto cf = ConfigFile::parse_file(path);
    return from_config(cf, fs::path(path).parent_path().string());
}

PipelineConfig PipelineConfig::from_config(const ConfigFile& cf, const std::string& base_dir) {
    PipelineConfig p;

    std::string grid = cf.get_string("dataset", "grid");
    if (!grid.empty() && grid.front() != '/' && !base_dir.empty())
        grid = (fs::path(base_dir) / grid).string();
    p.grid_path = grid;

    p.datagen.load_levels_pct = cf.get_doubles("dataset", "load_levels");
    p.datagen.clearance_s = cf.get_double("dataset", "clearance_s", 0.2);
    p.datagen.horizon_s = cf.get_double("dataset", "horizon_s", 10.0);
    p.datagen.dt_s = cf.get_double("dataset", "dt_s", 1e-3);
    p.datagen.record_cycles = static_cast<int>(cf.get_int("dataset", "record_cycles", 60));
    p.datagen.both_fault_buses = cf.get_bool("dataset", "both_fault_buses", true);
    p.split_ratio = cf.get_double("dataset", "split_ratio", 0.75);

    p.phi = cf.get_double("suite", "phi", 0.5);
    p.horizon_cycles = static_cast<int>(cf.get_int("suite", "horizon_cycles", 30));
    if (cf.has("suite", "n_values")) p.n_values = cf.get_ints("suite", "n_values");
    if (cf.has("suite", "main_lstm")) p.layout.main_lstm = cf.get_ints("suite", "main_lstm");
    if (cf.has("suite", "main_dense")) p.layout.main_dense = cf.get_ints("suite", "main_dense");
    if (cf.has("suite", "ensemble_lstm")) p.layout.ensemble_lstm = cf.get_ints("suite", "ensemble_lstm");
    if (cf.has("suite", "ensemble_dense")) p.layout.ensemble_dense = cf.get_ints("suite", "ensemble_dense");

    auto fill_train = [&](TrainConfig& t, const std::string& epochs_key, int epochs_default) {
        t.epochs = static_cast<int>(cf.get_int("training", epochs_key, epochs_default));
        t.batch_size = static_cast<int>(cf.get_int("training", "batch", 32));
        t.adam.lr = cf.get_double("training", "lr", 1e-3);
        t.attachment = cf.get_string("training", "attachment", "final") == "mean"
                           ? LossAttachment::mean_steps
                           : LossAttachment::final_step;
        t.early_stop_delta = cf.get_double("training", "early_stop_delta", 1e-6);
        t.early_stop_patience = static_cast<int>(cf.get_int("training", "early_stop_patience", 20));
    };
    fill_train(p.train_main, "epochs", 200);
    fill_train(p.train_ensemble, "ensemble_epochs", 200);
    p.main_pad_augment = cf.get_bool("training", "main_pad_augment", false);

    auto fill_meta = [&](MetaheuristicConfig& m, const std::string& section) {
        m.population = static_cast<int>(cf.get_int(section, "population", 30));
        m.max_iterations = static_cast<int>(cf.get_int(section, "iterations", 2000));
        m.attenuation = cf.get_double(section, "attenuation", 1.0);
        m.change_prob = cf.get_double(section, "change_prob", 0.7);
        m.mask_prob = cf.get_double(section, "mask_prob", 0.1);
    };
    fill_meta(p.allocation, "allocation");
    fill_meta(p.thresholds, "thresholds");
    p.omega = cf.get_double("thresholds", "omega", 100.0);
    const std::string calib = cf.get_string("thresholds", "calibration", "none");
    if (calib == "none") p.calibration = PipelineConfig::Calibration::none;
    else if (calib == "holdout") p.calibration = PipelineConfig::Calibration::holdout;
    else if (calib == "shadow") p.calibration = PipelineConfig::Calibration::shadow;
    else throw ConfigError("thresholds.calibration must be none, holdout, or shadow");
    p.calibration_fraction = cf.get_double("thresholds", "calibration_fraction", 0.5);
    if (p.calibration_fraction <= 0.0 || p.calibration_fraction > 0.5) {
        if (p.calibration != PipelineConfig::Calibration::none)
            throw ConfigError("calibration_fraction must lie in (0, 0.5]");
    }

    const std::string kind = cf.get_string("delay", "kind", "shifted_gamma");
    p.delay.kind = kind == "constant" ? DelayModel::Kind::constant : DelayModel::Kind::shifted_gamma;
    p.delay.shape_k = cf.get_double("delay", "shape_k", 20.0);
    p.delay.scale_theta_ms = cf.get_double("delay", "scale_theta_ms", 2.0);
    p.delay.shift_ms = cf.get_double("delay", "shift_ms", 10.0);

    p.noise.sigma_pu = cf.get_double("noise", "sigma_pu", 0.004);
    p.noise.tve_cap = cf.get_double("noise", "tve_cap", 0.01);

    p.bench.repetitions = static_cast<int>(cf.get_int("benchmark", "repetitions", 1));
    p.bench.sync_cycles = static_cast<int>(cf.get_int("benchmark", "sync_cycles", 1));
    p.bench.with_noise = cf.get_bool("benchmark", "with_noise", false);
    if (cf.has("benchmark", "main_only_phis"))
        p.bench.main_only_phis = cf.get_doubles("benchmark", "main_only_phis");
    p.bench.run_ensembles_only = cf.get_bool("benchmark", "ensembles_only", true);
    p.bench.jobs = static_cast<int>(cf.get_int("benchmark", "jobs", 1));

    if (!cf.has_section("seeds")) throw ConfigError("config needs an explicit [seeds] section");
    p.seeds.data = cf.get_u64("seeds", "data");
    p.seeds.split = cf.get_u64("seeds", "split");
    p.seeds.train = cf.get_u64("seeds", "train");
    p.seeds.allocation = cf.get_u64("seeds", "allocation");
    p.seeds.thresholds = cf.get_u64("seeds", "thresholds");
    p.seeds.bench = cf.get_u64("seeds", "bench");

    p.allocation.seed = p.seeds.allocation;
    p.thresholds.seed = p.seeds.thresholds;
    p.train_main.seed = rng::mix({p.seeds.train, 0x4d41494eu});
    p.bench.seed = p.seeds.bench;

    if (p.horizon_cycles > p.datagen.record_cycles)
        throw ConfigError("suite horizon_cycles exceeds dataset record_cycles");
    return p;
}

Dataset pipeline_generate(const PipelineConfig& cfg, std::vector<DatagenSkip>* skips,
                          const ProgressFn& progress) {
    const GridModel grid = load_grid(cfg.grid_path);
    if (progress) progress("simulating contingencies on " + cfg.grid_path);
    Dataset ds = generate_dataset(grid, cfg.datagen, skips);
    if (progress) {
        int unstable = 0;
        for (const auto& c : ds.cases) unstable += c.label == 0;
        progress("generated " + std::to_string(ds.cases.size()) + " cases (" +
                 std::to_string(unstable) + " unstable)");
    }
    return ds;
}

TrainedPipeline pipeline_train(const PipelineConfig& cfg, const Dataset& full,
                               const ProgressFn& progress) {
    const GridModel grid = load_grid(cfg.grid_path);
    auto [train_raw, test_raw] = split_dataset(full, cfg.split_ratio, cfg.seeds.split);
    const NormalizationStats stats = *train_raw.stats;

    Dataset train_norm;
    train_norm.frame_hz = train_raw.frame_hz;
    train_norm.stats = stats;
    for (const auto& c : train_raw.cases) train_norm.cases.push_back(normalize_case(c, stats));

    std::vector<int> labels;
    for (const auto& c : train_norm.cases) labels.push_back(c.label);

    // Calibration split: schedules are fitted on `calib_idx` outputs.
    // With `none`, both index sets cover the whole training split.
    std::vector<std::size_t> fit_idx(train_norm.cases.size());
    std::iota(fit_idx.begin(), fit_idx.end(), 0);
    std::vector<std::size_t> calib_idx = fit_idx;
    if (cfg.calibration != PipelineConfig::Calibration::none) {
        rng::Stream shuffle(rng::mix({cfg.seeds.split, 0x43414c42u}));
        shuffle.shuffle(fit_idx);
        const auto n_calib = static_cast<std::size_t>(
            cfg.calibration_fraction * static_cast<double>(fit_idx.size()));
        calib_idx.assign(fit_idx.begin(), fit_idx.begin() + static_cast<long>(n_calib));
        fit_idx.erase(fit_idx.begin(), fit_idx.begin() + static_cast<long>(n_calib));
        std::sort(fit_idx.begin(), fit_idx.end());
        std::sort(calib_idx.begin(), calib_idx.end());
    }

    if (progress) progress("allocating PMU subsets");
    const ObservabilityGraph graph = ObservabilityGraph::from_grid(grid);
    const auto specs = build_ensemble_suite(graph, cfg.n_values, cfg.allocation, cfg.layout);

    std::vector<ContingencyCase> calib_cases;
    std::vector<int> calib_labels;
    for (std::size_t k : calib_idx) {
        calib_cases.push_back(train_norm.cases[k]);
        calib_labels.push_back(labels[k]);
    }

    TrainedPipeline out;
    out.suite.phi = cfg.phi;
    out.suite.frame_hz = full.frame_hz;
    out.suite.horizon_cycles = cfg.horizon_cycles;
    out.suite.stats = stats;

    // Zero-padded variant of a main-block window: each column independently
    // loses a random bus subset, echoing the phi-gated partial columns the
    // block sees online.
    auto padded_variant = [&cfg](const InputWindow& w, rng::Stream& stream) {
        InputWindow v = w;
        const int buses = static_cast<int>(w.buses.size());
        for (int t = 0; t < v.cycles(); ++t) {
            if (stream.uniform01() < 0.5) continue;  // keep many columns complete
            const double drop = stream.uniform(0.0, 1.0 - cfg.phi);
            for (int b = 0; b < buses; ++b) {
                if (stream.uniform01() < drop) {
                    v.data(2 * b, t) = 0.0;
                    v.data(2 * b + 1, t) = 0.0;
                }
            }
        }
        return v;
    };

    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& spec = specs[i];
        const bool is_main = spec.kind == BlockKind::main;

        std::vector<InputWindow> fit_windows;
        std::vector<int> fit_labels;
        fit_windows.reserve(fit_idx.size());
        for (std::size_t k : fit_idx) {
            fit_windows.push_back(
                offline_window(train_norm.cases[k].matrix, spec.subset, cfg.horizon_cycles));
            fit_labels.push_back(labels[k]);
        }
        if (is_main && cfg.main_pad_augment) {
            rng::Stream aug(rng::mix({cfg.seeds.train, 0x50414447u}));
            const std::size_t originals = fit_windows.size();
            for (std::size_t k = 0; k < originals; ++k) {
                fit_windows.push_back(padded_variant(fit_windows[k], aug));
                fit_labels.push_back(fit_labels[k]);
            }
        }

        TrainConfig tc = is_main ? cfg.train_main : cfg.train_ensemble;
        tc.seed = rng::mix({cfg.seeds.train, 0x424c4f43u, static_cast<std::uint64_t>(i)});

        if (progress)
            progress("training block " + spec.id + " (" + std::to_string(i + 1) + "/" +
                     std::to_string(specs.size()) + ")");

        // The network whose outputs feed the threshold fit: with shadow
        // calibration it is a throwaway trained on the fit half; the
        // deployed network then trains on the full split.
        LstmNetwork deployed;
        LstmNetwork* calib_net = nullptr;
        LstmNetwork shadow;
        if (cfg.calibration == PipelineConfig::Calibration::shadow) {
            TrainConfig shadow_tc = tc;
            shadow_tc.seed = rng::mix({tc.seed, 0x53484144u});
            shadow = train_block(fit_windows, fit_labels, spec.net, shadow_tc).net;
            calib_net = &shadow;

            std::vector<InputWindow> all_windows;
            std::vector<int> all_labels = labels;
            all_windows.reserve(train_norm.cases.size());
            for (const auto& c : train_norm.cases)
                all_windows.push_back(offline_window(c.matrix, spec.subset, cfg.horizon_cycles));
            if (is_main && cfg.main_pad_augment) {
                rng::Stream aug(rng::mix({cfg.seeds.train, 0x50414447u, 1u}));
                const std::size_t originals = all_windows.size();
                for (std::size_t k = 0; k < originals; ++k) {
                    all_windows.push_back(padded_variant(all_windows[k], aug));
                    all_labels.push_back(all_labels[k]);
                }
            }
            deployed = train_block(all_windows, all_labels, spec.net, tc).net;
        } else {
            deployed = train_block(fit_windows, fit_labels, spec.net, tc).net;
            calib_net = &deployed;
        }

        const auto outputs =
            offline_block_outputs(*calib_net, spec.subset, calib_cases, cfg.horizon_cycles);

        if (progress) {
            int correct_last = 0, correct_first = 0;
            for (std::size_t k = 0; k < outputs.size(); ++k) {
                correct_last += (outputs[k].back() > 0.5 ? 1 : 0) == calib_labels[k];
                correct_first += (outputs[k].front() > 0.5 ? 1 : 0) == calib_labels[k];
            }
            progress("  " + spec.id + " schedule-split acc: cycle1 " +
                     std::to_string(100 * correct_first / static_cast<int>(outputs.size())) +
                     "%, final " +
                     std::to_string(100 * correct_last / static_cast<int>(outputs.size())) + "%");
        }
        MetaheuristicConfig theta_cfg = cfg.thresholds;
        theta_cfg.seed = rng::mix({cfg.seeds.thresholds, 0x54485253u, static_cast<std::uint64_t>(i)});
        auto schedule = optimize_thresholds(outputs, calib_labels, cfg.horizon_cycles, cfg.omega,
                                            theta_cfg, spec.id);

        TrainedBlock block;
        block.spec = spec;
        block.net = std::move(deployed);
        block.thresholds = std::move(schedule);
        out.suite.blocks.push_back(std::move(block));
    }

    out.suite.validate();
    out.train_split = std::move(train_norm);
    out.test_split = std::move(test_raw);
    return out;
}

BenchmarkReport pipeline_bench(const PipelineConfig& cfg, const TrainedSuite& suite,
                               const Dataset& test_split, bool with_noise,
                               const ProgressFn& progress) {
    BenchmarkConfig bc = cfg.bench;
    bc.with_noise = with_noise;
    if (progress)
        progress("benchmarking " + std::to_string(test_split.cases.size()) + " test cases" +
                 (with_noise ? " with measurement noise" : ""));
    NoiseModel noise = cfg.noise;
    return benchmark_dataset(suite, test_split, cfg.delay, noise, bc);
}

}  // namespace tsadw

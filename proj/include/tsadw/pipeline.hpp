#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tsadw/config.hpp"
#include "tsadw/delay.hpp"
#include "tsadw/ensemble.hpp"
#include "tsadw/nn.hpp"
#include "tsadw/runtime.hpp"
#include "tsadw/swing.hpp"

namespace tsadw {

/// Everything one experiment needs, read from a single structured-text
/// file. Seeds must be explicit; there are no entropy defaults.
struct PipelineConfig {
    std::string grid_path;
    DatagenConfig datagen;
    double split_ratio = 0.75;

    double phi = 0.5;
    int horizon_cycles = 30;
    std::vector<int> n_values = {3, 4, 5, 6, 7};
    SuiteLayout layout;

    TrainConfig train_main;
    TrainConfig train_ensemble;
    // Train the main block on additional zero-padded variants of each
    // window, mimicking the partially received columns it sees online.
    bool main_pad_augment = false;

    MetaheuristicConfig allocation;
    MetaheuristicConfig thresholds;
    double omega = 100.0;
    // Threshold calibration. Schedules fitted on the same outputs the
    // networks memorized are overconfident, so two remedies exist:
    //   holdout — withhold `calibration_fraction` of the training split
    //             from network fitting and fit schedules on it;
    //   shadow  — train a throwaway shadow network per block on the
    //             complement, fit schedules on the shadow's outputs over
    //             the withheld cases, then deploy a network trained on the
    //             full split.
    enum class Calibration { none, holdout, shadow };
    Calibration calibration = Calibration::none;
    double calibration_fraction = 0.0;

    DelayModel delay;
    NoiseModel noise;

    BenchmarkConfig bench;

    struct Seeds {
        std::uint64_t data = 0;
        std::uint64_t split = 0;
        std::uint64_t train = 0;
        std::uint64_t allocation = 0;
        std::uint64_t thresholds = 0;
        std::uint64_t bench = 0;
    } seeds;

    /// Parses the file and applies the seeds to the stage configs.
    static PipelineConfig load(const std::string& path);
    static PipelineConfig from_config(const ConfigFile& cf, const std::string& base_dir);
};

using ProgressFn = std::function<void(const std::string&)>;

/// Offline stage 1: simulate the contingency corpus.
Dataset pipeline_generate(const PipelineConfig& cfg, std::vector<DatagenSkip>* skips = nullptr,
                          const ProgressFn& progress = {});

/// Offline stages 2-4: split, allocate PMU subsets, train every block and
/// optimize its threshold schedule. Returns the ready-to-run suite and the
/// untouched test split (raw, not normalized).
struct TrainedPipeline {
    TrainedSuite suite;
    Dataset train_split;  // normalized
    Dataset test_split;   // raw
    PmuAllocation last_allocation;
};

TrainedPipeline pipeline_train(const PipelineConfig& cfg, const Dataset& full,
                               const ProgressFn& progress = {});

/// Online stage: benchmark the suite over the test split.
BenchmarkReport pipeline_bench(const PipelineConfig& cfg, const TrainedSuite& suite,
                               const Dataset& test_split, bool with_noise,
                               const ProgressFn& progress = {});

}  // namespace tsadw

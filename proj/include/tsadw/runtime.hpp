#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tsadw/decision.hpp"
#include "tsadw/delay.hpp"
#include "tsadw/ensemble.hpp"
#include "tsadw/nn.hpp"
#include "tsadw/phasor.hpp"

namespace tsadw {

struct TrainedBlock {
    BlockSpec spec;
    LstmNetwork net;
    ThresholdSchedule thresholds;
};

/// Everything the online assessor needs: trained blocks (main block
/// first), the training-split normalization statistics, the column
/// admission parameter phi, and the clock configuration.
struct TrainedSuite {
    std::vector<TrainedBlock> blocks;
    NormalizationStats stats;
    double phi = 0.5;
    double frame_hz = 60.0;
    int horizon_cycles = 60;  // assessment window length in cycles

    double cycle_ms() const { return 1000.0 / frame_hz; }
    const TrainedBlock& main_block() const;
    void validate() const;
};

void save_suite(const TrainedSuite& suite, const std::string& dir);
TrainedSuite load_suite(const std::string& dir);

/// Offline full-matrix window for one block (all columns admitted, cut to
/// `max_cycles`). Case matrices must be normalized already.
InputWindow offline_window(const MeasurementMatrix& matrix, const std::vector<int>& subset,
                           int max_cycles);

/// Per-cycle offline outputs of one block over a set of normalized cases;
/// input to threshold optimization.
std::vector<std::vector<double>> offline_block_outputs(const LstmNetwork& net,
                                                       const std::vector<int>& subset,
                                                       const std::vector<ContingencyCase>& cases,
                                                       int horizon_cycles);

/// How verdicts are consolidated when replaying a case.
enum class Mechanism {
    delay_aware,     // full suite + decision machine
    synchronous,     // wait for the complete first D cycles, classify once
    main_only,       // first reliable main-block verdict decides
    ensembles_only,  // two agreeing live ensemble verdicts decide
};

std::string mechanism_name(Mechanism m, double phi);

/// Event-driven engine: writes arrivals into the partial matrix, re-infers
/// any block whose gated window grew, thresholds the new outputs and feeds
/// reliable verdicts to the consolidation strategy.
class OnlineAssessor {
public:
    OnlineAssessor(const TrainedSuite& suite, Mechanism mechanism, int bus_count);

    /// Returns the final assessment when this event terminates the run.
    std::optional<FinalAssessment> on_arrival(const ArrivalEvent& event);

    bool terminal() const { return final_.has_value(); }
    const std::optional<FinalAssessment>& result() const { return final_; }
    int inference_count() const { return inferences_; }
    const std::vector<BlockVerdict>& verdict_trace() const { return trace_; }
    int duplicate_arrivals() const { return duplicates_; }

private:
    const TrainedSuite* suite_;
    Mechanism mechanism_;
    MeasurementMatrix matrix_;  // holds normalized values
    DecisionMachine machine_;
    std::vector<int> last_window_len_;
    std::map<std::string, int> live_ensemble_labels_;  // ensembles_only mode
    std::optional<FinalAssessment> final_;
    std::vector<BlockVerdict> trace_;
    int inferences_ = 0;
    int duplicates_ = 0;

    std::optional<FinalAssessment> consume_verdict(const BlockVerdict& v);
};

struct AssessmentOutcome {
    std::string case_id;
    int label = 0;       // ground truth
    int predicted = -1;  // -1 when undecided
    bool decided = false;
    double response_ms = 0.0;
    DecisionRule rule = DecisionRule::none;
    int inferences = 0;
    std::vector<std::pair<std::string, int>> contributing_cycles;  // block id -> verdict cycle
    std::vector<BlockVerdict> verdicts;                            // full verdict trace
};

/// Replays the delayed (optionally noisy) arrival stream through the
/// assessor until a final assessment or event exhaustion.
AssessmentOutcome run_case_delay_aware(const TrainedSuite& suite, const ContingencyCase& raw_case,
                                       const DelayModel& delay,
                                       const std::optional<NoiseModel>& noise,
                                       Mechanism mechanism = Mechanism::delay_aware,
                                       std::optional<double> phi_override = std::nullopt);

/// Synchronous baseline: the verdict is computed from the complete first
/// `d_cycles` of system state, available once the slowest of those packets
/// is receivable.
AssessmentOutcome run_case_synchronous(const TrainedSuite& suite, const ContingencyCase& raw_case,
                                       const DelayModel& delay,
                                       const std::optional<NoiseModel>& noise, int d_cycles = 1);

struct BenchmarkConfig {
    int repetitions = 1;
    int sync_cycles = 1;
    std::uint64_t seed = 0;
    bool with_noise = false;
    std::vector<double> main_only_phis;  // one main-only mechanism per listed phi
    bool run_ensembles_only = false;
    int jobs = 1;
};

struct BenchmarkRow {
    std::string case_id;
    int label = 0;
    int predicted = -1;
    bool decided = false;
    std::string mechanism;
    double response_ms = 0.0;
    std::string rule;
    int repetition = 0;
};

struct MechanismSummary {
    std::string mechanism;
    int cases = 0;
    double accuracy = 0.0;
    double avg_ms = 0.0;
    double best_ms = 0.0;
    double worst_ms = 0.0;
    double decided_fraction = 0.0;
};

struct CdfSample {
    std::string mechanism;
    double response_ms = 0.0;
    double fraction_decided = 0.0;
};

struct BenchmarkReport {
    double cycle_ms = 0.0;
    std::vector<BenchmarkRow> rows;
    std::vector<MechanismSummary> summaries;

    const MechanismSummary* find(const std::string& mechanism) const;
};

/// Runs the delay-aware mechanism and the synchronous baseline (plus any
/// configured variants) over every test case and repetition. Per-case
/// delay and noise streams are derived from cfg.seed, identical across
/// mechanisms so the comparison uses common random numbers.
BenchmarkReport benchmark_dataset(const TrainedSuite& suite, const Dataset& test,
                                  const DelayModel& delay, const std::optional<NoiseModel>& noise,
                                  const BenchmarkConfig& cfg);

/// Recomputes per-mechanism aggregates from the rows.
std::vector<MechanismSummary> summarize_rows(const std::vector<BenchmarkRow>& rows);

/// Fraction-decided-vs-time samples at the given resolution per mechanism.
std::vector<CdfSample> response_time_cdf(const std::vector<BenchmarkRow>& rows,
                                         double resolution_ms = 1.0);

void write_report_json(const BenchmarkReport& report, const std::string& path);
BenchmarkReport load_report_json(const std::string& path);
void write_rows_csv(const BenchmarkReport& report, const std::string& path);
void write_cdf_csv(const std::vector<CdfSample>& samples, const std::string& path);

}  // namespace tsadw

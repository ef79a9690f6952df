#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tsadw/errors.hpp"
#include "tsadw/ssa.hpp"

namespace tsadw {

/// Ternary mapping of a fuzzy block output.
enum class Verdict { unstable = 0, stable = 1, unknown = 2 };

/// z = 1 iff y > 1 - theta, z = 0 iff y < theta, unknown otherwise
/// (boundary equalities fall in the unknown band). theta must lie in
/// (0, 0.5).
Verdict map_to_binary(double y, double theta);

/// Per-cycle thresholds for one block.
struct ThresholdSchedule {
    std::vector<double> theta;
    std::string block_id;

    int horizon() const { return static_cast<int>(theta.size()); }
    void validate() const;
};

struct ThresholdEvaluation {
    double accuracy = 0.0;     // A: fraction of cases whose first reliable verdict is correct
    double mean_cycles = 0.0;  // D: mean first-reliable cycle, T+1 when never reliable
    double objective = 0.0;    // (1 - A) * omega + D - 1
};

/// Evaluates a schedule against offline per-cycle block outputs.
/// outputs[c][t] is the block's value at cycle t+1 for case c.
ThresholdEvaluation evaluate_thresholds(const std::vector<std::vector<double>>& outputs,
                                        const std::vector<int>& labels,
                                        const ThresholdSchedule& schedule, double omega);

/// Searches (0, 0.5)^T for the schedule minimizing the evaluation
/// objective. The uniform 0.25 schedule seeds the population, so the
/// result is never worse than that baseline. Deterministic under cfg.seed.
ThresholdSchedule optimize_thresholds(const std::vector<std::vector<double>>& outputs,
                                      const std::vector<int>& labels, int horizon, double omega,
                                      const MetaheuristicConfig& cfg,
                                      const std::string& block_id = {});

enum class BlockRole { primary, secondary };

/// One reliable (non-unknown) thresholded output entering the decision
/// machine.
struct BlockVerdict {
    std::string block_id;
    BlockRole role = BlockRole::secondary;
    int label = 0;          // 0 or 1; unknown verdicts never reach the machine
    int cycle = 0;          // measurement cycle the output was produced for
    double emitted_ms = 0;  // simulation clock of the arrival that triggered it
};

/// Which consolidation rule produced the final assessment.
/// r1 (start), r5 (tied secondaries keep waiting) and r6 (overwrite)
/// never finalize on their own; they appear here for trace completeness.
enum class DecisionRule { none, r1, r2, r3, r4, r5, r6 };

std::string to_string(DecisionRule rule);

struct FinalAssessment {
    int label = 0;
    double decision_ms = 0.0;
    std::vector<std::string> contributing;  // block ids whose verdicts fed the firing rule
    DecisionRule rule = DecisionRule::none;
};

/// Rule-based consolidation of primary/secondary verdicts.
///
/// Each block keeps at most one live verdict (a new one overwrites).
/// A primary plus an agreeing secondary decides; a disagreement arms a
/// tiebreak in which the next secondary verdict decides regardless of
/// agreement; two or more live secondaries with a strict majority decide
/// before the primary arrives; tied secondaries wait.
class DecisionMachine {
public:
    /// Feeds one reliable verdict. Returns the final assessment when the
    /// machine terminates; verdicts after termination are ignored (and
    /// counted).
    std::optional<FinalAssessment> step(const BlockVerdict& verdict);

    bool terminal() const { return final_.has_value(); }
    const std::optional<FinalAssessment>& result() const { return final_; }
    int ignored_after_terminal() const { return ignored_; }

    /// One JSON object per machine event (verdict, final, ignored), for audit.
    std::string trace_jsonl() const;

private:
    struct Live {
        std::string block_id;
        int label = 0;
    };

    std::optional<int> primary_;
    std::string primary_block_;
    std::vector<Live> secondaries_;  // insertion-ordered live secondary verdicts
    bool pending_tiebreak_ = false;
    DecisionRule pending_rule_ = DecisionRule::none;
    std::vector<std::string> pending_contributors_;
    std::vector<std::string> consumed_;  // verdicts used up by a tiebreak request
    std::optional<FinalAssessment> final_;
    int ignored_ = 0;
    std::vector<std::string> trace_;

    Live* find_secondary(const std::string& id);
    std::optional<FinalAssessment> finalize(int label, double at_ms, DecisionRule rule,
                                            std::vector<std::string> contributing);
};

}  // namespace tsadw

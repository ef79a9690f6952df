#include "tsadw/decision.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tsadw {

Verdict map_to_binary(double y, double theta) {
    if (!(theta > 0.0 && theta < 0.5))
        throw ConfigError("threshold must lie in (0, 0.5), got " + std::to_string(theta));
    if (y > 1.0 - theta) return Verdict::stable;
    if (y < theta) return Verdict::unstable;
    return Verdict::unknown;
}

void ThresholdSchedule::validate() const {
    if (theta.empty()) throw ConfigError("threshold schedule is empty");
    for (double t : theta)
        if (!(t > 0.0 && t < 0.5))
            throw ConfigError("threshold " + std::to_string(t) + " outside (0, 0.5)");
}

ThresholdEvaluation evaluate_thresholds(const std::vector<std::vector<double>>& outputs,
                                        const std::vector<int>& labels,
                                        const ThresholdSchedule& schedule, double omega) {
    if (outputs.empty()) throw ShapeError("evaluate_thresholds on an empty case set");
    if (outputs.size() != labels.size()) throw ShapeError("outputs/labels size mismatch");
    if (!(omega > 0.0)) throw ConfigError("omega must be positive");
    schedule.validate();

    const int horizon = schedule.horizon();
    long long correct = 0;
    double cycle_sum = 0.0;
    for (std::size_t c = 0; c < outputs.size(); ++c) {
        const auto scan = std::min<std::size_t>(outputs[c].size(), static_cast<std::size_t>(horizon));
        int decided_cycle = horizon + 1;  // penalty when never reliable
        int decided_label = -1;
        for (std::size_t t = 0; t < scan; ++t) {
            const Verdict z = map_to_binary(outputs[c][t], schedule.theta[t]);
            if (z != Verdict::unknown) {
                decided_cycle = static_cast<int>(t) + 1;
                decided_label = static_cast<int>(z);
                break;
            }
        }
        if (decided_label == labels[c]) ++correct;
        cycle_sum += decided_cycle;
    }

    ThresholdEvaluation ev;
    ev.accuracy = static_cast<double>(correct) / static_cast<double>(outputs.size());
    ev.mean_cycles = cycle_sum / static_cast<double>(outputs.size());
    ev.objective = (1.0 - ev.accuracy) * omega + ev.mean_cycles - 1.0;
    return ev;
}

ThresholdSchedule optimize_thresholds(const std::vector<std::vector<double>>& outputs,
                                      const std::vector<int>& labels, int horizon, double omega,
                                      const MetaheuristicConfig& cfg, const std::string& block_id) {
    if (horizon < 1) throw ConfigError("threshold horizon must be >= 1");

    const double lo = 1e-4;
    const double hi = 0.5 - 1e-4;
    auto objective = [&](const Eigen::VectorXd& x) {
        ThresholdSchedule s;
        s.theta.assign(x.data(), x.data() + x.size());
        return evaluate_thresholds(outputs, labels, s, omega).objective;
    };

    const auto result = ssa::minimize(
        horizon, Eigen::VectorXd::Constant(horizon, lo), Eigen::VectorXd::Constant(horizon, hi),
        objective, cfg, {Eigen::VectorXd::Constant(horizon, 0.25)});

    ThresholdSchedule best;
    best.block_id = block_id;
    best.theta.assign(result.best.data(), result.best.data() + result.best.size());
    best.validate();
    return best;
}

std::string to_string(DecisionRule rule) {
    switch (rule) {
        case DecisionRule::none: return "none";
        case DecisionRule::r1: return "R1";
        case DecisionRule::r2: return "R2";
        case DecisionRule::r3: return "R3";
        case DecisionRule::r4: return "R4";
        case DecisionRule::r5: return "R5";
        case DecisionRule::r6: return "R6";
    }
    return "?";
}

DecisionMachine::Live* DecisionMachine::find_secondary(const std::string& id) {
    for (auto& s : secondaries_)
        if (s.block_id == id) return &s;
    return nullptr;
}

std::optional<FinalAssessment> DecisionMachine::finalize(int label, double at_ms, DecisionRule rule,
                                                         std::vector<std::string> contributing) {
    FinalAssessment fa;
    fa.label = label;
    fa.decision_ms = at_ms;
    fa.rule = rule;
    fa.contributing = std::move(contributing);
    final_ = fa;

    nlohmann::json j{{"event", "final"},
                     {"label", label},
                     {"t_ms", at_ms},
                     {"rule", to_string(rule)},
                     {"contributing", final_->contributing}};
    trace_.push_back(j.dump());
    return final_;
}

std::optional<FinalAssessment> DecisionMachine::step(const BlockVerdict& v) {
    if (v.label != 0 && v.label != 1)
        throw ConfigError("decision machine fed a non-reliable verdict");

    if (final_) {
        ++ignored_;
        nlohmann::json j{{"event", "ignored"}, {"block", v.block_id}, {"label", v.label}, {"t_ms", v.emitted_ms}};
        trace_.push_back(j.dump());
        return std::nullopt;
    }

    nlohmann::json j{{"event", "verdict"},
                     {"block", v.block_id},
                     {"role", v.role == BlockRole::primary ? "primary" : "secondary"},
                     {"label", v.label},
                     {"cycle", v.cycle},
                     {"t_ms", v.emitted_ms}};
    trace_.push_back(j.dump());

    // A new verdict replaces the block's live one before rules re-evaluate.
    if (v.role == BlockRole::primary) {
        primary_ = v.label;
        primary_block_ = v.block_id;
    } else if (Live* live = find_secondary(v.block_id)) {
        live->label = v.label;
    } else {
        secondaries_.push_back({v.block_id, v.label});
    }

    if (v.role == BlockRole::secondary) {
        // An armed tiebreak consumes the next secondary arrival outright.
        if (pending_tiebreak_) {
            auto contributing = pending_contributors_;
            contributing.push_back(v.block_id);
            return finalize(v.label, v.emitted_ms, pending_rule_, std::move(contributing));
        }
        if (primary_) {
            if (*primary_ == v.label)
                return finalize(v.label, v.emitted_ms, DecisionRule::r2, {primary_block_, v.block_id});
            pending_tiebreak_ = true;
            pending_rule_ = DecisionRule::r2;
            pending_contributors_ = {primary_block_, v.block_id};
            consumed_.push_back(v.block_id);
            return std::nullopt;
        }
        // no primary yet: strict majority among >= 2 live secondaries decides
        if (secondaries_.size() >= 2) {
            int stable = 0, unstable = 0;
            for (const auto& s : secondaries_) (s.label ? stable : unstable)++;
            if (stable != unstable) {
                const int winner = stable > unstable ? 1 : 0;
                std::vector<std::string> contributing;
                for (const auto& s : secondaries_)
                    if (s.label == winner) contributing.push_back(s.block_id);
                return finalize(winner, v.emitted_ms, DecisionRule::r4, std::move(contributing));
            }
        }
        return std::nullopt;  // single live verdict, or tied counts: keep waiting
    }

    // Primary arrival. An armed tiebreak still waits for a secondary.
    if (pending_tiebreak_) return std::nullopt;

    if (secondaries_.empty()) return std::nullopt;  // wait for a confirming secondary

    if (secondaries_.size() == 1) {
        const auto& s = secondaries_.front();
        if (s.label == v.label)
            return finalize(v.label, v.emitted_ms, DecisionRule::r3, {v.block_id, s.block_id});
        pending_tiebreak_ = true;
        pending_rule_ = DecisionRule::r3;
        pending_contributors_ = {v.block_id, s.block_id};
        consumed_.push_back(s.block_id);
        return std::nullopt;
    }

    // Two or more live secondaries at primary arrival are tied (a strict
    // majority would have already terminated the machine). The primary
    // agrees with one side of the tie, which supplies the confirming
    // secondary result.
    int stable = 0, unstable = 0;
    for (const auto& s : secondaries_) (s.label ? stable : unstable)++;
    if (stable != unstable) {
        const int winner = stable > unstable ? 1 : 0;
        std::vector<std::string> contributing{v.block_id};
        for (const auto& s : secondaries_)
            if (s.label == winner) contributing.push_back(s.block_id);
        return finalize(winner, v.emitted_ms, DecisionRule::r4, std::move(contributing));
    }
    std::vector<std::string> contributing{v.block_id};
    for (const auto& s : secondaries_)
        if (s.label == v.label) contributing.push_back(s.block_id);
    return finalize(v.label, v.emitted_ms, DecisionRule::r3, std::move(contributing));
}

std::string DecisionMachine::trace_jsonl() const {
    std::ostringstream out;
    for (const auto& line : trace_) out << line << "\n";
    return out.str();
}

}  // namespace tsadw

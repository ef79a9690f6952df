#include "tsadw/runtime.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include "tsadw/rng.hpp"

namespace tsadw {

using nlohmann::json;
namespace fs = std::filesystem;

const TrainedBlock& TrainedSuite::main_block() const {
    for (const auto& b : blocks)
        if (b.spec.kind == BlockKind::main) return b;
    throw ConfigError("suite has no main block");
}

void TrainedSuite::validate() const {
    if (blocks.empty()) throw ConfigError("suite has no blocks");
    if (blocks.front().spec.kind != BlockKind::main)
        throw ConfigError("suite blocks must start with the main block");
    if (!(phi >= 0.0 && phi <= 1.0)) throw ConfigError("phi must lie in [0,1]");
    if (!stats.valid()) throw ConfigError("suite normalization stats invalid");
    for (const auto& b : blocks) {
        b.spec.validate();
        b.thresholds.validate();
        if (b.thresholds.horizon() != horizon_cycles)
            throw ConfigError("block " + b.spec.id + " schedule horizon " +
                              std::to_string(b.thresholds.horizon()) + " != suite horizon " +
                              std::to_string(horizon_cycles));
    }
}

InputWindow offline_window(const MeasurementMatrix& matrix, const std::vector<int>& subset,
                           int max_cycles) {
    std::optional<std::vector<int>> sub;
    if (!subset.empty()) sub = subset;
    InputWindow w = build_input_window(matrix, 0.0, sub);
    if (w.cycles() > max_cycles) {
        w.data = w.data.leftCols(max_cycles).eval();
    }
    return w;
}

std::vector<std::vector<double>> offline_block_outputs(const LstmNetwork& net,
                                                       const std::vector<int>& subset,
                                                       const std::vector<ContingencyCase>& cases,
                                                       int horizon_cycles) {
    std::vector<std::vector<double>> out;
    out.reserve(cases.size());
    for (const auto& c : cases) {
        out.push_back(net.forward_sequence(offline_window(c.matrix, subset, horizon_cycles)));
    }
    return out;
}

std::string mechanism_name(Mechanism m, double phi) {
    switch (m) {
        case Mechanism::delay_aware: return "delay_aware";
        case Mechanism::synchronous: return "synchronous";
        case Mechanism::ensembles_only: return "ensembles_only";
        case Mechanism::main_only: {
            char buf[32];
            std::snprintf(buf, sizeof buf, "main_phi%.2f", phi);
            return buf;
        }
    }
    return "?";
}

OnlineAssessor::OnlineAssessor(const TrainedSuite& suite, Mechanism mechanism, int bus_count)
    : suite_(&suite),
      mechanism_(mechanism),
      matrix_(bus_count, suite.horizon_cycles),
      last_window_len_(suite.blocks.size(), 0) {}

std::optional<FinalAssessment> OnlineAssessor::consume_verdict(const BlockVerdict& v) {
    switch (mechanism_) {
        case Mechanism::delay_aware:
            return machine_.step(v);
        case Mechanism::main_only:
            // single-block degenerate machine: the first reliable result is final
            return FinalAssessment{v.label, v.emitted_ms, {v.block_id}, DecisionRule::r1};
        case Mechanism::ensembles_only: {
            live_ensemble_labels_[v.block_id] = v.label;
            int agree = 0;
            std::vector<std::string> contributing;
            for (const auto& [id, label] : live_ensemble_labels_) {
                if (label == v.label) {
                    ++agree;
                    contributing.push_back(id);
                }
            }
            if (agree >= 2)
                return FinalAssessment{v.label, v.emitted_ms, std::move(contributing), DecisionRule::r4};
            return std::nullopt;
        }
        case Mechanism::synchronous:
            throw ConfigError("the synchronous baseline does not replay arrival events");
    }
    return std::nullopt;
}

std::optional<FinalAssessment> OnlineAssessor::on_arrival(const ArrivalEvent& e) {
    if (final_) return std::nullopt;  // terminal absorption

    const auto& stats = suite_->stats;
    const double nm = (e.magnitude - stats.mag_mean(e.pmu)) / stats.mag_std(e.pmu);
    const double na = (e.angle - stats.ang_mean(e.pmu)) / stats.ang_std(e.pmu);
    if (!matrix_.set(e.pmu, e.cycle, nm, na)) {
        ++duplicates_;  // first write wins
        return std::nullopt;
    }

    for (std::size_t i = 0; i < suite_->blocks.size(); ++i) {
        const auto& block = suite_->blocks[i];
        const bool is_main = block.spec.kind == BlockKind::main;
        if (mechanism_ == Mechanism::main_only && !is_main) continue;
        if (mechanism_ == Mechanism::ensembles_only && is_main) continue;

        std::optional<std::vector<int>> subset;
        if (!is_main) subset = block.spec.subset;
        const InputWindow window = build_input_window(matrix_, suite_->phi, subset);
        const int len = window.cycles();

        // A block re-infers whenever this packet changed its input: the
        // gated window grew, or (main block only) the packet back-filled a
        // padded entry inside the already-admitted prefix. Ensemble columns
        // are complete by construction and never change.
        const int prev_len = last_window_len_[i];
        const bool grew = len > prev_len;
        const bool backfilled = is_main && !grew && len >= 1 && e.cycle <= len;
        if (!grew && !backfilled) continue;

        last_window_len_[i] = len;
        ++inferences_;
        const std::vector<double> ys = block.net.forward_sequence(window);

        // one result per changed input: the newly admitted cycles, or the
        // newest cycle refreshed with the back-filled measurement
        const int first_t = grew ? prev_len + 1 : len;
        for (int t = first_t; t <= len; ++t) {
            if (t > block.thresholds.horizon()) break;
            const Verdict z = map_to_binary(ys[static_cast<std::size_t>(t) - 1],
                                            block.thresholds.theta[static_cast<std::size_t>(t) - 1]);
            if (z == Verdict::unknown) continue;

            BlockVerdict v;
            v.block_id = block.spec.id;
            v.role = is_main ? BlockRole::primary : BlockRole::secondary;
            v.label = static_cast<int>(z);
            v.cycle = t;
            v.emitted_ms = e.arrival_ms;
            trace_.push_back(v);

            if (auto fa = consume_verdict(v)) {
                final_ = fa;
                return final_;
            }
        }
    }
    return std::nullopt;
}

namespace {

AssessmentOutcome outcome_from_assessor(const OnlineAssessor& assessor, const ContingencyCase& c,
                                        double last_arrival_ms) {
    AssessmentOutcome out;
    out.case_id = c.id;
    out.label = c.label;
    out.inferences = assessor.inference_count();
    out.verdicts = assessor.verdict_trace();

    if (assessor.result()) {
        const auto& fa = *assessor.result();
        out.decided = true;
        out.predicted = fa.label;
        out.response_ms = fa.decision_ms;
        out.rule = fa.rule;
        for (const auto& id : fa.contributing) {
            int cycle = 0;
            for (auto it = out.verdicts.rbegin(); it != out.verdicts.rend(); ++it) {
                if (it->block_id == id && it->emitted_ms <= fa.decision_ms + 1e-12) {
                    cycle = it->cycle;
                    break;
                }
            }
            out.contributing_cycles.emplace_back(id, cycle);
        }
    } else {
        out.decided = false;
        out.predicted = -1;
        out.response_ms = last_arrival_ms;
        out.rule = DecisionRule::none;
    }
    return out;
}

}  // namespace

AssessmentOutcome run_case_delay_aware(const TrainedSuite& suite, const ContingencyCase& raw_case,
                                       const DelayModel& delay,
                                       const std::optional<NoiseModel>& noise, Mechanism mechanism,
                                       std::optional<double> phi_override) {
    const int horizon = std::min(suite.horizon_cycles, raw_case.matrix.cycle_count());
    const auto events = schedule_arrivals(raw_case, delay, noise, horizon, suite.cycle_ms());

    const TrainedSuite* active = &suite;
    std::optional<TrainedSuite> local;  // copy only when phi actually changes
    if (phi_override && *phi_override != suite.phi) {
        local = suite;
        local->phi = *phi_override;
        active = &*local;
    }

    OnlineAssessor assessor(*active, mechanism, raw_case.matrix.bus_count());
    for (const auto& e : events) {
        if (assessor.on_arrival(e)) break;
    }
    return outcome_from_assessor(assessor, raw_case,
                                 events.empty() ? 0.0 : events.back().arrival_ms);
}

AssessmentOutcome run_case_synchronous(const TrainedSuite& suite, const ContingencyCase& raw_case,
                                       const DelayModel& delay,
                                       const std::optional<NoiseModel>& noise, int d_cycles) {
    const auto& main = suite.main_block();
    const int b = raw_case.matrix.bus_count();
    const double cycle_ms = suite.cycle_ms();
    const int d = std::min(d_cycles, raw_case.matrix.cycle_count());

    // the complete first d cycles are receivable once the slowest packet is in
    double response = 0.0;
    for (int p = 0; p < b; ++p)
        for (int t = 1; t <= d; ++t)
            response = std::max(response, t * cycle_ms + sample_delay(delay, p, t));

    Eigen::MatrixXd mag(b, d), ang(b, d);
    for (int p = 0; p < b; ++p) {
        for (int t = 1; t <= d; ++t) {
            double m = raw_case.matrix.magnitude(p, t);
            double a = raw_case.matrix.angle(p, t);
            if (noise) std::tie(m, a) = apply_noise(m, a, *noise, p, t);
            mag(p, t - 1) = (m - suite.stats.mag_mean(p)) / suite.stats.mag_std(p);
            ang(p, t - 1) = (a - suite.stats.ang_mean(p)) / suite.stats.ang_std(p);
        }
    }
    const InputWindow window = offline_window(MeasurementMatrix::full(mag, ang), {}, d);

    AssessmentOutcome out;
    out.case_id = raw_case.id;
    out.label = raw_case.label;
    out.decided = true;
    out.predicted = main.net.forward_final(window) > 0.5 ? 1 : 0;
    out.response_ms = response;
    out.rule = DecisionRule::none;
    out.inferences = 1;
    return out;
}

namespace {

BenchmarkRow row_from_outcome(const AssessmentOutcome& o, const std::string& mechanism, int rep) {
    BenchmarkRow r;
    r.case_id = o.case_id;
    r.label = o.label;
    r.predicted = o.predicted;
    r.decided = o.decided;
    r.mechanism = mechanism;
    r.response_ms = o.response_ms;
    r.rule = o.decided ? to_string(o.rule) : "undecided";
    r.repetition = rep;
    return r;
}

}  // namespace

BenchmarkReport benchmark_dataset(const TrainedSuite& suite, const Dataset& test,
                                  const DelayModel& delay, const std::optional<NoiseModel>& noise,
                                  const BenchmarkConfig& cfg) {
    if (test.cases.empty()) throw ShapeError("benchmark on an empty test set");
    suite.validate();

    struct Task {
        std::size_t case_idx;
        int rep;
    };
    std::vector<Task> tasks;
    for (int rep = 0; rep < cfg.repetitions; ++rep)
        for (std::size_t i = 0; i < test.cases.size(); ++i) tasks.push_back({i, rep});

    const int mechs_per_task = 2 + static_cast<int>(cfg.main_only_phis.size()) +
                               (cfg.run_ensembles_only ? 1 : 0);
    std::vector<BenchmarkRow> rows(tasks.size() * static_cast<std::size_t>(mechs_per_task));

    // phi-override suites are prepared once; they share trained weights
    std::vector<TrainedSuite> phi_suites;
    for (double phi : cfg.main_only_phis) {
        TrainedSuite s = suite;
        s.phi = phi;
        phi_suites.push_back(std::move(s));
    }

    auto run_task = [&](std::size_t task_idx) {
        const auto& [case_idx, rep] = tasks[task_idx];
        const auto& c = test.cases[case_idx];

        const DelayModel case_delay = delay.with_seed(
            rng::mix({cfg.seed, 0x44454c59u, static_cast<std::uint64_t>(case_idx),
                      static_cast<std::uint64_t>(rep)}));
        std::optional<NoiseModel> case_noise;
        if (cfg.with_noise && noise) {
            case_noise = *noise;
            case_noise->seed = rng::mix({cfg.seed, 0x4e4f4959u, static_cast<std::uint64_t>(case_idx),
                                         static_cast<std::uint64_t>(rep)});
        }

        std::size_t at = task_idx * static_cast<std::size_t>(mechs_per_task);
        rows[at++] = row_from_outcome(
            run_case_delay_aware(suite, c, case_delay, case_noise, Mechanism::delay_aware),
            mechanism_name(Mechanism::delay_aware, suite.phi), rep);
        rows[at++] = row_from_outcome(
            run_case_synchronous(suite, c, case_delay, case_noise, cfg.sync_cycles),
            mechanism_name(Mechanism::synchronous, 0.0), rep);
        for (std::size_t k = 0; k < phi_suites.size(); ++k) {
            rows[at++] = row_from_outcome(
                run_case_delay_aware(phi_suites[k], c, case_delay, case_noise, Mechanism::main_only),
                mechanism_name(Mechanism::main_only, cfg.main_only_phis[k]), rep);
        }
        if (cfg.run_ensembles_only) {
            rows[at++] = row_from_outcome(
                run_case_delay_aware(suite, c, case_delay, case_noise, Mechanism::ensembles_only),
                mechanism_name(Mechanism::ensembles_only, 0.0), rep);
        }
    };

    const int jobs = std::max(1, cfg.jobs);
    if (jobs == 1) {
        for (std::size_t i = 0; i < tasks.size(); ++i) run_task(i);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < jobs; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t i = static_cast<std::size_t>(w); i < tasks.size(); i += static_cast<std::size_t>(jobs))
                    run_task(i);
            });
        }
        for (auto& th : pool) th.join();
    }

    BenchmarkReport report;
    report.cycle_ms = suite.cycle_ms();
    report.rows = std::move(rows);
    report.summaries = summarize_rows(report.rows);
    return report;
}

std::vector<MechanismSummary> summarize_rows(const std::vector<BenchmarkRow>& rows) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<const BenchmarkRow*>> groups;
    for (const auto& r : rows) {
        if (!groups.count(r.mechanism)) order.push_back(r.mechanism);
        groups[r.mechanism].push_back(&r);
    }

    std::vector<MechanismSummary> out;
    for (const auto& mech : order) {
        const auto& g = groups[mech];
        MechanismSummary s;
        s.mechanism = mech;
        s.cases = static_cast<int>(g.size());
        int correct = 0, decided = 0;
        double sum = 0.0, best = std::numeric_limits<double>::infinity(), worst = 0.0;
        for (const auto* r : g) {
            if (r->decided && r->predicted == r->label) ++correct;
            if (r->decided) ++decided;
            sum += r->response_ms;
            best = std::min(best, r->response_ms);
            worst = std::max(worst, r->response_ms);
        }
        s.accuracy = static_cast<double>(correct) / static_cast<double>(g.size());
        s.avg_ms = sum / static_cast<double>(g.size());
        s.best_ms = best;
        s.worst_ms = worst;
        s.decided_fraction = static_cast<double>(decided) / static_cast<double>(g.size());
        out.push_back(s);
    }
    return out;
}

const MechanismSummary* BenchmarkReport::find(const std::string& mechanism) const {
    for (const auto& s : summaries)
        if (s.mechanism == mechanism) return &s;
    return nullptr;
}

std::vector<CdfSample> response_time_cdf(const std::vector<BenchmarkRow>& rows,
                                         double resolution_ms) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<double>> decided_times;
    std::map<std::string, int> totals;
    for (const auto& r : rows) {
        if (!totals.count(r.mechanism)) order.push_back(r.mechanism);
        ++totals[r.mechanism];
        if (r.decided) decided_times[r.mechanism].push_back(r.response_ms);
    }

    std::vector<CdfSample> samples;
    for (const auto& mech : order) {
        auto& times = decided_times[mech];
        std::sort(times.begin(), times.end());
        const double total = totals[mech];
        const double max_t = times.empty() ? 0.0 : times.back();
        const auto steps = static_cast<long long>(std::ceil(max_t / resolution_ms));
        std::size_t idx = 0;
        for (long long k = 0; k <= steps; ++k) {
            const double t = static_cast<double>(k) * resolution_ms;
            while (idx < times.size() && times[idx] <= t) ++idx;
            samples.push_back({mech, t, static_cast<double>(idx) / total});
        }
        // terminal sample at the exact worst decided time
        if (!times.empty())
            samples.push_back({mech, max_t, static_cast<double>(times.size()) / total});
    }
    return samples;
}

void write_report_json(const BenchmarkReport& report, const std::string& path) {
    json j;
    j["format"] = "tsadw-benchmark";
    j["version"] = 1;
    j["cycle_ms"] = report.cycle_ms;
    j["rows"] = json::array();
    for (const auto& r : report.rows) {
        j["rows"].push_back({{"case_id", r.case_id},
                             {"label", r.label},
                             {"predicted", r.predicted},
                             {"decided", r.decided},
                             {"mechanism", r.mechanism},
                             {"response_ms", r.response_ms},
                             {"rule", r.rule},
                             {"repetition", r.repetition}});
    }
    j["summaries"] = json::array();
    for (const auto& s : report.summaries) {
        j["summaries"].push_back({{"mechanism", s.mechanism},
                                  {"cases", s.cases},
                                  {"accuracy", s.accuracy},
                                  {"avg_ms", s.avg_ms},
                                  {"best_ms", s.best_ms},
                                  {"worst_ms", s.worst_ms},
                                  {"decided_fraction", s.decided_fraction}});
    }
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open " + path + " for writing");
    out << j.dump(1) << "\n";
}

BenchmarkReport load_report_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    if (j.value("format", "") != "tsadw-benchmark")
        throw ParseError(path + ": not a benchmark report");
    if (j.value("version", -1) != 1) throw VersionError(path + ": unsupported report version");

    BenchmarkReport report;
    report.cycle_ms = j.at("cycle_ms").get<double>();
    for (const auto& r : j.at("rows")) {
        BenchmarkRow row;
        row.case_id = r.at("case_id").get<std::string>();
        row.label = r.at("label").get<int>();
        row.predicted = r.at("predicted").get<int>();
        row.decided = r.at("decided").get<bool>();
        row.mechanism = r.at("mechanism").get<std::string>();
        row.response_ms = r.at("response_ms").get<double>();
        row.rule = r.at("rule").get<std::string>();
        row.repetition = r.at("repetition").get<int>();
        report.rows.push_back(std::move(row));
    }
    report.summaries = summarize_rows(report.rows);
    return report;
}

void write_rows_csv(const BenchmarkReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open " + path + " for writing");
    out << "case_id,label,verdict,mechanism,response_ms,rule,repetition\n";
    char buf[64];
    for (const auto& r : report.rows) {
        std::snprintf(buf, sizeof buf, "%.6f", r.response_ms);
        out << r.case_id << ',' << r.label << ','
            << (r.decided ? std::to_string(r.predicted) : "undecided") << ',' << r.mechanism << ','
            << buf << ',' << r.rule << ',' << r.repetition << "\n";
    }
}

void write_cdf_csv(const std::vector<CdfSample>& samples, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open " + path + " for writing");
    out << "mechanism,response_ms,fraction_decided\n";
    char buf[96];
    for (const auto& s : samples) {
        std::snprintf(buf, sizeof buf, "%s,%.6f,%.9f\n", s.mechanism.c_str(), s.response_ms,
                      s.fraction_decided);
        out << buf;
    }
}

namespace {

json stats_json(const NormalizationStats& s) {
    auto vec = [](const Eigen::VectorXd& v) {
        return std::vector<double>(v.data(), v.data() + v.size());
    };
    return json{{"mag_mean", vec(s.mag_mean)},
                {"mag_std", vec(s.mag_std)},
                {"ang_mean", vec(s.ang_mean)},
                {"ang_std", vec(s.ang_std)}};
}

NormalizationStats stats_from(const json& j) {
    auto vec = [](const json& a) {
        Eigen::VectorXd v(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
        return v;
    };
    NormalizationStats s;
    s.mag_mean = vec(j.at("mag_mean"));
    s.mag_std = vec(j.at("mag_std"));
    s.ang_mean = vec(j.at("ang_mean"));
    s.ang_std = vec(j.at("ang_std"));
    return s;
}

}  // namespace

void save_suite(const TrainedSuite& suite, const std::string& dir) {
    suite.validate();
    fs::create_directories(fs::path(dir) / "blocks");

    json j;
    j["format"] = "tsadw-suite";
    j["version"] = 1;
    j["phi"] = suite.phi;
    j["frame_hz"] = suite.frame_hz;
    j["horizon_cycles"] = suite.horizon_cycles;
    j["stats"] = stats_json(suite.stats);
    j["blocks"] = json::array();

    for (const auto& b : suite.blocks) {
        const std::string ckpt = "blocks/" + b.spec.id + ".tsann";
        save_network(b.net, (fs::path(dir) / ckpt).string());
        write_network_manifest(b.net, (fs::path(dir) / ("blocks/" + b.spec.id + ".json")).string(),
                               json{{"block_id", b.spec.id}}.dump());
        j["blocks"].push_back({{"id", b.spec.id},
                               {"kind", b.spec.kind == BlockKind::main ? "main" : "ensemble"},
                               {"subset", b.spec.subset},
                               {"checkpoint", ckpt},
                               {"thresholds", b.thresholds.theta}});
    }
    std::ofstream out(fs::path(dir) / "suite.json");
    if (!out) throw ParseError("cannot write suite manifest in " + dir);
    out << j.dump(1) << "\n";
}

TrainedSuite load_suite(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "suite.json");
    if (!in) throw ParseError("cannot open " + dir + "/suite.json");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(dir + "/suite.json: " + e.what());
    }
    if (j.value("format", "") != "tsadw-suite") throw ParseError(dir + ": not a suite manifest");
    if (j.value("version", -1) != 1) throw VersionError(dir + ": unsupported suite version");

    TrainedSuite suite;
    suite.phi = j.at("phi").get<double>();
    suite.frame_hz = j.at("frame_hz").get<double>();
    suite.horizon_cycles = j.at("horizon_cycles").get<int>();
    suite.stats = stats_from(j.at("stats"));

    for (const auto& bj : j.at("blocks")) {
        TrainedBlock b;
        b.spec.id = bj.at("id").get<std::string>();
        b.spec.kind = bj.at("kind").get<std::string>() == "main" ? BlockKind::main : BlockKind::ensemble;
        b.spec.subset = bj.at("subset").get<std::vector<int>>();
        b.net = load_network((fs::path(dir) / bj.at("checkpoint").get<std::string>()).string());
        b.spec.net = b.net.config();
        b.thresholds.theta = bj.at("thresholds").get<std::vector<double>>();
        b.thresholds.block_id = b.spec.id;
        suite.blocks.push_back(std::move(b));
    }
    suite.validate();
    return suite;
}

}  // namespace tsadw

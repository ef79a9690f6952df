#include <doctest.h>

#include <filesystem>

#include "oracles.hpp"
#include "tsadw/runtime.hpp"

using namespace tsadw;

namespace {

NormalizationStats identity_stats(int buses) {
    NormalizationStats s;
    s.mag_mean = Eigen::VectorXd::Zero(buses);
    s.ang_mean = Eigen::VectorXd::Zero(buses);
    s.mag_std = Eigen::VectorXd::Ones(buses);
    s.ang_std = Eigen::VectorXd::Ones(buses);
    return s;
}

ThresholdSchedule uniform_schedule(const std::string& id, int horizon, double theta) {
    ThresholdSchedule s;
    s.block_id = id;
    s.theta.assign(static_cast<std::size_t>(horizon), theta);
    return s;
}

/// Untrained suite with deterministic random weights: one main block and
/// two ensemble blocks splitting the buses.
TrainedSuite tiny_suite(int buses, int horizon, std::uint64_t seed, double theta = 0.45,
                        double phi = 0.5) {
    TrainedSuite suite;
    suite.phi = phi;
    suite.frame_hz = 60.0;
    suite.horizon_cycles = horizon;
    suite.stats = identity_stats(buses);

    TrainedBlock main;
    main.spec.kind = BlockKind::main;
    main.spec.id = "main";
    main.spec.net.input_dim = 2 * buses;
    main.spec.net.lstm_widths = {4, 4, 4, 4};
    main.spec.net.dense_widths = {3, 2};
    main.net = LstmNetwork::init(main.spec.net, seed);
    main.thresholds = uniform_schedule("main", horizon, theta);
    suite.blocks.push_back(std::move(main));

    std::vector<int> first, second;
    for (int b = 0; b < buses; ++b) (b < (buses + 1) / 2 ? first : second).push_back(b);
    int idx = 0;
    for (const auto& subset : {first, second}) {
        TrainedBlock ens;
        ens.spec.kind = BlockKind::ensemble;
        ens.spec.id = "ens" + std::to_string(idx);
        ens.spec.subset = subset;
        ens.spec.net.input_dim = 2 * static_cast<int>(subset.size());
        ens.spec.net.lstm_widths = {3, 3};
        ens.spec.net.dense_widths = {2};
        ens.net = LstmNetwork::init(ens.spec.net, seed + 10 + static_cast<std::uint64_t>(idx));
        ens.thresholds = uniform_schedule(ens.spec.id, horizon, theta);
        suite.blocks.push_back(std::move(ens));
        ++idx;
    }
    return suite;
}

ContingencyCase random_full_case(int buses, int cycles, std::uint64_t seed, int label = 1) {
    rng::Stream stream(seed);
    auto c = oracles::random_case(buses, cycles, stream, "case" + std::to_string(seed));
    c.label = label;
    return c;
}

}  // namespace

TEST_CASE("arrivals that do not complete a gated column trigger no inference") {
    const auto suite = tiny_suite(4, 6, 1);
    OnlineAssessor assessor(suite, Mechanism::delay_aware, 4);

    ArrivalEvent e;
    e.pmu = 0;
    e.cycle = 1;
    e.arrival_ms = 20.0;
    e.magnitude = 1.0;
    e.angle = 0.2;
    CHECK(!assessor.on_arrival(e));  // fraction 0.25 <= phi
    CHECK(assessor.inference_count() == 0);

    SUBCASE("duplicate arrivals are ignored with a counter") {
        CHECK(!assessor.on_arrival(e));
        CHECK(assessor.duplicate_arrivals() == 1);
    }
}

TEST_CASE("zero-delay constant mode with phi=1 reproduces offline verdicts cycle by cycle") {
    const int buses = 4, horizon = 8;
    auto suite = tiny_suite(buses, horizon, 3, 0.49, 1.0);
    // spread the raw outputs away from 0.5 so verdicts actually fire
    for (auto& block : suite.blocks) {
        block.net.dense.back().w *= 8.0;
        block.net.dense.back().b(0) += 0.1;
    }
    const auto c = random_full_case(buses, horizon, 17);

    DelayModel constant;
    constant.kind = DelayModel::Kind::constant;
    constant.shift_ms = 5.0;

    const auto outcome = run_case_delay_aware(suite, c, constant, std::nullopt);
    REQUIRE(!outcome.verdicts.empty());

    // verdicts appear in cycle order
    int prev_cycle = 0;
    for (const auto& v : outcome.verdicts) {
        CHECK(v.cycle >= prev_cycle);
        prev_cycle = std::max(prev_cycle, v.cycle);
    }

    // per block, the online verdict sequence is a prefix of the offline
    // full-matrix one (a prefix because the run stops at the decision)
    for (const auto& block : suite.blocks) {
        const auto ys = offline_block_outputs(block.net, block.spec.subset, {c}, horizon).front();
        std::vector<std::pair<int, int>> offline;  // (cycle, label)
        for (int t = 1; t <= static_cast<int>(ys.size()); ++t) {
            const Verdict z = map_to_binary(ys[static_cast<std::size_t>(t) - 1],
                                            block.thresholds.theta[static_cast<std::size_t>(t) - 1]);
            if (z != Verdict::unknown) offline.emplace_back(t, static_cast<int>(z));
        }
        std::vector<std::pair<int, int>> online;
        for (const auto& v : outcome.verdicts)
            if (v.block_id == block.spec.id) online.emplace_back(v.cycle, v.label);

        REQUIRE(online.size() <= offline.size());
        for (std::size_t i = 0; i < online.size(); ++i) CHECK(online[i] == offline[i]);
    }
}

TEST_CASE("synchronous baseline timing") {
    const auto suite = tiny_suite(4, 6, 5);
    const auto c = random_full_case(4, 6, 23);

    SUBCASE("constant delay d with D=1 responds at cycle_ms + d exactly") {
        DelayModel constant;
        constant.kind = DelayModel::Kind::constant;
        constant.shift_ms = 40.0;
        const auto out = run_case_synchronous(suite, c, constant, std::nullopt, 1);
        CHECK(out.response_ms == doctest::Approx(suite.cycle_ms() + 40.0).epsilon(1e-12));
        CHECK(out.decided);
    }

    SUBCASE("gamma mean response matches a direct max-of-B Monte Carlo within 1%") {
        const int b = 39;
        const auto big_suite = tiny_suite(b, 2, 6);
        const auto big_case = random_full_case(b, 2, 29);

        DelayModel gamma_delay;
        gamma_delay.shift_ms = 10.0;

        const int trials = 10'000;
        double sum = 0.0;
        for (int i = 0; i < trials; ++i) {
            const auto d = gamma_delay.with_seed(1000 + static_cast<std::uint64_t>(i));
            sum += run_case_synchronous(big_suite, big_case, d, std::nullopt, 1).response_ms;
        }
        const double mean_response = sum / trials;

        rng::Stream mc(424242);
        double mc_sum = 0.0;
        for (int i = 0; i < trials; ++i) {
            double worst = 0.0;
            for (int p = 0; p < b; ++p) worst = std::max(worst, 10.0 + mc.gamma(20.0, 2.0));
            mc_sum += big_suite.cycle_ms() + worst;
        }
        const double mc_mean = mc_sum / trials;
        CHECK(std::fabs(mean_response - mc_mean) < 0.01 * mc_mean);
        // max of B draws strictly exceeds the mean delay for continuous draws
        CHECK(mean_response > big_suite.cycle_ms() + 10.0 + 40.0);
    }
}

TEST_CASE("benchmark_dataset aggregates and properties") {
    const int buses = 4, horizon = 8;
    const auto suite = tiny_suite(buses, horizon, 7);

    Dataset test;
    test.frame_hz = 60.0;
    for (int i = 0; i < 12; ++i)
        test.cases.push_back(random_full_case(buses, horizon, 100 + static_cast<std::uint64_t>(i), i % 2));

    DelayModel delay;
    delay.shift_ms = 10.0;

    BenchmarkConfig cfg;
    cfg.repetitions = 2;
    cfg.seed = 33;
    cfg.main_only_phis = {0.4, 1.0};
    cfg.run_ensembles_only = true;

    const auto report = benchmark_dataset(suite, test, delay, std::nullopt, cfg);
    REQUIRE(report.rows.size() == 12u * 2u * 5u);

    SUBCASE("summaries equal a manual recount") {
        for (const auto& s : report.summaries) {
            int correct = 0, n = 0, decided = 0;
            double sum = 0, best = 1e300, worst = 0;
            for (const auto& r : report.rows) {
                if (r.mechanism != s.mechanism) continue;
                ++n;
                if (r.decided) ++decided;
                if (r.decided && r.predicted == r.label) ++correct;
                sum += r.response_ms;
                best = std::min(best, r.response_ms);
                worst = std::max(worst, r.response_ms);
            }
            REQUIRE(n == s.cases);
            CHECK(s.accuracy == doctest::Approx(static_cast<double>(correct) / n).epsilon(1e-12));
            CHECK(s.avg_ms == doctest::Approx(sum / n).epsilon(1e-12));
            CHECK(s.best_ms == doctest::Approx(best));
            CHECK(s.worst_ms == doctest::Approx(worst));
            CHECK(s.decided_fraction == doctest::Approx(static_cast<double>(decided) / n));
            CHECK(s.best_ms <= s.avg_ms);
            CHECK(s.avg_ms <= s.worst_ms);
        }
    }

    SUBCASE("responses respect the first-arrival lower bound") {
        for (const auto& r : report.rows)
            CHECK(r.response_ms >= suite.cycle_ms() + delay.shift_ms - 1e-9);
    }

    SUBCASE("identical config gives identical rows") {
        const auto again = benchmark_dataset(suite, test, delay, std::nullopt, cfg);
        REQUIRE(again.rows.size() == report.rows.size());
        for (std::size_t i = 0; i < report.rows.size(); ++i) {
            CHECK(again.rows[i].case_id == report.rows[i].case_id);
            CHECK(again.rows[i].response_ms == report.rows[i].response_ms);
            CHECK(again.rows[i].predicted == report.rows[i].predicted);
        }
    }

    SUBCASE("delay-aware rules replay through the decision oracle") {
        for (std::size_t idx = 0; idx < test.cases.size(); ++idx) {
            const auto case_delay = delay.with_seed(
                rng::mix({cfg.seed, 0x44454c59u, static_cast<std::uint64_t>(idx), 0u}));
            const auto out = run_case_delay_aware(suite, test.cases[idx], case_delay, std::nullopt);
            if (!out.decided) continue;

            std::vector<oracles::OracleVerdict> seq;
            for (const auto& v : out.verdicts) {
                int block = 0;
                if (v.block_id != "main") block = v.block_id == "ens0" ? 1 : 2;
                seq.push_back({block, v.label});
            }
            const auto expected = oracles::oracle_decide(seq);
            REQUIRE(expected.decided);
            CHECK(expected.label == out.predicted);
            CHECK(out.verdicts[static_cast<std::size_t>(expected.at_index)].emitted_ms ==
                  doctest::Approx(out.response_ms));
        }
    }

    SUBCASE("cdf curves are monotone and end at the decided fraction") {
        const auto samples = response_time_cdf(report.rows, 1.0);
        std::map<std::string, double> last;
        for (const auto& s : samples) {
            if (last.count(s.mechanism)) CHECK(s.fraction_decided >= last[s.mechanism] - 1e-12);
            last[s.mechanism] = s.fraction_decided;
        }
        for (const auto& s : report.summaries)
            CHECK(last[s.mechanism] == doctest::Approx(s.decided_fraction));
    }
}

TEST_CASE("never-reliable thresholds leave cases undecided and incorrect") {
    const int buses = 4, horizon = 5;
    auto suite = tiny_suite(buses, horizon, 9, 1e-4);  // reliable band is essentially empty

    Dataset test;
    test.frame_hz = 60.0;
    test.cases.push_back(random_full_case(buses, horizon, 400, 1));

    DelayModel delay;
    delay.shift_ms = 10.0;
    BenchmarkConfig cfg;
    cfg.seed = 5;

    const auto report = benchmark_dataset(suite, test, delay, std::nullopt, cfg);
    const auto* da = report.find("delay_aware");
    REQUIRE(da);
    CHECK(da->accuracy == 0.0);
    CHECK(da->decided_fraction == 0.0);

    // undecided responses equal the last arrival of the replayed stream
    const auto case_delay = delay.with_seed(rng::mix({cfg.seed, 0x44454c59u, 0u, 0u}));
    const auto events =
        schedule_arrivals(test.cases[0], case_delay, std::nullopt, horizon, suite.cycle_ms());
    for (const auto& r : report.rows)
        if (r.mechanism == "delay_aware")
            CHECK(r.response_ms == doctest::Approx(events.back().arrival_ms));
}

TEST_CASE("suite save/load round-trip") {
    namespace fs = std::filesystem;
    const auto dir = (fs::temp_directory_path() / "tsadw_suite_test").string();
    fs::remove_all(dir);

    const auto suite = tiny_suite(4, 6, 11);
    save_suite(suite, dir);
    const auto back = load_suite(dir);

    REQUIRE(back.blocks.size() == suite.blocks.size());
    CHECK(back.phi == suite.phi);
    CHECK(back.horizon_cycles == suite.horizon_cycles);
    for (std::size_t i = 0; i < suite.blocks.size(); ++i) {
        CHECK(back.blocks[i].spec.id == suite.blocks[i].spec.id);
        CHECK(back.blocks[i].spec.subset == suite.blocks[i].spec.subset);
        CHECK(back.blocks[i].net.flatten() == suite.blocks[i].net.flatten());
        CHECK(back.blocks[i].thresholds.theta == suite.blocks[i].thresholds.theta);
    }
    CHECK(back.stats.mag_mean == suite.stats.mag_mean);
}

TEST_CASE("report json and csv round-trip") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "tsadw_report_test";
    fs::create_directories(dir);

    const auto suite = tiny_suite(4, 6, 13);
    Dataset test;
    test.frame_hz = 60.0;
    for (int i = 0; i < 4; ++i)
        test.cases.push_back(random_full_case(4, 6, 500 + static_cast<std::uint64_t>(i), i % 2));

    DelayModel delay;
    BenchmarkConfig cfg;
    cfg.seed = 77;
    const auto report = benchmark_dataset(suite, test, delay, std::nullopt, cfg);

    const auto json_path = (dir / "report.json").string();
    write_report_json(report, json_path);
    const auto back = load_report_json(json_path);
    REQUIRE(back.rows.size() == report.rows.size());
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        CHECK(back.rows[i].mechanism == report.rows[i].mechanism);
        CHECK(back.rows[i].response_ms == report.rows[i].response_ms);
    }
    REQUIRE(back.summaries.size() == report.summaries.size());
    for (std::size_t i = 0; i < report.summaries.size(); ++i)
        CHECK(back.summaries[i].accuracy == doctest::Approx(report.summaries[i].accuracy));

    write_rows_csv(report, (dir / "rows.csv").string());
    write_cdf_csv(response_time_cdf(report.rows), (dir / "cdf.csv").string());
    CHECK(fs::file_size(dir / "rows.csv") > 0);
    CHECK(fs::file_size(dir / "cdf.csv") > 0);
}

#include "tsadw/phasor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tsadw/rng.hpp"

namespace tsadw {

double wrap_angle(double radians) {
    const double two_pi = 6.283185307179586476925286766559;
    double a = std::fmod(radians + 3.141592653589793238462643383280, two_pi);
    if (a < 0.0) a += two_pi;
    return a - 3.141592653589793238462643383280;
}

MeasurementMatrix::MeasurementMatrix(int bus_count, int cycle_count)
    : mag_(Eigen::MatrixXd::Zero(bus_count, cycle_count)),
      ang_(Eigen::MatrixXd::Zero(bus_count, cycle_count)),
      known_(Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(bus_count, cycle_count)) {}

MeasurementMatrix MeasurementMatrix::full(const Eigen::MatrixXd& mag, const Eigen::MatrixXd& ang) {
    if (mag.rows() != ang.rows() || mag.cols() != ang.cols())
        throw ShapeError("channel matrices disagree: mag is " + std::to_string(mag.rows()) + "x" +
                         std::to_string(mag.cols()) + ", ang is " + std::to_string(ang.rows()) + "x" +
                         std::to_string(ang.cols()));
    MeasurementMatrix m(static_cast<int>(mag.rows()), static_cast<int>(mag.cols()));
    m.mag_ = mag;
    m.ang_ = ang;
    m.known_.setConstant(1);
    return m;
}

bool MeasurementMatrix::set(int bus, int cycle, double magnitude, double angle) {
    if (bus < 0 || bus >= bus_count() || cycle < 1 || cycle > cycle_count())
        throw ShapeError("sample (" + std::to_string(bus) + "," + std::to_string(cycle) +
                         ") outside " + std::to_string(bus_count()) + "x" + std::to_string(cycle_count()));
    if (known_(bus, cycle - 1)) return false;
    mag_(bus, cycle - 1) = magnitude;
    ang_(bus, cycle - 1) = angle;
    known_(bus, cycle - 1) = 1;
    return true;
}

double MeasurementMatrix::known_fraction(int cycle) const {
    const int b = bus_count();
    if (b == 0) return 0.0;
    int n = 0;
    for (int i = 0; i < b; ++i) n += known_(i, cycle - 1);
    return static_cast<double>(n) / static_cast<double>(b);
}

bool MeasurementMatrix::subset_known(const std::vector<int>& buses, int cycle) const {
    for (int b : buses)
        if (!known_(b, cycle - 1)) return false;
    return true;
}

bool MeasurementMatrix::fully_known() const {
    return known_.minCoeff() == 1;
}

bool MeasurementMatrix::operator==(const MeasurementMatrix& other) const {
    return mag_ == other.mag_ && ang_ == other.ang_ && known_ == other.known_;
}

bool NormalizationStats::valid() const {
    const auto n = mag_mean.size();
    if (n == 0 || mag_std.size() != n || ang_mean.size() != n || ang_std.size() != n) return false;
    auto finite = [](const Eigen::VectorXd& v) { return v.allFinite(); };
    if (!finite(mag_mean) || !finite(mag_std) || !finite(ang_mean) || !finite(ang_std)) return false;
    return (mag_std.array() > 0.0).all() && (ang_std.array() > 0.0).all();
}

NormalizationStats compute_stats(const std::vector<ContingencyCase>& training_cases) {
    if (training_cases.empty()) throw ShapeError("cannot compute stats on an empty case list");
    const int b = training_cases.front().matrix.bus_count();

    NormalizationStats s;
    s.mag_mean = Eigen::VectorXd::Zero(b);
    s.ang_mean = Eigen::VectorXd::Zero(b);
    s.mag_std = Eigen::VectorXd::Zero(b);
    s.ang_std = Eigen::VectorXd::Zero(b);

    Eigen::VectorXd count = Eigen::VectorXd::Zero(b);
    for (const auto& c : training_cases) {
        if (c.matrix.bus_count() != b)
            throw ShapeError("case " + c.id + " has " + std::to_string(c.matrix.bus_count()) +
                             " buses, expected " + std::to_string(b));
        s.mag_mean += c.matrix.mag().rowwise().sum();
        s.ang_mean += c.matrix.ang().rowwise().sum();
        count.array() += static_cast<double>(c.matrix.cycle_count());
    }
    s.mag_mean.array() /= count.array();
    s.ang_mean.array() /= count.array();

    for (const auto& c : training_cases) {
        s.mag_std += (c.matrix.mag().colwise() - s.mag_mean).array().square().matrix().rowwise().sum();
        s.ang_std += (c.matrix.ang().colwise() - s.ang_mean).array().square().matrix().rowwise().sum();
    }
    s.mag_std = (s.mag_std.array() / count.array()).sqrt();
    s.ang_std = (s.ang_std.array() / count.array()).sqrt();

    // Constant channels fall back to std = 1 so they center to zero.
    for (int i = 0; i < b; ++i) {
        if (s.mag_std(i) < 1e-9) s.mag_std(i) = 1.0;
        if (s.ang_std(i) < 1e-9) s.ang_std(i) = 1.0;
    }
    return s;
}

namespace {

ContingencyCase transform_case(const ContingencyCase& c, const NormalizationStats& stats, bool inverse) {
    if (!stats.valid()) throw ShapeError("normalization stats invalid or not finite");
    if (stats.bus_count() != c.matrix.bus_count())
        throw ShapeError("stats cover " + std::to_string(stats.bus_count()) + " buses but case " + c.id +
                         " has " + std::to_string(c.matrix.bus_count()));

    const int b = c.matrix.bus_count();
    const int t = c.matrix.cycle_count();
    Eigen::MatrixXd mag = c.matrix.mag();
    Eigen::MatrixXd ang = c.matrix.ang();
    for (int i = 0; i < b; ++i) {
        for (int j = 0; j < t; ++j) {
            if (!c.matrix.known(i, j + 1)) continue;  // sentinel entries stay 0.0
            if (inverse) {
                mag(i, j) = mag(i, j) * stats.mag_std(i) + stats.mag_mean(i);
                ang(i, j) = ang(i, j) * stats.ang_std(i) + stats.ang_mean(i);
            } else {
                mag(i, j) = (mag(i, j) - stats.mag_mean(i)) / stats.mag_std(i);
                ang(i, j) = (ang(i, j) - stats.ang_mean(i)) / stats.ang_std(i);
            }
        }
    }

    ContingencyCase out;
    out.id = c.id;
    out.label = c.label;
    out.meta = c.meta;
    if (c.matrix.fully_known()) {
        out.matrix = MeasurementMatrix::full(mag, ang);
    } else {
        out.matrix = MeasurementMatrix(b, t);
        for (int i = 0; i < b; ++i)
            for (int j = 1; j <= t; ++j)
                if (c.matrix.known(i, j)) out.matrix.set(i, j, mag(i, j - 1), ang(i, j - 1));
    }
    return out;
}

}  // namespace

ContingencyCase normalize_case(const ContingencyCase& c, const NormalizationStats& stats) {
    return transform_case(c, stats, false);
}

ContingencyCase denormalize_case(const ContingencyCase& c, const NormalizationStats& stats) {
    return transform_case(c, stats, true);
}

InputWindow build_input_window(const MeasurementMatrix& m, double phi,
                               const std::optional<std::vector<int>>& bus_subset) {
    if (phi < 0.0 || phi > 1.0) throw ConfigError("phi must lie in [0,1], got " + std::to_string(phi));

    InputWindow w;
    if (bus_subset) {
        w.buses = *bus_subset;
        std::sort(w.buses.begin(), w.buses.end());
        for (int b : w.buses)
            if (b < 0 || b >= m.bus_count())
                throw ShapeError("subset bus " + std::to_string(b) + " outside [0," +
                                 std::to_string(m.bus_count()) + ")");
    } else {
        w.buses.resize(m.bus_count());
        std::iota(w.buses.begin(), w.buses.end(), 0);
    }

    // Included columns form a contiguous prefix: stop at the first rejection.
    int included = 0;
    for (int t = 1; t <= m.cycle_count(); ++t) {
        bool ok;
        if (bus_subset) {
            ok = m.subset_known(w.buses, t);
        } else {
            const double f = m.known_fraction(t);
            ok = f > phi || f == 1.0;
        }
        if (!ok) break;
        ++included;
    }

    const int d = 2 * static_cast<int>(w.buses.size());
    w.data.resize(d, included);
    for (int col = 0; col < included; ++col) {
        for (std::size_t k = 0; k < w.buses.size(); ++k) {
            const int b = w.buses[k];
            // Unknown entries are already the 0.0 sentinel in the matrix.
            w.data(2 * static_cast<int>(k), col) = m.mag()(b, col);
            w.data(2 * static_cast<int>(k) + 1, col) = m.ang()(b, col);
        }
    }
    return w;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double ratio, std::uint64_t seed) {
    if (ds.cases.empty()) throw ShapeError("cannot split an empty dataset");
    if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must lie in (0,1)");
    if (ds.cases.size() < 4) throw ShapeError("need at least 4 cases to split");

    std::vector<std::size_t> order(ds.cases.size());
    std::iota(order.begin(), order.end(), 0);
    rng::Stream stream(rng::mix({seed, 0x5f4a7c15u}));
    stream.shuffle(order);

    const auto n_train = static_cast<std::size_t>(
        std::ceil(ratio * static_cast<double>(ds.cases.size())));

    Dataset train, test;
    train.frame_hz = test.frame_hz = ds.frame_hz;
    for (std::size_t i = 0; i < order.size(); ++i) {
        (i < n_train ? train : test).cases.push_back(ds.cases[order[i]]);
    }
    train.stats = compute_stats(train.cases);
    test.stats = train.stats;  // test always normalizes with train statistics
    return {std::move(train), std::move(test)};
}

}  // namespace tsadw

#pragma once

// Independent reference implementations used only by tests: these stay
// deliberately separate from the library code paths they check.

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include "tsadw/nn.hpp"
#include "tsadw/phasor.hpp"
#include "tsadw/rng.hpp"

namespace oracles {

inline double sigmoid_ref(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline tsadw::LstmLayerParams random_lstm_layer(int input, int hidden, tsadw::rng::Stream& stream,
                                                double scale = 0.4) {
    tsadw::LstmLayerParams p;
    p.input = input;
    p.hidden = hidden;
    p.wx = Eigen::MatrixXd::Zero(4 * hidden, input);
    p.wh = Eigen::MatrixXd::Zero(4 * hidden, hidden);
    p.b = Eigen::VectorXd::Zero(4 * hidden);
    for (Eigen::Index i = 0; i < p.wx.size(); ++i) p.wx.data()[i] = stream.uniform(-scale, scale);
    for (Eigen::Index i = 0; i < p.wh.size(); ++i) p.wh.data()[i] = stream.uniform(-scale, scale);
    for (Eigen::Index i = 0; i < p.b.size(); ++i) p.b(i) = stream.uniform(-scale, scale);
    return p;
}

/// Scalar-by-scalar reference evaluation of the gate recurrence, written
/// against the per-gate parameter views.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> lstm_cell_reference(
    const Eigen::VectorXd& x, const Eigen::VectorXd& h_prev, const Eigen::VectorXd& c_prev,
    const tsadw::LstmLayerParams& p) {
    const int h = p.hidden;
    Eigen::VectorXd h_out(h), c_out(h);
    for (int k = 0; k < h; ++k) {
        double zf = p.b(k), zi = p.b(h + k), zc = p.b(2 * h + k), zo = p.b(3 * h + k);
        for (int j = 0; j < p.input; ++j) {
            zf += p.w_forget()(k, j) * x(j);
            zi += p.w_input()(k, j) * x(j);
            zc += p.w_candidate()(k, j) * x(j);
            zo += p.w_output()(k, j) * x(j);
        }
        for (int j = 0; j < h; ++j) {
            zf += p.u_forget()(k, j) * h_prev(j);
            zi += p.u_input()(k, j) * h_prev(j);
            zc += p.u_candidate()(k, j) * h_prev(j);
            zo += p.u_output()(k, j) * h_prev(j);
        }
        const double f = sigmoid_ref(zf);
        const double i = sigmoid_ref(zi);
        const double c = std::tanh(zc);
        const double o = sigmoid_ref(zo);
        c_out(k) = f * c_prev(k) + i * c;
        h_out(k) = o * std::tanh(c_out(k));
    }
    return {h_out, c_out};
}

/// Regularized lower incomplete gamma P(a, x), series + continued fraction
/// (Numerical Recipes style). Good to ~1e-12 for the shapes used here.
inline double gammp(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gammp domain");
    if (x == 0.0) return 0.0;
    const double gln = std::lgamma(a);
    if (x < a + 1.0) {
        // series representation
        double ap = a;
        double sum = 1.0 / a;
        double del = sum;
        for (int n = 0; n < 500; ++n) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
        }
        return sum * std::exp(-x + a * std::log(x) - gln);
    }
    // continued fraction for Q(a, x)
    const double fpmin = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / fpmin;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 500; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = b + an / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-15) break;
    }
    const double q = std::exp(-x + a * std::log(x) - gln) * h;
    return 1.0 - q;
}

/// Shifted gamma CDF.
inline double shifted_gamma_cdf(double x, double k, double theta, double shift) {
    if (x <= shift) return 0.0;
    return gammp(k, (x - shift) / theta);
}

/// One verdict for the decision oracle. Block 0 is the primary source,
/// any other id is an ensemble source.
struct OracleVerdict {
    int block = 0;
    int label = 0;
};

struct OracleResult {
    bool decided = false;
    int label = -1;
    int at_index = -1;  // index of the deciding verdict within the sequence
};

/// Literal replay of the consolidation rule list: live results overwrite
/// per block, a primary + identical secondary concludes, a disagreement
/// requests one more secondary result which concludes regardless, multiple
/// pre-primary secondaries conclude by popularity, ties wait.
inline OracleResult oracle_decide(const std::vector<OracleVerdict>& sequence) {
    std::map<int, int> live;
    bool awaiting_extra_secondary = false;

    for (std::size_t i = 0; i < sequence.size(); ++i) {
        const auto& v = sequence[i];
        live[v.block] = v.label;
        const bool is_secondary = v.block != 0;

        if (awaiting_extra_secondary) {
            if (is_secondary) return {true, v.label, static_cast<int>(i)};
            continue;  // a refreshed primary does not resolve the request
        }

        int n_stable = 0, n_unstable = 0;
        for (const auto& [block, label] : live) {
            if (block == 0) continue;
            (label ? n_stable : n_unstable)++;
        }
        const bool have_primary = live.count(0) > 0;

        if (is_secondary) {
            if (have_primary) {
                if (live[0] == v.label) return {true, v.label, static_cast<int>(i)};
                awaiting_extra_secondary = true;
                continue;
            }
            if (n_stable + n_unstable >= 2) {
                if (n_stable > n_unstable) return {true, 1, static_cast<int>(i)};
                if (n_unstable > n_stable) return {true, 0, static_cast<int>(i)};
            }
            continue;
        }

        // primary arrived
        if (n_stable + n_unstable == 0) continue;
        if (n_stable + n_unstable == 1) {
            const int s = n_stable ? 1 : 0;
            if (s == v.label) return {true, v.label, static_cast<int>(i)};
            awaiting_extra_secondary = true;
            continue;
        }
        if (n_stable > n_unstable) return {true, 1, static_cast<int>(i)};
        if (n_unstable > n_stable) return {true, 0, static_cast<int>(i)};
        return {true, v.label, static_cast<int>(i)};  // tie broken by the primary side
    }
    return {};
}

/// Random fully-known case for codec and normalization tests.
inline tsadw::ContingencyCase random_case(int buses, int cycles, tsadw::rng::Stream& stream,
                                          const std::string& id) {
    Eigen::MatrixXd mag(buses, cycles), ang(buses, cycles);
    for (int b = 0; b < buses; ++b) {
        for (int t = 0; t < cycles; ++t) {
            mag(b, t) = 0.8 + 0.4 * stream.uniform01();
            ang(b, t) = stream.uniform(-3.141592653589793, 3.141592653589793);
        }
    }
    tsadw::ContingencyCase c;
    c.id = id;
    c.label = stream.uniform01() < 0.5 ? 1 : 0;
    c.matrix = tsadw::MeasurementMatrix::full(mag, ang);
    c.meta.load_pct = 100.0;
    c.meta.fault_bus = static_cast<int>(stream.below(static_cast<std::uint64_t>(buses)));
    c.meta.removed = {"brA", "brB"};
    return c;
}

}  // namespace oracles

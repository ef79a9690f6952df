#include "tsadw/nn.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>

#include "tsadw/rng.hpp"

namespace tsadw {

namespace {

constexpr double kBceClamp = 1e-12;

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline Eigen::MatrixXd sigmoid_mat(const Eigen::MatrixXd& z) {
    return z.unaryExpr([](double v) { return sigmoid(v); });
}

inline Eigen::MatrixXd apply_activation(const Eigen::MatrixXd& z, Activation a) {
    switch (a) {
        case Activation::rectifier: return z.cwiseMax(0.0);
        case Activation::sigmoid: return sigmoid_mat(z);
        case Activation::identity: return z;
    }
    return z;
}

// derivative expressed through the activated value
inline Eigen::MatrixXd activation_grad(const Eigen::MatrixXd& activated, Activation a) {
    switch (a) {
        case Activation::rectifier:
            return activated.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
        case Activation::sigmoid:
            return (activated.array() * (1.0 - activated.array())).matrix();
        case Activation::identity: return Eigen::MatrixXd::Ones(activated.rows(), activated.cols());
    }
    return activated;
}

}  // namespace

void LstmLayerParams::check_finite() const {
    if (!wx.allFinite() || !wh.allFinite() || !b.allFinite())
        throw ShapeError("LSTM layer holds non-finite parameters");
}

void NetworkConfig::validate() const {
    if (input_dim <= 0) throw ShapeError("network input dimension must be positive");
    if (lstm_widths.empty()) throw ShapeError("network needs at least one LSTM layer");
    for (int w : lstm_widths)
        if (w <= 0) throw ShapeError("LSTM width must be positive");
    for (int w : dense_widths)
        if (w <= 0) throw ShapeError("dense width must be positive");
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> lstm_cell_forward(const Eigen::VectorXd& x,
                                                              const Eigen::VectorXd& h_prev,
                                                              const Eigen::VectorXd& c_prev,
                                                              const LstmLayerParams& p) {
    if (x.size() != p.input || h_prev.size() != p.hidden || c_prev.size() != p.hidden)
        throw ShapeError("lstm_cell_forward: state/input sizes do not match the layer (input " +
                         std::to_string(x.size()) + " vs " + std::to_string(p.input) + ", hidden " +
                         std::to_string(h_prev.size()) + " vs " + std::to_string(p.hidden) + ")");

    const Eigen::VectorXd z = p.wx * x + p.wh * h_prev + p.b;
    const int h = p.hidden;
    Eigen::VectorXd f(h), i(h), c(h), o(h);
    for (int k = 0; k < h; ++k) {
        f(k) = sigmoid(z(k));
        i(k) = sigmoid(z(h + k));
        c(k) = std::tanh(z(2 * h + k));
        o(k) = sigmoid(z(3 * h + k));
    }
    Eigen::VectorXd c_new = f.cwiseProduct(c_prev) + i.cwiseProduct(c);
    Eigen::VectorXd h_new = o.cwiseProduct(c_new.unaryExpr([](double v) { return std::tanh(v); }));
    return {std::move(h_new), std::move(c_new)};
}

LstmNetwork make_network_shell(const NetworkConfig& cfg) {
    cfg.validate();
    LstmNetwork net;
    net.cfg_ = cfg;

    int in = cfg.input_dim;
    for (int width : cfg.lstm_widths) {
        LstmLayerParams p;
        p.hidden = width;
        p.input = in;
        p.wx = Eigen::MatrixXd::Zero(4 * width, in);
        p.wh = Eigen::MatrixXd::Zero(4 * width, width);
        p.b = Eigen::VectorXd::Zero(4 * width);
        net.lstm.push_back(std::move(p));
        in = width;
    }
    for (int width : cfg.dense_widths) {
        DenseLayerParams d;
        d.w = Eigen::MatrixXd::Zero(width, in);
        d.b = Eigen::VectorXd::Zero(width);
        d.act = cfg.dense_hidden_act;
        net.dense.push_back(std::move(d));
        in = width;
    }
    DenseLayerParams out;
    out.w = Eigen::MatrixXd::Zero(1, in);
    out.b = Eigen::VectorXd::Zero(1);
    out.act = Activation::sigmoid;
    net.dense.push_back(std::move(out));
    return net;
}

LstmNetwork LstmNetwork::init(const NetworkConfig& cfg, std::uint64_t seed) {
    LstmNetwork net = make_network_shell(cfg);
    rng::Stream stream(rng::mix({seed, 0x4e4e5457u}));

    auto fill = [&stream](Eigen::MatrixXd& m, int fan_in) {
        const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = stream.uniform(-s, s);
    };
    for (auto& p : net.lstm) {
        fill(p.wx, p.input);
        fill(p.wh, p.hidden);
    }
    for (auto& d : net.dense) fill(d.w, static_cast<int>(d.w.cols()));
    return net;
}

Eigen::Index LstmNetwork::parameter_count() const {
    Eigen::Index n = 0;
    for (const auto& p : lstm) n += p.wx.size() + p.wh.size() + p.b.size();
    for (const auto& d : dense) n += d.w.size() + d.b.size();
    return n;
}

Eigen::VectorXd LstmNetwork::flatten() const {
    Eigen::VectorXd out(parameter_count());
    Eigen::Index at = 0;
    auto put = [&](const double* p, Eigen::Index n) {
        std::copy(p, p + n, out.data() + at);
        at += n;
    };
    for (const auto& p : lstm) {
        put(p.wx.data(), p.wx.size());
        put(p.wh.data(), p.wh.size());
        put(p.b.data(), p.b.size());
    }
    for (const auto& d : dense) {
        put(d.w.data(), d.w.size());
        put(d.b.data(), d.b.size());
    }
    return out;
}

void LstmNetwork::assign(const Eigen::VectorXd& flat) {
    if (flat.size() != parameter_count())
        throw ShapeError("flat parameter vector has " + std::to_string(flat.size()) +
                         " entries, network needs " + std::to_string(parameter_count()));
    Eigen::Index at = 0;
    auto take = [&](double* p, Eigen::Index n) {
        std::copy(flat.data() + at, flat.data() + at + n, p);
        at += n;
    };
    for (auto& p : lstm) {
        take(p.wx.data(), p.wx.size());
        take(p.wh.data(), p.wh.size());
        take(p.b.data(), p.b.size());
    }
    for (auto& d : dense) {
        take(d.w.data(), d.w.size());
        take(d.b.data(), d.b.size());
    }
}

namespace {

/// Batched forward caches for BPTT. Sequences in one batch share T.
struct LayerCache {
    // each vector indexed by timestep; matrices are h x N
    std::vector<Eigen::MatrixXd> f, i, c, o, cell, tanh_cell, h;
};

struct ForwardPass {
    std::vector<Eigen::MatrixXd> inputs;       // T entries, D x N
    std::vector<LayerCache> layers;            // per LSTM layer
    std::vector<std::vector<Eigen::MatrixXd>> dense_act;  // per attached step: activations per dense layer
    std::vector<int> attached_steps;           // steps where the dense head ran
    Eigen::MatrixXd outputs;                   // |attached| x N, post-sigmoid
};

void run_forward(const LstmNetwork& net, const std::vector<Eigen::MatrixXd>& xs,
                 LossAttachment attachment, ForwardPass& fp) {
    const int t_len = static_cast<int>(xs.size());
    const auto n = xs.front().cols();
    const int n_layers = static_cast<int>(net.lstm.size());

    fp.inputs = xs;
    fp.layers.assign(n_layers, {});
    for (auto& lc : fp.layers) {
        lc.f.resize(t_len);
        lc.i.resize(t_len);
        lc.c.resize(t_len);
        lc.o.resize(t_len);
        lc.cell.resize(t_len);
        lc.tanh_cell.resize(t_len);
        lc.h.resize(t_len);
    }

    if (attachment == LossAttachment::final_step) {
        fp.attached_steps = {t_len - 1};
    } else {
        fp.attached_steps.resize(t_len);
        std::iota(fp.attached_steps.begin(), fp.attached_steps.end(), 0);
    }
    fp.dense_act.assign(fp.attached_steps.size(), {});
    fp.outputs.resize(static_cast<Eigen::Index>(fp.attached_steps.size()), n);

    std::vector<Eigen::MatrixXd> h_prev(n_layers), c_prev(n_layers);
    for (int l = 0; l < n_layers; ++l) {
        h_prev[l] = Eigen::MatrixXd::Zero(net.lstm[l].hidden, n);
        c_prev[l] = Eigen::MatrixXd::Zero(net.lstm[l].hidden, n);
    }

    std::size_t attach_idx = 0;
    for (int t = 0; t < t_len; ++t) {
        const Eigen::MatrixXd* in = &fp.inputs[t];
        for (int l = 0; l < n_layers; ++l) {
            const auto& p = net.lstm[l];
            auto& lc = fp.layers[l];
            const int h = p.hidden;

            Eigen::MatrixXd z = p.wx * (*in) + p.wh * h_prev[l];
            z.colwise() += p.b;

            lc.f[t] = sigmoid_mat(z.topRows(h));
            lc.i[t] = sigmoid_mat(z.middleRows(h, h));
            lc.c[t] = z.middleRows(2 * h, h).array().tanh().matrix();
            lc.o[t] = sigmoid_mat(z.bottomRows(h));
            lc.cell[t] = lc.f[t].cwiseProduct(c_prev[l]) + lc.i[t].cwiseProduct(lc.c[t]);
            lc.tanh_cell[t] = lc.cell[t].array().tanh().matrix();
            lc.h[t] = lc.o[t].cwiseProduct(lc.tanh_cell[t]);

            h_prev[l] = lc.h[t];
            c_prev[l] = lc.cell[t];
            in = &lc.h[t];
        }

        if (attach_idx < fp.attached_steps.size() && fp.attached_steps[attach_idx] == t) {
            auto& acts = fp.dense_act[attach_idx];
            acts.reserve(net.dense.size() + 1);
            acts.push_back(*in);
            for (const auto& d : net.dense) {
                Eigen::MatrixXd z = d.w * acts.back();
                z.colwise() += d.b;
                acts.push_back(apply_activation(z, d.act));
            }
            fp.outputs.row(static_cast<Eigen::Index>(attach_idx)) = acts.back().row(0);
            ++attach_idx;
        }
    }
}

double bce_of_outputs(const ForwardPass& fp, const std::vector<int>& labels, LossAttachment att) {
    const auto n = fp.outputs.cols();
    double loss = 0.0;
    const double weight =
        att == LossAttachment::mean_steps ? 1.0 / static_cast<double>(fp.outputs.rows()) : 1.0;
    for (Eigen::Index s = 0; s < fp.outputs.rows(); ++s) {
        for (Eigen::Index k = 0; k < n; ++k) {
            const double p = std::clamp(fp.outputs(s, k), kBceClamp, 1.0 - kBceClamp);
            loss -= weight * (labels[static_cast<std::size_t>(k)] ? std::log(p) : std::log1p(-p));
        }
    }
    return loss;
}

struct GradSink {
    std::vector<Eigen::MatrixXd> lstm_wx, lstm_wh;
    std::vector<Eigen::VectorXd> lstm_b;
    std::vector<Eigen::MatrixXd> dense_w;
    std::vector<Eigen::VectorXd> dense_b;

    explicit GradSink(const LstmNetwork& net) {
        for (const auto& p : net.lstm) {
            lstm_wx.emplace_back(Eigen::MatrixXd::Zero(p.wx.rows(), p.wx.cols()));
            lstm_wh.emplace_back(Eigen::MatrixXd::Zero(p.wh.rows(), p.wh.cols()));
            lstm_b.emplace_back(Eigen::VectorXd::Zero(p.b.size()));
        }
        for (const auto& d : net.dense) {
            dense_w.emplace_back(Eigen::MatrixXd::Zero(d.w.rows(), d.w.cols()));
            dense_b.emplace_back(Eigen::VectorXd::Zero(d.b.size()));
        }
    }

    Eigen::VectorXd flatten(const LstmNetwork& net) const {
        Eigen::VectorXd out(net.parameter_count());
        Eigen::Index at = 0;
        auto put = [&](const double* p, Eigen::Index n) {
            std::copy(p, p + n, out.data() + at);
            at += n;
        };
        for (std::size_t l = 0; l < lstm_wx.size(); ++l) {
            put(lstm_wx[l].data(), lstm_wx[l].size());
            put(lstm_wh[l].data(), lstm_wh[l].size());
            put(lstm_b[l].data(), lstm_b[l].size());
        }
        for (std::size_t l = 0; l < dense_w.size(); ++l) {
            put(dense_w[l].data(), dense_w[l].size());
            put(dense_b[l].data(), dense_b[l].size());
        }
        return out;
    }
};

void run_backward(const LstmNetwork& net, const ForwardPass& fp, const std::vector<int>& labels,
                  LossAttachment att, GradSink& grads) {
    const int t_len = static_cast<int>(fp.inputs.size());
    const auto n = fp.inputs.front().cols();
    const int n_layers = static_cast<int>(net.lstm.size());
    const double weight =
        att == LossAttachment::mean_steps ? 1.0 / static_cast<double>(fp.outputs.rows()) : 1.0;

    // direct dh on the top LSTM layer contributed by the dense head,
    // one entry per timestep (zero where the head did not run)
    std::vector<Eigen::MatrixXd> dh_direct(t_len);
    const int top = n_layers - 1;
    for (int t = 0; t < t_len; ++t)
        dh_direct[t] = Eigen::MatrixXd::Zero(net.lstm[top].hidden, n);

    for (std::size_t s = 0; s < fp.attached_steps.size(); ++s) {
        const auto& acts = fp.dense_act[s];
        // final unit is sigmoid with BCE: d(pre-activation) = p - y
        Eigen::MatrixXd delta(1, n);
        for (Eigen::Index k = 0; k < n; ++k)
            delta(0, k) = weight * (fp.outputs(static_cast<Eigen::Index>(s), k) -
                                    static_cast<double>(labels[static_cast<std::size_t>(k)]));

        for (int l = static_cast<int>(net.dense.size()) - 1; l >= 0; --l) {
            if (l != static_cast<int>(net.dense.size()) - 1)
                delta = delta.cwiseProduct(activation_grad(acts[static_cast<std::size_t>(l) + 1],
                                                           net.dense[static_cast<std::size_t>(l)].act));
            grads.dense_w[static_cast<std::size_t>(l)].noalias() +=
                delta * acts[static_cast<std::size_t>(l)].transpose();
            grads.dense_b[static_cast<std::size_t>(l)] += delta.rowwise().sum();
            delta = (net.dense[static_cast<std::size_t>(l)].w.transpose() * delta).eval();
        }
        dh_direct[fp.attached_steps[s]] += delta;
    }

    std::vector<Eigen::MatrixXd> dh_rec(n_layers), dc_rec(n_layers);
    for (int l = 0; l < n_layers; ++l) {
        dh_rec[l] = Eigen::MatrixXd::Zero(net.lstm[l].hidden, n);
        dc_rec[l] = Eigen::MatrixXd::Zero(net.lstm[l].hidden, n);
    }

    for (int t = t_len - 1; t >= 0; --t) {
        // dh flowing into layer l at step t from the layer above
        Eigen::MatrixXd dh_above = dh_direct[t];
        for (int l = top; l >= 0; --l) {
            const auto& p = net.lstm[l];
            const auto& lc = fp.layers[l];
            const int h = p.hidden;

            const Eigen::MatrixXd dh = dh_above + dh_rec[l];
            const Eigen::MatrixXd& tc = lc.tanh_cell[t];
            Eigen::MatrixXd dc =
                dc_rec[l] + dh.cwiseProduct(lc.o[t]).cwiseProduct(
                                (1.0 - tc.array().square()).matrix());

            const Eigen::MatrixXd c_prev =
                t > 0 ? lc.cell[t - 1] : Eigen::MatrixXd::Zero(h, n);
            const Eigen::MatrixXd h_prev =
                t > 0 ? lc.h[t - 1] : Eigen::MatrixXd::Zero(h, n);

            Eigen::MatrixXd dz(4 * h, n);
            // forget gate
            dz.topRows(h) = dc.cwiseProduct(c_prev)
                                .cwiseProduct(lc.f[t])
                                .cwiseProduct((1.0 - lc.f[t].array()).matrix());
            // input gate
            dz.middleRows(h, h) = dc.cwiseProduct(lc.c[t])
                                      .cwiseProduct(lc.i[t])
                                      .cwiseProduct((1.0 - lc.i[t].array()).matrix());
            // candidate
            dz.middleRows(2 * h, h) =
                dc.cwiseProduct(lc.i[t]).cwiseProduct((1.0 - lc.c[t].array().square()).matrix());
            // output gate
            dz.bottomRows(h) = dh.cwiseProduct(tc)
                                   .cwiseProduct(lc.o[t])
                                   .cwiseProduct((1.0 - lc.o[t].array()).matrix());

            const Eigen::MatrixXd& in = l == 0 ? fp.inputs[t] : fp.layers[l - 1].h[t];
            grads.lstm_wx[static_cast<std::size_t>(l)].noalias() += dz * in.transpose();
            grads.lstm_wh[static_cast<std::size_t>(l)].noalias() += dz * h_prev.transpose();
            grads.lstm_b[static_cast<std::size_t>(l)] += dz.rowwise().sum();

            dh_rec[l] = p.wh.transpose() * dz;
            dc_rec[l] = dc.cwiseProduct(lc.f[t]);
            if (l > 0) dh_above = p.wx.transpose() * dz;
        }
    }
}

/// Groups batch indices by sequence length so each group can run batched.
std::map<int, std::vector<std::size_t>> group_by_length(
    const std::vector<const InputWindow*>& windows) {
    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (windows[i]->empty()) throw ShapeError("cannot train on an empty input window");
        groups[windows[i]->cycles()].push_back(i);
    }
    return groups;
}

}  // namespace

std::vector<double> LstmNetwork::forward_sequence(const InputWindow& window) const {
    if (window.empty()) return {};
    if (window.data.rows() != cfg_.input_dim)
        throw ShapeError("window has " + std::to_string(window.data.rows()) +
                         " channels, network expects " + std::to_string(cfg_.input_dim));

    const int t_len = window.cycles();
    std::vector<Eigen::VectorXd> h(lstm.size()), c(lstm.size());
    for (std::size_t l = 0; l < lstm.size(); ++l) {
        h[l] = Eigen::VectorXd::Zero(lstm[l].hidden);
        c[l] = Eigen::VectorXd::Zero(lstm[l].hidden);
    }

    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(t_len));
    for (int t = 0; t < t_len; ++t) {
        Eigen::VectorXd x = window.data.col(t);
        for (std::size_t l = 0; l < lstm.size(); ++l) {
            auto [hn, cn] = lstm_cell_forward(x, h[l], c[l], lstm[l]);
            h[l] = std::move(hn);
            c[l] = std::move(cn);
            x = h[l];
        }
        for (const auto& d : dense) {
            Eigen::VectorXd z = d.w * x + d.b;
            x = apply_activation(z, d.act);
        }
        out.push_back(x(0));
    }
    return out;
}

double LstmNetwork::forward_final(const InputWindow& window) const {
    const auto seq = forward_sequence(window);
    if (seq.empty()) throw ShapeError("forward_final on an empty window");
    return seq.back();
}

double bce_loss(const std::vector<double>& predictions, const std::vector<int>& labels) {
    if (predictions.size() != labels.size())
        throw ShapeError("bce_loss: " + std::to_string(predictions.size()) + " predictions vs " +
                         std::to_string(labels.size()) + " labels");
    double loss = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double p = std::clamp(predictions[i], kBceClamp, 1.0 - kBceClamp);
        loss -= labels[i] ? std::log(p) : std::log1p(-p);
    }
    return loss;
}

std::pair<Eigen::VectorXd, double> network_gradients(const std::vector<const InputWindow*>& windows,
                                                     const std::vector<int>& labels,
                                                     const LstmNetwork& net,
                                                     LossAttachment attachment) {
    if (windows.empty()) throw ShapeError("network_gradients on an empty batch");
    if (windows.size() != labels.size()) throw ShapeError("batch windows/labels size mismatch");

    GradSink grads(net);
    double loss = 0.0;

    for (const auto& [t_len, idxs] : group_by_length(windows)) {
        const auto n = static_cast<Eigen::Index>(idxs.size());
        std::vector<Eigen::MatrixXd> xs(static_cast<std::size_t>(t_len));
        for (int t = 0; t < t_len; ++t) {
            xs[static_cast<std::size_t>(t)].resize(net.config().input_dim, n);
            for (Eigen::Index k = 0; k < n; ++k)
                xs[static_cast<std::size_t>(t)].col(k) =
                    windows[idxs[static_cast<std::size_t>(k)]]->data.col(t);
        }
        std::vector<int> group_labels(idxs.size());
        for (std::size_t k = 0; k < idxs.size(); ++k) group_labels[k] = labels[idxs[k]];

        ForwardPass fp;
        run_forward(net, xs, attachment, fp);
        loss += bce_of_outputs(fp, group_labels, attachment);
        run_backward(net, fp, group_labels, attachment, grads);
    }
    return {grads.flatten(net), loss};
}

double network_loss(const std::vector<const InputWindow*>& windows, const std::vector<int>& labels,
                    const LstmNetwork& net, LossAttachment attachment) {
    double loss = 0.0;
    for (const auto& [t_len, idxs] : group_by_length(windows)) {
        const auto n = static_cast<Eigen::Index>(idxs.size());
        std::vector<Eigen::MatrixXd> xs(static_cast<std::size_t>(t_len));
        for (int t = 0; t < t_len; ++t) {
            xs[static_cast<std::size_t>(t)].resize(net.config().input_dim, n);
            for (Eigen::Index k = 0; k < n; ++k)
                xs[static_cast<std::size_t>(t)].col(k) =
                    windows[idxs[static_cast<std::size_t>(k)]]->data.col(t);
        }
        std::vector<int> group_labels(idxs.size());
        for (std::size_t k = 0; k < idxs.size(); ++k) group_labels[k] = labels[idxs[k]];

        ForwardPass fp;
        run_forward(net, xs, attachment, fp);
        loss += bce_of_outputs(fp, group_labels, attachment);
    }
    return loss;
}

AdamState AdamState::zeros(Eigen::Index n, AdamHyper hyper) {
    AdamState s;
    s.m = Eigen::VectorXd::Zero(n);
    s.v = Eigen::VectorXd::Zero(n);
    s.step = 0;
    s.hyper = hyper;
    return s;
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw ShapeError("adam_step: parameter/gradient/state sizes disagree");
    const auto& h = state.hyper;
    state.step += 1;
    state.m = h.beta1 * state.m + (1.0 - h.beta1) * grads;
    state.v = h.beta2 * state.v + (1.0 - h.beta2) * grads.cwiseProduct(grads);
    const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
    params.array() -=
        h.lr * (state.m.array() / bc1) / ((state.v.array() / bc2).sqrt() + h.eps);
}

TrainResult train_block(const std::vector<InputWindow>& windows, const std::vector<int>& labels,
                        const NetworkConfig& net_cfg, const TrainConfig& cfg) {
    if (windows.empty()) throw ShapeError("train_block on an empty training set");
    if (windows.size() != labels.size()) throw ShapeError("training windows/labels size mismatch");

    TrainResult result;
    result.net = LstmNetwork::init(net_cfg, cfg.seed);

    Eigen::VectorXd params = result.net.flatten();
    AdamState adam = AdamState::zeros(params.size(), cfg.adam);

    std::vector<std::size_t> order(windows.size());
    std::iota(order.begin(), order.end(), 0);

    double best_loss = std::numeric_limits<double>::infinity();
    int since_improvement = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng::Stream shuffle_stream(rng::mix({cfg.seed, 0x45504f43u, static_cast<std::uint64_t>(epoch)}));
        shuffle_stream.shuffle(order);

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<const InputWindow*> batch;
            std::vector<int> batch_labels;
            batch.reserve(end - start);
            for (std::size_t k = start; k < end; ++k) {
                batch.push_back(&windows[order[k]]);
                batch_labels.push_back(labels[order[k]]);
            }
            auto [grad, loss] = network_gradients(batch, batch_labels, result.net, cfg.attachment);
            if (!std::isfinite(loss))
                throw TrainError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(start / static_cast<std::size_t>(cfg.batch_size)));
            epoch_loss += loss;
            adam_step(params, grad, adam);
            result.net.assign(params);
        }
        result.epoch_loss.push_back(epoch_loss);

        if (epoch_loss < best_loss - cfg.early_stop_delta) {
            best_loss = epoch_loss;
            since_improvement = 0;
        } else if (++since_improvement >= cfg.early_stop_patience) {
            break;
        }
    }
    return result;
}

namespace {

constexpr char kNetMagic[6] = {'T', 'S', 'A', 'N', 'N', '1'};
constexpr std::uint32_t kNetVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint codec assumes a little-endian host");

void write_mat(std::ofstream& out, const Eigen::MatrixXd& m) {
    const auto rows = static_cast<std::uint32_t>(m.rows());
    const auto cols = static_cast<std::uint32_t>(m.cols());
    out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
    out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
}

Eigen::MatrixXd read_mat(std::ifstream& in, const std::string& path) {
    std::uint32_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), sizeof rows);
    in.read(reinterpret_cast<char*>(&cols), sizeof cols);
    if (!in || rows > 1u << 20 || cols > 1u << 20)
        throw ParseError(path + ": corrupt tensor header");
    Eigen::MatrixXd m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
    if (!in) throw ParseError(path + ": truncated tensor payload");
    return m;
}

}  // namespace

void save_network(const LstmNetwork& net, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open " + path + " for writing");
    out.write(kNetMagic, sizeof kNetMagic);
    out.write(reinterpret_cast<const char*>(&kNetVersion), sizeof kNetVersion);

    const auto& cfg = net.config();
    auto write_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
    write_u32(static_cast<std::uint32_t>(cfg.input_dim));
    write_u32(static_cast<std::uint32_t>(cfg.lstm_widths.size()));
    for (int w : cfg.lstm_widths) write_u32(static_cast<std::uint32_t>(w));
    write_u32(static_cast<std::uint32_t>(cfg.dense_widths.size()));
    for (int w : cfg.dense_widths) write_u32(static_cast<std::uint32_t>(w));
    write_u32(static_cast<std::uint32_t>(cfg.dense_hidden_act));

    for (const auto& p : net.lstm) {
        write_mat(out, p.wx);
        write_mat(out, p.wh);
        write_mat(out, p.b);
    }
    for (const auto& d : net.dense) {
        write_mat(out, d.w);
        write_mat(out, d.b);
    }
    out.flush();
    if (!out) throw ParseError("write failed for " + path);
}

LstmNetwork load_network(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path);
    char magic[6];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kNetMagic, sizeof kNetMagic) != 0)
        throw ParseError(path + ": bad magic, not a TSANN1 checkpoint");
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof version);
    if (version != kNetVersion)
        throw VersionError(path + ": checkpoint version " + std::to_string(version) +
                           " unsupported (expected " + std::to_string(kNetVersion) + ")");

    auto read_u32 = [&]() {
        std::uint32_t v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof v);
        if (!in) throw ParseError(path + ": truncated header");
        return v;
    };
    NetworkConfig cfg;
    cfg.input_dim = static_cast<int>(read_u32());
    cfg.lstm_widths.resize(read_u32());
    for (auto& w : cfg.lstm_widths) w = static_cast<int>(read_u32());
    cfg.dense_widths.resize(read_u32());
    for (auto& w : cfg.dense_widths) w = static_cast<int>(read_u32());
    cfg.dense_hidden_act = static_cast<Activation>(read_u32());

    LstmNetwork net = make_network_shell(cfg);
    for (auto& p : net.lstm) {
        p.wx = read_mat(in, path);
        p.wh = read_mat(in, path);
        p.b = read_mat(in, path);
        p.check_finite();
    }
    for (auto& d : net.dense) {
        d.w = read_mat(in, path);
        d.b = read_mat(in, path);
    }
    return net;
}

void write_network_manifest(const LstmNetwork& net, const std::string& path,
                            const std::string& extra_json) {
    nlohmann::json j;
    j["format"] = "TSANN1";
    j["input_dim"] = net.config().input_dim;
    j["lstm_widths"] = net.config().lstm_widths;
    j["dense_widths"] = net.config().dense_widths;
    j["parameter_count"] = static_cast<long long>(net.parameter_count());
    j["extra"] = nlohmann::json::parse(extra_json);
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open " + path + " for writing");
    out << j.dump(2) << "\n";
}

}  // namespace tsadw

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "tsadw/errors.hpp"
#include "tsadw/phasor.hpp"

namespace tsadw {

enum class Activation { rectifier, sigmoid, identity };

/// Parameters of one LSTM layer. The four gates are stored stacked along
/// the row axis in the order forget, input, candidate, output; per-gate
/// views are provided for code that works gate by gate.
struct LstmLayerParams {
    Eigen::MatrixXd wx;  // 4h x input
    Eigen::MatrixXd wh;  // 4h x h
    Eigen::VectorXd b;   // 4h
    int hidden = 0;
    int input = 0;

    auto w_forget() const { return wx.middleRows(0, hidden); }
    auto w_input() const { return wx.middleRows(hidden, hidden); }
    auto w_candidate() const { return wx.middleRows(2 * hidden, hidden); }
    auto w_output() const { return wx.middleRows(3 * hidden, hidden); }
    auto u_forget() const { return wh.middleRows(0, hidden); }
    auto u_input() const { return wh.middleRows(hidden, hidden); }
    auto u_candidate() const { return wh.middleRows(2 * hidden, hidden); }
    auto u_output() const { return wh.middleRows(3 * hidden, hidden); }

    void check_finite() const;
};

struct DenseLayerParams {
    Eigen::MatrixXd w;  // out x in
    Eigen::VectorXd b;  // out
    Activation act = Activation::identity;
};

/// Layer plan: LSTM widths, then hidden dense widths; a width-1 sigmoid
/// output unit is always appended as the last dense layer.
struct NetworkConfig {
    int input_dim = 0;
    std::vector<int> lstm_widths;
    std::vector<int> dense_widths;
    Activation dense_hidden_act = Activation::rectifier;

    void validate() const;
    bool operator==(const NetworkConfig&) const = default;
};

/// One cell update: gate activations per the standard LSTM recurrence.
/// Returns (h_t, C_t).
std::pair<Eigen::VectorXd, Eigen::VectorXd> lstm_cell_forward(const Eigen::VectorXd& x,
                                                              const Eigen::VectorXd& h_prev,
                                                              const Eigen::VectorXd& c_prev,
                                                              const LstmLayerParams& p);

class LstmNetwork {
public:
    LstmNetwork() = default;

    /// Fresh network with weights uniform in [-s, s], s = 1/sqrt(fan-in),
    /// and zero biases. Deterministic under seed.
    static LstmNetwork init(const NetworkConfig& cfg, std::uint64_t seed);

    const NetworkConfig& config() const { return cfg_; }

    /// Per-timestep outputs y_1..y_T', each in (0,1). Empty window gives
    /// an empty sequence ("no inference possible yet").
    std::vector<double> forward_sequence(const InputWindow& window) const;

    /// Output at the final timestep only. Window must be nonempty.
    double forward_final(const InputWindow& window) const;

    Eigen::Index parameter_count() const;
    Eigen::VectorXd flatten() const;
    void assign(const Eigen::VectorXd& flat);

    std::vector<LstmLayerParams> lstm;
    std::vector<DenseLayerParams> dense;  // last entry is the width-1 sigmoid unit

private:
    NetworkConfig cfg_;
    friend LstmNetwork make_network_shell(const NetworkConfig& cfg);
};

/// Clamped binary cross entropy: -sum[y log p + (1-y) log(1-p)] with
/// p clamped to [1e-12, 1-1e-12].
double bce_loss(const std::vector<double>& predictions, const std::vector<int>& labels);

enum class LossAttachment { final_step, mean_steps };

/// Exact BPTT gradients of the summed BCE over the batch, flattened in
/// the network's parameter order. Also returns the loss value.
std::pair<Eigen::VectorXd, double> network_gradients(const std::vector<const InputWindow*>& windows,
                                                     const std::vector<int>& labels,
                                                     const LstmNetwork& net,
                                                     LossAttachment attachment);

/// Loss alone, same path as network_gradients (used by finite-difference
/// checks).
double network_loss(const std::vector<const InputWindow*>& windows, const std::vector<int>& labels,
                    const LstmNetwork& net, LossAttachment attachment);

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    Eigen::VectorXd m;  // first moment
    Eigen::VectorXd v;  // second moment
    long step = 0;
    AdamHyper hyper;

    static AdamState zeros(Eigen::Index n, AdamHyper hyper = {});
};

/// Standard bias-corrected Adam update, in place.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state);

struct TrainConfig {
    int epochs = 200;
    int batch_size = 32;
    std::uint64_t seed = 0;
    AdamHyper adam;
    LossAttachment attachment = LossAttachment::final_step;
    double early_stop_delta = 1e-6;
    int early_stop_patience = 20;
};

struct TrainResult {
    LstmNetwork net;
    std::vector<double> epoch_loss;
};

/// Mini-batch Adam on BCE. Deterministic under cfg.seed (fixed init,
/// fixed shuffles). Throws TrainError naming epoch/batch if the loss
/// turns non-finite.
TrainResult train_block(const std::vector<InputWindow>& windows, const std::vector<int>& labels,
                        const NetworkConfig& net_cfg, const TrainConfig& cfg);

/// Versioned binary checkpoint ("TSANN1") plus a JSON manifest carrying
/// shapes and the training configuration for inspection.
void save_network(const LstmNetwork& net, const std::string& path);
LstmNetwork load_network(const std::string& path);
void write_network_manifest(const LstmNetwork& net, const std::string& path,
                            const std::string& extra_json = "{}");

}  // namespace tsadw

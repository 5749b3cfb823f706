#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "cmr/common.hpp"
#include "cmr/defaults.hpp"

namespace cmr {

// Per-topic sigmoid cross-entropy against the soft topic targets is the
// default; the softmax alternative treats each head as one distribution.
enum class LossKind : std::uint8_t {
    sigmoid_cross_entropy = 0,
    softmax_cross_entropy = 1,
};

struct DenseLayer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;    // out
};

// Valid 2-D convolution, stride 1, over a (channels, height, width) input
// flattened row-major into the batch row.
struct ConvLayer {
    int in_channels = 0, in_height = 0, in_width = 0;
    int out_channels = 0, kernel_h = 0, kernel_w = 0;
    Eigen::MatrixXd weight;  // out_channels x (in_channels * kernel_h * kernel_w)
    Eigen::VectorXd bias;    // out_channels

    int out_height() const { return in_height - kernel_h + 1; }
    int out_width() const { return in_width - kernel_w + 1; }
    int input_size() const { return in_channels * in_height * in_width; }
    int output_size() const { return out_channels * out_height() * out_width(); }
    int patch_size() const { return in_channels * kernel_h * kernel_w; }
};

using TrunkLayer = std::variant<DenseLayer, ConvLayer>;

// Rectifier trunk shared by two logistic heads of K logits each.
struct Network {
    std::vector<TrunkLayer> trunk;
    DenseLayer head_global;
    DenseLayer head_local;
    int input_dim = 0;
    int topics = 0;
    LossKind loss_kind = LossKind::sigmoid_cross_entropy;
};

struct ConvSpec {
    int in_channels = 0, in_height = 0, in_width = 0;
    int out_channels = 0, kernel_h = 0, kernel_w = 0;
};

// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
Network make_mlp(int input_dim, const std::vector<int>& hidden_sizes, int topics,
                 std::uint64_t seed, LossKind loss_kind = LossKind::sigmoid_cross_entropy);
Network make_conv_net(const ConvSpec& conv, const std::vector<int>& hidden_sizes, int topics,
                      std::uint64_t seed, LossKind loss_kind = LossKind::sigmoid_cross_entropy);

struct ForwardCache {
    // activations[0] is the input batch; activations[i+1] is trunk layer i's
    // rectified output. Rows are samples.
    std::vector<Eigen::MatrixXd> activations;
    Eigen::MatrixXd global_out, local_out;  // head outputs in (0, 1)
};

ForwardCache forward(const Network& net, const Eigen::MatrixXd& batch);

// Mean over the batch of both heads' cross-entropy terms, log arguments
// clamped at 1e-12.
double loss(const Eigen::MatrixXd& global_out, const Eigen::MatrixXd& local_out,
            const Eigen::MatrixXd& targets_global, const Eigen::MatrixXd& targets_local,
            LossKind kind = LossKind::sigmoid_cross_entropy);

// One head's contribution (used for the per-head training log).
double head_loss(const Eigen::MatrixXd& out, const Eigen::MatrixXd& targets,
                 LossKind kind = LossKind::sigmoid_cross_entropy);

// Parameter gradients in trunk order followed by the global then local head.
struct Gradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
};

Gradients backward(const Network& net, const ForwardCache& cache,
                   const Eigen::MatrixXd& targets_global, const Eigen::MatrixXd& targets_local);

struct OptimizerState {
    double base_learning_rate = defaults::base_learning_rate;
    double decay_factor = defaults::lr_decay_factor;
    long long decay_every = defaults::lr_decay_every;
    double momentum = defaults::momentum;
    std::vector<Eigen::MatrixXd> velocity_w;
    std::vector<Eigen::VectorXd> velocity_b;
    long long iteration = 0;

    double learning_rate() const {
        return learning_rate_at(iteration);
    }
    double learning_rate_at(long long iter) const {
        double lr = base_learning_rate;
        for (long long i = iter / decay_every; i > 0; --i) lr *= decay_factor;
        return lr;
    }
};

OptimizerState make_optimizer(const Network& net,
                              double base_learning_rate = defaults::base_learning_rate,
                              double decay_factor = defaults::lr_decay_factor,
                              long long decay_every = defaults::lr_decay_every,
                              double momentum = defaults::momentum);

// v <- momentum * v - lr(iteration) * g; param <- param + v; then the
// iteration counter advances.
void sgd_step(Network& net, const Gradients& grads, OptimizerState& opt);

// Max over parameters of |analytic - central difference| normalized by
// max(|analytic|, |numeric|, 1e-8).
double grad_check(const Network& net, const Eigen::MatrixXd& batch,
                  const Eigen::MatrixXd& targets_global, const Eigen::MatrixXd& targets_local,
                  double epsilon);

// Binary portable pixmap (P6, maxval 255) as a channel-interleaved row-major
// vector scaled to [0, 1].
Eigen::VectorXd read_ppm(const std::string& path);

// Versioned checkpoint: architecture, parameters, optimizer state.
void save_checkpoint(const Network& net, const OptimizerState& opt, const std::string& path);
struct Checkpoint {
    Network net;
    OptimizerState opt;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace cmr

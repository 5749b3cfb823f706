#include "cmr/nnet.hpp"

#include <cmath>
#include <fstream>

#include "cmr/rng.hpp"
#include "cmr/serial.hpp"

namespace cmr {

namespace {

constexpr char checkpoint_magic[8] = {'C', 'M', 'R', 'N', 'N', 'E', 'T', '1'};
constexpr std::uint32_t checkpoint_version = 1;
constexpr double log_floor = 1e-12;

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

int layer_input_size(const TrunkLayer& layer) {
    return std::visit(
        [](const auto& l) -> int {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, DenseLayer>) return static_cast<int>(l.weight.cols());
            else return l.input_size();
        },
        layer);
}

int layer_output_size(const TrunkLayer& layer) {
    return std::visit(
        [](const auto& l) -> int {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, DenseLayer>) return static_cast<int>(l.weight.rows());
            else return l.output_size();
        },
        layer);
}

DenseLayer init_dense(int in, int out, Rng& rng) {
    DenseLayer layer;
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    layer.weight.resize(out, in);
    for (Eigen::Index r = 0; r < out; ++r)
        for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = (2.0 * rng.uniform() - 1.0) * limit;
    layer.bias = Eigen::VectorXd::Zero(out);
    return layer;
}

Eigen::MatrixXd dense_forward(const DenseLayer& layer, const Eigen::MatrixXd& input) {
    return (input * layer.weight.transpose()).rowwise() + layer.bias.transpose();
}

// Patch matrix for one sample: rows are output positions, columns the
// flattened receptive field.
Eigen::MatrixXd im2col(const ConvLayer& conv, const Eigen::VectorXd& sample) {
    const int oh = conv.out_height(), ow = conv.out_width();
    Eigen::MatrixXd patches(oh * ow, conv.patch_size());
    for (int oi = 0; oi < oh; ++oi) {
        for (int oj = 0; oj < ow; ++oj) {
            const int pos = oi * ow + oj;
            int col = 0;
            for (int c = 0; c < conv.in_channels; ++c) {
                for (int ki = 0; ki < conv.kernel_h; ++ki) {
                    for (int kj = 0; kj < conv.kernel_w; ++kj) {
                        patches(pos, col++) =
                            sample[c * conv.in_height * conv.in_width + (oi + ki) * conv.in_width +
                                   (oj + kj)];
                    }
                }
            }
        }
    }
    return patches;
}

Eigen::MatrixXd conv_forward(const ConvLayer& conv, const Eigen::MatrixXd& input) {
    const int n_pos = conv.out_height() * conv.out_width();
    Eigen::MatrixXd out(input.rows(), conv.output_size());
    for (Eigen::Index s = 0; s < input.rows(); ++s) {
        const Eigen::MatrixXd patches = im2col(conv, input.row(s).transpose());
        const Eigen::MatrixXd y = patches * conv.weight.transpose();  // n_pos x out_channels
        for (int oc = 0; oc < conv.out_channels; ++oc) {
            for (int pos = 0; pos < n_pos; ++pos) {
                out(s, oc * n_pos + pos) = y(pos, oc) + conv.bias[oc];
            }
        }
    }
    return out;
}

void conv_backward(const ConvLayer& conv, const Eigen::MatrixXd& input,
                   const Eigen::MatrixXd& delta, Eigen::MatrixXd& grad_w, Eigen::VectorXd& grad_b,
                   Eigen::MatrixXd& grad_input) {
    const int n_pos = conv.out_height() * conv.out_width();
    grad_w = Eigen::MatrixXd::Zero(conv.weight.rows(), conv.weight.cols());
    grad_b = Eigen::VectorXd::Zero(conv.out_channels);
    grad_input = Eigen::MatrixXd::Zero(input.rows(), input.cols());

    Eigen::MatrixXd dy(n_pos, conv.out_channels);
    for (Eigen::Index s = 0; s < input.rows(); ++s) {
        for (int oc = 0; oc < conv.out_channels; ++oc) {
            for (int pos = 0; pos < n_pos; ++pos) dy(pos, oc) = delta(s, oc * n_pos + pos);
        }
        const Eigen::MatrixXd patches = im2col(conv, input.row(s).transpose());
        grad_w.noalias() += dy.transpose() * patches;
        grad_b += dy.colwise().sum().transpose();

        const Eigen::MatrixXd dpatches = dy * conv.weight;  // n_pos x patch_size
        const int oh = conv.out_height(), ow = conv.out_width();
        for (int oi = 0; oi < oh; ++oi) {
            for (int oj = 0; oj < ow; ++oj) {
                const int pos = oi * ow + oj;
                int col = 0;
                for (int c = 0; c < conv.in_channels; ++c) {
                    for (int ki = 0; ki < conv.kernel_h; ++ki) {
                        for (int kj = 0; kj < conv.kernel_w; ++kj) {
                            grad_input(s, c * conv.in_height * conv.in_width +
                                              (oi + ki) * conv.in_width + (oj + kj)) +=
                                dpatches(pos, col++);
                        }
                    }
                }
            }
        }
    }
}

Eigen::MatrixXd apply_output(const Eigen::MatrixXd& logits, LossKind kind) {
    if (kind == LossKind::sigmoid_cross_entropy) {
        return logits.unaryExpr([](double x) { return sigmoid(x); });
    }
    Eigen::MatrixXd out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double m = logits.row(r).maxCoeff();
        const Eigen::RowVectorXd e = (logits.row(r).array() - m).exp().matrix();
        out.row(r) = e / e.sum();
    }
    return out;
}

struct ParamView {
    double* data;
    Eigen::Index size;
};

void append_layer_views(DenseLayer& l, std::vector<ParamView>& weights,
                        std::vector<ParamView>& biases) {
    weights.push_back({l.weight.data(), l.weight.size()});
    biases.push_back({l.bias.data(), l.bias.size()});
}

// Parameter arrays in Gradients order: trunk layers front to back, then the
// global and local heads.
void collect_param_views(Network& net, std::vector<ParamView>& weights,
                         std::vector<ParamView>& biases) {
    for (auto& layer : net.trunk) {
        std::visit(
            [&](auto& l) {
                weights.push_back({l.weight.data(), l.weight.size()});
                biases.push_back({l.bias.data(), l.bias.size()});
            },
            layer);
    }
    append_layer_views(net.head_global, weights, biases);
    append_layer_views(net.head_local, weights, biases);
}

}  // namespace

Network make_mlp(int input_dim, const std::vector<int>& hidden_sizes, int topics,
                 std::uint64_t seed, LossKind loss_kind) {
    if (input_dim < 1 || topics < 1) throw InvalidDimension("network needs input_dim, K >= 1");
    Rng rng(seed);
    Network net;
    net.input_dim = input_dim;
    net.topics = topics;
    net.loss_kind = loss_kind;
    int width = input_dim;
    for (int h : hidden_sizes) {
        if (h < 1) throw InvalidDimension("hidden layer width must be >= 1");
        net.trunk.emplace_back(init_dense(width, h, rng));
        width = h;
    }
    net.head_global = init_dense(width, topics, rng);
    net.head_local = init_dense(width, topics, rng);
    return net;
}

Network make_conv_net(const ConvSpec& spec, const std::vector<int>& hidden_sizes, int topics,
                      std::uint64_t seed, LossKind loss_kind) {
    ConvLayer conv;
    conv.in_channels = spec.in_channels;
    conv.in_height = spec.in_height;
    conv.in_width = spec.in_width;
    conv.out_channels = spec.out_channels;
    conv.kernel_h = spec.kernel_h;
    conv.kernel_w = spec.kernel_w;
    if (conv.in_channels < 1 || conv.out_channels < 1 || conv.kernel_h < 1 || conv.kernel_w < 1 ||
        conv.out_height() < 1 || conv.out_width() < 1) {
        throw InvalidDimension("convolution extents do not chain");
    }

    Rng rng(seed);
    const int fan_in = conv.patch_size();
    const int fan_out = conv.out_channels * conv.kernel_h * conv.kernel_w;
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    conv.weight.resize(conv.out_channels, conv.patch_size());
    for (Eigen::Index r = 0; r < conv.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < conv.weight.cols(); ++c)
            conv.weight(r, c) = (2.0 * rng.uniform() - 1.0) * limit;
    conv.bias = Eigen::VectorXd::Zero(conv.out_channels);

    Network net;
    net.input_dim = conv.input_size();
    net.topics = topics;
    net.loss_kind = loss_kind;
    int width = conv.output_size();
    net.trunk.emplace_back(std::move(conv));
    for (int h : hidden_sizes) {
        if (h < 1) throw InvalidDimension("hidden layer width must be >= 1");
        net.trunk.emplace_back(init_dense(width, h, rng));
        width = h;
    }
    net.head_global = init_dense(width, topics, rng);
    net.head_local = init_dense(width, topics, rng);
    return net;
}

ForwardCache forward(const Network& net, const Eigen::MatrixXd& batch) {
    if (batch.cols() != net.input_dim) {
        throw DimensionMismatch("forward: batch has " + std::to_string(batch.cols()) +
                                " columns, network expects " + std::to_string(net.input_dim));
    }
    ForwardCache cache;
    cache.activations.reserve(net.trunk.size() + 1);
    cache.activations.push_back(batch);
    for (const auto& layer : net.trunk) {
        const Eigen::MatrixXd& input = cache.activations.back();
        if (input.cols() != layer_input_size(layer)) {
            throw DimensionMismatch("forward: trunk layer dimensions do not chain");
        }
        Eigen::MatrixXd pre = std::visit(
            [&](const auto& l) -> Eigen::MatrixXd {
                using T = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<T, DenseLayer>) return dense_forward(l, input);
                else return conv_forward(l, input);
            },
            layer);
        cache.activations.push_back(pre.cwiseMax(0.0));
    }
    const Eigen::MatrixXd& top = cache.activations.back();
    if (top.cols() != net.head_global.weight.cols() || top.cols() != net.head_local.weight.cols()) {
        throw DimensionMismatch("forward: head dimensions do not chain");
    }
    cache.global_out = apply_output(dense_forward(net.head_global, top), net.loss_kind);
    cache.local_out = apply_output(dense_forward(net.head_local, top), net.loss_kind);
    return cache;
}

double head_loss(const Eigen::MatrixXd& out, const Eigen::MatrixXd& targets, LossKind kind) {
    if (out.rows() != targets.rows() || out.cols() != targets.cols()) {
        throw DimensionMismatch("loss: outputs and targets disagree in shape");
    }
    const auto o = out.array();
    const auto t = targets.array();
    double total;
    if (kind == LossKind::sigmoid_cross_entropy) {
        total = (-t * o.max(log_floor).log() - (1.0 - t) * (1.0 - o).max(log_floor).log()).sum();
    } else {
        total = (-t * o.max(log_floor).log()).sum();
    }
    return total / static_cast<double>(out.rows());
}

double loss(const Eigen::MatrixXd& global_out, const Eigen::MatrixXd& local_out,
            const Eigen::MatrixXd& targets_global, const Eigen::MatrixXd& targets_local,
            LossKind kind) {
    const double total = head_loss(global_out, targets_global, kind) +
                         head_loss(local_out, targets_local, kind);
    if (!std::isfinite(total)) throw NonFiniteLoss("loss is not finite");
    return total;
}

Gradients backward(const Network& net, const ForwardCache& cache,
                   const Eigen::MatrixXd& targets_global, const Eigen::MatrixXd& targets_local) {
    const Eigen::MatrixXd& top = cache.activations.back();
    const auto n = static_cast<double>(top.rows());
    if (targets_global.rows() != top.rows() || targets_local.rows() != top.rows() ||
        targets_global.cols() != net.topics || targets_local.cols() != net.topics) {
        throw DimensionMismatch("backward: target shapes do not match the batch");
    }

    Gradients grads;
    grads.weights.resize(net.trunk.size() + 2);
    grads.biases.resize(net.trunk.size() + 2);

    // Both output forms reduce to (output - target) / n at the logits.
    const Eigen::MatrixXd d_global = (cache.global_out - targets_global) / n;
    const Eigen::MatrixXd d_local = (cache.local_out - targets_local) / n;

    const std::size_t gi = net.trunk.size();
    grads.weights[gi] = d_global.transpose() * top;
    grads.biases[gi] = d_global.colwise().sum().transpose();
    grads.weights[gi + 1] = d_local.transpose() * top;
    grads.biases[gi + 1] = d_local.colwise().sum().transpose();

    Eigen::MatrixXd delta =
        d_global * net.head_global.weight + d_local * net.head_local.weight;

    for (std::size_t i = net.trunk.size(); i-- > 0;) {
        // Through the rectifier of layer i.
        delta = delta.cwiseProduct(
            (cache.activations[i + 1].array() > 0.0).cast<double>().matrix());
        const Eigen::MatrixXd& input = cache.activations[i];
        std::visit(
            [&](const auto& l) {
                using T = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<T, DenseLayer>) {
                    grads.weights[i] = delta.transpose() * input;
                    grads.biases[i] = delta.colwise().sum().transpose();
                    delta = delta * l.weight;
                } else {
                    Eigen::MatrixXd grad_input;
                    conv_backward(l, input, delta, grads.weights[i], grads.biases[i], grad_input);
                    delta = std::move(grad_input);
                }
            },
            net.trunk[i]);
    }
    return grads;
}

OptimizerState make_optimizer(const Network& net, double base_learning_rate, double decay_factor,
                              long long decay_every, double momentum) {
    if (decay_every < 1) throw InvalidHyperparameter("decay_every must be >= 1");
    OptimizerState opt;
    opt.base_learning_rate = base_learning_rate;
    opt.decay_factor = decay_factor;
    opt.decay_every = decay_every;
    opt.momentum = momentum;
    opt.velocity_w.reserve(net.trunk.size() + 2);
    opt.velocity_b.reserve(net.trunk.size() + 2);
    for (std::size_t i = 0; i < net.trunk.size(); ++i) {
        std::visit(
            [&](const auto& l) {
                opt.velocity_w.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
                opt.velocity_b.push_back(Eigen::VectorXd::Zero(l.bias.size()));
            },
            net.trunk[i]);
    }
    opt.velocity_w.push_back(
        Eigen::MatrixXd::Zero(net.head_global.weight.rows(), net.head_global.weight.cols()));
    opt.velocity_b.push_back(Eigen::VectorXd::Zero(net.head_global.bias.size()));
    opt.velocity_w.push_back(
        Eigen::MatrixXd::Zero(net.head_local.weight.rows(), net.head_local.weight.cols()));
    opt.velocity_b.push_back(Eigen::VectorXd::Zero(net.head_local.bias.size()));
    return opt;
}

void sgd_step(Network& net, const Gradients& grads, OptimizerState& opt) {
    std::vector<ParamView> weights, biases;
    collect_param_views(net, weights, biases);
    if (grads.weights.size() != weights.size() || opt.velocity_w.size() != weights.size()) {
        throw DimensionMismatch("sgd_step: gradient/velocity layout does not match the network");
    }
    const double lr = opt.learning_rate();
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (grads.weights[i].size() != weights[i].size ||
            grads.biases[i].size() != biases[i].size) {
            throw DimensionMismatch("sgd_step: gradient shapes do not match the network");
        }
        opt.velocity_w[i] = opt.momentum * opt.velocity_w[i] - lr * grads.weights[i];
        opt.velocity_b[i] = opt.momentum * opt.velocity_b[i] - lr * grads.biases[i];
        Eigen::Map<Eigen::VectorXd>(weights[i].data, weights[i].size) +=
            Eigen::Map<const Eigen::VectorXd>(opt.velocity_w[i].data(), opt.velocity_w[i].size());
        Eigen::Map<Eigen::VectorXd>(biases[i].data, biases[i].size) +=
            Eigen::Map<const Eigen::VectorXd>(opt.velocity_b[i].data(), opt.velocity_b[i].size());
    }
    ++opt.iteration;
}

double grad_check(const Network& net, const Eigen::MatrixXd& batch,
                  const Eigen::MatrixXd& targets_global, const Eigen::MatrixXd& targets_local,
                  double epsilon) {
    if (!(epsilon > 0.0)) throw InvalidHyperparameter("epsilon must be positive");

    Network work = net;
    const ForwardCache cache = forward(work, batch);
    const Gradients analytic = backward(work, cache, targets_global, targets_local);

    std::vector<ParamView> weights, biases;
    collect_param_views(work, weights, biases);

    const auto loss_at = [&]() {
        const ForwardCache c = forward(work, batch);
        return loss(c.global_out, c.local_out, targets_global, targets_local, work.loss_kind);
    };

    double max_rel = 0.0;
    const auto check_array = [&](const ParamView& view, const double* analytic_data) {
        for (Eigen::Index j = 0; j < view.size; ++j) {
            const double saved = view.data[j];
            view.data[j] = saved + epsilon;
            const double plus = loss_at();
            view.data[j] = saved - epsilon;
            const double minus = loss_at();
            view.data[j] = saved;
            const double numeric = (plus - minus) / (2.0 * epsilon);
            const double a = analytic_data[j];
            const double rel =
                std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
            max_rel = std::max(max_rel, rel);
        }
    };
    for (std::size_t i = 0; i < weights.size(); ++i) {
        check_array(weights[i], analytic.weights[i].data());
        check_array(biases[i], analytic.biases[i].data());
    }
    return max_rel;
}

Eigen::VectorXd read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);

    const auto next_token = [&]() -> std::string {
        std::string tok;
        int c;
        while ((c = in.get()) != EOF) {
            if (c == '#') {
                while ((c = in.get()) != EOF && c != '\n') {
                }
                continue;
            }
            if (std::isspace(c)) {
                if (!tok.empty()) break;
                continue;
            }
            tok.push_back(static_cast<char>(c));
        }
        return tok;
    };

    if (next_token() != "P6") throw UnsupportedFormat(path + ": not a binary portable pixmap");
    int width = 0, height = 0, maxval = 0;
    try {
        width = std::stoi(next_token());
        height = std::stoi(next_token());
        maxval = std::stoi(next_token());
    } catch (const std::exception&) {
        throw UnsupportedFormat(path + ": malformed pixmap header");
    }
    if (width < 1 || height < 1) throw UnsupportedFormat(path + ": bad pixmap extents");
    if (maxval != 255) {
        throw UnsupportedFormat(path + ": only maxval 255 is supported, got " +
                                std::to_string(maxval));
    }

    const std::size_t n = static_cast<std::size_t>(width) * height * 3;
    std::string bytes(n, '\0');
    in.read(bytes.data(), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
        throw TruncatedFile(path + ": pixel data ends early");
    }

    Eigen::VectorXd pixels(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        pixels[static_cast<Eigen::Index>(i)] = static_cast<unsigned char>(bytes[i]) / 255.0;
    }
    return pixels;
}

namespace {

void write_dense(BinaryWriter& out, const DenseLayer& l) {
    out.matrix(l.weight);
    out.vector(l.bias);
}

DenseLayer read_dense(BinaryReader& in) {
    DenseLayer l;
    l.weight = in.matrix();
    l.bias = in.vector();
    return l;
}

}  // namespace

void save_checkpoint(const Network& net, const OptimizerState& opt, const std::string& path) {
    BinaryWriter out(path);
    out.magic(checkpoint_magic);
    out.u32(checkpoint_version);
    out.u8(static_cast<std::uint8_t>(net.loss_kind));
    out.i64(net.input_dim);
    out.i64(net.topics);
    out.u64(net.trunk.size());
    for (const auto& layer : net.trunk) {
        std::visit(
            [&](const auto& l) {
                using T = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<T, DenseLayer>) {
                    out.u8(0);
                    write_dense(out, l);
                } else {
                    out.u8(1);
                    out.i64(l.in_channels);
                    out.i64(l.in_height);
                    out.i64(l.in_width);
                    out.i64(l.out_channels);
                    out.i64(l.kernel_h);
                    out.i64(l.kernel_w);
                    out.matrix(l.weight);
                    out.vector(l.bias);
                }
            },
            layer);
    }
    write_dense(out, net.head_global);
    write_dense(out, net.head_local);

    out.f64(opt.base_learning_rate);
    out.f64(opt.decay_factor);
    out.i64(opt.decay_every);
    out.f64(opt.momentum);
    out.i64(opt.iteration);
    out.u64(opt.velocity_w.size());
    for (std::size_t i = 0; i < opt.velocity_w.size(); ++i) {
        out.matrix(opt.velocity_w[i]);
        out.vector(opt.velocity_b[i]);
    }
    out.close();
}

Checkpoint load_checkpoint(const std::string& path) {
    BinaryReader in(path);
    in.expect_magic(checkpoint_magic);
    const auto version = in.u32();
    if (version != checkpoint_version) {
        throw UnsupportedFormat(path + ": unsupported checkpoint version " +
                                std::to_string(version));
    }
    Checkpoint ck;
    ck.net.loss_kind = static_cast<LossKind>(in.u8());
    ck.net.input_dim = static_cast<int>(in.i64());
    ck.net.topics = static_cast<int>(in.i64());
    const auto n_trunk = in.u64();
    for (std::uint64_t i = 0; i < n_trunk; ++i) {
        const auto type = in.u8();
        if (type == 0) {
            ck.net.trunk.emplace_back(read_dense(in));
        } else if (type == 1) {
            ConvLayer l;
            l.in_channels = static_cast<int>(in.i64());
            l.in_height = static_cast<int>(in.i64());
            l.in_width = static_cast<int>(in.i64());
            l.out_channels = static_cast<int>(in.i64());
            l.kernel_h = static_cast<int>(in.i64());
            l.kernel_w = static_cast<int>(in.i64());
            l.weight = in.matrix();
            l.bias = in.vector();
            ck.net.trunk.emplace_back(std::move(l));
        } else {
            throw UnsupportedFormat(path + ": unknown layer type " + std::to_string(type));
        }
    }
    ck.net.head_global = read_dense(in);
    ck.net.head_local = read_dense(in);

    ck.opt.base_learning_rate = in.f64();
    ck.opt.decay_factor = in.f64();
    ck.opt.decay_every = in.i64();
    ck.opt.momentum = in.f64();
    ck.opt.iteration = in.i64();
    const auto n_vel = in.u64();
    for (std::uint64_t i = 0; i < n_vel; ++i) {
        ck.opt.velocity_w.push_back(in.matrix());
        ck.opt.velocity_b.push_back(in.vector());
    }
    return ck;
}

}  // namespace cmr

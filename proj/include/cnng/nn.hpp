#pragma once

// Dense feedforward networks: ReLU hidden layers, softmax output,
// cross-entropy loss and plain mini-batch SGD. Everything is double
// precision and single-threaded so that a seed pins the result bit for bit.

#include "cnng/dataset.hpp"
#include "cnng/error.hpp"
#include "cnng/matrix.hpp"
#include "cnng/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

namespace cnng {

enum class Activation : std::uint8_t { ReLU = 0, Softmax = 1 };

struct LayerSpec {
    std::size_t input_dim = 0;
    std::size_t output_dim = 0;
    Activation activation = Activation::ReLU;
};

struct Layer {
    Matrix weights; // output_dim x input_dim
    std::vector<double> bias;
    Activation activation = Activation::ReLU;

    std::size_t input_dim() const noexcept { return weights.cols(); }
    std::size_t output_dim() const noexcept { return weights.rows(); }

    friend bool operator==(const Layer&, const Layer&) = default;
};

class FeedforwardNetwork {
public:
    FeedforwardNetwork() = default;

    explicit FeedforwardNetwork(std::vector<Layer> layers) : layers_(std::move(layers)) { validate(); }

    std::size_t input_dim() const noexcept { return layers_.empty() ? 0 : layers_.front().input_dim(); }
    std::size_t num_classes() const noexcept { return layers_.empty() ? 0 : layers_.back().output_dim(); }
    std::size_t num_parameters() const noexcept
    {
        std::size_t n = 0;
        for (const auto& l : layers_)
            n += l.weights.size() + l.bias.size();
        return n;
    }

    std::span<const Layer> layers() const noexcept { return layers_; }
    std::span<Layer> layers() noexcept { return layers_; }

    std::vector<LayerSpec> specs() const
    {
        std::vector<LayerSpec> out;
        for (const auto& l : layers_)
            out.push_back({l.input_dim(), l.output_dim(), l.activation});
        return out;
    }

    friend bool operator==(const FeedforwardNetwork&, const FeedforwardNetwork&) = default;

private:
    void validate() const
    {
        detail::require(!layers_.empty(), ErrorCode::EmptyInput, "network has no layers");
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const auto& l = layers_[i];
            detail::require(l.bias.size() == l.output_dim(), ErrorCode::DimensionMismatch,
                            "bias length must equal layer output dimension");
            if (i + 1 < layers_.size()) {
                detail::require(l.activation == Activation::ReLU, ErrorCode::InvalidArgument,
                                "softmax is only allowed on the final layer");
                detail::require(l.output_dim() == layers_[i + 1].input_dim(), ErrorCode::DimensionMismatch,
                                "consecutive layer dimensions do not chain");
            }
        }
        detail::require(layers_.back().activation == Activation::Softmax, ErrorCode::InvalidArgument,
                        "final layer must use softmax");
    }

    std::vector<Layer> layers_;
};

struct TrainConfig {
    double learning_rate = 0.1;
    std::size_t batch_size = 32;
    std::size_t epochs = 1;
    std::uint64_t seed = 42;
    bool shuffle = true;

    void validate() const
    {
        detail::require(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorCode::InvalidArgument,
                        "learning_rate must be positive");
        detail::require(batch_size >= 1, ErrorCode::InvalidArgument, "batch_size must be at least 1");
        detail::require(epochs >= 1, ErrorCode::InvalidArgument, "epochs must be at least 1");
    }
};

/// Same shapes as the network's parameters.
struct Gradients {
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;

    static Gradients zeros_like(const FeedforwardNetwork& net)
    {
        Gradients g;
        for (const auto& l : net.layers()) {
            g.weights.emplace_back(l.output_dim(), l.input_dim());
            g.biases.emplace_back(l.output_dim(), 0.0);
        }
        return g;
    }
};

struct LossAndGradient {
    double loss = 0.0; // mean cross-entropy over the batch
    Gradients gradients;
};

/// Standard layer widths: input, hidden..., classes.
inline std::vector<LayerSpec> mlp_specs(std::span<const std::size_t> widths)
{
    detail::require(widths.size() >= 2, ErrorCode::InvalidArgument, "need at least input and output widths");
    std::vector<LayerSpec> specs;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        const bool last = i + 2 == widths.size();
        specs.push_back({widths[i], widths[i + 1], last ? Activation::Softmax : Activation::ReLU});
    }
    return specs;
}

/// Weights ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)), drawn layer by layer in
/// row-major order; biases zero.
inline FeedforwardNetwork init_network(std::span<const LayerSpec> specs, std::uint64_t seed)
{
    detail::require(!specs.empty(), ErrorCode::EmptyInput, "layer spec list is empty");
    Rng rng(seed);
    std::vector<Layer> layers;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& s = specs[i];
        detail::require(s.input_dim >= 1 && s.output_dim >= 1, ErrorCode::InvalidArgument,
                        "layer dimensions must be positive");
        if (i > 0)
            detail::require(specs[i - 1].output_dim == s.input_dim, ErrorCode::DimensionMismatch,
                            "consecutive layer specs do not chain");
        Layer layer{Matrix(s.output_dim, s.input_dim), std::vector<double>(s.output_dim, 0.0), s.activation};
        const double bound = std::sqrt(6.0 / static_cast<double>(s.input_dim));
        for (auto& w : layer.weights.values())
            w = rng.uniform(-bound, bound);
        layers.push_back(std::move(layer));
    }
    return FeedforwardNetwork(std::move(layers));
}

namespace detail {

inline void softmax_inplace(std::span<double> z)
{
    const double m = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (auto& v : z) {
        v = std::exp(v - m);
        sum += v;
    }
    for (auto& v : z)
        v /= sum;
}

inline void nonzero_indices(std::span<const double> a, std::vector<std::uint32_t>& out)
{
    out.clear();
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] != 0.0)
            out.push_back(static_cast<std::uint32_t>(i));
}

// Scratch space for one example's forward/backward pass. Activations are
// sparse (pixels and ReLU outputs), so products skip zero inputs; the
// summation order is fixed, which keeps results reproducible.
struct Workspace {
    std::vector<std::vector<double>> act;           // act[0] = input, act[l+1] = output of layer l
    std::vector<std::vector<std::uint32_t>> nz;     // nonzero indices of act[l]
    std::vector<double> logits;
    std::vector<double> delta;
    std::vector<double> delta_prev;

    explicit Workspace(const FeedforwardNetwork& net)
    {
        act.resize(net.layers().size() + 1);
        nz.resize(net.layers().size());
        act[0].resize(net.input_dim());
        for (std::size_t l = 0; l < net.layers().size(); ++l)
            act[l + 1].resize(net.layers()[l].output_dim());
    }
};

inline void check_input(const FeedforwardNetwork& net, std::span<const double> x)
{
    require(x.size() == net.input_dim(), ErrorCode::DimensionMismatch,
            "input length does not match network input dimension");
}

// Fills ws.act; the last entry holds probabilities and ws.logits the
// pre-softmax values.
inline void forward_into(const FeedforwardNetwork& net, std::span<const double> x, Workspace& ws)
{
    std::copy(x.begin(), x.end(), ws.act[0].begin());
    const auto layers = net.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const Layer& layer = layers[l];
        const auto& in = ws.act[l];
        auto& out = ws.act[l + 1];
        nonzero_indices(in, ws.nz[l]);
        const auto& nz = ws.nz[l];
        for (std::size_t o = 0; o < layer.output_dim(); ++o) {
            const double* w = layer.weights.row(o).data();
            double acc = layer.bias[o];
            for (auto i : nz)
                acc += w[i] * in[i];
            out[o] = acc;
        }
        if (layer.activation == Activation::ReLU) {
            for (auto& v : out)
                v = v > 0.0 ? v : 0.0;
        } else {
            ws.logits.assign(out.begin(), out.end());
            softmax_inplace(out);
        }
    }
}

inline double cross_entropy_from_logits(std::span<const double> logits, std::uint32_t label)
{
    const double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (auto z : logits)
        sum += std::exp(z - m);
    return -(logits[label] - m - std::log(sum));
}

// Adds this example's gradient into `grad` and returns its loss.
inline double accumulate_example(const FeedforwardNetwork& net, std::span<const double> x, std::uint32_t label,
                                 Workspace& ws, Gradients& grad)
{
    forward_into(net, x, ws);
    const auto layers = net.layers();
    const std::size_t L = layers.size();
    const double loss = cross_entropy_from_logits(ws.logits, label);

    const auto& probs = ws.act[L];
    ws.delta.assign(probs.begin(), probs.end());
    ws.delta[label] -= 1.0;

    for (std::size_t l = L; l-- > 0;) {
        const Layer& layer = layers[l];
        const auto& in = ws.act[l];
        const auto& nz = ws.nz[l];
        auto& gw = grad.weights[l];
        auto& gb = grad.biases[l];
        for (std::size_t o = 0; o < layer.output_dim(); ++o) {
            const double d = ws.delta[o];
            gb[o] += d;
            if (d == 0.0)
                continue;
            double* g = gw.row(o).data();
            for (auto i : nz)
                g[i] += d * in[i];
        }
        if (l == 0)
            break;
        // Back through W, then through the previous layer's ReLU. Only
        // positive activations carry gradient, and those are exactly nz.
        ws.delta_prev.assign(layer.input_dim(), 0.0);
        for (std::size_t o = 0; o < layer.output_dim(); ++o) {
            const double d = ws.delta[o];
            if (d == 0.0)
                continue;
            const double* w = layer.weights.row(o).data();
            for (auto i : nz)
                ws.delta_prev[i] += w[i] * d;
        }
        ws.delta.swap(ws.delta_prev);
    }
    return loss;
}

inline void zero(Gradients& g)
{
    for (auto& m : g.weights)
        std::fill(m.values().begin(), m.values().end(), 0.0);
    for (auto& b : g.biases)
        std::fill(b.begin(), b.end(), 0.0);
}

// Mean over the batch: sums per example, then scales once.
inline double batch_gradient(const FeedforwardNetwork& net, const Dataset& data,
                             std::span<const std::size_t> rows, Workspace& ws, Gradients& grad)
{
    zero(grad);
    double loss = 0.0;
    for (auto r : rows)
        loss += accumulate_example(net, data.input(r), data.label(r), ws, grad);
    const double scale = 1.0 / static_cast<double>(rows.size());
    for (auto& m : grad.weights)
        for (auto& v : m.values())
            v *= scale;
    for (auto& b : grad.biases)
        for (auto& v : b)
            v *= scale;
    return loss * scale;
}

inline void check_dataset(const FeedforwardNetwork& net, const Dataset& data)
{
    require(data.dim() == net.input_dim(), ErrorCode::DimensionMismatch,
            "dataset dimension does not match network input dimension");
    require(data.num_classes() <= net.num_classes(), ErrorCode::OutOfRange,
            "dataset has more classes than the network outputs");
}

} // namespace detail

/// Class probabilities for one input.
inline std::vector<double> forward(const FeedforwardNetwork& net, std::span<const double> x)
{
    detail::check_input(net, x);
    detail::Workspace ws(net);
    detail::forward_into(net, x, ws);
    return ws.act.back();
}

/// Argmax of the probabilities; ties go to the lowest class id.
inline std::uint32_t argmax(std::span<const double> v) noexcept
{
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best])
            best = i;
    return static_cast<std::uint32_t>(best);
}

inline std::uint32_t predict(const FeedforwardNetwork& net, std::span<const double> x)
{
    return argmax(forward(net, x));
}

/// Mean cross-entropy and its gradient over the given rows of `data`.
inline LossAndGradient loss_and_gradient(const FeedforwardNetwork& net, const Dataset& data,
                                         std::span<const std::size_t> rows)
{
    detail::require(!rows.empty(), ErrorCode::EmptyInput, "batch is empty");
    detail::require(data.dim() == net.input_dim(), ErrorCode::DimensionMismatch,
                    "batch dimension does not match network input dimension");
    for (auto r : rows) {
        detail::require(r < data.size(), ErrorCode::OutOfRange, "batch row out of range");
        detail::require(data.label(r) < net.num_classes(), ErrorCode::OutOfRange, "label out of range");
    }
    LossAndGradient out{0.0, Gradients::zeros_like(net)};
    detail::Workspace ws(net);
    out.loss = detail::batch_gradient(net, data, rows, ws, out.gradients);
    return out;
}

inline LossAndGradient loss_and_gradient(const FeedforwardNetwork& net, const Dataset& batch)
{
    std::vector<std::size_t> rows(batch.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return loss_and_gradient(net, batch, rows);
}

/// w <- w - lr * g for every parameter.
inline void sgd_step(FeedforwardNetwork& net, const Gradients& g, double lr)
{
    auto layers = net.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        auto w = layers[l].weights.values();
        auto gw = g.weights[l].values();
        for (std::size_t i = 0; i < w.size(); ++i)
            w[i] -= lr * gw[i];
        auto& b = layers[l].bias;
        for (std::size_t i = 0; i < b.size(); ++i)
            b[i] -= lr * g.biases[l][i];
    }
}

struct TrainLog {
    std::size_t sgd_steps = 0;
    std::vector<double> epoch_mean_batch_loss;
};

/// Mini-batch SGD. Each epoch optionally shuffles with a permutation derived
/// from (seed, epoch); the final batch may be short.
inline FeedforwardNetwork train(FeedforwardNetwork net, const Dataset& data, const TrainConfig& config,
                                TrainLog* log = nullptr)
{
    config.validate();
    detail::require(!data.empty(), ErrorCode::EmptyInput, "training set is empty");
    detail::check_dataset(net, data);

    detail::Workspace ws(net);
    Gradients grad = Gradients::zeros_like(net);
    std::vector<std::size_t> order(data.size());
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        if (config.shuffle)
            order = permutation(data.size(), derive_seed(config.seed, epoch));
        else
            std::iota(order.begin(), order.end(), std::size_t{0});
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t len = std::min(config.batch_size, order.size() - start);
            const std::span<const std::size_t> rows(order.data() + start, len);
            loss_sum += detail::batch_gradient(net, data, rows, ws, grad);
            sgd_step(net, grad, config.learning_rate);
            ++batches;
        }
        if (log) {
            log->sgd_steps += batches;
            log->epoch_mean_batch_loss.push_back(loss_sum / static_cast<double>(batches));
        }
    }
    return net;
}

/// Mean cross-entropy over a whole dataset.
inline double mean_loss(const FeedforwardNetwork& net, const Dataset& data)
{
    detail::require(!data.empty(), ErrorCode::EmptyInput, "dataset is empty");
    detail::check_dataset(net, data);
    detail::Workspace ws(net);
    double sum = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        detail::forward_into(net, data.input(i), ws);
        sum += detail::cross_entropy_from_logits(ws.logits, data.label(i));
    }
    return sum / static_cast<double>(data.size());
}

/// Predicted class for every row, reusing one workspace.
inline std::vector<std::uint32_t> predict_all(const FeedforwardNetwork& net, const Dataset& data)
{
    detail::require(data.dim() == net.input_dim(), ErrorCode::DimensionMismatch,
                    "dataset dimension does not match network input dimension");
    detail::Workspace ws(net);
    std::vector<std::uint32_t> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        detail::forward_into(net, data.input(i), ws);
        out[i] = argmax(ws.act.back());
    }
    return out;
}

inline double accuracy(const FeedforwardNetwork& net, const Dataset& data)
{
    detail::require(!data.empty(), ErrorCode::EmptyInput, "dataset is empty");
    const auto pred = predict_all(net, data);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
        correct += pred[i] == data.label(i);
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

} // namespace cnng

#pragma once

// Fully-connected regression network f(x; theta) with ReLU hidden layers and a scalar
// identity output, plus the flattened parameter gradient g(x; theta) and an Adam trainer.
//
// Parameter order (the layout of `params()` and of every gradient vector): layer by layer from
// the input; within a layer of shape (in -> out) first the in*out weights stored input-major,
// weight[i * out + o] connecting input i to output o, then the out biases. For a single affine
// layer this is (w_0 .. w_{d-1}, b), so the gradient is (x, 1).

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "polyminer/claims.hpp"
#include "polyminer/error.hpp"
#include "polyminer/random.hpp"

namespace polyminer {

// Inputs are visited through their non-zero coordinates so multi-hot rows cost O(|drugs|).
template <typename F>
void for_each_nonzero(std::span<const double> x, F&& f) {
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] != 0.0) f(i, x[i]);
}

template <typename F>
void for_each_nonzero(const std::vector<double>& x, F&& f) {
    for_each_nonzero(std::span<const double>{x}, f);
}

template <typename F>
void for_each_nonzero(const DrugCombination& x, F&& f) {
    for (auto i : x.drugs()) f(static_cast<std::size_t>(i), 1.0);
}

template <typename F>
void for_each_nonzero(std::span<const std::uint8_t> x, F&& f) {
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] != 0) f(i, 1.0);
}

template <typename F>
void for_each_nonzero(const std::vector<std::uint8_t>& x, F&& f) {
    for_each_nonzero(std::span<const std::uint8_t>{x}, f);
}

inline std::size_t input_size(std::span<const double> x) { return x.size(); }
inline std::size_t input_size(std::span<const std::uint8_t> x) { return x.size(); }
inline std::size_t input_size(const std::vector<std::uint8_t>& x) { return x.size(); }
inline std::size_t input_size(const std::vector<double>& x) { return x.size(); }
inline std::size_t input_size(const DrugCombination& x) { return x.dim(); }

class NetworkState {
public:
    // Scratch buffers for one forward/backward pass. Reuse across calls to avoid allocation.
    struct Workspace {
        std::vector<std::vector<double>> pre;   // pre-activations per layer
        std::vector<std::vector<double>> post;  // activations per layer
        std::vector<double> delta;
        std::vector<double> delta_prev;
    };

    NetworkState() = default;

    // All parameters zero.
    explicit NetworkState(std::vector<std::size_t> layer_dims) : dims_(std::move(layer_dims)) {
        if (dims_.size() < 2) throw config_error("network needs at least an input and an output layer");
        if (dims_.back() != 1) throw config_error("network output width must be 1");
        for (auto w : dims_)
            if (w == 0) throw config_error("network layer widths must be positive");
        offsets_.resize(dims_.size());
        std::size_t m = 0;
        for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
            offsets_[l] = m;
            m += dims_[l] * dims_[l + 1] + dims_[l + 1];
        }
        offsets_.back() = m;
        theta_.assign(m, 0.0);
    }

    NetworkState(std::vector<std::size_t> layer_dims, std::vector<double> theta)
        : NetworkState(std::move(layer_dims)) {
        if (theta.size() != theta_.size()) throw dimension_error("network parameters", theta_.size(), theta.size());
        theta_ = std::move(theta);
    }

    // Weights and biases drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    template <typename Rng>
    static NetworkState random(std::vector<std::size_t> layer_dims, Rng& rng) {
        NetworkState net(std::move(layer_dims));
        for (std::size_t l = 0; l + 1 < net.dims_.size(); ++l) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(net.dims_[l]));
            std::uniform_real_distribution<double> u(-bound, bound);
            const std::size_t n = net.dims_[l] * net.dims_[l + 1] + net.dims_[l + 1];
            for (std::size_t k = 0; k < n; ++k) net.theta_[net.offsets_[l] + k] = u(rng);
        }
        return net;
    }

    const std::vector<std::size_t>& layer_dims() const noexcept { return dims_; }
    std::size_t input_dim() const noexcept { return dims_.empty() ? 0 : dims_.front(); }
    std::size_t param_count() const noexcept { return theta_.size(); }
    std::span<const double> params() const noexcept { return theta_; }
    std::span<double> params() noexcept { return theta_; }

    Workspace make_workspace() const {
        Workspace ws;
        const std::size_t layers = dims_.size() - 1;
        ws.pre.resize(layers);
        ws.post.resize(layers);
        for (std::size_t l = 0; l < layers; ++l) {
            ws.pre[l].assign(dims_[l + 1], 0.0);
            ws.post[l].assign(dims_[l + 1], 0.0);
        }
        const std::size_t widest = *std::max_element(dims_.begin(), dims_.end());
        ws.delta.assign(widest, 0.0);
        ws.delta_prev.assign(widest, 0.0);
        return ws;
    }

    template <typename Input>
    double forward(const Input& x, Workspace& ws) const {
        check_input(x);
        run_forward(x, ws);
        return ws.post.back()[0];
    }

    template <typename Input>
    double forward(const Input& x) const {
        auto ws = make_workspace();
        return forward(x, ws);
    }

    // grad += scale * d f(x) / d theta. Returns f(x).
    template <typename Input>
    double accumulate_gradient(const Input& x, double scale, std::span<double> grad, Workspace& ws) const {
        check_input(x);
        if (grad.size() != theta_.size()) throw dimension_error("gradient buffer", theta_.size(), grad.size());
        run_forward(x, ws);
        run_backward(x, scale, grad, ws);
        return ws.post.back()[0];
    }

    // Backprop only: `ws` must hold the state of the latest forward(x, ws) on this same x.
    template <typename Input>
    void accumulate_gradient_after_forward(const Input& x, double scale, std::span<double> grad, Workspace& ws) const {
        run_backward(x, scale, grad, ws);
    }

    // Writes d f(x) / d theta into `grad` (length param_count()). Returns f(x).
    template <typename Input>
    double param_gradient(const Input& x, std::span<double> grad, Workspace& ws) const {
        std::fill(grad.begin(), grad.end(), 0.0);
        return accumulate_gradient(x, 1.0, grad, ws);
    }

    template <typename Input>
    std::vector<double> param_gradient(const Input& x) const {
        std::vector<double> grad(theta_.size(), 0.0);
        auto ws = make_workspace();
        param_gradient(x, std::span<double>{grad}, ws);
        return grad;
    }

    struct ValueAndQuadratic {
        double value = 0.0;
        double quadratic = 0.0;
    };

    // f(x) together with sum_k weight[k] * g_k(x)^2, without materialising the gradient.
    template <typename Input>
    ValueAndQuadratic gradient_quadratic(const Input& x, std::span<const double> weight, Workspace& ws) const {
        check_input(x);
        if (weight.size() != theta_.size()) throw dimension_error("gradient weights", theta_.size(), weight.size());
        run_forward(x, ws);
        ValueAndQuadratic r{ws.post.back()[0], 0.0};
        const std::size_t layers = dims_.size() - 1;
        ws.delta[0] = 1.0;
        for (std::size_t l = layers; l-- > 0;) {
            const std::size_t in = dims_[l];
            const std::size_t out = dims_[l + 1];
            const double* w = weights(l);
            const double* qw = weight.data() + offsets_[l];
            const double* qb = qw + in * out;
            const double* delta = ws.delta.data();
            double acc = 0.0;
            for (std::size_t o = 0; o < out; ++o) acc += delta[o] * delta[o] * qb[o];
            auto add_block = [&](std::size_t i, double v) {
                const double* qwi = qw + i * out;
                double s = 0.0;
                for (std::size_t o = 0; o < out; ++o) s += delta[o] * delta[o] * qwi[o];
                acc += v * v * s;
            };
            if (l == 0) {
                for_each_nonzero(x, add_block);
                r.quadratic += acc;
                break;
            }
            for_each_nonzero(std::span<const double>{ws.post[l - 1]}, add_block);
            r.quadratic += acc;
            const double* z_in = ws.pre[l - 1].data();
            for (std::size_t i = 0; i < in; ++i) {
                double s = 0.0;
                if (z_in[i] > 0.0) {
                    const double* wi = w + i * out;
                    for (std::size_t o = 0; o < out; ++o) s += wi[o] * delta[o];
                }
                ws.delta_prev[i] = s;
            }
            std::swap(ws.delta, ws.delta_prev);
        }
        return r;
    }

    friend bool operator==(const NetworkState& a, const NetworkState& b) {
        return a.dims_ == b.dims_ && a.theta_ == b.theta_;
    }

private:
    template <typename Input>
    void check_input(const Input& x) const {
        if (input_size(x) != input_dim()) throw dimension_error("network input", input_dim(), input_size(x));
    }

    const double* weights(std::size_t l) const { return theta_.data() + offsets_[l]; }
    const double* biases(std::size_t l) const { return weights(l) + dims_[l] * dims_[l + 1]; }

    template <typename Input>
    void run_forward(const Input& x, Workspace& ws) const {
        const std::size_t layers = dims_.size() - 1;
        for (std::size_t l = 0; l < layers; ++l) {
            const std::size_t out = dims_[l + 1];
            const double* w = weights(l);
            double* z = ws.pre[l].data();
            std::copy_n(biases(l), out, z);
            auto add_column = [&](std::size_t i, double v) {
                const double* wi = w + i * out;
                for (std::size_t o = 0; o < out; ++o) z[o] += v * wi[o];
            };
            if (l == 0)
                for_each_nonzero(x, add_column);
            else
                for_each_nonzero(std::span<const double>{ws.post[l - 1]}, add_column);
            double* a = ws.post[l].data();
            if (l + 1 < layers)
                for (std::size_t o = 0; o < out; ++o) a[o] = z[o] > 0.0 ? z[o] : 0.0;
            else
                std::copy_n(z, out, a);
        }
    }

    template <typename Input>
    void run_backward(const Input& x, double scale, std::span<double> grad, Workspace& ws) const {
        const std::size_t layers = dims_.size() - 1;
        ws.delta[0] = scale;
        for (std::size_t l = layers; l-- > 0;) {
            const std::size_t in = dims_[l];
            const std::size_t out = dims_[l + 1];
            const double* w = weights(l);
            double* gw = grad.data() + offsets_[l];
            double* gb = gw + in * out;
            const double* delta = ws.delta.data();
            for (std::size_t o = 0; o < out; ++o) gb[o] += delta[o];
            auto add_outer = [&](std::size_t i, double v) {
                double* gwi = gw + i * out;
                for (std::size_t o = 0; o < out; ++o) gwi[o] += v * delta[o];
            };
            if (l == 0) {
                for_each_nonzero(x, add_outer);
                break;
            }
            for_each_nonzero(std::span<const double>{ws.post[l - 1]}, add_outer);
            const double* z_in = ws.pre[l - 1].data();
            for (std::size_t i = 0; i < in; ++i) {
                double s = 0.0;
                if (z_in[i] > 0.0) {
                    const double* wi = w + i * out;
                    for (std::size_t o = 0; o < out; ++o) s += wi[o] * delta[o];
                }
                ws.delta_prev[i] = s;
            }
            std::swap(ws.delta, ws.delta_prev);
        }
    }

    std::vector<std::size_t> dims_;
    std::vector<std::size_t> offsets_;
    std::vector<double> theta_;
};

struct TrainConfig {
    std::size_t epochs = 100;
    double learning_rate = 0.01;
    double l2_lambda = 1.0;
    double plateau_factor = 0.5;
    std::size_t plateau_patience = 5;
    double min_learning_rate = 1e-4;
    std::size_t batch_size = 4096;
    // Divide the L2 coefficient by the training-set size, i.e. minimise
    // SSE + (l2_lambda / 2) ||theta||^2 up to a constant factor.
    bool l2_per_sample = true;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;

    void validate() const {
        if (epochs < 1) throw config_error("train.epochs must be >= 1");
        if (!(learning_rate > 0.0)) throw config_error("train.learning_rate must be positive");
        if (l2_lambda < 0.0) throw config_error("train.l2_lambda must be non-negative");
        if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) throw config_error("train.plateau_factor must lie in (0, 1)");
        if (batch_size < 1) throw config_error("train.batch_size must be >= 1");
    }
};

struct TrainResult {
    NetworkState net;          // parameters with the lowest recorded loss
    double best_loss = 0.0;
    double final_loss = 0.0;   // loss of the parameters after the last update
    std::size_t best_epoch = 0;  // 0 = the initial parameters, J = after the last update
    double final_learning_rate = 0.0;
};

inline double effective_l2(const TrainConfig& cfg, std::size_t n) {
    return cfg.l2_per_sample ? cfg.l2_lambda / static_cast<double>(n) : cfg.l2_lambda;
}

// Loss: mean squared error plus (l2_lambda / 2) * ||theta||^2.
template <typename Input>
double training_loss(const NetworkState& net, std::span<const Input> inputs, std::span<const double> targets,
                     double l2_lambda) {
    auto ws = net.make_workspace();
    double sse = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const double r = net.forward(inputs[k], ws) - targets[k];
        sse += r * r;
    }
    const auto p = net.params();
    const double sq = std::inner_product(p.begin(), p.end(), p.begin(), 0.0);
    return sse / static_cast<double>(inputs.size()) + 0.5 * l2_lambda * sq;
}

namespace detail {

class Adam {
public:
    Adam(std::size_t m, const TrainConfig& cfg) : cfg_(cfg), first_(m, 0.0), second_(m, 0.0) {}

    void step(std::span<double> theta, std::span<const double> grad, double lr) {
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.adam_beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.adam_beta2, static_cast<double>(t_));
        for (std::size_t k = 0; k < theta.size(); ++k) {
            first_[k] = cfg_.adam_beta1 * first_[k] + (1.0 - cfg_.adam_beta1) * grad[k];
            second_[k] = cfg_.adam_beta2 * second_[k] + (1.0 - cfg_.adam_beta2) * grad[k] * grad[k];
            theta[k] -= lr * (first_[k] / c1) / (std::sqrt(second_[k] / c2) + cfg_.adam_epsilon);
        }
    }

private:
    TrainConfig cfg_;
    std::vector<double> first_;
    std::vector<double> second_;
    std::size_t t_ = 0;
};

// Loss and gradient of the objective over inputs[idx] for idx in `batch`.
template <typename Input>
double batch_loss_gradient(const NetworkState& net, std::span<const Input> inputs, std::span<const double> targets,
                           std::span<const std::size_t> batch, double l2_lambda, std::span<double> grad,
                           NetworkState::Workspace& ws) {
    const auto p = net.params();
    for (std::size_t k = 0; k < grad.size(); ++k) grad[k] = l2_lambda * p[k];
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    double sse = 0.0;
    for (auto idx : batch) {
        const double f = net.forward(inputs[idx], ws);
        const double r = f - targets[idx];
        sse += r * r;
        net.accumulate_gradient_after_forward(inputs[idx], 2.0 * r * inv_n, grad, ws);
    }
    const double sq = std::inner_product(p.begin(), p.end(), p.begin(), 0.0);
    return sse * inv_n + 0.5 * l2_lambda * sq;
}

} // namespace detail

// Adam on the regularised MSE for cfg.epochs epochs, keeping the lowest-loss parameters.
// The learning rate is multiplied by plateau_factor whenever the best loss has not improved
// for plateau_patience epochs, never going below min_learning_rate. Data sets up to
// batch_size take one full-batch step per epoch; larger ones are split into shuffled
// mini-batches.
template <typename Input, typename Rng>
TrainResult train(const NetworkState& init, std::span<const Input> inputs, std::span<const double> targets,
                  const TrainConfig& cfg, Rng& rng) {
    cfg.validate();
    if (inputs.empty()) throw data_error("train: empty training set");
    const double l2 = effective_l2(cfg, inputs.size());
    if (inputs.size() != targets.size()) throw dimension_error("train targets", inputs.size(), targets.size());

    NetworkState net = init;
    const std::size_t m = net.param_count();
    const std::size_t n = inputs.size();
    auto ws = net.make_workspace();
    std::vector<double> grad(m, 0.0);
    detail::Adam adam(m, cfg);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const bool full_batch = n <= cfg.batch_size;

    TrainResult result;
    result.best_loss = std::numeric_limits<double>::infinity();
    std::vector<double> best_theta;
    double lr = cfg.learning_rate;
    std::size_t stall = 0;

    auto consider = [&](double loss, std::size_t epoch) {
        if (loss < result.best_loss) {
            result.best_loss = loss;
            result.best_epoch = epoch;
            best_theta.assign(net.params().begin(), net.params().end());
            stall = 0;
            return;
        }
        if (++stall >= cfg.plateau_patience) {
            lr = std::max(lr * cfg.plateau_factor, cfg.min_learning_rate);
            stall = 0;
        }
    };

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (full_batch) {
            const double loss = detail::batch_loss_gradient(net, inputs, targets, std::span<const std::size_t>{order},
                                                            l2, std::span<double>{grad}, ws);
            consider(loss, epoch);
            adam.step(net.params(), grad, lr);
        } else {
            consider(training_loss(net, inputs, targets, l2), epoch);
            std::shuffle(order.begin(), order.end(), rng);
            for (std::size_t start = 0; start < n; start += cfg.batch_size) {
                const std::size_t len = std::min(cfg.batch_size, n - start);
                detail::batch_loss_gradient(net, inputs, targets, std::span<const std::size_t>{order}.subspan(start, len),
                                            l2, std::span<double>{grad}, ws);
                adam.step(net.params(), grad, lr);
            }
        }
    }
    result.final_loss = training_loss(net, inputs, targets, l2);
    if (result.final_loss < result.best_loss) {
        result.best_loss = result.final_loss;
        result.best_epoch = cfg.epochs;
        best_theta.assign(net.params().begin(), net.params().end());
    }
    result.final_learning_rate = lr;
    std::copy(best_theta.begin(), best_theta.end(), net.params().begin());
    result.net = std::move(net);
    return result;
}

} // namespace polyminer

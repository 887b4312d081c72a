#pragma once

// A small fully connected generator z ~ U(0,1) -> x, trained under the exact
// 1-D quantile W1 loss with Adam, and its use as the estimator inside
// contaminated recursive training (retrained from scratch every iteration).
//
// The network is templated on the scalar type: training runs in float, the
// finite-difference gradient checks instantiate it in double.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "crtlab/distributions.hpp"
#include "crtlab/estimators.hpp"
#include "crtlab/metrics.hpp"
#include "crtlab/random.hpp"
#include "crtlab/recursion.hpp"

namespace crtlab {

struct MlpSpec {
    std::size_t latent_dim = 1;
    std::size_t hidden_width = 64;
    std::size_t hidden_layers = 3;
    double leaky_slope = 0.02;
    std::size_t out_dim = 1;

    void validate() const {
        if (latent_dim < 1 || hidden_width < 1 || hidden_layers < 1 || out_dim < 1)
            throw std::invalid_argument("mlp: all layer sizes must be >= 1");
        if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw std::invalid_argument("mlp: leaky_slope must lie in (0,1)");
    }
};

struct TrainSpec {
    double lr = 2e-4;
    double weight_decay = 1e-3;
    std::size_t batch_size = 1024;
    std::size_t epochs_per_iteration = 25;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const {
        if (!(lr >= 0.0)) throw std::invalid_argument("train: lr must be nonnegative");
        if (!(weight_decay >= 0.0)) throw std::invalid_argument("train: weight_decay must be nonnegative");
        if (batch_size < 2) throw std::invalid_argument("train: batch_size must be >= 2");
        if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0))
            throw std::invalid_argument("train: Adam betas must lie in [0,1)");
    }
};

inline double leaky_relu(double x, double slope) noexcept { return x > 0.0 ? x : slope * x; }

/// Quantile W1 between equal-size batches, with the subgradient with respect
/// to each generated sample: sign(g_(i) - r_(i)) / n routed back through the
/// sort permutation, sign(0) = 0.
template <class T>
std::pair<double, std::vector<T>> quantile_w1_loss_and_grad(std::span<const T> generated, std::span<const double> real) {
    const std::size_t n = generated.size();
    if (n != real.size()) throw std::invalid_argument("quantile loss: batch size mismatch");
    if (n == 0) throw std::invalid_argument("quantile loss: empty batch");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return generated[a] < generated[b] || (generated[a] == generated[b] && a < b);
    });
    std::vector<double> sorted_real(real.begin(), real.end());
    std::sort(sorted_real.begin(), sorted_real.end());

    const double inv_n = 1.0 / static_cast<double>(n);
    double loss = 0.0;
    std::vector<T> grad(n, T(0));
    for (std::size_t i = 0; i < n; ++i) {
        const double diff = static_cast<double>(generated[order[i]]) - sorted_real[i];
        loss += std::abs(diff);
        grad[order[i]] = static_cast<T>(diff > 0.0 ? inv_n : (diff < 0.0 ? -inv_n : 0.0));
    }
    return {loss * inv_n, std::move(grad)};
}

/// Generator network: affine -> LeakyReLU repeated hidden_layers times, then a
/// final affine map. Carries its own Adam moments and step counter.
template <class Scalar>
class Mlp {
public:
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    struct Layer {
        Matrix weight;  // out x in
        Vector bias;
        Matrix m_weight, v_weight;
        Vector m_bias, v_bias;
    };

    struct Gradients {
        std::vector<Matrix> weight;
        std::vector<Vector> bias;
    };

    /// Fan-in scaled uniform initialization: weights in +-sqrt(6/fan_in),
    /// biases in +-1/sqrt(fan_in).
    Mlp(const MlpSpec& spec, Rng& rng) : spec_(spec) {
        spec_.validate();
        allocate();
        for (auto& layer : layers_) {
            const double fan_in = static_cast<double>(layer.weight.cols());
            std::uniform_real_distribution<double> w(-std::sqrt(6.0 / fan_in), std::sqrt(6.0 / fan_in));
            std::uniform_real_distribution<double> b(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
                for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = static_cast<Scalar>(w(rng));
            for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = static_cast<Scalar>(b(rng));
        }
    }

    /// All parameters zero (test hook).
    static Mlp zeros(const MlpSpec& spec) { return Mlp(spec); }

    const MlpSpec& spec() const noexcept { return spec_; }
    std::vector<Layer>& layers() noexcept { return layers_; }
    const std::vector<Layer>& layers() const noexcept { return layers_; }
    std::size_t step() const noexcept { return step_; }

    bool finite() const {
        for (const auto& l : layers_)
            if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
        return true;
    }

    /// Columns of z are latent vectors; returns out_dim x batch.
    Matrix forward(const Matrix& z) const {
        if (!finite()) throw std::runtime_error("diverged");
        if (static_cast<std::size_t>(z.rows()) != spec_.latent_dim)
            throw std::invalid_argument("forward: latent dimension mismatch");
        Matrix h = z;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            Matrix pre = (layers_[i].weight * h).colwise() + layers_[i].bias;
            h = is_hidden(i) ? activate(pre) : std::move(pre);
        }
        return h;
    }

    /// One-dimensional convenience overload for latent_dim == out_dim == 1.
    std::vector<Scalar> forward(std::span<const Scalar> z) const {
        Matrix zm(1, static_cast<Eigen::Index>(z.size()));
        for (std::size_t i = 0; i < z.size(); ++i) zm(0, static_cast<Eigen::Index>(i)) = z[i];
        const Matrix out = forward(zm);
        return std::vector<Scalar>(out.data(), out.data() + out.size());
    }

    /// Quantile-W1 loss of forward(z) against `real` and its gradient with
    /// respect to every parameter (manual reverse pass).
    Gradients gradient(const Matrix& z, std::span<const double> real, double* loss_out = nullptr) const {
        if (spec_.out_dim != 1) throw std::invalid_argument("gradient: quantile loss needs out_dim == 1");
        std::vector<Matrix> inputs;  // input to each layer
        std::vector<Matrix> pres;    // pre-activation of each layer
        inputs.reserve(layers_.size());
        pres.reserve(layers_.size());
        Matrix h = z;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            inputs.push_back(h);
            pres.push_back((layers_[i].weight * h).colwise() + layers_[i].bias);
            h = is_hidden(i) ? activate(pres.back()) : pres.back();
        }
        auto [loss, g] = quantile_w1_loss_and_grad<Scalar>(std::span<const Scalar>(h.data(), h.size()), real);
        if (loss_out) *loss_out = loss;

        Gradients grads;
        grads.weight.resize(layers_.size());
        grads.bias.resize(layers_.size());
        Matrix delta = Eigen::Map<const Matrix>(g.data(), 1, static_cast<Eigen::Index>(g.size()));
        const auto slope = static_cast<Scalar>(spec_.leaky_slope);
        for (std::size_t i = layers_.size(); i-- > 0;) {
            if (is_hidden(i))
                delta.array() *= pres[i].array().unaryExpr([slope](Scalar v) { return v > Scalar(0) ? Scalar(1) : slope; });
            grads.weight[i].noalias() = delta * inputs[i].transpose();
            grads.bias[i] = delta.rowwise().sum();
            if (i > 0) delta = layers_[i].weight.transpose() * delta;
        }
        return grads;
    }

    /// Decoupled weight decay followed by one Adam step.
    void adam_step(const Gradients& grads, const TrainSpec& train) {
        ++step_;
        const double b1 = train.adam_beta1, b2 = train.adam_beta2;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
        const auto shrink = static_cast<Scalar>(1.0 - train.lr * train.weight_decay);
        const auto lr = static_cast<Scalar>(train.lr), eps = static_cast<Scalar>(train.adam_eps);
        auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
            m = static_cast<Scalar>(b1) * m + static_cast<Scalar>(1.0 - b1) * g;
            v = static_cast<Scalar>(b2) * v + static_cast<Scalar>(1.0 - b2) * g.cwiseAbs2();
            param *= shrink;
            param.array() -= lr * (m.array() / static_cast<Scalar>(c1)) /
                             ((v.array() / static_cast<Scalar>(c2)).sqrt() + eps);
        };
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            auto& l = layers_[i];
            update(l.weight, l.m_weight, l.v_weight, grads.weight[i]);
            update(l.bias, l.m_bias, l.v_bias, grads.bias[i]);
        }
    }

private:
    explicit Mlp(const MlpSpec& spec) : spec_(spec) {
        spec_.validate();
        allocate();
    }

    void allocate() {
        std::vector<std::size_t> dims{spec_.latent_dim};
        for (std::size_t i = 0; i < spec_.hidden_layers; ++i) dims.push_back(spec_.hidden_width);
        dims.push_back(spec_.out_dim);
        layers_.clear();
        for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
            const auto out = static_cast<Eigen::Index>(dims[i + 1]), in = static_cast<Eigen::Index>(dims[i]);
            layers_.push_back({Matrix::Zero(out, in), Vector::Zero(out), Matrix::Zero(out, in), Matrix::Zero(out, in),
                               Vector::Zero(out), Vector::Zero(out)});
        }
        step_ = 0;
    }

    bool is_hidden(std::size_t i) const noexcept { return i + 1 < layers_.size(); }

    Matrix activate(const Matrix& pre) const {
        return pre.cwiseMax(static_cast<Scalar>(spec_.leaky_slope) * pre);
    }

    MlpSpec spec_;
    std::vector<Layer> layers_;
    std::size_t step_ = 0;
};

using MlpState = Mlp<float>;

template <class Scalar>
Mlp<Scalar> init_mlp(const MlpSpec& spec, Rng& rng) {
    return Mlp<Scalar>(spec, rng);
}

/// Draws n generator outputs from fresh U(0,1) latents.
template <class Scalar>
std::vector<double> sample_generator(const Mlp<Scalar>& net, std::size_t n, Rng& rng) {
    if (n == 0) return {};
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    typename Mlp<Scalar>::Matrix z(1, static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < z.cols(); ++i) z(0, i) = static_cast<Scalar>(unif(rng));
    const auto out = net.forward(z);
    return std::vector<double>(out.data(), out.data() + out.size());
}

/// epochs_per_iteration passes over shuffled `data`. Each minibatch pairs the
/// data slice with an equal number of fresh latents; the ragged tail of each
/// epoch is dropped. The minibatch size is min(batch_size, data.size()).
template <class Scalar>
Mlp<Scalar> train_iteration(Mlp<Scalar> net, std::span<const double> data, const TrainSpec& train, Rng& rng) {
    train.validate();
    if (data.empty()) throw std::invalid_argument("train_iteration: no data");
    if (net.spec().latent_dim != 1 || net.spec().out_dim != 1)
        throw std::invalid_argument("train_iteration: generator must map R -> R");
    const std::size_t n = data.size();
    const std::size_t batch = std::min(train.batch_size, n);
    if (batch < 2) throw std::invalid_argument("train_iteration: need at least two samples");
    std::vector<std::size_t> index(n);
    std::iota(index.begin(), index.end(), std::size_t{0});
    std::vector<double> real(batch);
    typename Mlp<Scalar>::Matrix z(1, static_cast<Eigen::Index>(batch));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (std::size_t epoch = 0; epoch < train.epochs_per_iteration; ++epoch) {
        std::shuffle(index.begin(), index.end(), rng);
        for (std::size_t start = 0; start + batch <= n; start += batch) {
            for (std::size_t i = 0; i < batch; ++i) real[i] = data[index[start + i]];
            for (Eigen::Index i = 0; i < z.cols(); ++i) z(0, i) = static_cast<Scalar>(unif(rng));
            const auto grads = net.gradient(z, real);
            net.adam_step(grads, train);
            if (!net.finite())
                throw std::runtime_error("diverged at optimizer step " + std::to_string(net.step()));
        }
    }
    return net;
}

struct NeuralRecursionConfig {
    RecursionConfig recursion;  ///< estimator/bias fields are ignored
    MlpSpec mlp{};
    TrainSpec train{};
    std::size_t eval_samples = 20000;
};

/// m1 = round(total * alpha) real and m2 = total - m1 synthetic per iteration.
inline RecursionConfig neural_recursion_for(std::size_t total_per_iteration, double alpha, std::size_t T,
                                            std::uint64_t seed) {
    if (!(alpha > 0.0) || alpha > 1.0) throw std::invalid_argument("alpha must lie in (0, 1]");
    RecursionConfig c;
    c.m1 = static_cast<std::size_t>(std::llround(static_cast<double>(total_per_iteration) * alpha));
    if (c.m1 == 0) c.m1 = 1;
    c.alpha = alpha;
    c.T = T;
    c.seed = seed;
    return c;
}

/// Hook fired after the synthetic batch of iteration t has been drawn from the
/// previous generator, before the fresh network is trained (test hook).
using NeuralHook = std::function<void(std::size_t t, MlpState& previous)>;

struct NeuralRun {
    Trajectory trajectory;
    MlpState final_generator;
};

/// Recursive training with a freshly initialized generator per iteration.
/// Distances use a stratified evaluation sample: generator outputs at latents
/// (i + 1/2)/n against the target quantiles at the same levels (quantile W1),
/// and the one-grid-spacing smoothed density of the outputs (MMD).
inline NeuralRun run_crt_neural(const NeuralRecursionConfig& config, const TargetSpec& target, const EvalGrid& grid,
                                const NeuralHook& after_synthesis = {}) {
    const RecursionConfig& rc = config.recursion;
    rc.validate();
    target.validate();
    config.mlp.validate();
    config.train.validate();
    if (config.eval_samples < 2) throw std::invalid_argument("neural: eval_samples must be >= 2");
    const std::size_t m1 = rc.m1, m2 = rc.m2();

    Rng rng(rc.seed);
    const StateEvaluator evaluator(target, grid, rc.metric_settings);
    const std::size_t n_eval = config.eval_samples;
    std::vector<double> target_quantiles(n_eval);
    MlpState::Matrix eval_latents(1, static_cast<Eigen::Index>(n_eval));
    for (std::size_t i = 0; i < n_eval; ++i) {
        const double u = (static_cast<double>(i) + 0.5) / static_cast<double>(n_eval);
        target_quantiles[i] = mixture_quantile(target, u);
        eval_latents(0, static_cast<Eigen::Index>(i)) = static_cast<float>(u);
    }
    auto evaluate = [&](const MlpState& net) {
        const auto out = net.forward(eval_latents);
        std::vector<double> generated(out.data(), out.data() + out.size());
        SampleStore store(grid, 4 * grid.size());
        store.append(generated, Origin::synthetic, 0);
        const double w1 = w1_quantile(std::move(generated), target_quantiles);
        return Distances{w1, evaluator.of_store(store).mmd};
    };

    std::vector<double> data;
    data.reserve(m1 + rc.T * (m1 + m2));
    Trajectory traj{rc, {}};
    traj.points.reserve(rc.T + 1);

    auto real0 = sample_mixture(target, m1, rng);
    data.insert(data.end(), real0.begin(), real0.end());
    MlpState net = train_iteration(init_mlp<float>(config.mlp, rng), data, config.train, rng);
    {
        const auto d = evaluate(net);
        traj.points.push_back({0, data.size(), d.w1, d.mmd, 0.0});
    }
    for (std::size_t t = 1; t <= rc.T; ++t) {
        auto synthetic = sample_generator(net, m2, rng);
        if (after_synthesis) after_synthesis(t, net);
        auto real = sample_mixture(target, m1, rng);
        data.insert(data.end(), synthetic.begin(), synthetic.end());
        data.insert(data.end(), real.begin(), real.end());
        net = train_iteration(init_mlp<float>(config.mlp, rng), data, config.train, rng);
        const auto d = evaluate(net);
        traj.points.push_back({t, data.size(), d.w1, d.mmd, 0.0});
    }
    return {std::move(traj), std::move(net)};
}

}  // namespace crtlab

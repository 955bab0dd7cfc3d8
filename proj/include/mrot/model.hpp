#ifndef MROT_MODEL_HPP_
#define MROT_MODEL_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "mrot/common.hpp"

namespace mrot {

// Regressor g = h o f: a stack of tanh layers mapping inputs to d-dimensional
// features, followed by a linear predictor to a scalar.
struct ModelParams {
    std::vector<Matrix> weights;  // layer l: out_l x in_l
    std::vector<Vector> biases;   // layer l: out_l
    Vector head_w;                // d
    double head_b = 0.0;

    int input_dim() const { return static_cast<int>(weights.front().cols()); }
    int feature_dim() const { return static_cast<int>(weights.back().rows()); }
    std::size_t layer_count() const { return weights.size(); }
};

// Layer widths: input_dim -> hidden... -> feature_dim. Weights are drawn
// N(0, 1/sqrt(fan_in)) in a fixed order so the draw is reproducible.
inline ModelParams init_params(int input_dim, const std::vector<int>& hidden_dims,
                               int feature_dim, std::mt19937_64& rng) {
    require(input_dim >= 1 && feature_dim >= 1, "init_params: bad dimensions");
    std::vector<int> dims = {input_dim};
    dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
    dims.push_back(feature_dim);

    std::normal_distribution<double> normal(0.0, 1.0);
    ModelParams p;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const int in = dims[l], out = dims[l + 1];
        require(in >= 1 && out >= 1, "init_params: bad hidden dimension");
        const double scale = 1.0 / std::sqrt(static_cast<double>(in));
        Matrix w(out, in);
        for (int r = 0; r < out; ++r)
            for (int c = 0; c < in; ++c) w(r, c) = scale * normal(rng);
        p.weights.push_back(std::move(w));
        p.biases.push_back(Vector::Zero(out));
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(feature_dim));
    p.head_w.resize(feature_dim);
    for (int r = 0; r < feature_dim; ++r) p.head_w(r) = scale * normal(rng);
    p.head_b = 0.0;
    return p;
}

inline ModelParams zeros_like(const ModelParams& p) {
    ModelParams g;
    for (const Matrix& w : p.weights) g.weights.push_back(Matrix::Zero(w.rows(), w.cols()));
    for (const Vector& b : p.biases) g.biases.push_back(Vector::Zero(b.size()));
    g.head_w = Vector::Zero(p.head_w.size());
    g.head_b = 0.0;
    return g;
}

inline void axpy(ModelParams& p, double a, const ModelParams& g) {
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        p.weights[l] += a * g.weights[l];
        p.biases[l] += a * g.biases[l];
    }
    p.head_w += a * g.head_w;
    p.head_b += a * g.head_b;
}

inline std::vector<double> flatten(const ModelParams& p) {
    std::vector<double> out;
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        const Matrix& w = p.weights[l];
        out.insert(out.end(), w.data(), w.data() + w.size());
        const Vector& b = p.biases[l];
        out.insert(out.end(), b.data(), b.data() + b.size());
    }
    out.insert(out.end(), p.head_w.data(), p.head_w.data() + p.head_w.size());
    out.push_back(p.head_b);
    return out;
}

inline void unflatten(ModelParams& p, const std::vector<double>& flat) {
    std::size_t at = 0;
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        Matrix& w = p.weights[l];
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = flat.at(at++);
        Vector& b = p.biases[l];
        for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = flat.at(at++);
    }
    for (Eigen::Index i = 0; i < p.head_w.size(); ++i) p.head_w(i) = flat.at(at++);
    p.head_b = flat.at(at++);
    require(at == flat.size(), "unflatten: parameter count mismatch");
}

// Per-layer activation record from one forward pass; activations[0] is the
// input, activations.back() is the feature matrix f(X).
struct ForwardCache {
    std::vector<Matrix> activations;
    Vector predictions;

    const Matrix& features() const { return activations.back(); }
};

inline ForwardCache forward(const ModelParams& params, const Matrix& inputs) {
    require(inputs.cols() == params.input_dim(),
            "forward: input dimension mismatch (got " +
                std::to_string(inputs.cols()) + ", model expects " +
                std::to_string(params.input_dim()) + ")");
    ForwardCache cache;
    cache.activations.push_back(inputs);
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        Matrix z = cache.activations.back() * params.weights[l].transpose();
        z.rowwise() += params.biases[l].transpose();
        cache.activations.push_back(z.array().tanh().matrix());
    }
    cache.predictions =
        (cache.activations.back() * params.head_w).array() + params.head_b;
    return cache;
}

// Backpropagates d(loss)/d(features) and d(loss)/d(predictions) through the
// network, accumulating into `grad`.
inline void backprop(const ModelParams& params, const ForwardCache& cache,
                     Matrix feature_grad, const Vector& prediction_grad,
                     ModelParams& grad) {
    const Matrix& feats = cache.features();
    if (prediction_grad.size() > 0) {
        grad.head_w += feats.transpose() * prediction_grad;
        grad.head_b += prediction_grad.sum();
        feature_grad += prediction_grad * params.head_w.transpose();
    }
    Matrix g = std::move(feature_grad);
    for (std::size_t l = params.weights.size(); l-- > 0;) {
        const Matrix& a = cache.activations[l + 1];
        Matrix dz = g.array() * (1.0 - a.array().square());
        grad.weights[l] += dz.transpose() * cache.activations[l];
        grad.biases[l] += dz.colwise().sum().transpose();
        if (l > 0) g = dz * params.weights[l];
    }
}

// Throws naming the first parameter block containing a non-finite entry.
inline void check_gradient_finite(const ModelParams& grad) {
    for (std::size_t l = 0; l < grad.weights.size(); ++l) {
        if (!all_finite(grad.weights[l]))
            throw std::runtime_error("non-finite gradient in layer " +
                                     std::to_string(l) + " weights");
        if (!all_finite(grad.biases[l]))
            throw std::runtime_error("non-finite gradient in layer " +
                                     std::to_string(l) + " biases");
    }
    if (!all_finite(grad.head_w) || !std::isfinite(grad.head_b))
        throw std::runtime_error("non-finite gradient in predictor head");
}

}  // namespace mrot

#endif  // MROT_MODEL_HPP_

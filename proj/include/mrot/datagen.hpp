#ifndef MROT_DATAGEN_HPP_
#define MROT_DATAGEN_HPP_

#include <algorithm>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include "mrot/common.hpp"

namespace mrot {

struct Dataset {
    Matrix features;  // N x d_in
    Vector labels;    // N
    std::string domain_tag = "source";

    int size() const { return static_cast<int>(features.rows()); }
};

namespace detail {

// Smooth nonlinear ground truth y = w.x + sin(v.x); w and v are drawn once
// from the seed so the function is fixed per task.
struct GroundTruth {
    Vector w;
    Vector v;
    double operator()(const Vector& x) const { return w.dot(x) + std::sin(v.dot(x)); }
};

inline GroundTruth make_ground_truth(int d_in, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    GroundTruth g;
    g.w.resize(d_in);
    g.v.resize(d_in);
    for (int i = 0; i < d_in; ++i) g.w(i) = normal(rng);
    for (int i = 0; i < d_in; ++i) g.v(i) = normal(rng);
    return g;
}

inline Matrix gaussian_matrix(int n, int d, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix x(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) x(i, j) = normal(rng);
    return x;
}

}  // namespace detail

// Semantic-shift task: Gaussian features, fixed nonlinear label function plus
// noise; samples sorted by label and split lowest 80% / middle 10% / top 10%
// into source / validation / target.
inline std::tuple<Dataset, Dataset, Dataset> generate_semantic_shift(
    int n, int d_in, double noise_sd, std::uint64_t seed) {
    require(n >= 10, "generate_semantic_shift: n must be >= 10");
    require(d_in >= 1, "generate_semantic_shift: d_in must be >= 1");
    require(noise_sd >= 0.0, "generate_semantic_shift: noise_sd must be >= 0");

    std::mt19937_64 rng_fn = make_rng(seed, 0);
    std::mt19937_64 rng_x = make_rng(seed, 1);
    std::mt19937_64 rng_noise = make_rng(seed, 2);
    const detail::GroundTruth truth = detail::make_ground_truth(d_in, rng_fn);

    Matrix x = detail::gaussian_matrix(n, d_in, rng_x);
    Vector y(n);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int i = 0; i < n; ++i)
        y(i) = truth(x.row(i).transpose()) + noise_sd * normal(rng_noise);

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&y](int a, int b) { return y(a) < y(b); });

    const int n_source = (n * 8) / 10;
    const int n_target = n / 10;
    const int n_val = n - n_source - n_target;
    require(n_source >= 1 && n_target >= 1 && n_val >= 1,
            "generate_semantic_shift: n too small for a sample in every split");

    const auto take = [&](int begin, int count, const char* tag) {
        Dataset d;
        d.domain_tag = tag;
        d.features.resize(count, d_in);
        d.labels.resize(count);
        for (int i = 0; i < count; ++i) {
            const int src = order[static_cast<std::size_t>(begin + i)];
            d.features.row(i) = x.row(src);
            d.labels(i) = y(src);
        }
        return d;
    };
    Dataset source = take(0, n_source, "source");
    Dataset validation = take(n_source, n_val, "validation");
    Dataset target = take(n_source + n_val, n_target, "target");
    return {std::move(source), std::move(target), std::move(validation)};
}

// Covariate-shift task: identical label function in both domains; target
// features are shifted by shift_magnitude along a fixed seeded unit direction.
inline std::pair<Dataset, Dataset> generate_covariate_shift(
    int n, int d_in, double shift_magnitude, std::uint64_t seed,
    double noise_sd = 0.1) {
    require(n >= 4, "generate_covariate_shift: n must be >= 4");
    require(d_in >= 1, "generate_covariate_shift: d_in must be >= 1");

    std::mt19937_64 rng_fn = make_rng(seed, 0);
    std::mt19937_64 rng_src = make_rng(seed, 1);
    std::mt19937_64 rng_tgt = make_rng(seed, 2);
    std::mt19937_64 rng_noise = make_rng(seed, 3);
    std::mt19937_64 rng_dir = make_rng(seed, 4);
    const detail::GroundTruth truth = detail::make_ground_truth(d_in, rng_fn);

    Vector direction(d_in);
    {
        std::normal_distribution<double> normal(0.0, 1.0);
        for (int i = 0; i < d_in; ++i) direction(i) = normal(rng_dir);
        const double norm = direction.norm();
        direction = norm > 0.0 ? Vector(direction / norm) : Vector::Unit(d_in, 0);
    }

    std::normal_distribution<double> normal(0.0, 1.0);
    const auto build = [&](std::mt19937_64& rng_x, double shift, const char* tag) {
        Dataset d;
        d.domain_tag = tag;
        d.features = detail::gaussian_matrix(n, d_in, rng_x);
        if (shift != 0.0) d.features.rowwise() += (shift * direction).transpose();
        d.labels.resize(n);
        for (int i = 0; i < n; ++i)
            d.labels(i) =
                truth(d.features.row(i).transpose()) + noise_sd * normal(rng_noise);
        return d;
    };
    Dataset source = build(rng_src, 0.0, "source");
    Dataset target = build(rng_tgt, shift_magnitude, "target");
    return {std::move(source), std::move(target)};
}

// Seeded split of a dataset into a labeled fraction and the remainder,
// mirroring the semi-DA protocol (train on the labeled part, test on the rest).
inline std::pair<Dataset, Dataset> split_labeled_fraction(const Dataset& data,
                                                          double fraction,
                                                          std::uint64_t seed) {
    require(fraction > 0.0 && fraction < 1.0,
            "split_labeled_fraction: fraction must be in (0,1)");
    const int n = data.size();
    const int n_labeled = std::max(1, static_cast<int>(fraction * n));
    require(n_labeled < n, "split_labeled_fraction: nothing left for testing");
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng = make_rng(seed, 7);
    std::shuffle(order.begin(), order.end(), rng);

    const auto take = [&](int begin, int count) {
        Dataset d;
        d.domain_tag = data.domain_tag;
        d.features.resize(count, data.features.cols());
        d.labels.resize(count);
        for (int i = 0; i < count; ++i) {
            const int src = order[static_cast<std::size_t>(begin + i)];
            d.features.row(i) = data.features.row(src);
            d.labels(i) = data.labels(src);
        }
        return d;
    };
    return {take(0, n_labeled), take(n_labeled, n - n_labeled)};
}

}  // namespace mrot

#endif  // MROT_DATAGEN_HPP_

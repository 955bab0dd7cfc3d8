#ifndef MROT_TRAIN_HPP_
#define MROT_TRAIN_HPP_

#include <algorithm>
#include <cstdint>
#include <functional>
#include <iterator>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mrot/clustering.hpp"
#include "mrot/common.hpp"
#include "mrot/ground_cost.hpp"
#include "mrot/metric_loss.hpp"
#include "mrot/model.hpp"
#include "mrot/transport.hpp"

namespace mrot {

struct TrainConfig {
    int batch_size = 32;  // b, per side
    int k_clusters = 4;   // K
    double lambda1 = 0.1;
    double lambda2 = 0.1;
    double alpha = 1.0;
    double beta = 0.1;
    double epsilon = 1.0;
    double kappa = 0.2;
    double zeta = 1e-6;
    double mu0 = 0.1;
    double learning_rate = 0.01;
    int epochs = 20;
    std::uint64_t seed = 0;
    Mode mode = Mode::kUda;
    std::vector<int> hidden_dims = {16};
    int feature_dim = 8;

    double sinkhorn_tol = 1e-9;
    int sinkhorn_max_iter = 10000;
    double gcg_tol = 1e-7;
    int gcg_max_iter = 50;
    int kmeans_max_iter = 50;
    std::int64_t triplet_cap = 20000;
    bool reinit_clusters_each_epoch = false;
    double labeled_target_fraction = 0.25;  // semi-DA experiment protocol

    void validate() const {
        require(batch_size >= 2, "config: batch_size must be >= 2");
        require(lambda1 > 0.0, "config: lambda1 must be > 0");
        require(lambda2 >= 0.0 && alpha >= 0.0 && beta >= 0.0,
                "config: loss weights must be >= 0");
        require(epsilon >= 0.0 && kappa >= 0.0, "config: epsilon/kappa must be >= 0");
        require(zeta > 0.0, "config: zeta must be > 0");
        require(mu0 >= 0.0, "config: mu0 must be >= 0");
        require(learning_rate > 0.0, "config: learning_rate must be > 0");
        require(epochs >= 1, "config: epochs must be >= 1");
        require(k_clusters >= 1, "config: k_clusters must be >= 1");
        require(feature_dim >= 1, "config: feature_dim must be >= 1");
        require(labeled_target_fraction > 0.0 && labeled_target_fraction <= 1.0,
                "config: labeled_target_fraction must be in (0,1]");
        for (int h : hidden_dims)
            require(h >= 1, "config: hidden dims must be >= 1");
    }

    OtParams ot_params() const {
        OtParams p;
        p.lambda1 = lambda1;
        p.lambda2 = lambda2;
        p.sinkhorn_tol = sinkhorn_tol;
        p.sinkhorn_max_iter = sinkhorn_max_iter;
        p.gcg_tol = gcg_tol;
        p.gcg_max_iter = gcg_max_iter;
        return p;
    }

    JsCostParams js_params() const { return JsCostParams{epsilon, kappa, zeta}; }
};

// One paired mini-batch; the combined batch stacks source rows 0..b-1 then
// target rows b..2b-1.
struct TrainBatch {
    Matrix source_x;
    Vector source_y;
    Matrix target_x;
    Vector target_y;  // present in semi-DA; ignored in UDA

    int b() const { return static_cast<int>(source_x.rows()); }
};

// Feature-space maxima frozen at a reference parameter point. Backprop
// treats the per-batch normalizers d_H,max as constants; tests that compare
// against finite differences must evaluate the loss with the same constants.
struct FrozenNormalization {
    double ot_feat_max = 1.0;
    double pooled_feat_max = 1.0;
};

// Everything derived from one forward pass on a batch: the OT ground cost,
// the pooled pairwise distances feeding clustering and triplets, and the
// normalizers in use.
struct BatchGeometry {
    ForwardCache cache;             // stacked (2b) forward
    CostMatrix ot_cost;             // b x b source-target ground cost
    Matrix ot_feat_dist;            // raw Euclidean source-target distances
    double ot_feat_max = 1.0;       // semi-DA normalizer (frozen in backprop)
    double ot_label_max = 1.0;
    Matrix pooled_feat_dist;        // 2b x 2b raw Euclidean distances
    Matrix pooled_label_dist;       // semi-DA only
    double pooled_feat_max = 1.0;   // semi-DA normalizer (frozen in backprop)
    double pooled_label_max = 1.0;
    Matrix pooled_ground;           // ground distances for D_c and triplets

    Eigen::Index b() const { return ot_cost.rows(); }
    auto source_features() const { return cache.features().topRows(b()); }
    auto target_features() const { return cache.features().bottomRows(b()); }
};

namespace detail {

inline Matrix pairwise_euclidean(const Matrix& rows) {
    Matrix d(rows.rows(), rows.rows());
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        d(i, i) = 0.0;
        for (Eigen::Index j = i + 1; j < rows.rows(); ++j) {
            const double v = (rows.row(i) - rows.row(j)).norm();
            d(i, j) = v;
            d(j, i) = v;
        }
    }
    return d;
}

inline Matrix pairwise_abs(const Vector& y) {
    Matrix d(y.size(), y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i)
        for (Eigen::Index j = 0; j < y.size(); ++j)
            d(i, j) = std::abs(y(i) - y(j));
    return d;
}

}  // namespace detail

inline BatchGeometry make_geometry(const ModelParams& params, const TrainBatch& batch,
                                   const TrainConfig& config,
                                   const FrozenNormalization* frozen = nullptr) {
    const int b = batch.b();
    require(batch.target_x.rows() == b, "batch: source/target size mismatch");
    if (config.mode == Mode::kSemiDa)
        require(batch.target_y.size() == b, "batch: semi-DA requires target labels");

    BatchGeometry g;
    Matrix stacked(2 * b, batch.source_x.cols());
    stacked.topRows(b) = batch.source_x;
    stacked.bottomRows(b) = batch.target_x;
    g.cache = forward(params, stacked);

    const Matrix& feats = g.cache.features();
    g.ot_feat_dist = euclidean_cost(feats.topRows(b), feats.bottomRows(b)).entries;
    g.pooled_feat_dist = detail::pairwise_euclidean(feats);

    if (config.mode == Mode::kUda) {
        g.ot_cost.entries = g.ot_feat_dist;
        g.ot_cost.mode = Mode::kUda;
        g.pooled_ground = g.pooled_feat_dist;
        return g;
    }

    // Semi-DA: JS feature-label cost on per-batch normalized distances.
    g.ot_feat_max = frozen ? frozen->ot_feat_max : g.ot_feat_dist.maxCoeff();
    g.pooled_feat_max = frozen ? frozen->pooled_feat_max : g.pooled_feat_dist.maxCoeff();

    CostMatrix label_raw = label_abs_cost(batch.source_y, batch.target_y);
    g.ot_label_max = label_raw.entries.maxCoeff();

    Vector pooled_y(2 * b);
    pooled_y << batch.source_y, batch.target_y;
    g.pooled_label_dist = detail::pairwise_abs(pooled_y);
    g.pooled_label_max = g.pooled_label_dist.maxCoeff();

    const JsCostParams js = config.js_params();
    const auto norm = [](double v, double mx) { return mx > 0.0 ? v / mx : 0.0; };

    g.ot_cost.mode = Mode::kSemiDa;
    g.ot_cost.entries.resize(b, b);
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < b; ++j)
            g.ot_cost.entries(i, j) =
                js_cost_entry(norm(g.ot_feat_dist(i, j), g.ot_feat_max),
                              norm(label_raw.entries(i, j), g.ot_label_max), js);

    g.pooled_ground.resize(2 * b, 2 * b);
    for (int i = 0; i < 2 * b; ++i)
        for (int j = 0; j < 2 * b; ++j)
            g.pooled_ground(i, j) =
                js_cost_entry(norm(g.pooled_feat_dist(i, j), g.pooled_feat_max),
                              norm(g.pooled_label_dist(i, j), g.pooled_label_max), js);
    return g;
}

// Points clustered per batch: features in UDA, features with the raw label
// appended in semi-DA.
inline Matrix cluster_points(const BatchGeometry& g, const TrainBatch& batch,
                             Mode mode) {
    const Matrix& feats = g.cache.features();
    if (mode == Mode::kUda) return feats;
    Matrix pts(feats.rows(), feats.cols() + 1);
    pts.leftCols(feats.cols()) = feats;
    const int b = batch.b();
    pts.col(feats.cols()).head(b) = batch.source_y;
    pts.col(feats.cols()).tail(b) = batch.target_y;
    return pts;
}

// Frozen per-batch cluster structure used by the triplet loss and its
// gradient: hard assignments, the hierarchy, and the triplet subsampling
// policy for this batch.
struct ClusterContext {
    std::vector<int> assignments;
    Hierarchy hierarchy;
    TripletOptions triplet_opts;
};

inline double regression_loss(const Vector& source_pred, const Vector& source_labels,
                              const Vector& target_pred, const Vector& target_labels,
                              Mode mode) {
    require(source_pred.size() == source_labels.size(),
            "regression_loss: source length mismatch");
    double s = (source_pred - source_labels).squaredNorm();
    double n = static_cast<double>(source_pred.size());
    if (mode == Mode::kSemiDa) {
        require(target_pred.size() == target_labels.size(),
                "regression_loss: target length mismatch");
        s += (target_pred - target_labels).squaredNorm();
        n += static_cast<double>(target_pred.size());
    }
    require(n > 0.0, "regression_loss: empty input");
    return s / n;
}

// Eq. 13.
inline double total_loss(double l_reg, double l_ot, double l_m, double alpha,
                         double beta) {
    require(std::isfinite(l_reg) && std::isfinite(l_ot) && std::isfinite(l_m),
            "total_loss: non-finite component");
    return l_reg + alpha * l_ot + beta * l_m;
}

struct BatchLossDetail {
    double l_reg = 0.0;
    double l_ot = 0.0;
    double l_m = 0.0;
    double total = 0.0;
    TripletLossDetail triplets;
};

// Eq. 13 evaluated on precomputed geometry with a fixed plan and fixed
// cluster structure. `plan` may be null when alpha is zero.
inline BatchLossDetail batch_loss(const BatchGeometry& g, const TrainBatch& batch,
                                  const Coupling* plan, const ClusterContext* clusters,
                                  const TrainConfig& config) {
    const int b = batch.b();
    BatchLossDetail out;
    out.l_reg = regression_loss(g.cache.predictions.head(b), batch.source_y,
                                g.cache.predictions.tail(b), batch.target_y,
                                config.mode);
    if (config.alpha != 0.0) {
        require(plan != nullptr, "batch_loss: plan required when alpha != 0");
        out.l_ot = ot_loss(*plan, g.ot_cost);
    }
    if (config.beta != 0.0) {
        require(clusters != nullptr, "batch_loss: clusters required when beta != 0");
        const Matrix& ground = g.pooled_ground;
        out.triplets = triplet_loss_detail(
            clusters->assignments, clusters->hierarchy,
            [&ground](int i, int j) { return ground(i, j); }, config.mu0,
            clusters->triplet_opts);
        out.l_m = out.triplets.loss;
    }
    out.total = total_loss(out.l_reg, out.l_ot, out.l_m, config.alpha, config.beta);
    return out;
}

namespace detail {

// d(cost entry)/d(raw feature distance) at pair (i,j), by mode. In semi-DA
// the normalizer is a frozen constant; a degenerate (all-zero) distance
// matrix contributes no gradient.
inline double cost_chain_factor(Mode mode, double raw_dist, double feat_max,
                                double label_norm, const JsCostParams& js) {
    if (mode == Mode::kUda) return 1.0;
    if (feat_max <= 0.0) return 0.0;
    return js_cost_entry_du(raw_dist / feat_max, label_norm, js) / feat_max;
}

}  // namespace detail

// Analytic gradient of Eq. 13 with the coupling fixed (Envelope theorem) and
// the cluster structure fixed (hard assignments and discrete merges carry no
// gradient; only the pairwise distances inside the triplet loss do).
inline ModelParams backward_from(const BatchGeometry& g, const ModelParams& params,
                                 const TrainBatch& batch, const Coupling* fixed_plan,
                                 const ClusterContext* clusters,
                                 const TrainConfig& config) {
    const int b = batch.b();
    const Matrix& feats = g.cache.features();
    const int d = static_cast<int>(feats.cols());
    const JsCostParams js = config.js_params();

    Matrix feature_grad = Matrix::Zero(2 * b, d);
    Vector prediction_grad = Vector::Zero(2 * b);

    // L_reg
    {
        const double n_lab =
            config.mode == Mode::kSemiDa ? 2.0 * b : static_cast<double>(b);
        prediction_grad.head(b) =
            (2.0 / n_lab) * (g.cache.predictions.head(b) - batch.source_y);
        if (config.mode == Mode::kSemiDa)
            prediction_grad.tail(b) =
                (2.0 / n_lab) * (g.cache.predictions.tail(b) - batch.target_y);
    }

    // alpha * <T*, D>
    if (config.alpha != 0.0) {
        require(fixed_plan != nullptr, "backward: plan required when alpha != 0");
        const Matrix& plan = fixed_plan->plan;
        for (int i = 0; i < b; ++i) {
            for (int j = 0; j < b; ++j) {
                const double t = plan(i, j);
                if (t == 0.0) continue;
                const double raw = g.ot_feat_dist(i, j);
                if (raw <= 0.0) continue;
                double label_norm = 0.0;
                if (config.mode == Mode::kSemiDa && g.ot_label_max > 0.0)
                    label_norm =
                        std::abs(batch.source_y(i) - batch.target_y(j)) / g.ot_label_max;
                const double factor =
                    config.alpha * t *
                    detail::cost_chain_factor(config.mode, raw, g.ot_feat_max,
                                              label_norm, js);
                if (factor == 0.0) continue;
                const auto dir = (feats.row(i) - feats.row(b + j)) / raw;
                feature_grad.row(i) += factor * dir;
                feature_grad.row(b + j) -= factor * dir;
            }
        }
    }

    // beta * L_m through the pairwise distances only
    if (config.beta != 0.0) {
        require(clusters != nullptr, "backward: clusters required when beta != 0");
        const Matrix& ground = g.pooled_ground;
        const TripletLossDetail detail_lm = triplet_loss_detail(
            clusters->assignments, clusters->hierarchy,
            [&ground](int i, int j) { return ground(i, j); }, config.mu0,
            clusters->triplet_opts);
        for (int i = 0; i < 2 * b; ++i) {
            for (int j = 0; j < 2 * b; ++j) {
                const double w = detail_lm.pair_weight(i, j);
                if (w == 0.0) continue;
                const double raw = g.pooled_feat_dist(i, j);
                if (raw <= 0.0) continue;
                double label_norm = 0.0;
                if (config.mode == Mode::kSemiDa && g.pooled_label_max > 0.0)
                    label_norm = g.pooled_label_dist(i, j) / g.pooled_label_max;
                const double factor =
                    config.beta * w *
                    detail::cost_chain_factor(config.mode, raw, g.pooled_feat_max,
                                              label_norm, js);
                if (factor == 0.0) continue;
                const auto dir = (feats.row(i) - feats.row(j)) / raw;
                feature_grad.row(i) += factor * dir;
                feature_grad.row(j) -= factor * dir;
            }
        }
    }

    ModelParams grad = zeros_like(params);
    backprop(params, g.cache, std::move(feature_grad), prediction_grad, grad);
    check_gradient_finite(grad);
    return grad;
}

inline ModelParams backward(const ModelParams& params, const TrainBatch& batch,
                            const Coupling* fixed_plan, const ClusterContext* clusters,
                            const TrainConfig& config) {
    const BatchGeometry g = make_geometry(params, batch, config);
    return backward_from(g, params, batch, fixed_plan, clusters, config);
}

struct BatchTraceRow {
    int batch = 0;  // global loss-step counter
    double l_reg = 0.0;
    double l_ot = 0.0;
    double l_m = 0.0;
    double total = 0.0;
};

struct TrainResult {
    ModelParams params;
    std::vector<BatchTraceRow> trace;
    bool diverged = false;
    std::optional<ClusterState> clusters;
};

struct TrainHooks {
    // (global batch index, assignments over the 2b combined batch, b)
    std::function<void(int, const std::vector<int>&, int)> on_cluster_assignments;
};

namespace detail {

inline std::vector<int> sample_target_indices(int n_target, int b,
                                              std::mt19937_64& rng) {
    std::vector<int> idx;
    idx.reserve(static_cast<std::size_t>(b));
    if (n_target >= b) {
        std::vector<int> all(static_cast<std::size_t>(n_target));
        std::iota(all.begin(), all.end(), 0);
        std::sample(all.begin(), all.end(), std::back_inserter(idx), b, rng);
    } else {
        std::uniform_int_distribution<int> pick(0, n_target - 1);
        for (int i = 0; i < b; ++i) idx.push_back(pick(rng));
    }
    return idx;
}

}  // namespace detail

// Mini-batch training loop. Per epoch the source set is shuffled and split
// into floor(N_s/b) batches; the first batch of each epoch only initializes
// or refreshes the cluster state and takes no loss step. Plain SGD updates.
// Sampling uses independent RNG streams (model init / source order / target
// draws) so degenerate configurations consume the same source stream.
inline TrainResult train(const Matrix& source_x, const Vector& source_y,
                         const Matrix& target_x, const Vector& target_y,
                         const TrainConfig& config, const TrainHooks& hooks = {}) {
    config.validate();
    const int b = config.batch_size;
    const int n_source = static_cast<int>(source_x.rows());
    const int n_target = static_cast<int>(target_x.rows());
    require(source_y.size() == n_source, "train: source label length mismatch");
    require(n_source >= 2 * b, "train: need at least 2*batch_size source samples");
    require(n_target >= 1, "train: empty target data");
    if (config.mode == Mode::kSemiDa)
        require(target_y.size() == n_target,
                "train: semi-DA requires labels for the (labeled) target data");

    const bool use_ot = config.alpha != 0.0;
    const bool use_clusters = config.beta != 0.0;

    std::mt19937_64 rng_model = make_rng(config.seed, 0);
    std::mt19937_64 rng_source = make_rng(config.seed, 1);
    std::mt19937_64 rng_target = make_rng(config.seed, 2);
    const std::uint64_t kmeans_seed = mix_seed(config.seed, 3);
    const std::uint64_t triplet_seed = mix_seed(config.seed, 4);

    TrainResult result;
    result.params = init_params(static_cast<int>(source_x.cols()),
                                config.hidden_dims, config.feature_dim, rng_model);

    const int steps_per_epoch = n_source / b;
    std::vector<int> order(static_cast<std::size_t>(n_source));
    std::iota(order.begin(), order.end(), 0);

    ClusterState clusters;
    bool clusters_ready = false;
    int global_step = 0;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng_source);
        for (int step = 0; step < steps_per_epoch; ++step) {
            TrainBatch batch;
            batch.source_x.resize(b, source_x.cols());
            batch.source_y.resize(b);
            for (int i = 0; i < b; ++i) {
                const int src = order[static_cast<std::size_t>(step * b + i)];
                batch.source_x.row(i) = source_x.row(src);
                batch.source_y(i) = source_y(src);
            }
            const std::vector<int> tgt =
                detail::sample_target_indices(n_target, b, rng_target);
            batch.target_x.resize(b, target_x.cols());
            for (int i = 0; i < b; ++i)
                batch.target_x.row(i) = target_x.row(tgt[static_cast<std::size_t>(i)]);
            if (config.mode == Mode::kSemiDa) {
                batch.target_y.resize(b);
                for (int i = 0; i < b; ++i)
                    batch.target_y(i) = target_y(tgt[static_cast<std::size_t>(i)]);
            }

            if (step == 0) {
                // Cluster warm-up batch; the loss is omitted on it.
                if (use_clusters) {
                    const BatchGeometry g =
                        make_geometry(result.params, batch, config);
                    const Matrix pts = cluster_points(g, batch, config.mode);
                    if (!clusters_ready || config.reinit_clusters_each_epoch) {
                        clusters = kmeans_init(pts, config.k_clusters, kmeans_seed,
                                               config.kmeans_max_iter);
                        clusters_ready = true;
                    } else {
                        clusters.assignments = assign(pts, clusters.centroids);
                        clusters.centroids =
                            update_centroids(pts, clusters.assignments,
                                             config.k_clusters, clusters.centroids);
                        const Matrix& ground = g.pooled_ground;
                        clusters.hierarchy = build_hierarchy(cluster_distance_matrix(
                            2 * b, clusters.assignments, config.k_clusters,
                            [&ground](int i, int j) { return ground(i, j); }));
                    }
                }
                continue;
            }

            const BatchGeometry g = make_geometry(result.params, batch, config);

            ClusterContext cluster_ctx;
            const ClusterContext* ctx_ptr = nullptr;
            if (use_clusters) {
                const Matrix pts = cluster_points(g, batch, config.mode);
                clusters.assignments = assign(pts, clusters.centroids);
                clusters.centroids = update_centroids(
                    pts, clusters.assignments, config.k_clusters, clusters.centroids);
                clusters.counts.assign(static_cast<std::size_t>(config.k_clusters), 0);
                for (int a : clusters.assignments)
                    ++clusters.counts[static_cast<std::size_t>(a)];
                const Matrix& ground = g.pooled_ground;
                clusters.hierarchy = build_hierarchy(cluster_distance_matrix(
                    2 * b, clusters.assignments, config.k_clusters,
                    [&ground](int i, int j) { return ground(i, j); }));
                cluster_ctx.assignments = clusters.assignments;
                cluster_ctx.hierarchy = clusters.hierarchy;
                cluster_ctx.triplet_opts.max_triplets = config.triplet_cap;
                cluster_ctx.triplet_opts.subsample_seed =
                    mix_seed(triplet_seed, static_cast<std::uint64_t>(global_step));
                ctx_ptr = &cluster_ctx;
                if (hooks.on_cluster_assignments)
                    hooks.on_cluster_assignments(global_step, clusters.assignments, b);
            }

            Coupling plan;
            const Coupling* plan_ptr = nullptr;
            if (use_ot) {
                auto solved = solve_mrot_plan(g.ot_cost, batch.source_y,
                                              config.ot_params());
                plan = std::move(solved.first);
                plan_ptr = &plan;
            }

            const BatchLossDetail loss =
                batch_loss(g, batch, plan_ptr, ctx_ptr, config);
            result.trace.push_back({global_step, loss.l_reg, loss.l_ot, loss.l_m,
                                    loss.total});
            if (!std::isfinite(loss.total) || loss.total > 1e12) {
                result.diverged = true;
                if (use_clusters) result.clusters = clusters;
                return result;
            }

            const ModelParams grad = backward_from(g, result.params, batch, plan_ptr,
                                                   ctx_ptr, config);
            axpy(result.params, -config.learning_rate, grad);
            ++global_step;
        }
    }
    if (use_clusters) result.clusters = clusters;
    return result;
}

}  // namespace mrot

#endif  // MROT_TRAIN_HPP_

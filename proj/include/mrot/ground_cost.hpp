#ifndef MROT_GROUND_COST_HPP_
#define MROT_GROUND_COST_HPP_

#include <cmath>
#include <stdexcept>
#include <string>

#include "mrot/common.hpp"

namespace mrot {

// Pairwise ground-space distances between two sample sets.
// `degenerate` marks an all-zero matrix passed through normalize_distances.
struct CostMatrix {
    Matrix entries;
    Mode mode = Mode::kUda;
    bool degenerate = false;

    Eigen::Index rows() const { return entries.rows(); }
    Eigen::Index cols() const { return entries.cols(); }
};

struct JsCostParams {
    double epsilon = 1.0;  // label-distance weight
    double kappa = 0.2;    // JS penalty weight
    double zeta = 1e-6;    // zero-division guard, must be > 0
};

// Euclidean distances between rows of `source` and rows of `target`.
inline CostMatrix euclidean_cost(const Matrix& source, const Matrix& target) {
    require(source.rows() >= 1 && target.rows() >= 1,
            "euclidean_cost: empty feature batch");
    require(source.cols() == target.cols(),
            "euclidean_cost: feature dimension mismatch (" +
                std::to_string(source.cols()) + " vs " +
                std::to_string(target.cols()) + ")");
    require(all_finite(source) && all_finite(target),
            "euclidean_cost: non-finite feature input");
    CostMatrix out;
    out.mode = Mode::kUda;
    out.entries.resize(source.rows(), target.rows());
    for (Eigen::Index i = 0; i < source.rows(); ++i)
        for (Eigen::Index j = 0; j < target.rows(); ++j)
            out.entries(i, j) = (source.row(i) - target.row(j)).norm();
    return out;
}

// Absolute label differences |y_i - y_j| between two label vectors.
inline CostMatrix label_abs_cost(const Vector& source_labels,
                                 const Vector& target_labels) {
    require(source_labels.size() >= 1 && target_labels.size() >= 1,
            "label_abs_cost: empty label vector");
    require(all_finite(source_labels) && all_finite(target_labels),
            "label_abs_cost: non-finite label input");
    CostMatrix out;
    out.mode = Mode::kUda;
    out.entries.resize(source_labels.size(), target_labels.size());
    for (Eigen::Index i = 0; i < source_labels.size(); ++i)
        for (Eigen::Index j = 0; j < target_labels.size(); ++j)
            out.entries(i, j) = std::abs(source_labels(i) - target_labels(j));
    return out;
}

// Divides every entry by the matrix maximum so the result lies in [0,1].
// An all-zero matrix is returned unchanged with the degenerate flag set.
inline CostMatrix normalize_distances(const CostMatrix& raw) {
    require(all_finite(raw.entries), "normalize_distances: non-finite input");
    require((raw.entries.array() >= 0.0).all(),
            "normalize_distances: negative distance entry");
    CostMatrix out = raw;
    const double max = raw.entries.maxCoeff();
    if (max == 0.0) {
        out.degenerate = true;
        return out;
    }
    out.entries /= max;
    return out;
}

// Scalar JS-augmented cost on normalized distances u = d_H^p, v = d_Y^p:
//   u + eps*v + kappa*(|u*log(u/(v+zeta))| + |v*log(v/(u+zeta))|)
inline double js_cost_entry(double u, double v, const JsCostParams& p) {
    return u + p.epsilon * v +
           p.kappa * (std::abs(xlog_ratio(u, v, p.zeta)) +
                      std::abs(xlog_ratio(v, u, p.zeta)));
}

// Feature-label ground cost for semi-DA. Both inputs must already be
// normalized to [0,1].
inline CostMatrix js_cost(const CostMatrix& d_h_norm, const CostMatrix& d_y_norm,
                          const JsCostParams& params) {
    require(params.zeta > 0.0, "js_cost: zeta must be > 0");
    require(d_h_norm.rows() == d_y_norm.rows() &&
                d_h_norm.cols() == d_y_norm.cols(),
            "js_cost: shape mismatch between feature and label distances");
    require((d_h_norm.entries.array() >= 0.0).all() &&
                (d_h_norm.entries.array() <= 1.0).all(),
            "js_cost: feature distances not normalized to [0,1]");
    require((d_y_norm.entries.array() >= 0.0).all() &&
                (d_y_norm.entries.array() <= 1.0).all(),
            "js_cost: label distances not normalized to [0,1]");
    CostMatrix out;
    out.mode = Mode::kSemiDa;
    out.entries.resize(d_h_norm.rows(), d_h_norm.cols());
    for (Eigen::Index i = 0; i < out.rows(); ++i)
        for (Eigen::Index j = 0; j < out.cols(); ++j)
            out.entries(i, j) =
                js_cost_entry(d_h_norm.entries(i, j), d_y_norm.entries(i, j), params);
    return out;
}

// Partial derivative of js_cost_entry with respect to u at fixed v.
// The x*log(x/..) terms contribute 0 at x = 0 (same convention as the cost).
inline double js_cost_entry_du(double u, double v, const JsCostParams& p) {
    double d = 1.0;
    const double a = xlog_ratio(u, v, p.zeta);  // u*log(u/(v+zeta))
    const double b = xlog_ratio(v, u, p.zeta);  // v*log(v/(u+zeta))
    const double sa = (a > 0.0) ? 1.0 : (a < 0.0 ? -1.0 : 0.0);
    const double sb = (b > 0.0) ? 1.0 : (b < 0.0 ? -1.0 : 0.0);
    if (u > 0.0) d += p.kappa * sa * (std::log(u / (v + p.zeta)) + 1.0);
    d += p.kappa * sb * (-v / (u + p.zeta));
    return d;
}

}  // namespace mrot

#endif  // MROT_GROUND_COST_HPP_

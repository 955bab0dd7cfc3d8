#ifndef MROT_TRANSPORT_HPP_
#define MROT_TRANSPORT_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mrot/common.hpp"
#include "mrot/ground_cost.hpp"

namespace mrot {

// Transport plan over the uniform-marginal polytope: row and column sums
// both equal 1/b up to marginal_tolerance (the achieved residual).
struct Coupling {
    Matrix plan;
    double marginal_tolerance = 0.0;
    bool converged = true;
    int iterations = 0;
};

struct OtParams {
    double lambda1 = 0.1;      // entropy weight, > 0
    double lambda2 = 0.0;      // posterior-variance weight, >= 0
    double sinkhorn_tol = 1e-9;
    int sinkhorn_max_iter = 10000;
    int gcg_max_iter = 50;
    double gcg_tol = 1e-7;     // relative objective-decrease stop
};

struct TraceRow {
    int iter = 0;
    double objective = 0.0;
    double row_residual = 0.0;
    double col_residual = 0.0;
};
using SolveTrace = std::vector<TraceRow>;

inline double max_row_residual(const Matrix& plan) {
    const double u = 1.0 / static_cast<double>(plan.rows());
    return (plan.rowwise().sum().array() - u).abs().maxCoeff();
}

inline double max_col_residual(const Matrix& plan) {
    const double u = 1.0 / static_cast<double>(plan.rows());
    return (plan.colwise().sum().array() - u).abs().maxCoeff();
}

inline double max_marginal_residual(const Matrix& plan) {
    return std::max(max_row_residual(plan), max_col_residual(plan));
}

// <T, D> Frobenius inner product (Eq. 4 transport cost).
inline double ot_loss(const Coupling& plan, const CostMatrix& cost) {
    require(plan.plan.rows() == cost.rows() && plan.plan.cols() == cost.cols(),
            "ot_loss: plan/cost shape mismatch");
    return (plan.plan.array() * cost.entries.array()).sum();
}

// sum_ij T_ij log T_ij with 0 log 0 = 0.
inline double plan_entropy_term(const Matrix& plan) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < plan.cols(); ++j)
        for (Eigen::Index i = 0; i < plan.rows(); ++i) s += xlogx(plan(i, j));
    return s;
}

inline double entropic_objective(const Matrix& plan, const Matrix& cost,
                                 double lambda1) {
    return (plan.array() * cost.array()).sum() + lambda1 * plan_entropy_term(plan);
}

namespace detail {

inline void validate_cost(const CostMatrix& cost, const char* who) {
    require(cost.rows() == cost.cols(),
            std::string(who) + ": cost matrix must be square");
    require(cost.rows() >= 1, std::string(who) + ": empty cost matrix");
    require(all_finite(cost.entries),
            std::string(who) + ": non-finite cost entry");
    require((cost.entries.array() >= 0.0).all(),
            std::string(who) + ": negative cost entry");
}

// One log-sum-exp reduction: lse_i = log sum_j exp(v_j + M(i,j)).
inline void logsumexp_rows(const Matrix& m, const Vector& v, Vector& out) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        double hi = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            hi = std::max(hi, v(j) + m(i, j));
        double s = 0.0;
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            s += std::exp(v(j) + m(i, j) - hi);
        out(i) = hi + std::log(s);
    }
}

}  // namespace detail

// Entropy-regularized OT on uniform marginals u_b = 1/b:
//   min_{T in Pi} <T, D> + lambda1 * sum_ij T_ij log T_ij
// solved by alternating diagonal scaling of exp(-D/lambda1), carried out in
// the log domain so small lambda1 on normalized costs does not underflow.
inline Coupling sinkhorn(const CostMatrix& cost, double lambda1, double tol,
                         int max_iter, SolveTrace* trace = nullptr) {
    detail::validate_cost(cost, "sinkhorn");
    require(lambda1 > 0.0, "sinkhorn: lambda1 must be > 0");
    require(tol > 0.0, "sinkhorn: tol must be > 0");
    require(max_iter >= 1, "sinkhorn: max_iter must be >= 1");

    const Eigen::Index b = cost.rows();
    const double log_u = -std::log(static_cast<double>(b));
    const Matrix scaled = -cost.entries / lambda1;          // log kernel
    const Matrix scaled_t = scaled.transpose();

    Vector f = Vector::Zero(b), g = Vector::Zero(b), lse(b);
    Coupling out;
    out.plan.resize(b, b);
    for (int it = 1; it <= max_iter; ++it) {
        detail::logsumexp_rows(scaled, g, lse);     // over j: g_j - D_ij/l1
        f = Vector::Constant(b, log_u) - lse;
        detail::logsumexp_rows(scaled_t, f, lse);   // over i: f_i - D_ij/l1
        g = Vector::Constant(b, log_u) - lse;

        for (Eigen::Index j = 0; j < b; ++j)
            for (Eigen::Index i = 0; i < b; ++i)
                out.plan(i, j) = std::exp(f(i) + g(j) + scaled(i, j));
        const double row_res = max_row_residual(out.plan);
        const double col_res = max_col_residual(out.plan);
        out.marginal_tolerance = std::max(row_res, col_res);
        out.iterations = it;
        if (trace)
            trace->push_back({it, entropic_objective(out.plan, cost.entries, lambda1),
                              row_res, col_res});
        if (out.marginal_tolerance <= tol) {
            out.converged = true;
            return out;
        }
    }
    out.converged = false;  // max_iter reached; residual reported as achieved
    return out;
}

inline Coupling sinkhorn(const CostMatrix& cost, const OtParams& params,
                         SolveTrace* trace = nullptr) {
    return sinkhorn(cost, params.lambda1, params.sinkhorn_tol,
                    params.sinkhorn_max_iter, trace);
}

// Posterior-variance regularizer (Eq. 6). Column j of the plan induces
// posterior weights p_i = b*T_ij over the source labels; the regularizer is
// the summed posterior variance over all target columns.
inline double variance_regularizer(const Matrix& plan, const Vector& source_labels) {
    require(plan.rows() == plan.cols(), "variance_regularizer: plan must be square");
    require(source_labels.size() == plan.rows(),
            "variance_regularizer: label length does not match plan size");
    require(all_finite(plan) && all_finite(source_labels),
            "variance_regularizer: non-finite input");
    const double b = static_cast<double>(plan.rows());
    double total = 0.0;
    for (Eigen::Index j = 0; j < plan.cols(); ++j) {
        const double m = b * plan.col(j).dot(source_labels);
        double var = 0.0;
        for (Eigen::Index i = 0; i < plan.rows(); ++i) {
            const double dev = source_labels(i) - m;
            var += b * plan(i, j) * dev * dev;
        }
        total += var;
    }
    return total;
}

inline double variance_regularizer(const Coupling& plan, const Vector& source_labels) {
    return variance_regularizer(plan.plan, source_labels);
}

// Analytic gradient of the regularizer, full expression:
//   dOmega/dT_ij = b(y_i - m_j)^2 - 2 b^2 y_i sum_k T_kj (y_k - m_j).
// The second term vanishes on the polytope but is kept so the gradient
// matches finite differences of the formula at any T.
inline Matrix variance_regularizer_gradient(const Matrix& plan,
                                            const Vector& source_labels) {
    require(plan.rows() == plan.cols(),
            "variance_regularizer_gradient: plan must be square");
    require(source_labels.size() == plan.rows(),
            "variance_regularizer_gradient: label length does not match plan size");
    const double b = static_cast<double>(plan.rows());
    Matrix grad(plan.rows(), plan.cols());
    for (Eigen::Index j = 0; j < plan.cols(); ++j) {
        const double m = b * plan.col(j).dot(source_labels);
        double s = 0.0;
        for (Eigen::Index k = 0; k < plan.rows(); ++k)
            s += plan(k, j) * (source_labels(k) - m);
        for (Eigen::Index i = 0; i < plan.rows(); ++i) {
            const double dev = source_labels(i) - m;
            grad(i, j) = b * dev * dev - 2.0 * b * b * source_labels(i) * s;
        }
    }
    return grad;
}

inline Matrix variance_regularizer_gradient(const Coupling& plan,
                                            const Vector& source_labels) {
    return variance_regularizer_gradient(plan.plan, source_labels);
}

// Full Eq. 7 objective.
inline double mrot_objective(const Matrix& plan, const Matrix& cost,
                             const Vector& source_labels, double lambda1,
                             double lambda2) {
    double obj = entropic_objective(plan, cost, lambda1);
    if (lambda2 != 0.0) obj += lambda2 * variance_regularizer(plan, source_labels);
    return obj;
}

// Regularized mini-batch OT solve (Eq. 7). The concave variance term makes
// this a DC program: each generalized conditional gradient step linearizes
// the variance term at the current plan, solves the entropic subproblem with
// Sinkhorn, and backtracks on the step size against the true objective.
// Returns the plan and the per-iteration objective values (non-increasing).
inline std::pair<Coupling, std::vector<double>> solve_mrot_plan(
    const CostMatrix& cost, const Vector& source_labels, const OtParams& params,
    SolveTrace* trace = nullptr) {
    detail::validate_cost(cost, "solve_mrot_plan");
    require(params.lambda1 > 0.0, "solve_mrot_plan: lambda1 must be > 0");
    require(params.lambda2 >= 0.0, "solve_mrot_plan: lambda2 must be >= 0");
    require(source_labels.size() == cost.rows(),
            "solve_mrot_plan: label length does not match cost size");

    if (params.lambda2 == 0.0) {
        Coupling plan = sinkhorn(cost, params, trace);
        const double obj =
            entropic_objective(plan.plan, cost.entries, params.lambda1);
        return {std::move(plan), {obj}};
    }

    const Eigen::Index b = cost.rows();
    Coupling cur = sinkhorn(cost, params);
    bool all_converged = cur.converged;
    std::vector<double> objectives;
    objectives.push_back(mrot_objective(cur.plan, cost.entries, source_labels,
                                        params.lambda1, params.lambda2));
    if (trace)
        trace->push_back({0, objectives.back(), max_row_residual(cur.plan),
                          max_col_residual(cur.plan)});

    CostMatrix linearized;
    linearized.mode = cost.mode;
    for (int k = 0; k < params.gcg_max_iter; ++k) {
        Matrix grad_point = cur.plan;
        if (k == 0) {
            // A constant linearized cost (e.g. constant D with uniform start)
            // makes the uniform plan a fixed point of the iteration even when
            // it maximizes the concave term; tilting the first linearization
            // point off it lets the line search decide.
            const double delta = 1e-3;
            Matrix tilt = Matrix::Identity(b, b) / static_cast<double>(b);
            grad_point = (1.0 - delta) * cur.plan + delta * tilt;
        }
        Matrix lin = cost.entries +
                     params.lambda2 *
                         variance_regularizer_gradient(grad_point, source_labels);
        // Shift to nonnegative; adding a constant to the cost does not change
        // the entropic minimizer over fixed marginals.
        const double lo = lin.minCoeff();
        if (lo < 0.0) lin.array() -= lo;
        linearized.entries = std::move(lin);
        Coupling sub = sinkhorn(linearized, params);
        all_converged = all_converged && sub.converged;

        const double j_cur = objectives.back();
        double gamma = 1.0;
        bool accepted = false;
        Matrix candidate;
        double j_candidate = j_cur;
        for (int h = 0; h <= 30; ++h) {
            candidate = cur.plan + gamma * (sub.plan - cur.plan);
            j_candidate = mrot_objective(candidate, cost.entries, source_labels,
                                         params.lambda1, params.lambda2);
            if (j_candidate < j_cur) {
                accepted = true;
                break;
            }
            gamma *= 0.5;
        }
        if (!accepted) break;

        cur.plan = std::move(candidate);
        cur.iterations += sub.iterations;
        objectives.push_back(j_candidate);
        if (trace)
            trace->push_back({k + 1, j_candidate, max_row_residual(cur.plan),
                              max_col_residual(cur.plan)});
        if (j_cur - j_candidate <= params.gcg_tol * std::max(1.0, std::abs(j_cur)))
            break;
    }

    for (std::size_t i = 1; i < objectives.size(); ++i)
        if (objectives[i] > objectives[i - 1] + 1e-8)
            throw std::runtime_error(
                "solve_mrot_plan: objective increased along the GCG trace; "
                "this indicates a gradient bug");

    // Convex combinations of feasible plans stay feasible, so the final
    // residual is bounded by the worst component Sinkhorn residual.
    cur.marginal_tolerance = max_marginal_residual(cur.plan);
    cur.converged = all_converged;
    return {std::move(cur), std::move(objectives)};
}

// Exact unregularized OT on uniform equal-size marginals by exhaustive
// enumeration of the Birkhoff vertices (permutation matrices scaled by 1/b).
inline std::pair<Coupling, double> exact_ot_oracle(const CostMatrix& cost) {
    detail::validate_cost(cost, "exact_ot_oracle");
    const Eigen::Index b = cost.rows();
    require(b <= 6, "exact_ot_oracle: only b <= 6 is supported");

    std::vector<int> perm(static_cast<std::size_t>(b));
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<int> best = perm;
    double best_value = std::numeric_limits<double>::infinity();
    do {
        double v = 0.0;
        for (Eigen::Index i = 0; i < b; ++i)
            v += cost.entries(i, perm[static_cast<std::size_t>(i)]);
        v /= static_cast<double>(b);
        if (v < best_value) {
            best_value = v;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));

    Coupling out;
    out.plan = Matrix::Zero(b, b);
    for (Eigen::Index i = 0; i < b; ++i)
        out.plan(i, best[static_cast<std::size_t>(i)]) = 1.0 / static_cast<double>(b);
    out.marginal_tolerance = 0.0;
    return {std::move(out), best_value};
}

}  // namespace mrot

#endif  // MROT_TRANSPORT_HPP_

#ifndef MROT_CLUSTERING_HPP_
#define MROT_CLUSTERING_HPP_

#include <algorithm>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "mrot/common.hpp"

namespace mrot {

// One agglomeration step: the two groups of original cluster ids joined and
// the linkage height at which they merged.
struct MergeEvent {
    std::vector<int> left;
    std::vector<int> right;
    double height = 0.0;
};

// Agglomerative hierarchy over the clusters present in a batch. Clusters
// empty in the batch are absent; `ids` maps matrix rows back to cluster ids.
class Hierarchy {
  public:
    Hierarchy() = default;
    Hierarchy(std::vector<MergeEvent> merges, Matrix cophenetic,
              std::vector<int> ids)
        : merges_(std::move(merges)),
          cophenetic_(std::move(cophenetic)),
          ids_(std::move(ids)) {
        index_.assign(ids_.empty() ? 0 : *std::max_element(ids_.begin(), ids_.end()) + 1, -1);
        for (std::size_t i = 0; i < ids_.size(); ++i)
            index_[static_cast<std::size_t>(ids_[i])] = static_cast<int>(i);
    }

    const std::vector<MergeEvent>& merges() const { return merges_; }
    const std::vector<int>& cluster_ids() const { return ids_; }

    bool contains(int cluster) const {
        return cluster >= 0 && cluster < static_cast<int>(index_.size()) &&
               index_[static_cast<std::size_t>(cluster)] >= 0;
    }

    // Height at which clusters p and q first share a node (d_psi of Eq. 10).
    double merge_threshold(int p, int q) const {
        if (ids_.size() < 2)
            throw std::invalid_argument(
                "Hierarchy::merge_threshold: hierarchy has fewer than two "
                "clusters; no merges exist");
        if (!contains(p) || !contains(q)) {
            std::ostringstream os;
            os << "Hierarchy::merge_threshold: cluster "
               << (contains(p) ? q : p)
               << " is not present in this batch; present clusters:";
            for (int id : ids_) os << ' ' << id;
            os << " (use cluster_ids() to remap)";
            throw std::invalid_argument(os.str());
        }
        if (p == q) return 0.0;
        return cophenetic_(index_[static_cast<std::size_t>(p)],
                           index_[static_cast<std::size_t>(q)]);
    }

  private:
    std::vector<MergeEvent> merges_;
    Matrix cophenetic_;
    std::vector<int> ids_;
    std::vector<int> index_;
};

struct ClusterState {
    std::vector<Vector> centroids;
    std::vector<int> assignments;
    Hierarchy hierarchy;
    std::vector<int> counts;
};

// Inter-cluster distance matrix (Eq. 8) restricted to clusters that are
// non-empty in this batch; `ids[i]` is the cluster id of row/column i.
struct ClusterDistances {
    Matrix d;
    std::vector<int> ids;
};

using PairDistanceFn = std::function<double(int, int)>;

// Nearest-centroid assignment (Eq. 11); ties go to the lowest cluster index.
inline std::vector<int> assign(const Matrix& points,
                               const std::vector<Vector>& centroids) {
    require(!centroids.empty(), "assign: empty centroid list");
    for (const Vector& c : centroids)
        require(c.size() == points.cols(),
                "assign: point/centroid dimension mismatch");
    std::vector<int> out(static_cast<std::size_t>(points.rows()));
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        int best = 0;
        double best_d = (points.row(i).transpose() - centroids[0]).squaredNorm();
        for (std::size_t c = 1; c < centroids.size(); ++c) {
            const double d = (points.row(i).transpose() - centroids[c]).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(c);
            }
        }
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

// Per-cluster batch means (Eq. 12); a cluster with no members this batch
// keeps its previous centroid.
inline std::vector<Vector> update_centroids(const Matrix& points,
                                            const std::vector<int>& assignments,
                                            int k,
                                            const std::vector<Vector>& previous) {
    require(static_cast<int>(previous.size()) == k,
            "update_centroids: previous centroid count does not match k");
    require(assignments.size() == static_cast<std::size_t>(points.rows()),
            "update_centroids: assignment length does not match points");
    std::vector<Vector> centroids(static_cast<std::size_t>(k));
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int c = 0; c < k; ++c)
        centroids[static_cast<std::size_t>(c)] = Vector::Zero(points.cols());
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        const int c = assignments[static_cast<std::size_t>(i)];
        require(c >= 0 && c < k, "update_centroids: assignment index out of range");
        centroids[static_cast<std::size_t>(c)] += points.row(i).transpose();
        ++counts[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < k; ++c) {
        if (counts[static_cast<std::size_t>(c)] > 0)
            centroids[static_cast<std::size_t>(c)] /= counts[static_cast<std::size_t>(c)];
        else
            centroids[static_cast<std::size_t>(c)] = previous[static_cast<std::size_t>(c)];
    }
    return centroids;
}

// Average pairwise ground distance between cluster members (Eq. 8). The
// diagonal holds the within-cluster average (self pairs included at 0).
inline ClusterDistances cluster_distance_matrix(int n_samples,
                                                const std::vector<int>& assignments,
                                                int k, const PairDistanceFn& ground) {
    require(assignments.size() == static_cast<std::size_t>(n_samples),
            "cluster_distance_matrix: assignment length mismatch");
    std::vector<std::vector<int>> members(static_cast<std::size_t>(k));
    for (int i = 0; i < n_samples; ++i) {
        const int c = assignments[static_cast<std::size_t>(i)];
        require(c >= 0 && c < k, "cluster_distance_matrix: assignment out of range");
        members[static_cast<std::size_t>(c)].push_back(i);
    }
    ClusterDistances out;
    for (int c = 0; c < k; ++c)
        if (!members[static_cast<std::size_t>(c)].empty()) out.ids.push_back(c);
    const int kp = static_cast<int>(out.ids.size());
    out.d.resize(kp, kp);
    for (int a = 0; a < kp; ++a) {
        for (int b = 0; b < kp; ++b) {
            const auto& pa = members[static_cast<std::size_t>(out.ids[static_cast<std::size_t>(a)])];
            const auto& pb = members[static_cast<std::size_t>(out.ids[static_cast<std::size_t>(b)])];
            double s = 0.0;
            for (int i : pa)
                for (int j : pb) s += (i == j) ? 0.0 : ground(i, j);
            out.d(a, b) = s / (static_cast<double>(pa.size()) *
                               static_cast<double>(pb.size()));
        }
    }
    return out;
}

// Unweighted average-linkage agglomeration over the given distance matrix.
// Heights are non-decreasing (average linkage admits no inversions).
inline Hierarchy build_hierarchy(const ClusterDistances& dc) {
    const int kp = static_cast<int>(dc.ids.size());
    require(dc.d.rows() == kp && dc.d.cols() == kp,
            "build_hierarchy: distance matrix does not match id list");
    for (int i = 0; i < kp; ++i)
        for (int j = i + 1; j < kp; ++j) {
            require(dc.d(i, j) >= 0.0, "build_hierarchy: negative off-diagonal");
            require(std::abs(dc.d(i, j) - dc.d(j, i)) <= 1e-9,
                    "build_hierarchy: distance matrix not symmetric");
        }

    Matrix coph = Matrix::Zero(kp, kp);
    std::vector<MergeEvent> merges;
    // Active tree nodes: member leaf indices plus current linkage distances.
    struct Node {
        std::vector<int> leaves;  // compact indices
    };
    std::vector<Node> nodes(static_cast<std::size_t>(kp));
    std::vector<bool> alive(static_cast<std::size_t>(kp), true);
    Matrix dist = dc.d;
    for (int i = 0; i < kp; ++i) nodes[static_cast<std::size_t>(i)].leaves = {i};

    int remaining = kp;
    while (remaining > 1) {
        int bi = -1, bj = -1;
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i < kp; ++i) {
            if (!alive[static_cast<std::size_t>(i)]) continue;
            for (int j = i + 1; j < kp; ++j) {
                if (!alive[static_cast<std::size_t>(j)]) continue;
                if (dist(i, j) < best) {
                    best = dist(i, j);
                    bi = i;
                    bj = j;
                }
            }
        }
        Node& a = nodes[static_cast<std::size_t>(bi)];
        Node& b = nodes[static_cast<std::size_t>(bj)];
        MergeEvent ev;
        for (int l : a.leaves) ev.left.push_back(dc.ids[static_cast<std::size_t>(l)]);
        for (int l : b.leaves) ev.right.push_back(dc.ids[static_cast<std::size_t>(l)]);
        ev.height = best;
        merges.push_back(ev);
        for (int p : a.leaves)
            for (int q : b.leaves) {
                coph(p, q) = best;
                coph(q, p) = best;
            }
        // Lance-Williams update for unweighted average linkage; merged node
        // kept at slot bi.
        const double na = static_cast<double>(a.leaves.size());
        const double nb = static_cast<double>(b.leaves.size());
        for (int j = 0; j < kp; ++j) {
            if (!alive[static_cast<std::size_t>(j)] || j == bi || j == bj) continue;
            const double v = (na * dist(bi, j) + nb * dist(bj, j)) / (na + nb);
            dist(bi, j) = v;
            dist(j, bi) = v;
        }
        a.leaves.insert(a.leaves.end(), b.leaves.begin(), b.leaves.end());
        alive[static_cast<std::size_t>(bj)] = false;
        --remaining;
    }

    return Hierarchy(std::move(merges), std::move(coph), dc.ids);
}

inline Hierarchy build_hierarchy(const Matrix& dc) {
    ClusterDistances d;
    d.d = dc;
    d.ids.resize(static_cast<std::size_t>(dc.rows()));
    std::iota(d.ids.begin(), d.ids.end(), 0);
    return build_hierarchy(d);
}

namespace detail {

// Greedy farthest-point seeding from a seeded uniform first pick.
inline std::vector<Vector> farthest_point_seeds(const Matrix& points, int k,
                                                std::uint64_t seed) {
    const int n = static_cast<int>(points.rows());
    std::mt19937_64 rng = make_rng(seed);
    std::uniform_int_distribution<int> pick(0, n - 1);
    std::vector<int> chosen = {pick(rng)};
    std::vector<bool> used(static_cast<std::size_t>(n), false);
    used[static_cast<std::size_t>(chosen[0])] = true;
    std::vector<double> mind(static_cast<std::size_t>(n),
                             std::numeric_limits<double>::infinity());
    while (static_cast<int>(chosen.size()) < k) {
        const int last = chosen.back();
        for (int i = 0; i < n; ++i) {
            const double d =
                (points.row(i) - points.row(last)).squaredNorm();
            mind[static_cast<std::size_t>(i)] =
                std::min(mind[static_cast<std::size_t>(i)], d);
        }
        int best = -1;
        double best_d = -1.0;
        for (int i = 0; i < n; ++i) {
            if (used[static_cast<std::size_t>(i)]) continue;
            if (mind[static_cast<std::size_t>(i)] > best_d) {
                best_d = mind[static_cast<std::size_t>(i)];
                best = i;
            }
        }
        chosen.push_back(best);
        used[static_cast<std::size_t>(best)] = true;
    }
    std::vector<Vector> seeds;
    seeds.reserve(static_cast<std::size_t>(k));
    for (int idx : chosen) seeds.push_back(points.row(idx).transpose());
    return seeds;
}

}  // namespace detail

// Lloyd's K-means from farthest-point seeds; iterates until the assignment
// vector stabilizes or max_iter. The returned hierarchy is built from plain
// Euclidean distances on the clustered points.
inline ClusterState kmeans_init(const Matrix& points, int k, std::uint64_t seed,
                                int max_iter = 50) {
    require(k >= 1, "kmeans_init: k must be >= 1");
    require(points.rows() >= k, "kmeans_init: k exceeds number of points");
    require(all_finite(points), "kmeans_init: non-finite point");

    ClusterState state;
    state.centroids = detail::farthest_point_seeds(points, k, seed);
    state.assignments = assign(points, state.centroids);
    for (int it = 0; it < max_iter; ++it) {
        state.centroids = update_centroids(points, state.assignments, k, state.centroids);
        std::vector<int> next = assign(points, state.centroids);
        const bool stable = next == state.assignments;
        state.assignments = std::move(next);
        if (stable) break;
    }
    state.counts.assign(static_cast<std::size_t>(k), 0);
    for (int a : state.assignments) ++state.counts[static_cast<std::size_t>(a)];

    const auto euclid = [&points](int i, int j) {
        return (points.row(i) - points.row(j)).norm();
    };
    state.hierarchy = build_hierarchy(cluster_distance_matrix(
        static_cast<int>(points.rows()), state.assignments, k, euclid));
    return state;
}

}  // namespace mrot

#endif  // MROT_CLUSTERING_HPP_

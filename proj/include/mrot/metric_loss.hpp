#ifndef MROT_METRIC_LOSS_HPP_
#define MROT_METRIC_LOSS_HPP_

#include <algorithm>
#include <cstdint>
#include <unordered_set>
#include <vector>

#include "mrot/clustering.hpp"
#include "mrot/common.hpp"

namespace mrot {

// Indices into the combined batch of 2b points. Anchor and positive share a
// cluster; the negative lies in a different one.
struct Triplet {
    int anchor = 0;
    int positive = 0;
    int negative = 0;
};

struct TripletOptions {
    // Exact enumeration up to this many triplets; beyond it, a seeded uniform
    // subsample of exactly this size.
    std::int64_t max_triplets = 20000;
    std::uint64_t subsample_seed = 0xa5c3u;
};

namespace detail {

struct TripletIndex {
    int n = 0;
    std::vector<std::vector<int>> members;      // per cluster, ascending
    std::vector<std::vector<int>> outsiders;    // per cluster, ascending
    std::vector<int> cluster_of;
    std::vector<std::int64_t> anchor_prefix;    // triplet count before anchor a
    std::int64_t total = 0;
};

inline TripletIndex build_triplet_index(const std::vector<int>& assignments) {
    TripletIndex ix;
    ix.n = static_cast<int>(assignments.size());
    ix.cluster_of = assignments;
    int k = 0;
    for (int a : assignments) k = std::max(k, a + 1);
    ix.members.resize(static_cast<std::size_t>(k));
    for (int i = 0; i < ix.n; ++i)
        ix.members[static_cast<std::size_t>(assignments[static_cast<std::size_t>(i)])]
            .push_back(i);
    ix.outsiders.resize(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c) {
        const auto& mem = ix.members[static_cast<std::size_t>(c)];
        auto& out = ix.outsiders[static_cast<std::size_t>(c)];
        std::size_t m = 0;
        for (int i = 0; i < ix.n; ++i) {
            if (m < mem.size() && mem[m] == i) {
                ++m;
            } else {
                out.push_back(i);
            }
        }
    }
    ix.anchor_prefix.resize(static_cast<std::size_t>(ix.n) + 1, 0);
    for (int a = 0; a < ix.n; ++a) {
        const int c = ix.cluster_of[static_cast<std::size_t>(a)];
        const std::int64_t s =
            static_cast<std::int64_t>(ix.members[static_cast<std::size_t>(c)].size());
        const std::int64_t o =
            static_cast<std::int64_t>(ix.outsiders[static_cast<std::size_t>(c)].size());
        ix.anchor_prefix[static_cast<std::size_t>(a) + 1] =
            ix.anchor_prefix[static_cast<std::size_t>(a)] + (s - 1) * o;
    }
    ix.total = ix.anchor_prefix[static_cast<std::size_t>(ix.n)];
    return ix;
}

// Decodes a flat rank in the (anchor, positive, negative)-ordered triplet
// sequence back into the triplet.
inline Triplet decode_triplet(const TripletIndex& ix, std::int64_t flat) {
    const auto it = std::upper_bound(ix.anchor_prefix.begin(),
                                     ix.anchor_prefix.end(), flat);
    const int a = static_cast<int>(it - ix.anchor_prefix.begin()) - 1;
    const int c = ix.cluster_of[static_cast<std::size_t>(a)];
    const auto& mem = ix.members[static_cast<std::size_t>(c)];
    const auto& out = ix.outsiders[static_cast<std::size_t>(c)];
    std::int64_t rem = flat - ix.anchor_prefix[static_cast<std::size_t>(a)];
    const std::int64_t o = static_cast<std::int64_t>(out.size());
    const std::int64_t p_idx = rem / o;
    const std::int64_t n_idx = rem % o;
    // positives are the cluster members with the anchor skipped
    std::int64_t seen = 0;
    int positive = -1;
    for (int m : mem) {
        if (m == a) continue;
        if (seen == p_idx) {
            positive = m;
            break;
        }
        ++seen;
    }
    return Triplet{a, positive, out[static_cast<std::size_t>(n_idx)]};
}

}  // namespace detail

// All (anchor, positive, negative) triplets induced by the assignments, in
// (anchor, positive, negative) index order. Above max_triplets, a seeded
// uniform subsample of exactly max_triplets, still in that order.
inline std::vector<Triplet> enumerate_triplets(
    const std::vector<int>& assignments, const TripletOptions& opts = {}) {
    const detail::TripletIndex ix = detail::build_triplet_index(assignments);
    std::vector<Triplet> out;
    if (ix.total == 0) return out;

    if (ix.total <= opts.max_triplets) {
        out.reserve(static_cast<std::size_t>(ix.total));
        for (int a = 0; a < ix.n; ++a) {
            const int c = ix.cluster_of[static_cast<std::size_t>(a)];
            const auto& mem = ix.members[static_cast<std::size_t>(c)];
            const auto& neg = ix.outsiders[static_cast<std::size_t>(c)];
            if (mem.size() < 2 || neg.empty()) continue;
            for (int p : mem) {
                if (p == a) continue;
                for (int n : neg) out.push_back(Triplet{a, p, n});
            }
        }
        return out;
    }

    // Floyd's algorithm: max_triplets distinct flat ranks, uniform over total.
    std::mt19937_64 rng = make_rng(opts.subsample_seed);
    std::unordered_set<std::int64_t> picked;
    picked.reserve(static_cast<std::size_t>(opts.max_triplets) * 2);
    for (std::int64_t j = ix.total - opts.max_triplets; j < ix.total; ++j) {
        std::uniform_int_distribution<std::int64_t> dist(0, j);
        const std::int64_t t = dist(rng);
        if (!picked.insert(t).second) picked.insert(j);
    }
    std::vector<std::int64_t> ranks(picked.begin(), picked.end());
    std::sort(ranks.begin(), ranks.end());
    out.reserve(ranks.size());
    for (std::int64_t r : ranks) out.push_back(detail::decode_triplet(ix, r));
    return out;
}

// Violate margin of Eq. 10: mu0 plus the merge threshold of the two clusters.
inline double hierarchical_margin(const Hierarchy& hierarchy, int anchor_cluster,
                                  int negative_cluster, double mu0) {
    require(mu0 >= 0.0, "hierarchical_margin: mu0 must be >= 0");
    return mu0 + hierarchy.merge_threshold(anchor_cluster, negative_cluster);
}

// Triplet loss plus d(loss)/d(pair distance) accumulations, for backprop
// through the pairwise distances only.
struct TripletLossDetail {
    double loss = 0.0;
    std::int64_t triplet_count = 0;
    Matrix pair_weight;  // n x n; entry (i,j) multiplies d(i,j) in the loss
};

inline TripletLossDetail triplet_loss_detail(const std::vector<int>& assignments,
                                             const Hierarchy& hierarchy,
                                             const PairDistanceFn& ground,
                                             double mu0,
                                             const TripletOptions& opts = {}) {
    const int n = static_cast<int>(assignments.size());
    TripletLossDetail out;
    out.pair_weight = Matrix::Zero(n, n);
    const std::vector<Triplet> triplets = enumerate_triplets(assignments, opts);
    out.triplet_count = static_cast<std::int64_t>(triplets.size());
    if (triplets.empty()) return out;  // no-signal batch contributes 0

    const double inv = 1.0 / static_cast<double>(triplets.size());
    double total = 0.0;
    for (const Triplet& t : triplets) {
        const double d_pos = ground(t.anchor, t.positive);
        const double d_neg = ground(t.anchor, t.negative);
        const double mu = hierarchical_margin(
            hierarchy, assignments[static_cast<std::size_t>(t.anchor)],
            assignments[static_cast<std::size_t>(t.negative)], mu0);
        const double violation = d_pos - d_neg + mu;
        if (violation > 0.0) {
            total += violation;
            out.pair_weight(t.anchor, t.positive) += inv;
            out.pair_weight(t.anchor, t.negative) -= inv;
        }
    }
    out.loss = total * inv;
    return out;
}

// Mean ramped margin violation over all enumerated triplets (Eq. 9);
// 0 when no triplet exists.
inline double triplet_loss(const std::vector<int>& assignments,
                           const Hierarchy& hierarchy, const PairDistanceFn& ground,
                           double mu0, const TripletOptions& opts = {}) {
    return triplet_loss_detail(assignments, hierarchy, ground, mu0, opts).loss;
}

}  // namespace mrot

#endif  // MROT_METRIC_LOSS_HPP_

#ifndef MROT_COMMON_HPP_
#define MROT_COMMON_HPP_

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace mrot {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr const char* kVersion = "mrot-0.1.0";

// Adaptation protocol: feature-only ground space (UDA) or feature-label
// ground space with a small labeled target set (semi-DA).
enum class Mode { kUda, kSemiDa };

inline const char* mode_name(Mode m) {
    return m == Mode::kUda ? "uda" : "semi_da";
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }
inline bool all_finite(const Vector& v) { return v.allFinite(); }

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// splitmix64, used to derive independent RNG streams from one seed
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
    return std::mt19937_64(mix_seed(seed, stream));
}

// x*log(x/(y+zeta)) with the entropy convention 0*log(0/c) = 0
inline double xlog_ratio(double x, double y, double zeta) {
    if (x == 0.0) return 0.0;
    return x * std::log(x / (y + zeta));
}

// x*log(x) with 0*log(0) = 0
inline double xlogx(double x) {
    if (x == 0.0) return 0.0;
    return x * std::log(x);
}

}  // namespace mrot

#endif  // MROT_COMMON_HPP_

#ifndef LOCNET_COMMON_HPP
#define LOCNET_COMMON_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace locnet {

// Numeric failures carry enough context to reproduce the offending instance.
struct SingularGeometryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DegenerateConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SingularMatrixError : std::runtime_error {
    double lambda_min;
    SingularMatrixError(const std::string& msg, double lmin)
        : std::runtime_error(msg), lambda_min(lmin) {}
};

struct EigenGapError : std::runtime_error {
    double gap;
    EigenGapError(const std::string& msg, double g) : std::runtime_error(msg), gap(g) {}
};

struct ConvergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BarrierError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic generator: mt19937_64 stream with hand-rolled uniform/normal
// transforms so outputs do not depend on the standard library's distribution
// implementations.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    // Derive an independent stream, e.g. one per Monte Carlo trial.
    Rng fork(uint64_t salt) const { return Rng(splitmix64(seed_ ^ splitmix64(salt))); }

    uint64_t seed() const { return seed_; }

    uint64_t bits() { return engine_(); }

    double uniform() {  // [0, 1)
        return static_cast<double>(bits() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    Eigen::VectorXd normal_vector(int n) {
        Eigen::VectorXd v(n);
        for (int i = 0; i < n; ++i) v(i) = normal();
        return v;
    }

private:
    uint64_t seed_;
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace locnet

#endif

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "cavity/model.hpp"

namespace cavity {

// SplitMix64 finalizer, used to hash (master seed, trajectory index) into an engine seed.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Independent, reproducible random stream owned by one trajectory.
class Stream {
public:
    Stream(std::uint64_t master_seed, std::uint64_t index)
        : engine_(mix64(mix64(master_seed) ^ mix64(index + 0x632be59bd9b4e019ULL))) {}

    // Uniform on (0, 1): 53 random mantissa bits, never exactly 0.
    double uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

    // Standard normal by the Box-Muller transform, pairs cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double radius = std::sqrt(-2.0 * std::log(uniform()));
        const double angle = 2.0 * std::numbers::pi * uniform();
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

private:
    std::mt19937_64 engine_;
    double spare_{0.0};
    bool has_spare_{false};
};

struct FieldSample {
    Vec Q;  // mode displacements
    Vec P;  // mode momenta
};

struct MappingSample {
    Vec r;  // mapping coordinates, one per state
    Vec p;  // mapping momenta
};

// Vacuum Wigner distribution: Q ~ N(0, 1/(2 omega)), P ~ N(0, omega/2) per mode.
inline FieldSample sample_vacuum(const ModelSpec& model, Stream& stream) {
    const Vec& w = model.cavity.omega;
    FieldSample s{Vec(w.size()), Vec(w.size())};
    for (Eigen::Index a = 0; a < w.size(); ++a) {
        s.Q(a) = stream.normal(0.0, std::sqrt(0.5 / w(a)));
        s.P(a) = stream.normal(0.0, std::sqrt(0.5 * w(a)));
    }
    return s;
}

// Mapping Gaussian exp(-(r^2 + p^2)): every coordinate ~ N(0, 1/2).
inline MappingSample sample_mapping_gaussian(int n_states, Stream& stream) {
    if (n_states < 1) throw ConfigError("sample_mapping_gaussian: n_states must be positive");
    MappingSample s{Vec(n_states), Vec(n_states)};
    const double sd = std::sqrt(0.5);
    for (int k = 0; k < n_states; ++k) {
        s.r(k) = stream.normal(0.0, sd);
        s.p(k) = stream.normal(0.0, sd);
    }
    return s;
}

} // namespace cavity

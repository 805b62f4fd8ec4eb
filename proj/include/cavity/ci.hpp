#pragma once

#include <cstddef>
#include <vector>

#include "cavity/model.hpp"
#include "cavity/observables.hpp"

namespace cavity {

// Truncated matter x photon basis. Matter index runs slowest; photon
// configurations are ordered vacuum, singles (a), doubles (a <= b).
class CIBasis {
public:
    CIBasis() = default;
    CIBasis(int levels, int modes, int max_photons, bool exclude_same_mode_doubles = false,
            std::size_t size_cap = 50'000'000);

    int levels() const { return K_; }
    int modes() const { return M_; }
    int max_photons() const { return max_photons_; }
    bool same_mode_doubles() const { return same_mode_; }
    Eigen::Index photon_configs() const { return n_photon_; }
    Eigen::Index size() const { return K_ * n_photon_; }

    // Photon configuration indices.
    Eigen::Index vacuum() const { return 0; }
    Eigen::Index single(int a) const { return 1 + a; }
    Eigen::Index pair(int a, int b) const;  // a <= b; throws if not in the basis
    bool has_pair(int a, int b) const { return max_photons_ == 2 && (a != b || same_mode_); }

    // Full index of (level, photon configuration) and its inverse.
    Eigen::Index index(int level, Eigen::Index config) const { return level * n_photon_ + config; }
    int level_of(Eigen::Index i) const { return static_cast<int>(i / n_photon_); }
    Eigen::Index config_of(Eigen::Index i) const { return i % n_photon_; }
    // Modes occupied by a configuration, -1 where empty.
    std::pair<int, int> occupation(Eigen::Index config) const;

private:
    int K_{0}, M_{0}, max_photons_{1};
    bool same_mode_{true};
    Eigen::Index n_photon_{0};
    std::vector<Eigen::Index> pair_offset_;
};

CIBasis build_basis(const ModelSpec& model, int max_photons, bool exclude_same_mode_doubles = false,
                    std::size_t size_cap = 50'000'000);

struct CIState {
    CVec coeffs;
    double t{0.0};
};

// Product state |level> x vacuum.
CIState basis_state(const CIBasis& basis, int level);

// out = H in, generated from the index map. The zero-point energy is subtracted.
void apply_hamiltonian(const CIBasis& basis, const ModelSpec& model, const CVec& in, CVec& out);
inline CVec apply_hamiltonian(const CIBasis& basis, const ModelSpec& model, const CVec& in) {
    CVec out;
    apply_hamiltonian(basis, model, in, out);
    return out;
}

// Dense H for small bases; used by oracles and tests.
CMat dense_hamiltonian(const CIBasis& basis, const ModelSpec& model);

double ci_energy(const CIBasis& basis, const ModelSpec& model, const CVec& c);

// Per-level populations sum_config |c_{k,config}|^2.
Vec ci_populations(const CIBasis& basis, const CVec& c);

// <Q_a^2> per mode from occupation numbers and the 0 <-> 2_a coherences.
Vec ci_q_square(const CIBasis& basis, const ModelSpec& model, const CIState& state);

// Normal-ordered intensity with all cross-mode coherences; Z = mode_matrix(r_grid).
Vec ci_intensity(const CIBasis& basis, const CVec& c, const Mat& Z);

// Short-iterate Lanczos propagator with reusable Krylov storage.
class LanczosPropagator {
public:
    LanczosPropagator(const CIBasis& basis, const ModelSpec& model, int krylov_dim = 12,
                      double tolerance = 1e-10, int max_halvings = 8);

    // Advance by dt, halving the substep while the Krylov error estimate exceeds tolerance.
    void step(CIState& state, double dt);
    int substeps_taken() const { return substeps_; }

private:
    // One Krylov exponential; returns the a-posteriori error estimate.
    double attempt(const CVec& in, double dt, CVec& out);

    const CIBasis& basis_;
    const ModelSpec& model_;
    int m_;
    double tol_;
    int max_halvings_;
    std::vector<CVec> V_;
    CVec w_;
    int substeps_{0};
};

CIState lanczos_step(const CIBasis& basis, const ModelSpec& model, const CIState& state, double dt,
                     int krylov_dim = 12);

struct ExactOptions {
    int max_photons{2};
    bool exclude_same_mode_doubles{false};
    int krylov_dim{12};
    double tolerance{1e-10};
};

// Initial state: highest level x vacuum. Intensity at snapshots from ci_intensity
// (full) or from ci_q_square (diagonal), per plan.intensity.
ObservableSeries run_exact(const ModelSpec& model, const ExactOptions& opt, const OutputPlan& plan);

} // namespace cavity

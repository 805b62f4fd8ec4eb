#pragma once

#include <cmath>
#include <numbers>

#include "cavity/types.hpp"

namespace cavity {

struct AtomSpec {
    Vec energies;             // level energies eps_k (hartree), ascending
    Mat dipole;               // mu_kl, real symmetric
    int initial_level{-1};    // initially occupied level, 0-based; -1 selects the highest
    int levels() const { return static_cast<int>(energies.size()); }
    int initial() const { return initial_level < 0 ? levels() - 1 : initial_level; }
};

struct CavitySpec {
    double length{2.362e5};       // L (bohr)
    double light_speed{137.036};  // c (a.u.)
    double epsilon0{1.0};         // field normalization
    double atom_position{1.181e5};// r_A (bohr)
    Vec omega;                    // mode frequencies omega_alpha
    Vec lam;                      // coupling constants lambda_alpha
    Eigen::VectorXi harmonic;     // cavity harmonic n_alpha of each coupled mode
    int modes() const { return static_cast<int>(omega.size()); }
};

struct ModelSpec {
    AtomSpec atom;
    CavitySpec cavity;
    bool rwa{false};  // keep only rotating terms (exact propagator only)
    int levels() const { return atom.levels(); }
    int modes() const { return cavity.modes(); }
};

inline constexpr double reference_lambda = 0.0103;
inline constexpr double reference_length = 2.362e5;
inline constexpr double light_speed_au = 137.036;

// Reference parameterization. The cavity length is divided by `scale`; with
// `rescale_coupling` the coupling magnitude grows as sqrt(scale) so the
// single-mode normalization 2/(eps0 L) is kept and the decay rate is unchanged.
ModelSpec build_paper_model(int levels, int n_modes, double scale = 1.0,
                            bool rescale_coupling = true);

// Two-level atom with one mode exactly resonant with eps_2 - eps_1 and the
// reference coupling magnitude. Used as the dense-oracle fixture.
ModelSpec build_single_mode_model();

// Copy with every |lambda_alpha| replaced by `magnitude`, signs kept.
ModelSpec with_coupling(ModelSpec model, double magnitude);

// Throws ConfigError when the invariants of the model are violated.
void validate(const ModelSpec& model);

// g / (eps_2 - eps_1) with g = mu_12 |lambda| sqrt((eps_2 - eps_1)/2).
double coupling_ratio(const ModelSpec& model);

// Coupled mode sum sum_alpha omega_alpha lambda_alpha Q_alpha.
template <typename Derived>
typename Derived::Scalar coupling_field(const ModelSpec& model, const Eigen::MatrixBase<Derived>& Q) {
    using S = typename Derived::Scalar;
    if (Q.size() != model.modes()) throw ConfigError("coupling_field: Q has wrong length");
    return (model.cavity.omega.array() * model.cavity.lam.array()).matrix().template cast<S>().dot(Q);
}

// H_el(Q) = diag(eps) + (sum omega lambda Q) mu + (1/2 sum omega^2 Q^2) I.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>
electronic_hamiltonian(const ModelSpec& model, const Eigen::MatrixBase<Derived>& Q) {
    using S = typename Derived::Scalar;
    using M = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
    const int K = model.levels();
    const S field = coupling_field(model, Q);
    const S potential = S(0.5) * (model.cavity.omega.array().square().template cast<S>() * Q.array().square()).sum();
    M h = field * model.atom.dipole.template cast<S>();
    h.diagonal() += model.atom.energies.template cast<S>() + M::Constant(K, 1, potential);
    return h;
}

// zeta_alpha(r) = sqrt(omega_alpha / (eps0 L)) sin(n_alpha pi r / L).
Vec mode_function(const ModelSpec& model, double r);

// Rows are grid points, columns are modes: Z(i, alpha) = zeta_alpha(r_i).
Mat mode_matrix(const ModelSpec& model, const Vec& r_grid);

// n uniformly spaced points on [0, L], endpoints included.
Vec uniform_grid(const ModelSpec& model, int n);

// Vacuum variance of each mode coordinate: <Q_alpha^2> = 1/(2 omega_alpha).
inline Vec vacuum_q_square(const ModelSpec& model) {
    return (0.5 / model.cavity.omega.array()).matrix();
}

} // namespace cavity

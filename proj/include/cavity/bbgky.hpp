#pragma once

#include "cavity/model.hpp"
#include "cavity/observables.hpp"

namespace cavity {

// Second-Born moments of the two-level atom and the field, with X = (Q, P)
// blocks of length M each. Sign convention: H_A = const - (de/2) sigma_z, so the
// ground state has sigma_z = +1 and p_exc = (1 - sigma_z) / 2.
struct BBGKYState {
    Eigen::Vector3d sigma{0.0, 0.0, -1.0};  // (sigma_x, sigma_y, sigma_z)
    Vec X;                                  // field means
    Vec lam_x, lam_y, lam_z;                // <delta sigma_e delta X>
    Mat lam;                                // field covariance, 2M x 2M symmetric
    double t{0.0};

    double excited_population() const { return 0.5 * (1.0 - sigma(2)); }
};

struct CorrectionFlags {
    bool efsc{false};  // project sigma onto the Bloch ball
    bool pfsc{false};  // single-excitation factorization of the spin-field-field correlator
};

struct BBGKYOptions {
    double tolerance{1e-8};  // step-doubling local error bound, max norm
    int max_halvings{12};
};

// Excited atom, field vacuum: X = 0, Lambda_e = 0, Lambda = diag(1/(2 omega), omega/2).
BBGKYState bbgky_initial(const ModelSpec& model);

// Time derivative of the hierarchy truncated at doublets. Requires a two-level
// model without RWA. Couplings enter as l = omega lambda mu_12 on the Q block
// and b = -l on the P block, with E = l . X_Q the field at the atom:
//   sigma_x' = de sigma_y
//   sigma_y' = -de sigma_x - 2 (E sigma_z + l . Lz_Q)
//   sigma_z' = 2 (E sigma_y + l . Ly_Q)
//   X' = A X + b sigma_x,                 A = [[0, 1], [-omega^2, 0]]
//   Lx' = A Lx + b (1 - sigma_x^2) + de Ly
//   Ly' = A Ly - b sigma_x sigma_y - de Lx - 2 E Lz - 2 Cy
//   Lz' = A Lz - b sigma_x sigma_z + 2 E Ly + 2 Cz
//   Lambda' = A Lambda + Lambda A^T + b Lx^T + Lx b^T
// with the three-point closures Cy = sigma_z Lambda l, Cz = sigma_y Lambda l.
// With pfsc, Cy = sigma_z Lambda l + (1 - sigma_z) N l, where N is the
// normal-ordered (vacuum-subtracted) part of Lambda. With efsc, sigma is
// evaluated on the Bloch ball.
BBGKYState bbgky_rhs(const BBGKYState& state, const ModelSpec& model, const CorrectionFlags& flags);

// Deterministic propagation with classical fourth-order Runge-Kutta and
// step-doubling error control on each output step of plan.dt.
ObservableSeries run_bbgky(const ModelSpec& model, const CorrectionFlags& flags, const OutputPlan& plan,
                           const BBGKYOptions& opt = {});

} // namespace cavity

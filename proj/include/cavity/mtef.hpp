#pragma once

#include "cavity/ensemble.hpp"
#include "cavity/integrator.hpp"
#include "cavity/model.hpp"
#include "cavity/sampling.hpp"

namespace cavity {

struct MtefTrajectory {
    CMat rho;           // atomic density matrix
    FieldSample field;  // classical mode coordinates
    double t{0.0};
};

// rho = |highest><highest|, field drawn from the vacuum Wigner distribution.
MtefTrajectory mtef_initial(const ModelSpec& model, Stream& stream);

// Tr(rho H_A) + 1/2 sum (P^2 + omega^2 Q^2) + Tr(rho mu) sum omega lambda Q.
double mtef_energy(const ModelSpec& model, const MtefTrajectory& traj);

// Mean-field flow rho' = -i[H_A + (sum omega lambda Q) mu, rho], Q' = P,
// P' = -omega^2 Q - omega lambda Tr(rho mu). The density matrix is carried as a
// factor rho = A A^dagger with A' = -i H A, so rho stays Hermitian and positive
// semidefinite to rounding; after each step A is rescaled to unit Frobenius
// norm, which removes the Runge-Kutta norm error from the trace. The free atom and free field parts are propagated
// exactly; the coupling is integrated by fourth-order Runge-Kutta.
class MtefStepper {
public:
    explicit MtefStepper(const ModelSpec& model);

    void step(MtefTrajectory& traj, double dt);
    // Packed-state interface for repeated stepping without unpacking: the
    // factor A (interleaved re, im, column-major) followed by Q and P.
    void pack(const MtefTrajectory& traj, Vec& y) const;
    void unpack(const Vec& y, MtefTrajectory& traj) const;
    void step(Vec& y, double dt);

    void rhs(const Vec& y, Vec& dy) const;
    void linear(Vec& y, double h);
    double trace_mu(const Vec& y) const;   // Tr(rho mu)
    double energy(const Vec& y) const;
    double population(const Vec& y, int k) const;
    double trace(const Vec& y) const;
    Eigen::Map<const Vec> Q(const Vec& y) const { return {y.data() + q0_, M_}; }

private:
    const ModelSpec& model_;
    int K_, M_;
    Eigen::Index q0_;
    Vec coupling_;  // omega lambda
    Vec row_energies_;  // eps_i for factor entry (i, j), column-major
    FreeFieldFlow field_;
    LawsonRK4 rk_;
};

MtefTrajectory mtef_step(const MtefTrajectory& traj, const ModelSpec& model, double dt);

ObservableSeries run_mtef(const ModelSpec& model, const EnsembleOptions& opt, const OutputPlan& plan);

} // namespace cavity

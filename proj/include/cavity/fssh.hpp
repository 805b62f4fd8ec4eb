#pragma once

#include <vector>

#include "cavity/ensemble.hpp"
#include "cavity/integrator.hpp"
#include "cavity/model.hpp"
#include "cavity/sampling.hpp"

namespace cavity {

struct AdiabaticStates {
    Vec energies;  // ascending eigenvalues of H_el(Q)
    Mat vectors;   // columns are eigenvectors in the diabatic basis
    Mat dipole;    // <phi_i | mu | phi_j>

    // d_ij per mode: omega lambda <phi_i|mu|phi_j> / (E_j - E_i), i != j.
    Vec nac(const ModelSpec& model, int i, int j) const;
    // P . d_ij without forming the mode vector.
    double nac_dot(double p_dot_coupling, int i, int j) const;
};

// Eigen-decomposition of H_el(Q). Without `reference` each eigenvector has its
// largest-magnitude component positive; with it, signs maximize overlap with
// the matching reference column. Throws NumericGuard on degenerate levels.
AdiabaticStates adiabatic_states(const ModelSpec& model, const Vec& Q, const Mat* reference = nullptr);

struct HopEvent {
    double t;
    int from, to;
    bool accepted;
};

struct HopLog {
    long attempted{0};
    long accepted{0};
    long frustrated{0};
    double energy_error_max{0.0};  // |E after - E before| over accepted hops
    std::vector<HopEvent> events;
};

struct FsshOptions {
    bool uniform_rescale{false};  // rescale all momenta instead of along d_ij
    bool keep_events{false};      // store every hop in HopLog::events
};

struct FsshTrajectory {
    CMat rho;           // electronic density in the adiabatic basis
    int active{0};      // current surface, 0-based
    FieldSample field;
    double t{0.0};
    Mat vectors;        // eigenvectors at the current Q, the sign reference
    HopLog log;
};

// Sampled field, active surface of maximal overlap with the highest diabatic
// level, rho the projector on that diabatic level expressed adiabatically.
FsshTrajectory fssh_initial(const ModelSpec& model, Stream& stream);

// E_active(Q) + 1/2 sum P^2; E_active contains the field potential.
double fssh_energy(const ModelSpec& model, const FsshTrajectory& traj);

// Diabatic populations of the active-surface projector.
Vec fssh_populations(const FsshTrajectory& traj);

// Fewest-switches probabilities g_{a->j} = max(0, b_ja dt / rho_aa) with
// b_ja = -2 Re(rho_aj) P.d_ja, from the population flux of the rho equation.
Vec hop_probabilities(const CMat& rho, const AdiabaticStates& st, double p_dot_coupling, int active, double dt);

// Target surface for a uniform draw xi, or -1 for no hop.
int choose_hop(const Vec& g, int active, double xi);

// Momentum adjustment after a hop a -> j conserving E + P^2/2. Returns false
// (P untouched) when the kinetic energy along the rescaling direction is insufficient.
bool rescale_momentum(Vec& P, const Vec& direction, double e_from, double e_to);
bool rescale_momentum_uniform(Vec& P, double e_from, double e_to);

class FsshStepper {
public:
    FsshStepper(const ModelSpec& model, FsshOptions opt = {});

    // One step: field on the active surface and rho by Runge-Kutta, then a hop attempt.
    void step(FsshTrajectory& traj, double dt, Stream& stream);

    // Packed (rho, Q, P) interface of the continuous part.
    void rhs(const Vec& y, Vec& dy);
    void linear(Vec& y, double h) { field_.apply(y.data(), q0_, h); }

private:
    void diagonalize(const double* Q);
    const ModelSpec& model_;
    FsshOptions opt_;
    int K_, M_;
    Eigen::Index q0_;
    Vec coupling_;
    FreeFieldFlow field_;
    LawsonRK4 rk_;
    Vec y_;
    Mat h_, ref_, U_, mu_ad_;
    Vec E_;
    Eigen::SelfAdjointEigenSolver<Mat> es_;
    int active_{0};
};

FsshTrajectory fssh_step(const FsshTrajectory& traj, const ModelSpec& model, double dt, Stream& stream,
                         FsshOptions opt = {});

ObservableSeries run_fssh(const ModelSpec& model, const EnsembleOptions& opt, const OutputPlan& plan,
                          FsshOptions fopt = {});

} // namespace cavity

#pragma once

#include "cavity/ensemble.hpp"
#include "cavity/integrator.hpp"
#include "cavity/model.hpp"
#include "cavity/sampling.hpp"

namespace cavity {

struct MappingOptions {
    bool unhalved{false};             // bilinear form without the 1/2 prefactor
    bool trace_stabilization{false};  // move Tr h / K out of the mapping force
    double divergence_bound{1e3};     // reject once sum r^2 + p^2 exceeds this
};

// Prefactor f of the mapping bilinear f sum h (r r' + p p' - delta).
inline double mapping_prefactor(const MappingOptions& opt) { return opt.unhalved ? 1.0 : 0.5; }

struct MappingState {
    Vec r, p;             // forward mapping variables
    Vec rb, pb;           // backward set; empty for LSC
    FieldSample field;
    Complex weight{1.0};  // initial-state symbol
    double t{0.0};

    bool forward_backward() const { return rb.size() > 0; }
};

// Matter part f sum_{kl} h_kl(Q) (r_k r_l + p_k p_l - delta_kl) with
// h(Q) = diag(eps) + (sum omega lambda Q) mu. The field energy is not included.
double mapping_hamiltonian(const ModelSpec& model, const Vec& Q, const Vec& r, const Vec& p,
                           const MappingOptions& opt = {});

// Total conserved function: H_m for LSC, the forward-backward average H_e for FBTS.
double mapping_energy(const ModelSpec& model, const MappingState& s, const MappingOptions& opt = {});

// LSC: occupied oscillator from the n = 1 Wigner function by Gaussian sampling
// with weight 2(r^2 + p^2) - 1, the others from the n = 0 Wigner function.
MappingState lsc_initial(const ModelSpec& model, Stream& stream);

// FBTS: independent Gaussian forward and backward sets with weight
// (r_0 - i p_0)(r'_0 + i p'_0) on the initial level 0.
MappingState fbts_initial(const ModelSpec& model, Stream& stream);

// Weighted population estimators of a state:
// LSC  w (r_k^2 + p_k^2 - 1) / 2,  FBTS  Re[w (r_k + i p_k)(r'_k - i p'_k)].
Vec mapping_populations(const MappingState& s);

// Weighted estimator of the matter identity, multiplying field observables.
double mapping_identity(const MappingState& s);

// Hamilton flow of H_m (LSC) or H_e (FBTS). Packed layout: interleaved
// (r_k, p_k) pairs for the forward set, then the backward set, then Q and P.
// Free mapping phases and the free field are propagated exactly; the coupling
// by integrating-factor Runge-Kutta.
class MappingStepper {
public:
    MappingStepper(const ModelSpec& model, bool forward_backward, MappingOptions opt = {});

    void step(MappingState& s, double dt);
    void pack(const MappingState& s, Vec& y) const;
    void unpack(const Vec& y, MappingState& s) const;
    void step(Vec& y, double dt) { rk_.step(*this, y, dt); }

    void rhs(const Vec& y, Vec& dy) const;
    void linear(Vec& y, double h);
    double energy(const Vec& y) const;
    double radius(const Vec& y) const;  // sum of r^2 + p^2 over all sets
    Eigen::Map<const Vec> Q(const Vec& y) const { return {y.data() + q0_, M_}; }
    int sets() const { return sets_; }

private:
    double bilinear_mu(const Vec& y, int set) const;  // sum mu_kl (r_k r_l + p_k p_l)
    const ModelSpec& model_;
    MappingOptions opt_;
    int K_, M_, sets_;
    Eigen::Index q0_;
    double f_, tr_mu_;
    Vec coupling_;  // omega lambda
    Vec phases_;    // free mapping frequencies, repeated per set
    FreeFieldFlow field_;
    LawsonRK4 rk_;
};

MappingState lsc_step(const MappingState& s, const ModelSpec& model, double dt, const MappingOptions& opt = {});
MappingState fbts_step(const MappingState& s, const ModelSpec& model, double dt, const MappingOptions& opt = {});

ObservableSeries run_lsc(const ModelSpec& model, const EnsembleOptions& opt, const OutputPlan& plan,
                         const MappingOptions& mopt = {});
ObservableSeries run_fbts(const ModelSpec& model, const EnsembleOptions& opt, const OutputPlan& plan,
                          const MappingOptions& mopt = {});

} // namespace cavity

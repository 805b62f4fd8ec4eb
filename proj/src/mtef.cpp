#include "cavity/mtef.hpp"

#include <algorithm>
#include <cmath>

namespace cavity {

MtefTrajectory mtef_initial(const ModelSpec& model, Stream& stream) {
    MtefTrajectory traj;
    const int K = model.levels();
    traj.rho = CMat::Zero(K, K);
    traj.rho(model.atom.initial(), model.atom.initial()) = 1.0;
    traj.field = sample_vacuum(model, stream);
    return traj;
}

double mtef_energy(const ModelSpec& model, const MtefTrajectory& traj) {
    const Vec& w = model.cavity.omega;
    const double atom = (traj.rho.diagonal().real().array() * model.atom.energies.array()).sum();
    const double field = 0.5 * (traj.field.P.squaredNorm() + (w.array() * traj.field.Q.array()).square().sum());
    const double dipole = (traj.rho * model.atom.dipole.cast<Complex>()).trace().real();
    return atom + field + dipole * coupling_field(model, traj.field.Q);
}

MtefStepper::MtefStepper(const ModelSpec& model)
    : model_(model), K_(model.levels()), M_(model.modes()), q0_(2 * K_ * K_),
      coupling_((model.cavity.omega.array() * model.cavity.lam.array()).matrix()),
      row_energies_(K_ * K_), field_(model.cavity.omega) {
    for (int j = 0; j < K_; ++j)
        for (int i = 0; i < K_; ++i) row_energies_(i + K_ * j) = model.atom.energies(i);
}

void MtefStepper::pack(const MtefTrajectory& traj, Vec& y) const {
    if (traj.rho.rows() != K_ || traj.rho.cols() != K_) throw ConfigError("mtef: density matrix has wrong size");
    // rho = A A^dagger with A = V sqrt(Lambda); negative eigenvalues are clipped.
    const Eigen::SelfAdjointEigenSolver<CMat> es(traj.rho);
    const CMat A = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().cast<Complex>().asDiagonal();
    y.resize(q0_ + 2 * M_);
    for (int j = 0; j < K_; ++j)
        for (int i = 0; i < K_; ++i) {
            y(2 * (i + K_ * j)) = A(i, j).real();
            y(2 * (i + K_ * j) + 1) = A(i, j).imag();
        }
    y.segment(q0_, M_) = traj.field.Q;
    y.segment(q0_ + M_, M_) = traj.field.P;
}

void MtefStepper::unpack(const Vec& y, MtefTrajectory& traj) const {
    CMat A(K_, K_);
    for (int j = 0; j < K_; ++j)
        for (int i = 0; i < K_; ++i) A(i, j) = Complex(y(2 * (i + K_ * j)), y(2 * (i + K_ * j) + 1));
    traj.rho = A * A.adjoint();
    traj.field.Q = y.segment(q0_, M_);
    traj.field.P = y.segment(q0_ + M_, M_);
}

double MtefStepper::population(const Vec& y, int k) const {
    double p = 0.0;
    for (int j = 0; j < K_; ++j) p += y(2 * (k + K_ * j)) * y(2 * (k + K_ * j)) + y(2 * (k + K_ * j) + 1) * y(2 * (k + K_ * j) + 1);
    return p;
}

double MtefStepper::trace_mu(const Vec& y) const {
    const Mat& mu = model_.atom.dipole;
    double tr = 0.0;
    for (int j = 0; j < K_; ++j)
        for (int i = 0; i < K_; ++i)
            for (int k = 0; k < K_; ++k)
                tr += mu(i, k) * (y(2 * (i + K_ * j)) * y(2 * (k + K_ * j)) +
                                  y(2 * (i + K_ * j) + 1) * y(2 * (k + K_ * j) + 1));
    return tr;
}

double MtefStepper::trace(const Vec& y) const {
    double tr = 0.0;
    for (int k = 0; k < K_; ++k) tr += population(y, k);
    return tr;
}

void MtefStepper::rhs(const Vec& y, Vec& dy) const {
    const Mat& mu = model_.atom.dipole;
    const double s = coupling_.dot(y.segment(q0_, M_));
    for (int j = 0; j < K_; ++j)
        for (int i = 0; i < K_; ++i) {
            double cr = 0.0, ci = 0.0;  // (mu A)_ij
            for (int k = 0; k < K_; ++k) {
                cr += mu(i, k) * y(2 * (k + K_ * j));
                ci += mu(i, k) * y(2 * (k + K_ * j) + 1);
            }
            dy(2 * (i + K_ * j)) = s * ci;
            dy(2 * (i + K_ * j) + 1) = -s * cr;
        }
    dy.segment(q0_, M_).setZero();
    dy.segment(q0_ + M_, M_) = -trace_mu(y) * coupling_;
}

void MtefStepper::step(Vec& y, double dt) {
    rk_.step(*this, y, dt);
    y.head(q0_) /= std::sqrt(trace(y));
}

void MtefStepper::linear(Vec& y, double h) {
    rotate_phases(y.data(), 0, row_energies_, h);
    field_.apply(y.data(), q0_, h);
}

double MtefStepper::energy(const Vec& y) const {
    const Vec& w = model_.cavity.omega;
    double atom = 0.0;
    for (int k = 0; k < K_; ++k) atom += population(y, k) * model_.atom.energies(k);
    const auto Qv = y.segment(q0_, M_);
    const auto Pv = y.segment(q0_ + M_, M_);
    const double field = 0.5 * (Pv.squaredNorm() + (w.array() * Qv.array()).square().sum());
    return atom + field + trace_mu(y) * coupling_.dot(Qv);
}

void MtefStepper::step(MtefTrajectory& traj, double dt) {
    Vec y;
    pack(traj, y);
    step(y, dt);
    unpack(y, traj);
    traj.t += dt;
}

MtefTrajectory mtef_step(const MtefTrajectory& traj, const ModelSpec& model, double dt) {
    if (!(dt > 0.0)) throw ConfigError("mtef_step: dt must be positive");
    MtefStepper stepper(model);
    MtefTrajectory out = traj;
    stepper.step(out, dt);
    return out;
}

namespace {

class MtefRunner {
public:
    MtefRunner(const ModelSpec& model, const EnsembleOptions& opt, const OutputPlan& plan)
        : model_(model), opt_(opt), plan_(plan), stepper_(model),
          estimator_(model, plan.r_grid, plan.intensity), schedule_(plan) {}

    void run(std::uint64_t index, TrajectoryRecord& rec) {
        Stream stream(opt_.seed, index);
        stepper_.pack(mtef_initial(model_, stream), y_);
        schedule_.restart();
        const double e0 = stepper_.energy(y_);
        double drift = 0.0, trace_drift = 0.0;
        const std::vector<int>& snaps = schedule_.snapshot_steps();
        for (int k = 0; k <= schedule_.steps(); ++k) {
            if (k > 0) stepper_.step(y_, plan_.dt);
            const int row = schedule_.row_at(k);
            if (row >= 0) {
                for (int l = 0; l < model_.levels(); ++l) rec.populations(row, l) = stepper_.population(y_, l);
                drift = std::max(drift, std::abs(stepper_.energy(y_) - e0) / std::abs(e0));
                trace_drift = std::max(trace_drift, std::abs(stepper_.trace(y_) - 1.0));
            }
            for (std::size_t s = 0; s < snaps.size(); ++s)
                if (snaps[s] == k) {
                    q_ = stepper_.Q(y_);
                    estimator_.evaluate(q_, rec.intensity[s]);
                }
        }
        rec.maxima["energy_drift_rel_max"] = drift;
        rec.maxima["trace_drift_max"] = trace_drift;
    }

private:
    const ModelSpec& model_;
    const EnsembleOptions& opt_;
    const OutputPlan& plan_;
    MtefStepper stepper_;
    FieldEstimator estimator_;
    StepSchedule schedule_;
    Vec y_, q_;
};

} // namespace

ObservableSeries run_mtef(const ModelSpec& model, const EnsembleOptions& opt, const OutputPlan& plan) {
    validate(model);
    return run_ensemble("mtef", model.levels(), opt, plan, [&] { return MtefRunner(model, opt, plan); });
}

} // namespace cavity

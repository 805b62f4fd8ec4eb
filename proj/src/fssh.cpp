#include "cavity/fssh.hpp"

#include <algorithm>
#include <cmath>

namespace cavity {

namespace {

void fix_signs(Mat& U, const Mat* reference) {
    for (Eigen::Index j = 0; j < U.cols(); ++j) {
        double s;
        if (reference) {
            s = U.col(j).dot(reference->col(j));
        } else {
            Eigen::Index imax;
            U.col(j).cwiseAbs().maxCoeff(&imax);
            s = U(imax, j);
        }
        if (s < 0.0) U.col(j) = -U.col(j);
    }
}

void check_gaps(const Vec& E) {
    for (Eigen::Index k = 1; k < E.size(); ++k)
        if (std::abs(E(k) - E(k - 1)) < 1e-12) throw NumericGuard("degenerate adiabatic surfaces");
}

} // namespace

Vec AdiabaticStates::nac(const ModelSpec& model, int i, int j) const {
    if (i == j) return Vec::Zero(model.modes());
    return (model.cavity.omega.array() * model.cavity.lam.array()).matrix() * (dipole(i, j) / (energies(j) - energies(i)));
}

double AdiabaticStates::nac_dot(double p_dot_coupling, int i, int j) const {
    if (i == j) return 0.0;
    return p_dot_coupling * dipole(i, j) / (energies(j) - energies(i));
}

AdiabaticStates adiabatic_states(const ModelSpec& model, const Vec& Q, const Mat* reference) {
    Eigen::SelfAdjointEigenSolver<Mat> es(electronic_hamiltonian(model, Q));
    AdiabaticStates st{es.eigenvalues(), es.eigenvectors(), Mat()};
    check_gaps(st.energies);
    fix_signs(st.vectors, reference);
    st.dipole = st.vectors.transpose() * model.atom.dipole * st.vectors;
    return st;
}

FsshTrajectory fssh_initial(const ModelSpec& model, Stream& stream) {
    FsshTrajectory traj;
    traj.field = sample_vacuum(model, stream);
    const AdiabaticStates st = adiabatic_states(model, traj.field.Q);
    const int top = model.atom.initial();
    st.vectors.row(top).cwiseAbs().maxCoeff(&traj.active);
    const Vec c = st.vectors.row(top).transpose();
    traj.rho = (c * c.transpose()).cast<Complex>();
    traj.vectors = st.vectors;
    return traj;
}

double fssh_energy(const ModelSpec& model, const FsshTrajectory& traj) {
    const AdiabaticStates st = adiabatic_states(model, traj.field.Q, &traj.vectors);
    return st.energies(traj.active) + 0.5 * traj.field.P.squaredNorm();
}

Vec fssh_populations(const FsshTrajectory& traj) {
    return traj.vectors.col(traj.active).array().square().matrix();
}

Vec hop_probabilities(const CMat& rho, const AdiabaticStates& st, double p_dot_coupling, int active, double dt) {
    const Eigen::Index K = rho.rows();
    Vec g = Vec::Zero(K);
    const double raa = rho(active, active).real();
    if (raa <= 0.0) return g;
    for (Eigen::Index j = 0; j < K; ++j) {
        if (j == active) continue;
        const double b = -2.0 * rho(active, j).real() * st.nac_dot(p_dot_coupling, static_cast<int>(j), active);
        g(j) = std::clamp(b * dt / raa, 0.0, 1.0);
    }
    return g;
}

int choose_hop(const Vec& g, int active, double xi) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < g.size(); ++j) {
        if (j == active) continue;
        acc += g(j);
        if (xi < acc) return static_cast<int>(j);
    }
    return -1;
}

bool rescale_momentum(Vec& P, const Vec& direction, double e_from, double e_to) {
    const double a = 0.5 * direction.squaredNorm();
    const double b = P.dot(direction);
    const double c = e_to - e_from;
    if (a == 0.0) return c <= 0.0 && c == 0.0;
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) return false;
    // Smaller-magnitude root of a k^2 + b k + c = 0 in cancellation-free form.
    const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
    const double kappa = q == 0.0 ? 0.0 : c / q;
    P += kappa * direction;
    return true;
}

bool rescale_momentum_uniform(Vec& P, double e_from, double e_to) {
    const double kinetic = P.squaredNorm();
    if (kinetic == 0.0) return e_to == e_from;
    const double s2 = (kinetic + 2.0 * (e_from - e_to)) / kinetic;
    if (s2 < 0.0) return false;
    P *= std::sqrt(s2);
    return true;
}

FsshStepper::FsshStepper(const ModelSpec& model, FsshOptions opt)
    : model_(model), opt_(opt), K_(model.levels()), M_(model.modes()), q0_(2 * K_ * K_),
      coupling_((model.cavity.omega.array() * model.cavity.lam.array()).matrix()),
      field_(model.cavity.omega), h_(K_, K_), E_(K_), es_(K_) {}

void FsshStepper::diagonalize(const double* Q) {
    const Eigen::Map<const Vec> q(Q, M_);
    const double s = coupling_.dot(q);
    const double pot = 0.5 * (model_.cavity.omega.array().square() * q.array().square()).sum();
    h_ = s * model_.atom.dipole;
    h_.diagonal() += model_.atom.energies + Vec::Constant(K_, pot);
    es_.compute(h_);
    E_ = es_.eigenvalues();
    U_ = es_.eigenvectors();
    check_gaps(E_);
    fix_signs(U_, ref_.size() ? &ref_ : nullptr);
    mu_ad_.noalias() = U_.transpose() * model_.atom.dipole * U_;
}

void FsshStepper::rhs(const Vec& y, Vec& dy) {
    diagonalize(y.data() + q0_);
    const double pc = coupling_.dot(y.segment(q0_ + M_, M_));
    auto re = [&](int i, int j) { return y(2 * (i + K_ * j)); };
    auto im = [&](int i, int j) { return y(2 * (i + K_ * j) + 1); };
    auto T = [&](int k, int l) { return k == l ? 0.0 : pc * mu_ad_(k, l) / (E_(l) - E_(k)); };
    for (int j = 0; j < K_; ++j)
        for (int i = 0; i < K_; ++i) {
            // -i (E_i - E_j) rho_ij - (T rho - rho T)_ij
            const double w = E_(i) - E_(j);
            double dr = w * im(i, j), di = -w * re(i, j);
            for (int k = 0; k < K_; ++k) {
                dr -= T(i, k) * re(k, j) - re(i, k) * T(k, j);
                di -= T(i, k) * im(k, j) - im(i, k) * T(k, j);
            }
            dy(2 * (i + K_ * j)) = dr;
            dy(2 * (i + K_ * j) + 1) = di;
        }
    dy.segment(q0_, M_).setZero();
    dy.segment(q0_ + M_, M_) = -mu_ad_(active_, active_) * coupling_;
}

void FsshStepper::step(FsshTrajectory& traj, double dt, Stream& stream) {
    y_.resize(q0_ + 2 * M_);
    for (int j = 0; j < K_; ++j)
        for (int i = 0; i < K_; ++i) {
            y_(2 * (i + K_ * j)) = traj.rho(i, j).real();
            y_(2 * (i + K_ * j) + 1) = traj.rho(i, j).imag();
        }
    y_.segment(q0_, M_) = traj.field.Q;
    y_.segment(q0_ + M_, M_) = traj.field.P;
    ref_ = traj.vectors;
    active_ = traj.active;
    rk_.step(*this, y_, dt);

    for (int j = 0; j < K_; ++j)
        for (int i = 0; i < K_; ++i) traj.rho(i, j) = Complex(y_(2 * (i + K_ * j)), y_(2 * (i + K_ * j) + 1));
    traj.field.Q = y_.segment(q0_, M_);
    traj.field.P = y_.segment(q0_ + M_, M_);
    diagonalize(y_.data() + q0_);
    traj.vectors = U_;
    traj.t += dt;

    const AdiabaticStates st{E_, U_, mu_ad_};
    const double pc = coupling_.dot(traj.field.P);
    const Vec g = hop_probabilities(traj.rho, st, pc, traj.active, dt);
    if (g.sum() > 1.0) throw NumericGuard("hop probabilities exceed 1; reduce dt");
    const int target = choose_hop(g, traj.active, stream.uniform());
    if (target < 0) return;
    ++traj.log.attempted;
    const double e_from = E_(traj.active), e_to = E_(target);
    const double kin_before = 0.5 * traj.field.P.squaredNorm();
    const bool ok = opt_.uniform_rescale
        ? rescale_momentum_uniform(traj.field.P, e_from, e_to)
        : rescale_momentum(traj.field.P, st.nac(model_, traj.active, target), e_from, e_to);
    if (opt_.keep_events) traj.log.events.push_back({traj.t, traj.active, target, ok});
    if (ok) {
        const double kin = 0.5 * traj.field.P.squaredNorm();
        traj.log.energy_error_max = std::max(traj.log.energy_error_max, std::abs(e_to + kin - e_from - kin_before));
        ++traj.log.accepted;
        traj.active = target;
    } else {
        ++traj.log.frustrated;
    }
}

FsshTrajectory fssh_step(const FsshTrajectory& traj, const ModelSpec& model, double dt, Stream& stream,
                         FsshOptions opt) {
    if (!(dt > 0.0)) throw ConfigError("fssh_step: dt must be positive");
    FsshStepper stepper(model, opt);
    FsshTrajectory out = traj;
    stepper.step(out, dt, stream);
    return out;
}

namespace {

class FsshRunner {
public:
    FsshRunner(const ModelSpec& model, const EnsembleOptions& opt, const OutputPlan& plan, FsshOptions fopt)
        : model_(model), opt_(opt), plan_(plan), stepper_(model, fopt),
          estimator_(model, plan.r_grid, plan.intensity), schedule_(plan) {}

    void run(std::uint64_t index, TrajectoryRecord& rec) {
        Stream stream(opt_.seed, index);
        FsshTrajectory traj = fssh_initial(model_, stream);
        schedule_.restart();
        // Hops conserve the total exactly, so one reference covers the whole run.
        const double e0 = fssh_energy(model_, traj);
        double drift = 0.0;
        const std::vector<int>& snaps = schedule_.snapshot_steps();
        for (int k = 0; k <= schedule_.steps(); ++k) {
            if (k > 0) stepper_.step(traj, plan_.dt, stream);
            const int row = schedule_.row_at(k);
            if (row >= 0) {
                rec.populations.row(row) = fssh_populations(traj).transpose();
                drift = std::max(drift, std::abs(fssh_energy(model_, traj) - e0) / std::abs(e0));
            }
            for (std::size_t s = 0; s < snaps.size(); ++s)
                if (snaps[s] == k) estimator_.evaluate(traj.field.Q, rec.intensity[s]);
        }
        rec.maxima["energy_drift_rel_max"] = drift;
        rec.maxima["hop_energy_error_rel_max"] = traj.log.energy_error_max / std::abs(e0);
        rec.totals["hops_attempted"] = static_cast<double>(traj.log.attempted);
        rec.totals["hops_accepted"] = static_cast<double>(traj.log.accepted);
        rec.totals["hops_frustrated"] = static_cast<double>(traj.log.frustrated);
    }

private:
    const ModelSpec& model_;
    const EnsembleOptions& opt_;
    const OutputPlan& plan_;
    FsshStepper stepper_;
    FieldEstimator estimator_;
    StepSchedule schedule_;
};

} // namespace

ObservableSeries run_fssh(const ModelSpec& model, const EnsembleOptions& opt, const OutputPlan& plan,
                          FsshOptions fopt) {
    validate(model);
    return run_ensemble("fssh", model.levels(), opt, plan, [&] { return FsshRunner(model, opt, plan, fopt); });
}

} // namespace cavity

#include "cavity/mapping.hpp"

#include <algorithm>

namespace cavity {

double mapping_hamiltonian(const ModelSpec& model, const Vec& Q, const Vec& r, const Vec& p,
                           const MappingOptions& opt) {
    if (r.size() != model.levels() || p.size() != model.levels() || Q.size() != model.modes())
        throw ConfigError("mapping_hamiltonian: dimension mismatch");
    const Mat h = electronic_hamiltonian(model, Q);
    return mapping_prefactor(opt) * (r.dot(h * r) + p.dot(h * p) - h.trace());
}

double mapping_energy(const ModelSpec& model, const MappingState& s, const MappingOptions& opt) {
    MappingStepper stepper(model, s.forward_backward(), opt);
    Vec y;
    stepper.pack(s, y);
    return stepper.energy(y);
}

MappingState lsc_initial(const ModelSpec& model, Stream& stream) {
    MappingState s;
    s.field = sample_vacuum(model, stream);
    MappingSample m = sample_mapping_gaussian(model.levels(), stream);
    const int k0 = model.atom.initial();
    s.weight = 2.0 * (m.r(k0) * m.r(k0) + m.p(k0) * m.p(k0)) - 1.0;
    s.r = std::move(m.r);
    s.p = std::move(m.p);
    return s;
}

MappingState fbts_initial(const ModelSpec& model, Stream& stream) {
    MappingState s;
    s.field = sample_vacuum(model, stream);
    MappingSample fw = sample_mapping_gaussian(model.levels(), stream);
    MappingSample bw = sample_mapping_gaussian(model.levels(), stream);
    const int k0 = model.atom.initial();
    s.weight = Complex(fw.r(k0), -fw.p(k0)) * Complex(bw.r(k0), bw.p(k0));
    s.r = std::move(fw.r);
    s.p = std::move(fw.p);
    s.rb = std::move(bw.r);
    s.pb = std::move(bw.p);
    return s;
}

Vec mapping_populations(const MappingState& s) {
    const Eigen::Index K = s.r.size();
    Vec out(K);
    for (Eigen::Index k = 0; k < K; ++k) {
        if (s.forward_backward())
            out(k) = (s.weight * Complex(s.r(k), s.p(k)) * Complex(s.rb(k), -s.pb(k))).real();
        else
            out(k) = s.weight.real() * 0.5 * (s.r(k) * s.r(k) + s.p(k) * s.p(k) - 1.0);
    }
    return out;
}

double mapping_identity(const MappingState& s) {
    if (!s.forward_backward()) return s.weight.real();
    Complex sum = 0.0;
    for (Eigen::Index k = 0; k < s.r.size(); ++k) sum += Complex(s.r(k), s.p(k)) * Complex(s.rb(k), -s.pb(k));
    return (s.weight * sum).real();
}

MappingStepper::MappingStepper(const ModelSpec& model, bool forward_backward, MappingOptions opt)
    : model_(model), opt_(opt), K_(model.levels()), M_(model.modes()), sets_(forward_backward ? 2 : 1),
      q0_(2 * K_ * sets_), f_(mapping_prefactor(opt)), tr_mu_(model.atom.dipole.trace()),
      coupling_((model.cavity.omega.array() * model.cavity.lam.array()).matrix()), phases_(K_ * sets_),
      field_(model.cavity.omega) {
    const Vec& e = model.atom.energies;
    const double shift = opt.trace_stabilization ? e.mean() : 0.0;
    for (int set = 0; set < sets_; ++set) phases_.segment(set * K_, K_) = 2.0 * f_ * (e.array() - shift).matrix();
}

void MappingStepper::pack(const MappingState& s, Vec& y) const {
    if (s.forward_backward() != (sets_ == 2)) throw ConfigError("MappingStepper: state and stepper kinds differ");
    y.resize(q0_ + 2 * M_);
    for (int k = 0; k < K_; ++k) {
        y(2 * k) = s.r(k);
        y(2 * k + 1) = s.p(k);
        if (sets_ == 2) {
            y(2 * (K_ + k)) = s.rb(k);
            y(2 * (K_ + k) + 1) = s.pb(k);
        }
    }
    y.segment(q0_, M_) = s.field.Q;
    y.segment(q0_ + M_, M_) = s.field.P;
}

void MappingStepper::unpack(const Vec& y, MappingState& s) const {
    s.r.resize(K_);
    s.p.resize(K_);
    for (int k = 0; k < K_; ++k) {
        s.r(k) = y(2 * k);
        s.p(k) = y(2 * k + 1);
    }
    if (sets_ == 2) {
        s.rb.resize(K_);
        s.pb.resize(K_);
        for (int k = 0; k < K_; ++k) {
            s.rb(k) = y(2 * (K_ + k));
            s.pb(k) = y(2 * (K_ + k) + 1);
        }
    }
    s.field.Q = y.segment(q0_, M_);
    s.field.P = y.segment(q0_ + M_, M_);
}

double MappingStepper::bilinear_mu(const Vec& y, int set) const {
    const Mat& mu = model_.atom.dipole;
    const double* z = y.data() + 2 * K_ * set;
    double b = 0.0;
    for (int k = 0; k < K_; ++k)
        for (int l = 0; l < K_; ++l) b += mu(k, l) * (z[2 * k] * z[2 * l] + z[2 * k + 1] * z[2 * l + 1]);
    return b;
}

double MappingStepper::radius(const Vec& y) const { return y.head(q0_).squaredNorm(); }

void MappingStepper::rhs(const Vec& y, Vec& dy) const {
    const Mat& mu = model_.atom.dipole;
    const double s = coupling_.dot(y.segment(q0_, M_));
    const double tau = opt_.trace_stabilization ? tr_mu_ / K_ : 0.0;
    double force = 0.0;
    for (int set = 0; set < sets_; ++set) {
        const double* z = y.data() + 2 * K_ * set;
        double* dz = dy.data() + 2 * K_ * set;
        double rho = 0.0;
        for (int k = 0; k < K_; ++k) {
            double mr = -tau * z[2 * k], mp = -tau * z[2 * k + 1];
            for (int l = 0; l < K_; ++l) {
                mr += mu(k, l) * z[2 * l];
                mp += mu(k, l) * z[2 * l + 1];
            }
            dz[2 * k] = 2.0 * f_ * s * mp;
            dz[2 * k + 1] = -2.0 * f_ * s * mr;
            rho += z[2 * k] * z[2 * k] + z[2 * k + 1] * z[2 * k + 1];
        }
        const double b = bilinear_mu(y, set);
        force += opt_.trace_stabilization ? tau + f_ * (b - tau * rho) : f_ * (b - tr_mu_);
    }
    force /= sets_;
    dy.segment(q0_, M_).setZero();
    dy.segment(q0_ + M_, M_) = -force * coupling_;
}

void MappingStepper::linear(Vec& y, double h) {
    rotate_phases(y.data(), 0, phases_, h);
    field_.apply(y.data(), q0_, h);
}

double MappingStepper::energy(const Vec& y) const {
    const Vec& w = model_.cavity.omega;
    const Vec& e = model_.atom.energies;
    const auto Qv = y.segment(q0_, M_);
    const auto Pv = y.segment(q0_ + M_, M_);
    const double s = coupling_.dot(Qv);
    const double field = 0.5 * (Pv.squaredNorm() + (w.array() * Qv.array()).square().sum());
    const double tau = opt_.trace_stabilization ? tr_mu_ / K_ : 0.0;
    const double shift = opt_.trace_stabilization ? e.mean() : 0.0;
    double matter = 0.0;
    for (int set = 0; set < sets_; ++set) {
        const double* z = y.data() + 2 * K_ * set;
        double diag = 0.0, rho = 0.0;
        for (int k = 0; k < K_; ++k) {
            const double n = z[2 * k] * z[2 * k] + z[2 * k + 1] * z[2 * k + 1];
            diag += (e(k) - shift) * n;
            rho += n;
        }
        const double bilinear = diag + s * (bilinear_mu(y, set) - tau * rho);
        if (opt_.trace_stabilization)
            matter += shift + s * tau + f_ * bilinear;
        else
            matter += f_ * (bilinear - e.sum() - s * tr_mu_);
    }
    return field + matter / sets_;
}

void MappingStepper::step(MappingState& s, double dt) {
    Vec y;
    pack(s, y);
    step(y, dt);
    unpack(y, s);
    s.t += dt;
}

MappingState lsc_step(const MappingState& s, const ModelSpec& model, double dt, const MappingOptions& opt) {
    if (!(dt > 0.0)) throw ConfigError("lsc_step: dt must be positive");
    if (s.forward_backward()) throw ConfigError("lsc_step: state carries a backward set");
    MappingStepper stepper(model, false, opt);
    MappingState out = s;
    stepper.step(out, dt);
    return out;
}

MappingState fbts_step(const MappingState& s, const ModelSpec& model, double dt, const MappingOptions& opt) {
    if (!(dt > 0.0)) throw ConfigError("fbts_step: dt must be positive");
    if (!s.forward_backward()) throw ConfigError("fbts_step: state has no backward set");
    MappingStepper stepper(model, true, opt);
    MappingState out = s;
    stepper.step(out, dt);
    return out;
}

namespace {

class MappingRunner {
public:
    MappingRunner(const ModelSpec& model, const EnsembleOptions& opt, const OutputPlan& plan,
                  const MappingOptions& mopt, bool forward_backward)
        : model_(model), opt_(opt), plan_(plan), mopt_(mopt), fb_(forward_backward),
          stepper_(model, forward_backward, mopt), estimator_(model, plan.r_grid, plan.intensity), schedule_(plan) {}

    void run(std::uint64_t index, TrajectoryRecord& rec) {
        Stream stream(opt_.seed, index);
        state_ = fb_ ? fbts_initial(model_, stream) : lsc_initial(model_, stream);
        stepper_.pack(state_, y_);
        schedule_.restart();
        const double e0 = stepper_.energy(y_);
        double drift = 0.0;
        const std::vector<int>& snaps = schedule_.snapshot_steps();
        for (int k = 0; k <= schedule_.steps(); ++k) {
            if (k > 0) {
                stepper_.step(y_, plan_.dt);
                const double rad = stepper_.radius(y_);
                if (!std::isfinite(rad) || rad > mopt_.divergence_bound) {
                    rec.accepted = false;
                    return;
                }
            }
            const int row = schedule_.row_at(k);
            const bool snap = std::find(snaps.begin(), snaps.end(), k) != snaps.end();
            if (row < 0 && !snap) continue;
            stepper_.unpack(y_, state_);
            if (row >= 0) {
                rec.populations.row(row) = mapping_populations(state_).transpose();
                drift = std::max(drift, std::abs(stepper_.energy(y_) - e0) / std::abs(e0));
            }
            const double w = mapping_identity(state_);
            for (std::size_t s = 0; s < snaps.size(); ++s)
                if (snaps[s] == k) {
                    estimator_.evaluate(state_.field.Q, rec.intensity[s]);
                    rec.intensity[s] *= w;
                }
        }
        rec.maxima["energy_drift_rel_max"] = drift;
    }

private:
    const ModelSpec& model_;
    const EnsembleOptions& opt_;
    const OutputPlan& plan_;
    MappingOptions mopt_;
    bool fb_;
    MappingStepper stepper_;
    FieldEstimator estimator_;
    StepSchedule schedule_;
    MappingState state_;
    Vec y_;
};

void check_options(const MappingOptions& mopt) {
    if (!(mopt.divergence_bound > 0.0)) throw ConfigError("divergence_bound must be positive");
}

} // namespace

ObservableSeries run_lsc(const ModelSpec& model, const EnsembleOptions& opt, const OutputPlan& plan,
                         const MappingOptions& mopt) {
    validate(model);
    check_options(mopt);
    return run_ensemble("lsc", model.levels(), opt, plan,
                        [&] { return MappingRunner(model, opt, plan, mopt, false); });
}

ObservableSeries run_fbts(const ModelSpec& model, const EnsembleOptions& opt, const OutputPlan& plan,
                          const MappingOptions& mopt) {
    validate(model);
    check_options(mopt);
    return run_ensemble("fbts", model.levels(), opt, plan,
                        [&] { return MappingRunner(model, opt, plan, mopt, true); });
}

} // namespace cavity

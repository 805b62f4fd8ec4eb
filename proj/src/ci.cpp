#include "cavity/ci.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cavity {

CIBasis::CIBasis(int levels, int modes, int max_photons, bool exclude_same_mode_doubles,
                 std::size_t size_cap)
    : K_(levels), M_(modes), max_photons_(max_photons), same_mode_(!exclude_same_mode_doubles) {
    if (levels < 1) throw ConfigError("basis needs at least one level");
    if (modes < 1) throw ConfigError("basis needs at least one mode");
    if (max_photons != 1 && max_photons != 2) throw ConfigError("max_photons must be 1 or 2");
    const long double pairs = max_photons == 2
        ? (same_mode_ ? 0.5L * modes * (modes + 1.0L) : 0.5L * modes * (modes - 1.0L)) : 0.0L;
    const long double total = levels * (1.0L + modes + pairs);
    if (total > static_cast<long double>(size_cap)) throw ConfigError("CI basis exceeds the size cap");
    n_photon_ = 1 + M_ + static_cast<Eigen::Index>(pairs);
    pair_offset_.assign(M_ + 1, 0);
    for (int a = 0; a < M_; ++a)
        pair_offset_[a + 1] = pair_offset_[a] + (same_mode_ ? M_ - a : M_ - a - 1);
}

Eigen::Index CIBasis::pair(int a, int b) const {
    if (a > b) std::swap(a, b);
    if (!has_pair(a, b) || b >= M_ || a < 0) throw ConfigError("photon pair not in basis");
    return 1 + M_ + pair_offset_[a] + (same_mode_ ? b - a : b - a - 1);
}

std::pair<int, int> CIBasis::occupation(Eigen::Index config) const {
    if (config == 0) return {-1, -1};
    if (config <= M_) return {static_cast<int>(config - 1), -1};
    const Eigen::Index rel = config - 1 - M_;
    const auto it = std::upper_bound(pair_offset_.begin(), pair_offset_.end(), rel);
    const int a = static_cast<int>(it - pair_offset_.begin()) - 1;
    const int b = static_cast<int>(rel - pair_offset_[a]) + a + (same_mode_ ? 0 : 1);
    return {a, b};
}

CIBasis build_basis(const ModelSpec& model, int max_photons, bool exclude_same_mode_doubles,
                    std::size_t size_cap) {
    return CIBasis(model.levels(), model.modes(), max_photons, exclude_same_mode_doubles, size_cap);
}

CIState basis_state(const CIBasis& basis, int level) {
    CIState s;
    s.coeffs = CVec::Zero(basis.size());
    s.coeffs(basis.index(level, basis.vacuum())) = 1.0;
    return s;
}

namespace {

struct Transition {
    int dst, src;
    double mu;
    bool create, annihilate;
};

std::vector<Transition> transitions(const ModelSpec& model) {
    std::vector<Transition> out;
    const int K = model.levels();
    for (int d = 0; d < K; ++d)
        for (int s = 0; s < K; ++s) {
            const double mu = model.atom.dipole(d, s);
            if (d == s || mu == 0.0) continue;
            const bool lowering = d < s;
            out.push_back({d, s, mu, !model.rwa || lowering, !model.rwa || !lowering});
        }
    return out;
}

// Calls f(lo, hi, mode, factor) for every pair of configurations connected by one
// creation operator: |hi> = a_mode^dagger |lo> / factor.
template <typename F>
void for_each_link(const CIBasis& basis, F&& f) {
    const int M = basis.modes();
    for (int a = 0; a < M; ++a) f(basis.vacuum(), basis.single(a), a, 1.0);
    if (basis.max_photons() < 2) return;
    for (int a = 0; a < M; ++a) {
        if (basis.has_pair(a, a)) f(basis.single(a), basis.pair(a, a), a, std::numbers::sqrt2);
        for (int b = a + 1; b < M; ++b) {
            const Eigen::Index p = basis.pair(a, b);
            f(basis.single(a), p, b, 1.0);
            f(basis.single(b), p, a, 1.0);
        }
    }
}

} // namespace

void apply_hamiltonian(const CIBasis& basis, const ModelSpec& model, const CVec& in, CVec& out) {
    if (in.size() != basis.size() || model.levels() != basis.levels() || model.modes() != basis.modes())
        throw ConfigError("apply_hamiltonian: dimension mismatch");
    const int K = basis.levels();
    const int M = basis.modes();
    const Eigen::Index P = basis.photon_configs();
    const Vec& w = model.cavity.omega;
    out.resize(in.size());

    for (int k = 0; k < K; ++k) {
        const double e = model.atom.energies(k);
        const Eigen::Index base = k * P;
        out(base) = e * in(base);
        for (int a = 0; a < M; ++a) out(base + basis.single(a)) = (e + w(a)) * in(base + basis.single(a));
        if (basis.max_photons() == 2)
            for (int a = 0; a < M; ++a)
                for (int b = a; b < M; ++b) {
                    if (!basis.has_pair(a, b)) continue;
                    const Eigen::Index i = base + basis.pair(a, b);
                    out(i) = (e + w(a) + w(b)) * in(i);
                }
    }

    Vec g(M);
    for (int a = 0; a < M; ++a) g(a) = w(a) * model.cavity.lam(a) * std::sqrt(0.5 / w(a));
    const std::vector<Transition> tr = transitions(model);
    for_each_link(basis, [&](Eigen::Index lo, Eigen::Index hi, int a, double f) {
        for (const Transition& t : tr) {
            const double amp = g(a) * f * t.mu;
            if (t.create) out(t.dst * P + hi) += amp * in(t.src * P + lo);
            if (t.annihilate) out(t.dst * P + lo) += amp * in(t.src * P + hi);
        }
    });
}

CMat dense_hamiltonian(const CIBasis& basis, const ModelSpec& model) {
    const Eigen::Index n = basis.size();
    CMat H(n, n);
    CVec e = CVec::Zero(n), col;
    for (Eigen::Index j = 0; j < n; ++j) {
        e(j) = 1.0;
        apply_hamiltonian(basis, model, e, col);
        H.col(j) = col;
        e(j) = 0.0;
    }
    return H;
}

double ci_energy(const CIBasis& basis, const ModelSpec& model, const CVec& c) {
    return c.dot(apply_hamiltonian(basis, model, c)).real();
}

Vec ci_populations(const CIBasis& basis, const CVec& c) {
    const Eigen::Index P = basis.photon_configs();
    Vec p(basis.levels());
    for (int k = 0; k < basis.levels(); ++k) p(k) = c.segment(k * P, P).squaredNorm();
    return p;
}

Vec ci_q_square(const CIBasis& basis, const ModelSpec& model, const CIState& state) {
    const int K = basis.levels();
    const int M = basis.modes();
    const Eigen::Index P = basis.photon_configs();
    const CVec& c = state.coeffs;
    Vec n = Vec::Zero(M);
    Vec anomalous = Vec::Zero(M);  // Re <a a>
    for (int k = 0; k < K; ++k) {
        const Eigen::Index base = k * P;
        for (int a = 0; a < M; ++a) n(a) += std::norm(c(base + basis.single(a)));
        if (basis.max_photons() < 2) continue;
        for (int a = 0; a < M; ++a)
            for (int b = a; b < M; ++b) {
                if (!basis.has_pair(a, b)) continue;
                const double pr = std::norm(c(base + basis.pair(a, b)));
                if (a == b) {
                    n(a) += 2.0 * pr;
                    anomalous(a) += (std::conj(c(base)) * std::numbers::sqrt2 * c(base + basis.pair(a, a))).real();
                } else {
                    n(a) += pr;
                    n(b) += pr;
                }
            }
    }
    return ((1.0 + 2.0 * n.array() + 2.0 * anomalous.array()) / (2.0 * model.cavity.omega.array())).matrix();
}

Vec ci_intensity(const CIBasis& basis, const CVec& c, const Mat& Z) {
    const int K = basis.levels();
    const int M = basis.modes();
    if (Z.cols() != M) throw ConfigError("ci_intensity: mode matrix has wrong width");
    const Eigen::Index P = basis.photon_configs();
    const CMat Zc = Z.cast<Complex>();
    Vec I = Vec::Zero(Z.rows());
    CMat D(M, M);
    for (int k = 0; k < K; ++k) {
        const Eigen::Index base = k * P;
        CVec singles(M);
        for (int a = 0; a < M; ++a) singles(a) = c(base + basis.single(a));
        const CVec v = Zc * singles;  // vacuum component of A psi
        I += 2.0 * v.cwiseAbs2();
        if (basis.max_photons() < 2) continue;
        D.setZero();
        for (int a = 0; a < M; ++a)
            for (int b = a; b < M; ++b) {
                if (!basis.has_pair(a, b)) continue;
                const Complex x = c(base + basis.pair(a, b));
                if (a == b) D(a, a) = std::numbers::sqrt2 * x;
                else D(a, b) = D(b, a) = x;
            }
        const CMat S = Zc * D;  // S(i, b): single-b component of A psi at r_i
        I += 2.0 * S.cwiseAbs2().rowwise().sum();
        const CVec aa = (S.array() * Zc.array()).rowwise().sum();  // zeta^T D zeta
        I += 2.0 * (std::conj(c(base)) * aa.array()).real().matrix();
    }
    return I;
}

LanczosPropagator::LanczosPropagator(const CIBasis& basis, const ModelSpec& model, int krylov_dim,
                                     double tolerance, int max_halvings)
    : basis_(basis), model_(model), m_(krylov_dim), tol_(tolerance), max_halvings_(max_halvings) {
    if (krylov_dim < 2) throw ConfigError("krylov_dim must be at least 2");
    V_.assign(m_, CVec(basis.size()));
}

double LanczosPropagator::attempt(const CVec& in, double dt, CVec& out) {
    const double beta0 = in.norm();
    Vec alpha = Vec::Zero(m_), beta = Vec::Zero(m_);
    V_[0] = in / beta0;
    int m = m_;
    for (int j = 0; j < m_; ++j) {
        apply_hamiltonian(basis_, model_, V_[j], w_);
        alpha(j) = V_[j].dot(w_).real();
        for (int i = 0; i <= j; ++i) w_ -= V_[i].dot(w_) * V_[i];
        beta(j) = w_.norm();
        if (beta(j) < 1e-13 * (std::abs(alpha(j)) + 1.0)) {
            m = j + 1;
            beta(j) = 0.0;
            break;
        }
        if (j + 1 < m_) V_[j + 1] = w_ / beta(j);
    }
    Mat T = Mat::Zero(m, m);
    for (int j = 0; j < m; ++j) {
        T(j, j) = alpha(j);
        if (j + 1 < m) T(j, j + 1) = T(j + 1, j) = beta(j);
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(T);
    const CVec phase = (Complex(0.0, -dt) * es.eigenvalues().cast<Complex>()).array().exp();
    const CVec y = es.eigenvectors().cast<Complex>()
        * (phase.array() * es.eigenvectors().row(0).transpose().cast<Complex>().array()).matrix();
    out = CVec::Zero(in.size());
    for (int j = 0; j < m; ++j) out += (beta0 * y(j)) * V_[j];
    return beta0 * beta(m - 1) * std::abs(y(m - 1));
}

void LanczosPropagator::step(CIState& state, double dt) {
    if (!(dt > 0.0)) throw ConfigError("lanczos_step: dt must be positive");
    CVec next;
    // Iterative halving: advance through 2^level substeps of size dt / 2^level.
    double remaining = dt;
    int level = 0;
    long long left = 1;
    while (left > 0) {
        const double h = dt / static_cast<double>(1LL << level);
        const double err = attempt(state.coeffs, h, next);
        if (err > tol_ && level < max_halvings_) {
            ++level;
            left *= 2;
            continue;
        }
        state.coeffs.swap(next);
        ++substeps_;
        --left;
        remaining -= h;
    }
    state.t += dt;
}

CIState lanczos_step(const CIBasis& basis, const ModelSpec& model, const CIState& state, double dt,
                     int krylov_dim) {
    LanczosPropagator prop(basis, model, krylov_dim);
    CIState out = state;
    prop.step(out, dt);
    return out;
}

ObservableSeries run_exact(const ModelSpec& model, const ExactOptions& opt, const OutputPlan& plan) {
    validate(model);
    plan.check();
    const CIBasis basis = build_basis(model, opt.max_photons, opt.exclude_same_mode_doubles);
    LanczosPropagator prop(basis, model, opt.krylov_dim, opt.tolerance);
    CIState state = basis_state(basis, model.atom.initial());

    const std::vector<int> rows = plan.output_steps();
    const std::vector<int> snaps = plan.snapshot_steps();
    const Mat Z = mode_matrix(model, plan.r_grid);

    ObservableSeries series;
    series.method = "exact";
    series.r_grid = plan.r_grid;
    series.snapshot_times = plan.snapshots;
    series.times.resize(rows.size());
    series.populations.resize(rows.size(), model.levels());
    series.population_se = Mat::Zero(rows.size(), model.levels());
    series.intensity.assign(snaps.size(), Vec());
    series.intensity_se.assign(snaps.size(), Vec::Zero(plan.r_grid.size()));

    const double e0 = ci_energy(basis, model, state.coeffs);
    double norm_drift = 0.0, energy_drift = 0.0;
    std::size_t next_row = 0;
    const int n = plan.steps();
    for (int k = 0; k <= n; ++k) {
        if (k > 0) {
            prop.step(state, plan.dt);
            state.t = k * plan.dt;
        }
        if (next_row < rows.size() && rows[next_row] == k) {
            series.times(next_row) = state.t;
            series.populations.row(next_row) = ci_populations(basis, state.coeffs).transpose();
            norm_drift = std::max(norm_drift, std::abs(state.coeffs.norm() - 1.0));
            energy_drift = std::max(energy_drift,
                                    std::abs(ci_energy(basis, model, state.coeffs) - e0) / std::abs(e0));
            ++next_row;
        }
        for (std::size_t s = 0; s < snaps.size(); ++s) {
            if (snaps[s] != k) continue;
            series.intensity[s] = plan.intensity == IntensityKind::full
                ? ci_intensity(basis, state.coeffs, Z)
                : intensity(model, plan.r_grid, ci_q_square(basis, model, state));
        }
    }
    series.diagnostics["norm_drift_max"] = norm_drift;
    series.diagnostics["energy_drift_rel_max"] = energy_drift;
    series.diagnostics["basis_size"] = static_cast<double>(basis.size());
    series.diagnostics["lanczos_substeps"] = prop.substeps_taken();
    return series;
}

} // namespace cavity

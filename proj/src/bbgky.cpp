#include "cavity/bbgky.hpp"

#include <algorithm>

#include "cavity/integrator.hpp"

namespace cavity {

namespace {

void check_model(const ModelSpec& model) {
    validate(model);
    if (model.levels() != 2) throw ConfigError("bbgky: only two-level atoms are supported");
    if (model.rwa) throw ConfigError("bbgky: RWA is not supported");
}

// Packed layout: sigma(3), X, Lx, Ly, Lz (2M each), Lambda (2M x 2M, column-major).
class BBGKYSystem {
public:
    BBGKYSystem(const ModelSpec& model, const CorrectionFlags& flags)
        : flags_(flags), M_(model.modes()), w2_(model.cavity.omega.array().square().matrix()),
          l_((model.cavity.omega.array() * model.cavity.lam.array()).matrix() * model.atom.dipole(0, 1)),
          de_(model.atom.energies(1) - model.atom.energies(0)),
          u_((0.5 / model.cavity.omega.array()).sqrt().matrix()),
          d1_((0.5 * model.cavity.omega.array()).sqrt().matrix()) {}

    Eigen::Index size() const { return 3 + 8 * M_ + 4 * M_ * M_; }

    void pack(const BBGKYState& s, Vec& y) const {
        const Eigen::Index n = 2 * M_;
        if (s.X.size() != n || s.lam_x.size() != n || s.lam_y.size() != n || s.lam_z.size() != n ||
            s.lam.rows() != n || s.lam.cols() != n)
            throw ConfigError("bbgky: state dimensions do not match the model");
        y.resize(size());
        y.head<3>() = s.sigma;
        y.segment(3, n) = s.X;
        y.segment(3 + n, n) = s.lam_x;
        y.segment(3 + 2 * n, n) = s.lam_y;
        y.segment(3 + 3 * n, n) = s.lam_z;
        y.tail(n * n) = s.lam.reshaped();
    }

    void unpack(const Vec& y, BBGKYState& s) const {
        const Eigen::Index n = 2 * M_;
        s.sigma = y.head<3>();
        s.X = y.segment(3, n);
        s.lam_x = y.segment(3 + n, n);
        s.lam_y = y.segment(3 + 2 * n, n);
        s.lam_z = y.segment(3 + 3 * n, n);
        s.lam = y.tail(n * n).reshaped(n, n);
    }

    void rhs(const Vec& y, Vec& dy) const {
        const Eigen::Index M = M_, n = 2 * M_;
        Eigen::Vector3d s = y.head<3>();
        if (flags_.efsc) project(s);
        const double sx = s(0), sy = s(1), sz = s(2);
        const auto X = y.segment(3, n);
        const auto Lx = y.segment(3 + n, n);
        const auto Ly = y.segment(3 + 2 * n, n);
        const auto Lz = y.segment(3 + 3 * n, n);
        const Eigen::Map<const Mat> Lam(y.data() + 3 + 4 * n, n, n);

        const double E = l_.dot(X.head(M));
        lam_l_.noalias() = Lam.leftCols(M) * l_;
        cy_ = sz * lam_l_;
        if (flags_.pfsc) cy_ += (1.0 - sz) * normal_ordered_l(Lam);

        dy(0) = de_ * sy;
        dy(1) = -de_ * sx - 2.0 * (E * sz + l_.dot(Lz.head(M)));
        dy(2) = 2.0 * (E * sy + l_.dot(Ly.head(M)));

        // v' = A v + b c with A v = (v_P, -omega^2 v_Q) and b = (0, -l).
        auto flow = [&](Eigen::Index off, const auto& v, double c) {
            dy.segment(off, M) = v.tail(M);
            dy.segment(off + M, M) = -(w2_.array() * v.head(M).array()).matrix() - c * l_;
        };
        flow(3, X, sx);
        flow(3 + n, Lx, 1.0 - sx * sx);
        flow(3 + 2 * n, Ly, -sx * sy);
        flow(3 + 3 * n, Lz, -sx * sz);
        dy.segment(3 + n, n) += de_ * Ly;
        dy.segment(3 + 2 * n, n) += -de_ * Lx - 2.0 * E * Lz - 2.0 * cy_;
        dy.segment(3 + 3 * n, n) += 2.0 * E * Ly + 2.0 * sy * lam_l_;

        // Lambda' = G + G^T, G = A Lambda + b Lx^T.
        g_.resize(n, n);
        g_.topRows(M) = Lam.bottomRows(M);
        g_.bottomRows(M) = -(w2_.asDiagonal() * Lam.topRows(M));
        g_.bottomRows(M).noalias() -= l_ * Lx.transpose();
        Eigen::Map<Mat> dLam(dy.data() + 3 + 4 * n, n, n);
        dLam = g_ + g_.transpose();
    }

    void linear(Vec&, double) const {}

    static void project(Eigen::Vector3d& s) {
        const double norm = s.norm();
        if (norm > 1.0) s /= norm;
    }

private:
    // (N l) with N the normal-ordered part of Lambda in (Q, P) blocks, from the
    // mode-amplitude covariance C = T Lambda T^H, T = [diag(sqrt(omega/2)), i diag(1/sqrt(2 omega))].
    const Vec& normal_ordered_l(const Eigen::Map<const Mat>& Lam) const {
        const Eigen::Index M = M_;
        const auto QQ = Lam.topLeftCorner(M, M), PP = Lam.bottomRightCorner(M, M);
        const auto PQ = Lam.bottomLeftCorner(M, M), QP = Lam.topRightCorner(M, M);
        const Mat re = d1_.asDiagonal() * QQ * d1_.asDiagonal() + u_.asDiagonal() * PP * u_.asDiagonal();
        const Mat im = u_.asDiagonal() * PQ * d1_.asDiagonal() - d1_.asDiagonal() * QP * u_.asDiagonal();
        const Vec ul = (u_.array() * l_.array()).matrix();
        exc_.resize(2 * M);
        // N_QQ = 2 u u^T o (Re C - 1/2), N_PQ(a, b) = -(u_b / u_a) Im C(b, a).
        exc_.head(M) = 2.0 * (u_.asDiagonal() * (re * ul)) - (u_.array().square() * l_.array()).matrix();
        exc_.tail(M) = -(u_.array().inverse() * (im.transpose() * ul).array()).matrix();
        return exc_;
    }

    CorrectionFlags flags_;
    Eigen::Index M_;
    Vec w2_, l_;
    double de_;
    Vec u_, d1_;
    mutable Vec lam_l_, cy_, exc_;
    mutable Mat g_;
};

} // namespace

BBGKYState bbgky_initial(const ModelSpec& model) {
    const Eigen::Index M = model.modes();
    const Vec& w = model.cavity.omega;
    BBGKYState s;
    s.X = Vec::Zero(2 * M);
    s.lam_x = s.lam_y = s.lam_z = Vec::Zero(2 * M);
    s.lam = Mat::Zero(2 * M, 2 * M);
    s.lam.diagonal().head(M) = (0.5 / w.array()).matrix();
    s.lam.diagonal().tail(M) = 0.5 * w;
    return s;
}

BBGKYState bbgky_rhs(const BBGKYState& state, const ModelSpec& model, const CorrectionFlags& flags) {
    check_model(model);
    BBGKYSystem sys(model, flags);
    Vec y, dy(sys.size());
    sys.pack(state, y);
    sys.rhs(y, dy);
    BBGKYState out;
    sys.unpack(dy, out);
    out.t = 1.0;
    return out;
}

ObservableSeries run_bbgky(const ModelSpec& model, const CorrectionFlags& flags, const OutputPlan& plan,
                           const BBGKYOptions& opt) {
    check_model(model);
    plan.check();
    if (!(opt.tolerance > 0.0)) throw ConfigError("bbgky: tolerance must be positive");
    if (opt.max_halvings < 0) throw ConfigError("bbgky: max_halvings must be non-negative");

    BBGKYSystem sys(model, flags);
    LawsonRK4 rk;  // classical RK4, no linear part
    Vec y, coarse, fine;
    sys.pack(bbgky_initial(model), y);
    const Eigen::Index M = model.modes(), n = 2 * M;
    const FieldEstimator estimator(model, plan.r_grid, plan.intensity);

    long substeps = 0;
    auto single = [&](Vec& v, double h) {
        rk.step(sys, v, h);
        if (flags.efsc) {
            Eigen::Vector3d s = v.head<3>();
            BBGKYSystem::project(s);
            v.head<3>() = s;
        }
    };
    // Advances v by h; on a failed step-doubling test both halves are retried.
    auto advance = [&](auto& self, Vec& v, double h, int depth) -> void {
        coarse = v;
        single(coarse, h);
        fine = v;
        single(fine, 0.5 * h);
        single(fine, 0.5 * h);
        const double err = (fine - coarse).lpNorm<Eigen::Infinity>() / 15.0;
        if (!std::isfinite(err)) throw NumericGuard("bbgky: non-finite state");
        if (err <= opt.tolerance) {
            v = fine;
            substeps += 2;
            return;
        }
        if (depth >= opt.max_halvings) throw NumericGuard("bbgky: step-doubling error above tolerance");
        self(self, v, 0.5 * h, depth + 1);
        self(self, v, 0.5 * h, depth + 1);
    };

    const std::vector<int> rows = plan.output_steps();
    const std::vector<int> snaps = plan.snapshot_steps();
    ObservableSeries series;
    series.method = "bbgky";
    series.r_grid = plan.r_grid;
    series.snapshot_times = plan.snapshots;
    series.times.resize(rows.size());
    series.populations.resize(rows.size(), 2);
    series.population_se = Mat::Zero(rows.size(), 2);
    series.intensity.resize(snaps.size());
    series.intensity_se.assign(snaps.size(), Vec::Zero(plan.r_grid.size()));

    double purity = 0.0, asym = 0.0;
    std::size_t row = 0;
    for (int k = 0; k <= plan.steps(); ++k) {
        if (k > 0) advance(advance, y, plan.dt, 0);
        const Eigen::Map<const Mat> Lam(y.data() + 3 + 4 * n, n, n);
        purity = std::max(purity, y.head<3>().squaredNorm());
        if (row < rows.size() && rows[row] == k) {
            asym = std::max(asym, (Lam - Lam.transpose()).cwiseAbs().maxCoeff());
            series.times(row) = k * plan.dt;
            series.populations(row, 0) = 0.5 * (1.0 + y(2));
            series.populations(row, 1) = 0.5 * (1.0 - y(2));
            ++row;
        }
        for (std::size_t s = 0; s < snaps.size(); ++s)
            if (snaps[s] == k) series.intensity[s] = estimator.from_moments(y.segment(3, M), Lam.topLeftCorner(M, M));
    }
    series.diagnostics["purity_max"] = purity;
    series.diagnostics["lambda_asymmetry_max"] = asym;
    series.diagnostics["substeps"] = static_cast<double>(substeps);
    return series;
}

} // namespace cavity

#include "doctest.h"

#include <cmath>

#include "cavity/ensemble.hpp"
#include "cavity/observables.hpp"

using namespace cavity;

namespace {

ModelSpec desk() { return build_paper_model(2, 20, 10.0); }

double max_abs(const Vec& v) { return v.cwiseAbs().maxCoeff(); }

// Runner drawing synthetic populations and intensities from its stream.
struct NoiseRunner {
    std::uint64_t seed;
    void run(std::uint64_t index, TrajectoryRecord& rec) {
        Stream s(seed, index);
        for (Eigen::Index i = 0; i < rec.populations.rows(); ++i)
            for (Eigen::Index k = 0; k < rec.populations.cols(); ++k) rec.populations(i, k) = s.normal();
        for (Vec& v : rec.intensity)
            for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = s.uniform();
        if (index % 17 == 5) rec.accepted = false;
        rec.maxima["peak"] = static_cast<double>(index);
        rec.totals["count"] = 1.0;
    }
};

} // namespace

TEST_CASE("vacuum intensity vanishes") {
    const ModelSpec m = desk();
    const Vec r = uniform_grid(m, 257);
    const Vec I = intensity(m, r, vacuum_q_square(m));
    const Vec scale = mode_matrix(m, r).array().square().rowwise().sum();
    CHECK(max_abs(I) <= 1e-15 * scale.maxCoeff());
    const FieldEstimator full(m, r, IntensityKind::full);
    const Mat cov = vacuum_q_square(m).asDiagonal();
    CHECK(max_abs(full.from_moments(Vec::Zero(m.modes()), cov)) <= 1e-15 * scale.maxCoeff());
}

TEST_CASE("single-mode excess gives the squared mode function") {
    const ModelSpec m = desk();
    const Vec r = uniform_grid(m, 101);
    Vec q2 = vacuum_q_square(m);
    q2(0) += 0.5 / m.cavity.omega(0);
    const Vec I = intensity(m, r, q2);
    const Mat Z = mode_matrix(m, r);
    for (Eigen::Index i = 0; i < r.size(); ++i) CHECK(I(i) == doctest::Approx(Z(i, 0) * Z(i, 0)).epsilon(1e-10));
    // Mirror node at r = 0 for any moments.
    Vec any = Vec::LinSpaced(m.modes(), 1.0, 50.0);
    CHECK(std::abs(intensity(m, r, any)(0)) == 0.0);
    CHECK_THROWS_AS(intensity(m, r, Vec::Zero(3)), ConfigError);
}

TEST_CASE("grid refinement leaves shared points unchanged") {
    const ModelSpec m = desk();
    const Vec coarse = uniform_grid(m, 65), fine = uniform_grid(m, 129);
    Vec q2 = vacuum_q_square(m) * 1.3;
    const Vec a = intensity(m, coarse, q2), b = intensity(m, fine, q2);
    for (Eigen::Index i = 0; i < coarse.size(); ++i) CHECK(std::abs(a(i) - b(2 * i)) <= 1e-15 * max_abs(a));
}

TEST_CASE("field estimators") {
    const ModelSpec m = desk();
    const Vec r = uniform_grid(m, 33);
    const FieldEstimator full(m, r, IntensityKind::full), diag(m, r, IntensityKind::diagonal);
    Stream s(3, 0);
    const FieldSample f = sample_vacuum(m, s);
    const Mat Z = mode_matrix(m, r);
    const Vec w = m.cavity.omega;
    // Weyl symbol of the normal-ordered intensity at a phase-space point.
    for (Eigen::Index i = 0; i < r.size(); ++i) {
        double amp = 0.0, d = 0.0, vac = 0.0;
        for (Eigen::Index a = 0; a < m.modes(); ++a) {
            amp += Z(i, a) * std::sqrt(2.0 * w(a)) * f.Q(a);
            d += 2.0 * w(a) * Z(i, a) * Z(i, a) * f.Q(a) * f.Q(a);
            vac += Z(i, a) * Z(i, a);
        }
        CHECK(std::abs(full.evaluate(f.Q)(i) - (amp * amp - vac)) <= 1e-12 * vac);
        CHECK(std::abs(diag.evaluate(f.Q)(i) - (d - vac)) <= 1e-12 * vac);
    }
    // Diagonal moments: both estimators agree with the mode-diagonal formula.
    const Vec q2 = vacuum_q_square(m) * 2.0;
    const Mat cov = q2.asDiagonal();
    const Vec ref = intensity(m, r, q2);
    CHECK(max_abs(full.from_moments(Vec::Zero(m.modes()), cov) - ref) < 1e-12 * max_abs(ref));
    CHECK(max_abs(diag.from_moments(Vec::Zero(m.modes()), cov) - ref) < 1e-12 * max_abs(ref));
    // A sharp point X reproduces the phase-space estimator; a coherent state with
    // vacuum spread around X gives (E X)^2, the point value plus the vacuum term.
    const Vec X = f.Q;
    const Vec point = full.from_moments(X, Mat::Zero(m.modes(), m.modes()));
    CHECK(max_abs(point - full.evaluate(X)) < 1e-12 * max_abs(point));
    const Vec coherent = full.from_moments(X, vacuum_q_square(m).asDiagonal());
    const Vec vac = mode_matrix(m, r).array().square().rowwise().sum();
    CHECK(max_abs(coherent - point - vac) < 1e-12 * max_abs(coherent));
}

TEST_CASE("output plan") {
    OutputPlan p;
    p.dt = 0.1;
    p.t_final = 1.0;
    p.snapshots = {0.0, 0.5, 1.0};
    p.output_every = 3;
    CHECK(p.steps() == 10);
    CHECK(p.snapshot_steps() == std::vector<int>{0, 5, 10});
    CHECK(p.output_steps() == std::vector<int>{0, 3, 6, 9, 10});
    p.check();
    p.snapshots = {0.55};
    CHECK_THROWS_AS(p.check(), ConfigError);
    p.snapshots = {2.0};
    CHECK_THROWS_AS(p.check(), ConfigError);
    p.snapshots.clear();
    p.t_final = 1.05;
    CHECK_THROWS_AS(p.check(), ConfigError);
    p.t_final = 1.0;
    p.dt = 0.0;
    CHECK_THROWS_AS(p.check(), ConfigError);
}

TEST_CASE("ensemble accumulator statistics") {
    TrajectoryRecord rec(1, 2, 1, 1);
    EnsembleAccumulator acc(1, 2, 1, 1);
    const std::vector<double> xs{1.0, 2.0, 4.0, 7.0};
    for (double x : xs) {
        rec.reset();
        rec.populations << x, -x;
        rec.intensity[0](0) = 2.0 * x;
        rec.maxima["m"] = x;
        acc.add(rec);
    }
    rec.reset();
    rec.accepted = false;
    rec.populations << 100.0, 100.0;
    acc.add(rec);
    ObservableSeries s;
    acc.finish(s);
    // mean 3.5, unbiased variance 7, SE sqrt(7/4)
    CHECK(s.populations(0, 0) == doctest::Approx(3.5));
    CHECK(s.populations(0, 1) == doctest::Approx(-3.5));
    CHECK(s.population_se(0, 0) == doctest::Approx(std::sqrt(7.0 / 4.0)));
    CHECK(s.intensity[0](0) == doctest::Approx(7.0));
    CHECK(s.intensity_se[0](0) == doctest::Approx(2.0 * std::sqrt(7.0 / 4.0)));
    CHECK(s.diagnostics["trajectories_accepted"] == 4.0);
    CHECK(s.diagnostics["trajectories_rejected"] == 1.0);
    CHECK(s.diagnostics["m"] == 7.0);
    EnsembleAccumulator empty(1, 2, 1, 1);
    CHECK_THROWS_AS(empty.finish(s), NumericGuard);
}

TEST_CASE("ensemble result is independent of the worker count") {
    OutputPlan plan;
    plan.dt = 1.0;
    plan.t_final = 4.0;
    plan.snapshots = {2.0};
    plan.r_grid = Vec::LinSpaced(3, 0.0, 1.0);
    auto go = [&](int workers, int chunks) {
        EnsembleOptions opt;
        opt.n_traj = 1000;
        opt.seed = 9;
        opt.workers = workers;
        opt.chunks = chunks;
        return run_ensemble("noise", 2, opt, plan, [&] { return NoiseRunner{opt.seed}; });
    };
    const ObservableSeries a = go(1, 64), b = go(4, 64), c = go(3, 64);
    CHECK(a.populations == b.populations);
    CHECK(a.populations == c.populations);
    CHECK(a.population_se == b.population_se);
    CHECK(a.intensity[0] == c.intensity[0]);
    CHECK(a.diagnostics == b.diagnostics);
    CHECK(a.diagnostics.at("peak") == 999.0);
    CHECK(a.diagnostics.at("count") == 1000.0);
    CHECK(a.diagnostics.at("trajectories_rejected") == 59.0);
    CHECK(a.times.size() == 5);
    // A different partition changes only the summation order.
    const ObservableSeries d = go(1, 7);
    CHECK((a.populations - d.populations).cwiseAbs().maxCoeff() < 1e-12);

    EnsembleOptions bad;
    bad.n_traj = 0;
    CHECK_THROWS_AS(run_ensemble("noise", 2, bad, plan, [&] { return NoiseRunner{1}; }), ConfigError);
}

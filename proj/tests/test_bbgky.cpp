#include "doctest.h"

#include <cmath>

#include "cavity/bbgky.hpp"
#include "cavity/ci.hpp"
#include "cavity/mtef.hpp"

using namespace cavity;

namespace {

OutputPlan plan_for(const ModelSpec& m, double dt, double t_final, int every) {
    OutputPlan p;
    p.dt = dt;
    p.t_final = t_final;
    p.snapshots = {t_final};
    p.r_grid = uniform_grid(m, 33);
    p.output_every = every;
    return p;
}

double max_abs(const BBGKYState& d) {
    return std::max({d.sigma.cwiseAbs().maxCoeff(), d.X.cwiseAbs().maxCoeff(), d.lam_x.cwiseAbs().maxCoeff(),
                     d.lam_y.cwiseAbs().maxCoeff(), d.lam_z.cwiseAbs().maxCoeff(), d.lam.cwiseAbs().maxCoeff()});
}

BBGKYState random_state(const ModelSpec& m, std::uint64_t seed) {
    Stream s(81, seed);
    BBGKYState st = bbgky_initial(m);
    const Eigen::Index n = 2 * m.modes();
    auto fill = [&](Vec& v, double scale) {
        for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = scale * s.normal();
    };
    Eigen::Vector3d sig(s.normal(), s.normal(), s.normal());
    st.sigma = 0.9 * sig.normalized();
    fill(st.X, 1.0);
    fill(st.lam_x, 0.1);
    fill(st.lam_y, 0.1);
    fill(st.lam_z, 0.1);
    Mat a(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) a(i, j) = 0.1 * s.normal();
    st.lam += a + a.transpose();
    return st;
}

} // namespace

TEST_CASE("vacuum fixed point at zero coupling") {
    const ModelSpec m = with_coupling(build_paper_model(2, 12, 10.0), 0.0);
    for (bool pf : {false, true}) {
        const BBGKYState d = bbgky_rhs(bbgky_initial(m), m, {pf, pf});
        CHECK(max_abs(d) < 1e-14);
    }
}

TEST_CASE("displayed structure of the equations") {
    const ModelSpec m = build_paper_model(2, 9, 10.0);
    const double de = m.atom.energies(1) - m.atom.energies(0);
    for (std::uint64_t i = 0; i < 5; ++i) {
        const BBGKYState st = random_state(m, i);
        const BBGKYState d = bbgky_rhs(st, m, {});
        CHECK(d.sigma(0) == doctest::Approx(de * st.sigma(1)).epsilon(1e-14));
        CHECK((d.lam - d.lam.transpose()).cwiseAbs().maxCoeff() == 0.0);
        const BBGKYState dc = bbgky_rhs(st, m, {true, true});
        CHECK((dc.lam - dc.lam.transpose()).cwiseAbs().maxCoeff() == 0.0);
        // The field covariance equation carries no closure.
        CHECK((dc.lam - d.lam).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("uncorrelated moments follow the mean-field equations") {
    const ModelSpec m = build_paper_model(2, 9, 10.0);
    MtefStepper mf(m);
    for (std::uint64_t i = 0; i < 5; ++i) {
        BBGKYState st = random_state(m, 10 + i);
        st.sigma.normalize();  // pure atom, as the factored mean-field state requires
        st.lam_x.setZero();
        st.lam_y.setZero();
        st.lam_z.setZero();
        const BBGKYState d = bbgky_rhs(st, m, {});
        // rho = (1 + sigma . tau) / 2 with ground level 1 at sigma_z = +1 and sigma_y = -2 Im rho_12.
        MtefTrajectory t;
        t.rho.resize(2, 2);
        t.rho << 0.5 * (1.0 + st.sigma(2)), Complex(0.5 * st.sigma(0), -0.5 * st.sigma(1)),
            Complex(0.5 * st.sigma(0), 0.5 * st.sigma(1)), 0.5 * (1.0 - st.sigma(2));
        t.field.Q = st.X.head(m.modes());
        t.field.P = st.X.tail(m.modes());
        // Full mean-field derivative: free parts by finite differences of the exact flow.
        Vec y, dy, y1;
        mf.pack(t, y);
        dy.resize(y.size());
        mf.rhs(y, dy);
        const double h = 1e-6;
        y1 = y;
        mf.linear(y1, h);
        dy += (y1 - y) / h;
        // rho' = A' A^dagger + A A'^dagger for the packed factor A.
        CMat A(2, 2), dA(2, 2);
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k) {
                A(k, j) = Complex(y(2 * (k + 2 * j)), y(2 * (k + 2 * j) + 1));
                dA(k, j) = Complex(dy(2 * (k + 2 * j)), dy(2 * (k + 2 * j) + 1));
            }
        const CMat drho = dA * A.adjoint() + A * dA.adjoint();
        const Eigen::Vector3d ds(2.0 * drho(0, 1).real(), -2.0 * drho(0, 1).imag(), (drho(0, 0) - drho(1, 1)).real());
        CHECK((ds - d.sigma).cwiseAbs().maxCoeff() < 1e-6);
        Vec dX(2 * m.modes());
        dX << dy.segment(8, m.modes()), dy.segment(8 + m.modes(), m.modes());
        CHECK((dX - d.X).cwiseAbs().maxCoeff() < 1e-6 * (1.0 + d.X.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("dimension checks and unsupported models") {
    const ModelSpec m = build_paper_model(2, 4, 10.0);
    BBGKYState st = bbgky_initial(m);
    st.lam_y.resize(3);
    CHECK_THROWS_AS(bbgky_rhs(st, m, {}), ConfigError);
    const ModelSpec three = build_paper_model(3, 4, 10.0);
    CHECK_THROWS_AS(bbgky_rhs(bbgky_initial(three), three, {}), ConfigError);
    ModelSpec rwa = m;
    rwa.rwa = true;
    CHECK_THROWS_AS(run_bbgky(rwa, {}, plan_for(m, 0.1, 1.0, 1)), ConfigError);
    BBGKYOptions bad;
    bad.tolerance = 0.0;
    CHECK_THROWS_AS(run_bbgky(m, {}, plan_for(m, 0.1, 1.0, 1), bad), ConfigError);
}

TEST_CASE("zero-coupling run") {
    const ModelSpec m = with_coupling(build_paper_model(2, 16, 10.0), 0.0);
    const ObservableSeries s = run_bbgky(m, {}, plan_for(m, 0.1, 20.0, 10));
    CHECK((s.populations.col(1).array() - 1.0).abs().maxCoeff() == 0.0);
    CHECK(s.intensity[0].cwiseAbs().maxCoeff() < 1e-12);
    CHECK(s.population_se.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single-mode oracle") {
    const ModelSpec m = build_single_mode_model();
    const OutputPlan plan = plan_for(m, 0.1, 300.0, 10);
    const ObservableSeries ex = run_exact(m, ExactOptions{}, plan);
    const ObservableSeries base = run_bbgky(m, {}, plan);
    const ObservableSeries pf = run_bbgky(m, {false, true}, plan);
    const ObservableSeries both = run_bbgky(m, {true, true}, plan);
    // Base second Born tracks the early decay, then overshoots to negative
    // excited populations on the Rabi transfer.
    Eigen::Index early = 0;
    while (ex.populations(early, 1) > 0.7) ++early;
    CHECK((base.populations.topRows(early) - ex.populations.topRows(early)).cwiseAbs().maxCoeff() < 0.05);
    CHECK(base.populations(ex.times.size() - 1, 1) < 0.0);
    // The single-excitation closure follows the whole transfer.
    CHECK((pf.populations - ex.populations).cwiseAbs().maxCoeff() < 0.05);
    CHECK((both.populations - ex.populations).cwiseAbs().maxCoeff() < 0.05);
    CHECK(base.diagnostics.at("lambda_asymmetry_max") <= 1e-10);
    CHECK(both.diagnostics.at("purity_max") <= 1.0 + 1e-6);
    CHECK((base.populations.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("desk model: runs are deterministic and symmetric") {
    const ModelSpec m = build_paper_model(2, 30, 10.0);
    const OutputPlan plan = plan_for(m, 0.1, 60.0, 20);
    const CorrectionFlags ef{true, false};
    const ObservableSeries a = run_bbgky(m, ef, plan), b = run_bbgky(m, ef, plan);
    CHECK(a.populations == b.populations);
    CHECK(a.intensity[0] == b.intensity[0]);
    CHECK(a.diagnostics.at("lambda_asymmetry_max") <= 1e-10);
    CHECK(a.diagnostics.at("purity_max") <= 1.0 + 1e-6);
    // Step-doubling control: a stricter tolerance refines, a failing one raises.
    BBGKYOptions strict;
    strict.tolerance = 1e-13;
    const ObservableSeries c = run_bbgky(m, ef, plan, strict);
    CHECK(c.diagnostics.at("substeps") > a.diagnostics.at("substeps"));
    CHECK((c.populations - a.populations).cwiseAbs().maxCoeff() < 1e-6);
    strict.tolerance = 1e-18;
    strict.max_halvings = 1;
    CHECK_THROWS_AS(run_bbgky(m, ef, plan, strict), NumericGuard);
}

#include "doctest.h"

#include <cmath>

#include "cavity/fssh.hpp"

using namespace cavity;

namespace {

OutputPlan plan_for(const ModelSpec& m, double dt, double t_final) {
    OutputPlan p;
    p.dt = dt;
    p.t_final = t_final;
    p.snapshots = {t_final};
    p.r_grid = uniform_grid(m, 33);
    p.output_every = 20;
    return p;
}

Vec random_q(const ModelSpec& m, std::uint64_t index, double amplify) {
    Stream s(31, index);
    return amplify * sample_vacuum(m, s).Q;
}

} // namespace

TEST_CASE("adiabatic states at zero displacement") {
    const ModelSpec m = build_paper_model(2, 6, 10.0);
    const AdiabaticStates st = adiabatic_states(m, Vec::Zero(m.modes()));
    CHECK((st.vectors - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((st.energies - m.atom.energies).cwiseAbs().maxCoeff() < 1e-15);
    const Vec d = st.nac(m, 0, 1);
    const double de = m.atom.energies(1) - m.atom.energies(0);
    for (Eigen::Index a = 0; a < m.modes(); ++a)
        CHECK(d(a) == doctest::Approx(m.cavity.omega(a) * m.cavity.lam(a) * m.atom.dipole(0, 1) / de).epsilon(1e-12));
}

TEST_CASE("two-level closed form and coupling antisymmetry") {
    const ModelSpec m = build_paper_model(2, 6, 10.0);
    for (std::uint64_t i = 0; i < 20; ++i) {
        const Vec Q = random_q(m, i, 50.0);
        const Mat h = electronic_hamiltonian(m, Q);
        const AdiabaticStates st = adiabatic_states(m, Q);
        const double mid = 0.5 * (h(0, 0) + h(1, 1));
        const double half = 0.5 * std::sqrt(std::pow(h(0, 0) - h(1, 1), 2) + 4.0 * h(0, 1) * h(0, 1));
        CHECK(st.energies(0) == doctest::Approx(mid - half).epsilon(1e-12));
        CHECK(st.energies(1) == doctest::Approx(mid + half).epsilon(1e-12));
        CHECK((st.nac(m, 0, 1) + st.nac(m, 1, 0)).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(st.nac_dot(1.7, 0, 1) == doctest::Approx(-st.nac_dot(1.7, 1, 0)));
        CHECK(st.nac(m, 1, 1).cwiseAbs().maxCoeff() == 0.0);
    }
    const ModelSpec m3 = build_paper_model(3, 6, 10.0);
    const Vec Q = random_q(m3, 99, 30.0);
    const AdiabaticStates st = adiabatic_states(m3, Q);
    const Mat h = electronic_hamiltonian(m3, Q);
    CHECK((h * st.vectors - st.vectors * st.energies.asDiagonal()).cwiseAbs().maxCoeff() < 1e-12);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (i != j) CHECK((st.nac(m3, i, j) + st.nac(m3, j, i)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("sign conventions and degenerate geometry") {
    const ModelSpec m = build_paper_model(3, 6, 10.0);
    const Vec Q = random_q(m, 5, 40.0);
    const AdiabaticStates free = adiabatic_states(m, Q);
    for (int j = 0; j < 3; ++j) {
        Eigen::Index imax;
        free.vectors.col(j).cwiseAbs().maxCoeff(&imax);
        CHECK(free.vectors(imax, j) > 0.0);
    }
    Mat flipped = free.vectors;
    flipped.col(1) *= -1.0;
    const AdiabaticStates follow = adiabatic_states(m, Q, &flipped);
    CHECK((follow.vectors - flipped).cwiseAbs().maxCoeff() < 1e-12);

    ModelSpec flat = with_coupling(build_paper_model(2, 2, 10.0), 0.0);
    flat.atom.energies << 0.1, 0.1;
    CHECK_THROWS_AS(adiabatic_states(flat, Vec::Zero(2)), NumericGuard);
}

TEST_CASE("hop probabilities follow the population flux") {
    const ModelSpec m = build_paper_model(2, 8, 10.0);
    FsshStepper stepper(m);
    for (std::uint64_t i = 0; i < 10; ++i) {
        Stream s(41, i);
        FsshTrajectory t = fssh_initial(m, s);
        t.field.Q *= 30.0;
        t.field.P *= 3.0;
        const AdiabaticStates st = adiabatic_states(m, t.field.Q);
        t.vectors = st.vectors;
        t.rho << Complex(0.6, 0.0), Complex(0.3, 0.2), Complex(0.3, -0.2), Complex(0.4, 0.0);
        // Packed state for the continuous flow, active surface 0.
        const double dt = 0.05;
        Vec y = Vec::Zero(8 + 2 * m.modes()), dy(y.size());
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k) {
                y(2 * (k + 2 * j)) = t.rho(k, j).real();
                y(2 * (k + 2 * j) + 1) = t.rho(k, j).imag();
            }
        y.segment(8, m.modes()) = t.field.Q;
        y.segment(8 + m.modes(), m.modes()) = t.field.P;
        stepper.rhs(y, dy);
        const double flux_into_1 = dy(2 * (1 + 2 * 1));
        const double pc = (m.cavity.omega.array() * m.cavity.lam.array() * t.field.P.array()).sum();
        const Vec g = hop_probabilities(t.rho, st, pc, 0, dt);
        CHECK(g(0) == 0.0);
        CHECK(g(1) == doctest::Approx(std::max(0.0, flux_into_1 * dt / 0.6)).epsilon(1e-10));
        // Trace-preserving density flow.
        CHECK(std::abs(dy(0) + dy(6)) < 1e-14);
    }
}

TEST_CASE("hop sampling matches the probabilities") {
    Vec g(3);
    g << 0.12, 0.0, 0.05;
    for (double xi : {0.001, 0.119}) CHECK(choose_hop(g, 1, xi) == 0);
    CHECK(choose_hop(g, 1, 0.121) == 2);
    CHECK(choose_hop(g, 1, 0.171) == -1);
    Stream s(51, 0);
    const int n = 100000;
    int to0 = 0, to2 = 0;
    for (int k = 0; k < n; ++k) {
        const int j = choose_hop(g, 1, s.uniform());
        to0 += j == 0;
        to2 += j == 2;
    }
    for (auto [count, p] : {std::pair{to0, 0.12}, std::pair{to2, 0.05}}) {
        const double se = std::sqrt(p * (1.0 - p) / n);
        CHECK(std::abs(count / double(n) - p) < 3.0 * se);
    }
    // Clamping to [0, 1].
    const ModelSpec m = build_paper_model(2, 4, 10.0);
    const AdiabaticStates st = adiabatic_states(m, Vec::Constant(4, 20.0));
    CMat rho(2, 2);
    rho << 0.5, 0.5, 0.5, 0.5;
    for (double pc : {-1e3, 1e3}) {
        const Vec big = hop_probabilities(rho, st, pc, 0, 1e3);
        CHECK(big.minCoeff() >= 0.0);
        CHECK(big.maxCoeff() <= 1.0);
    }
}

TEST_CASE("momentum rescaling") {
    Vec P(3), d(3);
    P << 0.3, -0.2, 0.5;
    d << 0.1, 0.4, -0.2;
    const double kin = 0.5 * P.squaredNorm();
    for (double gap : {0.01, -0.05, 0.0}) {
        Vec p = P;
        REQUIRE(rescale_momentum(p, d, 0.0, gap));
        CHECK(std::abs(0.5 * p.squaredNorm() + gap - kin) < 1e-15);
        // Change is along d only.
        const Vec delta = p - P;
        CHECK((delta - delta.dot(d) / d.squaredNorm() * d).norm() < 1e-15);
        // The root closest to zero.
        CHECK(delta.norm() <= (p - P + 2.0 * (P.dot(d) / d.squaredNorm()) * d).norm() + 1e-15);
    }
    Vec p = P;
    CHECK_FALSE(rescale_momentum(p, d, 0.0, 10.0));
    CHECK(p == P);
    REQUIRE(rescale_momentum_uniform(p, 0.0, 0.02));
    CHECK(std::abs(0.5 * p.squaredNorm() + 0.02 - kin) < 1e-15);
    CHECK_FALSE(rescale_momentum_uniform(p, 0.0, 10.0));
}

TEST_CASE("zero coupling: no hops and constant populations") {
    const ModelSpec m = with_coupling(build_paper_model(2, 10, 10.0), 0.0);
    EnsembleOptions opt;
    opt.n_traj = 100;
    const ObservableSeries s = run_fssh(m, opt, plan_for(m, 0.1, 20.0));
    CHECK(s.diagnostics.at("hops_attempted") == 0.0);
    CHECK((s.populations.col(1).array() - 1.0).abs().maxCoeff() < 1e-14);
}

TEST_CASE("single trajectory: trace and energy bookkeeping") {
    const ModelSpec m = build_paper_model(2, 40, 10.0);
    FsshOptions fo;
    fo.keep_events = true;
    FsshStepper stepper(m, fo);
    Stream s(61, 0);
    FsshTrajectory t = fssh_initial(m, s);
    CHECK(t.active == 1);
    // Accepted hops move the gap into the kinetic energy, so the total stays put.
    const double e0 = fssh_energy(m, t);
    double drift = 0.0;
    for (int k = 0; k < 4200; ++k) {
        stepper.step(t, 0.05, s);
        drift = std::max(drift, std::abs(fssh_energy(m, t) - e0) / std::abs(e0));
    }
    CHECK(t.log.accepted > 0);
    CHECK(t.log.energy_error_max / std::abs(e0) < 1e-12);
    CHECK(drift < 1e-8);
    CHECK(std::abs(t.rho.trace().real() - 1.0) < 1e-10);
    CHECK(t.log.events.size() == static_cast<std::size_t>(t.log.attempted));
    CHECK(fssh_populations(t).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(fssh_step(t, m, -1.0, s), ConfigError);
}

TEST_CASE("coupled ensemble hops and replays deterministically") {
    const ModelSpec m = build_single_mode_model();
    EnsembleOptions opt;
    opt.n_traj = 200;
    const OutputPlan plan = plan_for(m, 0.1, 200.0);
    const ObservableSeries a = run_fssh(m, opt, plan);
    CHECK(a.diagnostics.at("hops_attempted") > 0.0);
    CHECK(a.diagnostics.at("hops_accepted") > 0.0);
    CHECK(a.diagnostics.at("hops_accepted") + a.diagnostics.at("hops_frustrated") ==
          a.diagnostics.at("hops_attempted"));
    CHECK(a.diagnostics.at("hop_energy_error_rel_max") < 1e-10);
    opt.workers = 2;
    const ObservableSeries b = run_fssh(m, opt, plan);
    CHECK(a.populations == b.populations);
    CHECK(a.diagnostics == b.diagnostics);
    // Early decay: the excited population does not rise over the first steps.
    CHECK(a.populations(0, 1) == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(a.populations(a.times.size() - 1, 1) < 0.9);
}

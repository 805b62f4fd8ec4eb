#include "cavity/model.hpp"

namespace cavity {

namespace {

AtomSpec reference_atom(int levels) {
    AtomSpec atom;
    if (levels == 2) {
        atom.energies = (Vec(2) << -0.6738, -0.2798).finished();
        atom.dipole = Mat::Zero(2, 2);
        atom.dipole(0, 1) = atom.dipole(1, 0) = 1.034;
    } else {
        atom.energies = (Vec(3) << -0.6738, -0.2798, -0.1547).finished();
        atom.dipole = Mat::Zero(3, 3);
        atom.dipole(0, 1) = atom.dipole(1, 0) = 1.034;
        atom.dipole(1, 2) = atom.dipole(2, 1) = -2.536;
    }
    return atom;
}

double alternating(int alpha) { return alpha % 2 == 0 ? 1.0 : -1.0; }

} // namespace

ModelSpec build_paper_model(int levels, int n_modes, double scale, bool rescale_coupling) {
    if (levels != 2 && levels != 3) throw ConfigError("levels must be 2 or 3");
    if (n_modes < 1) throw ConfigError("n_modes must be at least 1");
    if (!(scale > 0.0)) throw ConfigError("scale must be positive");
    ModelSpec model;
    model.atom = reference_atom(levels);
    CavitySpec& cav = model.cavity;
    cav.length = reference_length / scale;
    cav.light_speed = light_speed_au;
    cav.atom_position = 0.5 * cav.length;
    cav.omega.resize(n_modes);
    cav.lam.resize(n_modes);
    cav.harmonic.resize(n_modes);
    const double magnitude = reference_lambda * (rescale_coupling ? std::sqrt(scale) : 1.0);
    for (int a = 0; a < n_modes; ++a) {
        cav.harmonic(a) = 2 * a + 1;
        cav.omega(a) = cav.harmonic(a) * std::numbers::pi * cav.light_speed / cav.length;
        cav.lam(a) = magnitude * alternating(a + 1);
    }
    return model;
}

ModelSpec build_single_mode_model() {
    ModelSpec model;
    model.atom = reference_atom(2);
    const double gap = model.atom.energies(1) - model.atom.energies(0);
    CavitySpec& cav = model.cavity;
    cav.light_speed = light_speed_au;
    cav.length = std::numbers::pi * cav.light_speed / gap;
    cav.atom_position = 0.5 * cav.length;
    cav.omega = Vec::Constant(1, gap);
    cav.lam = Vec::Constant(1, -reference_lambda);
    cav.harmonic = Eigen::VectorXi::Constant(1, 1);
    return model;
}

ModelSpec with_coupling(ModelSpec model, double magnitude) {
    for (int a = 0; a < model.modes(); ++a)
        model.cavity.lam(a) = (model.cavity.lam(a) < 0.0 ? -1.0 : 1.0) * magnitude;
    return model;
}

void validate(const ModelSpec& model) {
    const int K = model.levels();
    const int M = model.modes();
    if (K < 2) throw ConfigError("model needs at least two levels");
    if (M < 1) throw ConfigError("model needs at least one mode");
    if (model.atom.dipole.rows() != K || model.atom.dipole.cols() != K)
        throw ConfigError("dipole matrix has wrong shape");
    if ((model.atom.dipole - model.atom.dipole.transpose()).cwiseAbs().maxCoeff() > 0.0)
        throw ConfigError("dipole matrix must be symmetric");
    if (model.cavity.lam.size() != M || model.cavity.harmonic.size() != M)
        throw ConfigError("cavity arrays have inconsistent lengths");
    for (int a = 1; a < M; ++a)
        if (!(model.cavity.omega(a) > model.cavity.omega(a - 1)))
            throw ConfigError("mode frequencies must be strictly increasing");
    if (model.atom.initial() < 0 || model.atom.initial() >= K)
        throw ConfigError("initial level out of range");
}

double coupling_ratio(const ModelSpec& model) {
    if (model.levels() < 2) throw ConfigError("coupling_ratio needs two levels");
    const double gap = model.atom.energies(1) - model.atom.energies(0);
    const double lam = std::abs(model.cavity.lam(0));
    return model.atom.dipole(0, 1) * lam * std::sqrt(gap / 2.0) / gap;
}

Vec mode_function(const ModelSpec& model, double r) {
    const CavitySpec& cav = model.cavity;
    if (r < 0.0 || r > cav.length) throw ConfigError("mode_function: r outside the cavity");
    Vec z(cav.modes());
    for (int a = 0; a < cav.modes(); ++a) {
        const double arg = cav.harmonic(a) * (r / cav.length);
        const double s = (r == 0.0 || r == cav.length) ? 0.0 : std::sin(std::numbers::pi * arg);
        z(a) = std::sqrt(cav.omega(a) / (cav.epsilon0 * cav.length)) * s;
    }
    return z;
}

Mat mode_matrix(const ModelSpec& model, const Vec& r_grid) {
    Mat Z(r_grid.size(), model.modes());
    for (Eigen::Index i = 0; i < r_grid.size(); ++i) Z.row(i) = mode_function(model, r_grid(i)).transpose();
    return Z;
}

Vec uniform_grid(const ModelSpec& model, int n) {
    if (n < 2) throw ConfigError("grid needs at least two points");
    Vec r = Vec::LinSpaced(n, 0.0, model.cavity.length);
    r(n - 1) = model.cavity.length;
    return r;
}

} // namespace cavity

#pragma once

// Independent dense reference constructions used only by tests.

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "cavity/model.hpp"

namespace oracle {

using cavity::CMat;
using cavity::CVec;
using cavity::Complex;
using cavity::Mat;
using cavity::Vec;

// Truncated single-oscillator annihilation operator on |0..nmax>.
inline Mat annihilation(int nmax) {
    Mat a = Mat::Zero(nmax + 1, nmax + 1);
    for (int n = 1; n <= nmax; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
    return a;
}

inline Mat kron(const Mat& A, const Mat& B) {
    Mat out(A.rows() * B.rows(), A.cols() * B.cols());
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index j = 0; j < A.cols(); ++j) out.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
    return out;
}

// Product space atom x mode_1 x ... x mode_M with nmax quanta per mode.
struct FockSpace {
    int K, M, nmax;
    Eigen::Index dim() const {
        Eigen::Index d = K;
        for (int a = 0; a < M; ++a) d *= nmax + 1;
        return d;
    }
    // Operator acting as `op` on mode a and identity elsewhere (atom first).
    Mat mode_op(const Mat& op, int a) const {
        Mat out = Mat::Identity(K, K);
        for (int b = 0; b < M; ++b) out = kron(out, b == a ? op : Mat(Mat::Identity(nmax + 1, nmax + 1)));
        return out;
    }
    Mat atom_op(const Mat& op) const {
        Mat out = op;
        for (int b = 0; b < M; ++b) out = kron(out, Mat::Identity(nmax + 1, nmax + 1));
        return out;
    }
    // Occupation numbers of a product-basis index.
    std::vector<int> occupations(Eigen::Index i, int& level) const {
        std::vector<int> n(M);
        for (int b = M - 1; b >= 0; --b) {
            n[b] = static_cast<int>(i % (nmax + 1));
            i /= nmax + 1;
        }
        level = static_cast<int>(i);
        return n;
    }
};

// Full light-matter Hamiltonian with zero-point energy removed; rwa keeps
// only a sigma_raise and a^dagger sigma_lower.
inline Mat hamiltonian(const cavity::ModelSpec& m, const FockSpace& fs, bool rwa) {
    const Mat a = annihilation(fs.nmax);
    const Mat n = a.transpose() * a;
    Mat raise = Mat::Zero(fs.K, fs.K), lower = Mat::Zero(fs.K, fs.K);
    for (int i = 0; i < fs.K; ++i)
        for (int j = 0; j < fs.K; ++j) (i > j ? raise : lower)(i, j) = m.atom.dipole(i, j);
    Mat H = fs.atom_op(m.atom.energies.asDiagonal().toDenseMatrix());
    for (int b = 0; b < fs.M; ++b) {
        const double w = m.cavity.omega(b);
        const double g = w * m.cavity.lam(b) * std::sqrt(1.0 / (2.0 * w));
        H += w * fs.mode_op(n, b);
        const Mat ab = fs.mode_op(a, b);
        if (rwa) {
            H += g * (fs.atom_op(raise) * ab + fs.atom_op(lower) * ab.transpose());
        } else {
            H += g * fs.atom_op(m.atom.dipole) * (ab + ab.transpose());
        }
    }
    return H;
}

// exp(-i H t) v for real symmetric H by full diagonalization.
inline CVec evolve(const Mat& H, const CVec& v, double t) {
    Eigen::SelfAdjointEigenSolver<Mat> es(H);
    const CMat U = es.eigenvectors().cast<Complex>();
    const CVec ph = (Complex(0.0, -t) * es.eigenvalues().cast<Complex>()).array().exp();
    return U * (ph.asDiagonal() * (U.adjoint() * v));
}

} // namespace oracle

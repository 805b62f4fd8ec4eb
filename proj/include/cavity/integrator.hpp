#pragma once

#include <cmath>

#include "cavity/model.hpp"

namespace cavity {

// Exact flow of the uncoupled cavity oscillators, Qdot = P, Pdot = -omega^2 Q,
// cached for the two step sizes used by the integrating-factor scheme.
class FreeFieldFlow {
public:
    FreeFieldFlow() = default;
    explicit FreeFieldFlow(const Vec& omega) : w_(omega) {}

    // Rotates (Q, P) stored at offsets q0 and q0 + M of y.
    void apply(double* y, Eigen::Index q0, double h) {
        cache(h);
        const Eigen::Index M = w_.size();
        const Table& t = h == full_.h ? full_ : half_;
        for (Eigen::Index a = 0; a < M; ++a) {
            const double q = y[q0 + a], p = y[q0 + M + a];
            y[q0 + a] = q * t.c(a) + p * t.s_over_w(a);
            y[q0 + M + a] = -q * t.w_s(a) + p * t.c(a);
        }
    }
    const Vec& omega() const { return w_; }

private:
    struct Table {
        double h{std::nan("")};
        Vec c, s_over_w, w_s;
    };
    void fill(Table& t, double h) {
        t.h = h;
        t.c = (w_ * h).array().cos();
        t.s_over_w = (w_ * h).array().sin() / w_.array();
        t.w_s = (w_ * h).array().sin() * w_.array();
    }
    void cache(double h) {
        if (h == full_.h || h == half_.h) return;
        if (std::isnan(full_.h) || h > full_.h) {
            half_ = full_;
            fill(full_, h);
        } else {
            fill(half_, h);
        }
    }
    Vec w_;
    Table full_, half_;
};

// Phase rotation of complex amplitudes z_k -> exp(-i e_k h) z_k, stored as
// interleaved (re, im) pairs starting at offset z0.
inline void rotate_phases(double* y, Eigen::Index z0, const Vec& e, double h) {
    for (Eigen::Index k = 0; k < e.size(); ++k) {
        const double c = std::cos(e(k) * h), s = std::sin(e(k) * h);
        const double re = y[z0 + 2 * k], im = y[z0 + 2 * k + 1];
        y[z0 + 2 * k] = re * c + im * s;
        y[z0 + 2 * k + 1] = im * c - re * s;
    }
}

// Integrating-factor (Lawson) fourth-order Runge-Kutta for y' = L y + N(y),
// where the linear flow exp(hL) is applied exactly by `sys.linear(y, h)` and
// `sys.rhs(y, dy)` evaluates N. Reduces to classical RK4 when L = 0.
class LawsonRK4 {
public:
    template <typename System>
    void step(System& sys, Vec& y, double h) {
        const Eigen::Index n = y.size();
        k1_.resize(n); k2_.resize(n); k3_.resize(n); k4_.resize(n); a_.resize(n); b_.resize(n);
        sys.rhs(y, k1_);
        a_ = y + (0.5 * h) * k1_;
        sys.linear(a_, 0.5 * h);
        sys.rhs(a_, k2_);
        b_ = y;
        sys.linear(b_, 0.5 * h);
        a_ = b_ + (0.5 * h) * k2_;
        sys.rhs(a_, k3_);
        a_ = b_ + h * k3_;
        sys.linear(a_, 0.5 * h);
        sys.rhs(a_, k4_);
        y += (h / 6.0) * k1_;
        sys.linear(y, 0.5 * h);
        y += (h / 3.0) * (k2_ + k3_);
        sys.linear(y, 0.5 * h);
        y += (h / 6.0) * k4_;
    }

private:
    Vec k1_, k2_, k3_, k4_, a_, b_;
};

} // namespace cavity

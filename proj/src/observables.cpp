#include "cavity/observables.hpp"

#include <algorithm>

namespace cavity {

namespace {

int grid_index(double t, double dt, const char* what) {
    const double k = std::round(t / dt);
    if (std::abs(k * dt - t) > 1e-9 * std::max(1.0, std::abs(t)))
        throw ConfigError(std::string(what) + " is not a multiple of dt");
    return static_cast<int>(k);
}

} // namespace

int OutputPlan::steps() const { return grid_index(t_final, dt, "t_final"); }

std::vector<int> OutputPlan::snapshot_steps() const {
    std::vector<int> out;
    for (double t : snapshots) out.push_back(grid_index(t, dt, "snapshot time"));
    return out;
}

std::vector<int> OutputPlan::output_steps() const {
    const int n = steps();
    std::vector<int> out;
    for (int k = 0; k <= n; k += output_every) out.push_back(k);
    if (out.back() != n) out.push_back(n);
    return out;
}

void OutputPlan::check() const {
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
    if (t_final < 0.0) throw ConfigError("t_final must be non-negative");
    if (output_every < 1) throw ConfigError("output_every must be at least 1");
    steps();
    for (double t : snapshots)
        if (t < 0.0 || t > t_final * (1.0 + 1e-12)) throw ConfigError("snapshot time outside [0, t_final]");
    snapshot_steps();
}

Vec intensity(const ModelSpec& model, const Vec& r_grid, const Vec& q_square_means) {
    if (q_square_means.size() != model.modes()) throw ConfigError("intensity: moment vector has wrong length");
    const Mat Z = mode_matrix(model, r_grid);
    const Vec weight = (2.0 * model.cavity.omega.array() * q_square_means.array() - 1.0).matrix();
    return Z.array().square().matrix() * weight;
}

FieldEstimator::FieldEstimator(const ModelSpec& model, const Vec& r_grid, IntensityKind kind)
    : kind_(kind) {
    const Mat Z = mode_matrix(model, r_grid);
    E_ = Z * (2.0 * model.cavity.omega.array()).sqrt().matrix().asDiagonal();
    E2_ = E_.array().square().matrix();
    vacuum_ = Z.array().square().rowwise().sum().matrix();
}

void FieldEstimator::evaluate(const Vec& Q, Vec& out) const {
    if (kind_ == IntensityKind::full) {
        out.noalias() = E_ * Q;
        out = out.array().square().matrix() - vacuum_;
    } else {
        out.noalias() = E2_ * Q.array().square().matrix();
        out -= vacuum_;
    }
}

Vec FieldEstimator::from_moments(const Vec& mean_Q, const Mat& cov_QQ) const {
    if (kind_ == IntensityKind::full) {
        const Mat second = cov_QQ + mean_Q * mean_Q.transpose();
        return ((E_ * second).array() * E_.array()).rowwise().sum().matrix() - vacuum_;
    }
    const Vec q2 = cov_QQ.diagonal().array() + mean_Q.array().square();
    return E2_ * q2 - vacuum_;
}

TrajectoryRecord::TrajectoryRecord(int rows, int levels, int n_snapshots, int n_r)
    : populations(Mat::Zero(rows, levels)), intensity(n_snapshots, Vec::Zero(n_r)) {}

void TrajectoryRecord::reset() {
    populations.setZero();
    for (Vec& v : intensity) v.setZero();
    accepted = true;
    maxima.clear();
    totals.clear();
}

EnsembleAccumulator::EnsembleAccumulator(int rows, int levels, int n_snapshots, int n_r)
    : pop_sum_(Mat::Zero(rows, levels)), pop_sq_(Mat::Zero(rows, levels)),
      int_sum_(n_snapshots, Vec::Zero(n_r)), int_sq_(n_snapshots, Vec::Zero(n_r)) {}

void EnsembleAccumulator::add(const TrajectoryRecord& rec) {
    for (const auto& [key, v] : rec.maxima) {
        auto [it, fresh] = maxima_.try_emplace(key, v);
        if (!fresh) it->second = std::max(it->second, v);
    }
    for (const auto& [key, v] : rec.totals) totals_[key] += v;
    if (!rec.accepted) {
        rejected_ += 1.0;
        return;
    }
    pop_sum_ += rec.populations;
    pop_sq_ += rec.populations.array().square().matrix();
    for (std::size_t s = 0; s < int_sum_.size(); ++s) {
        int_sum_[s] += rec.intensity[s];
        int_sq_[s] += rec.intensity[s].array().square().matrix();
    }
    count_ += 1.0;
}

void EnsembleAccumulator::merge(const EnsembleAccumulator& other) {
    pop_sum_ += other.pop_sum_;
    pop_sq_ += other.pop_sq_;
    for (std::size_t s = 0; s < int_sum_.size(); ++s) {
        int_sum_[s] += other.int_sum_[s];
        int_sq_[s] += other.int_sq_[s];
    }
    count_ += other.count_;
    rejected_ += other.rejected_;
    for (const auto& [key, v] : other.maxima_) {
        auto [it, fresh] = maxima_.try_emplace(key, v);
        if (!fresh) it->second = std::max(it->second, v);
    }
    for (const auto& [key, v] : other.totals_) totals_[key] += v;
}

void EnsembleAccumulator::finish(ObservableSeries& series) const {
    const double n = count_;
    if (n < 1.0) throw NumericGuard("ensemble has no accepted trajectories");
    auto stderr_of = [n](const auto& sum, const auto& sq) {
        using T = std::decay_t<decltype(sum)>;
        if (n < 2.0) return T(T::Zero(sum.rows(), sum.cols()));
        const auto mean = (sum.array() / n).eval();
        const auto var = ((sq.array() - n * mean.square()) / (n - 1.0)).cwiseMax(0.0).eval();
        return T((var / n).sqrt().matrix());
    };
    series.populations = pop_sum_ / n;
    series.population_se = stderr_of(pop_sum_, pop_sq_);
    series.intensity.clear();
    series.intensity_se.clear();
    for (std::size_t s = 0; s < int_sum_.size(); ++s) {
        series.intensity.push_back(int_sum_[s] / n);
        series.intensity_se.push_back(stderr_of(int_sum_[s], int_sq_[s]));
    }
    series.diagnostics["trajectories_accepted"] = n;
    series.diagnostics["trajectories_rejected"] = rejected_;
    for (const auto& [key, v] : maxima_) series.diagnostics[key] = v;
    for (const auto& [key, v] : totals_) series.diagnostics[key] = v;
}

QSquareEstimate ensemble_q_square(const std::vector<FieldSample>& samples, int n_batches) {
    const int n = static_cast<int>(samples.size());
    if (n < 2) throw ConfigError("ensemble_q_square needs at least two trajectories");
    const int M = static_cast<int>(samples.front().Q.size());
    const int B = std::clamp(n_batches, 2, n);
    Mat batch_mean = Mat::Zero(M, B);
    Vec batch_size = Vec::Zero(B);
    Vec total = Vec::Zero(M);
    for (int j = 0; j < n; ++j) {
        const int b = static_cast<int>((static_cast<long long>(j) * B) / n);
        const Vec q2 = samples[j].Q.array().square();
        batch_mean.col(b) += q2;
        batch_size(b) += 1.0;
        total += q2;
    }
    QSquareEstimate est;
    est.mean = total / n;
    for (int b = 0; b < B; ++b) batch_mean.col(b) /= batch_size(b);
    const Mat dev = batch_mean.colwise() - est.mean;
    est.se = (dev.array().square().rowwise().sum() / (B * (B - 1.0))).sqrt().matrix();
    return est;
}

} // namespace cavity

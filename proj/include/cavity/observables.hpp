#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "cavity/model.hpp"
#include "cavity/sampling.hpp"

namespace cavity {

// Which normal-ordered intensity estimator to evaluate.
enum class IntensityKind {
    full,      // includes cross-mode correlations <Q_a Q_b>
    diagonal,  // mode-diagonal form 2 sum omega zeta^2 <Q^2> - sum zeta^2
};

// Time discretization and output selection shared by every propagator.
struct OutputPlan {
    double dt{0.05};
    double t_final{0.0};
    std::vector<double> snapshots;  // intensity snapshot times, on the step grid
    Vec r_grid;                     // intensity evaluation points
    int output_every{1};            // population rows every n-th step
    IntensityKind intensity{IntensityKind::full};

    int steps() const;                       // number of dt steps to reach t_final
    std::vector<int> snapshot_steps() const; // step index of each snapshot
    std::vector<int> output_steps() const;   // step indices with a population row
    void check() const;                      // throws ConfigError
};

struct ObservableSeries {
    std::string method;
    Vec times;                      // population time grid
    Mat populations;                // rows: times, columns: levels
    Mat population_se;              // statistical errors, zero for deterministic methods
    Vec r_grid;
    std::vector<double> snapshot_times;
    std::vector<Vec> intensity;     // one profile per snapshot
    std::vector<Vec> intensity_se;
    std::map<std::string, double> diagnostics;  // drift monitors, rejection counts, ...

    int levels() const { return static_cast<int>(populations.cols()); }
};

// Mode-diagonal intensity I(r) = 2 sum omega zeta^2(r) <Q^2> - sum zeta^2(r).
Vec intensity(const ModelSpec& model, const Vec& r_grid, const Vec& q_square_means);

// Phase-space intensity estimator for a single field point or moment set.
// Field amplitude at r_i is sum_a E(i, a) Q_a with E = zeta sqrt(2 omega).
class FieldEstimator {
public:
    FieldEstimator() = default;
    FieldEstimator(const ModelSpec& model, const Vec& r_grid, IntensityKind kind);

    // Weyl symbol of :I(r): at the field point Q.
    void evaluate(const Vec& Q, Vec& out) const;
    Vec evaluate(const Vec& Q) const {
        Vec out;
        evaluate(Q, out);
        return out;
    }
    // Expectation from the mean X_Q and the covariance of the mode coordinates.
    Vec from_moments(const Vec& mean_Q, const Mat& cov_QQ) const;

    const Mat& amplitudes() const { return E_; }
    const Vec& vacuum() const { return vacuum_; }

private:
    Mat E_;       // grid x modes
    Mat E2_;      // squared amplitudes, for the diagonal estimator
    Vec vacuum_;  // sum zeta^2, the symmetric-ordering offset
    IntensityKind kind_{IntensityKind::full};
};

// Per-trajectory values feeding an ensemble average.
struct TrajectoryRecord {
    Mat populations;           // output rows x levels
    std::vector<Vec> intensity;
    bool accepted{true};
    std::map<std::string, double> maxima;  // diagnostics reduced by max
    std::map<std::string, double> totals;  // diagnostics reduced by sum

    TrajectoryRecord() = default;
    TrajectoryRecord(int rows, int levels, int n_snapshots, int n_r);
    void reset();
};

// Running sums for means and standard errors, merged in a fixed order.
class EnsembleAccumulator {
public:
    EnsembleAccumulator() = default;
    EnsembleAccumulator(int rows, int levels, int n_snapshots, int n_r);

    void add(const TrajectoryRecord& rec);
    void merge(const EnsembleAccumulator& other);
    double count() const { return count_; }
    double rejected() const { return rejected_; }

    // Mean and standard error of the mean; SE uses the unbiased sample variance.
    void finish(ObservableSeries& series) const;

private:
    Mat pop_sum_, pop_sq_;
    std::vector<Vec> int_sum_, int_sq_;
    double count_{0.0};
    double rejected_{0.0};
    std::map<std::string, double> maxima_, totals_;
};

struct QSquareEstimate {
    Vec mean;  // per-mode sample mean of Q^2
    Vec se;    // batch-means standard error
};

// Per-mode mean of Q^2 over field samples with a batch-means standard error.
QSquareEstimate ensemble_q_square(const std::vector<FieldSample>& samples, int n_batches = 20);

} // namespace cavity

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "cavity/observables.hpp"

namespace cavity {

struct EnsembleOptions {
    std::uint64_t n_traj{1000};
    std::uint64_t seed{1};
    int workers{1};
    int chunks{64};  // fixed partition of the trajectory range; independent of workers
};

// Runs n_traj independent trajectories and averages them. `make_runner()` must
// return an object with `void run(std::uint64_t index, TrajectoryRecord& rec)`;
// one runner is built per worker. Chunk c holds trajectories
// [c n / chunks, (c + 1) n / chunks), is filled in index order, and chunks are
// merged in order, so the result is bitwise independent of the worker count.
template <typename MakeRunner>
ObservableSeries run_ensemble(const std::string& method, int levels, const EnsembleOptions& opt,
                              const OutputPlan& plan, MakeRunner&& make_runner) {
    if (opt.n_traj < 1) throw ConfigError("n_traj must be at least 1");
    if (opt.workers < 1) throw ConfigError("workers must be at least 1");
    plan.check();
    const std::vector<int> rows = plan.output_steps();
    const int n_snap = static_cast<int>(plan.snapshots.size());
    const int n_r = static_cast<int>(plan.r_grid.size());
    const std::uint64_t n_chunks = std::min<std::uint64_t>(std::max(opt.chunks, 1), opt.n_traj);

    std::vector<EnsembleAccumulator> acc(n_chunks);
    std::atomic<std::uint64_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_lock;

    auto worker = [&]() {
        try {
            auto runner = make_runner();
            TrajectoryRecord rec(static_cast<int>(rows.size()), levels, n_snap, n_r);
            for (std::uint64_t c = next++; c < n_chunks; c = next++) {
                EnsembleAccumulator local(static_cast<int>(rows.size()), levels, n_snap, n_r);
                const std::uint64_t begin = c * opt.n_traj / n_chunks;
                const std::uint64_t end = (c + 1) * opt.n_traj / n_chunks;
                for (std::uint64_t i = begin; i < end; ++i) {
                    rec.reset();
                    runner.run(i, rec);
                    local.add(rec);
                }
                acc[c] = std::move(local);
            }
        } catch (...) {
            std::lock_guard<std::mutex> guard(failure_lock);
            if (!failure) failure = std::current_exception();
            next = n_chunks;
        }
    };

    const int n_workers = static_cast<int>(std::min<std::uint64_t>(opt.workers, n_chunks));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    EnsembleAccumulator total(static_cast<int>(rows.size()), levels, n_snap, n_r);
    for (const EnsembleAccumulator& a : acc) total.merge(a);

    ObservableSeries series;
    series.method = method;
    series.r_grid = plan.r_grid;
    series.snapshot_times = plan.snapshots;
    series.times.resize(rows.size());
    for (std::size_t j = 0; j < rows.size(); ++j) series.times(j) = rows[j] * plan.dt;
    total.finish(series);
    series.diagnostics["trajectories"] = static_cast<double>(opt.n_traj);
    return series;
}

// Walks the step grid of a plan and reports which population row and which
// snapshots fall on each step.
class StepSchedule {
public:
    explicit StepSchedule(const OutputPlan& plan)
        : rows_(plan.output_steps()), snaps_(plan.snapshot_steps()), steps_(plan.steps()) {}
    int steps() const { return steps_; }
    // Row index written at step k, or -1.
    int row_at(int k) {
        if (next_row_ < rows_.size() && rows_[next_row_] == k) return static_cast<int>(next_row_++);
        return -1;
    }
    void restart() { next_row_ = 0; }
    const std::vector<int>& snapshot_steps() const { return snaps_; }

private:
    std::vector<int> rows_, snaps_;
    int steps_;
    std::size_t next_row_{0};
};

} // namespace cavity

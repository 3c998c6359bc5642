#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "synkpar/errors.hpp"

namespace synkpar {

class WorkerPool;

namespace detail {
struct PoolState;
std::shared_ptr<PoolState> state_of(const WorkerPool& pool);
} // namespace detail

enum class PhaseKind {
    CallFunction,
    Collective,
    ScatterVar,
    Distribute,
    Shutdown,
};

const char* phase_kind_name(PhaseKind kind) noexcept;

struct ForkOptions {
    // World size. Unset = SYNKPAR_WORKERS if defined, else the hardware
    // thread count. Explicit 0 is an argument error.
    std::optional<std::size_t> workers;
    // Pin rank r to core r mod hardware threads (best effort; failures
    // are counted, not fatal).
    bool pin_threads = false;
};

// Per-phase record: monotonically increasing id plus each rank's task seconds,
// sampled inside the phase. rank_seconds feeds the straggler metric.
struct PhaseReport {
    std::uint64_t phase_id = 0;
    PhaseKind kind = PhaseKind::CallFunction;
    std::vector<double> rank_seconds;

    double max_seconds() const noexcept;
    double mean_seconds() const noexcept;
    // Time lost waiting for the slowest rank: max - mean, always >= 0.
    double straggler_seconds() const noexcept { return max_seconds() - mean_seconds(); }
};

/// Pool of W worker contexts, ranks 0..W-1. Rank 0 is the calling (master)
/// thread and executes the same per-rank work as the others; ranks 1..W-1 are
/// long-lived threads parked between phases.
///
/// At most one pool is live at a time. Only the master thread may issue
/// phases, and exactly one phase is in flight at a time; run_phase does not
/// return until every rank has passed the exit barrier. Any rank failure
/// fail-stops the pool: the error (lowest failing rank wins) is rethrown as
/// PhaseError and the pool transitions to shut_down.
///
/// The handle is move-only and shuts the pool down on destruction. After
/// shutdown() a new pool may be forked.
class WorkerPool {
public:
    static WorkerPool fork(ForkOptions opts);
    static WorkerPool fork() { return fork(ForkOptions{}); }
    static WorkerPool fork(std::size_t n_workers) {
        return fork(ForkOptions{.workers = n_workers, .pin_threads = false});
    }

    WorkerPool(WorkerPool&&) noexcept;
    WorkerPool& operator=(WorkerPool&&) noexcept;
    WorkerPool(const WorkerPool&) = delete;
    WorkerPool& operator=(const WorkerPool&) = delete;
    ~WorkerPool();

    std::size_t world_size() const;
    bool alive() const noexcept; // forked and not yet shut down

    // Run one barrier-delimited phase: every rank executes work(rank).
    PhaseReport run_phase(PhaseKind kind, const std::function<void(std::size_t)>& work);

    // Convenience: collect one value per rank, in rank order.
    template <class T, class F>
    std::pair<std::vector<T>, PhaseReport> run_phase_collect(PhaseKind kind, F&& fn) {
        std::vector<T> out(world_size());
        PhaseReport rep = run_phase(kind, [&](std::size_t rank) { out[rank] = fn(rank); });
        return {std::move(out), std::move(rep)};
    }

    // Join all workers. Idempotent; phases after shutdown are lifecycle errors.
    void shutdown();

    // Structured debug log: one line per phase (id, kind, per-rank µs).
    void set_debug_sink(std::function<void(const std::string&)> sink);

    // How many worker threads the pin request could not be applied to.
    std::size_t pin_failures() const;

private:
    friend std::shared_ptr<detail::PoolState> detail::state_of(const WorkerPool&);
    explicit WorkerPool(std::shared_ptr<detail::PoolState> st) : st_(std::move(st)) {}

    std::shared_ptr<detail::PoolState> st_;
};

// True while any live pool is inside a phase. SharedInputArray uses this to
// reject writes issued during a parallel call.
bool phase_in_flight() noexcept;

} // namespace synkpar

#pragma once

// Pool internals shared by the engine, collectives, and the function layer.
// Not installed; everything here is behind the public handles.

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <thread>
#include <vector>

#include "synkpar/worker_pool.hpp"

namespace synkpar::detail {

struct FunctionCore; // function layer's record; registered at build time

enum class PoolLifecycle : int {
    Idle = 0,
    InPhase = 1,
    ShutDown = 2,
};

struct PoolState {
    std::size_t world = 1;
    bool pin_threads = false;
    std::uint64_t session_id = 0;
    std::atomic<std::size_t> pin_failures{0};

    std::atomic<int> lifecycle{static_cast<int>(PoolLifecycle::Idle)};

    // Phase protocol. The master publishes task/command/remaining, then bumps
    // phase_seq (the phase id) to release the workers; the last rank to finish
    // publishes the id through completed_seq. Two counters + a countdown give
    // the required two-phase (arrive/depart) barrier: a rank can never observe
    // phase k+1's task before every rank has finished phase k, because the
    // master does not publish phase k+1 until completed_seq == k.
    std::atomic<std::uint64_t> phase_seq{0};
    std::atomic<std::uint64_t> completed_seq{0};
    std::atomic<std::size_t> remaining{0};
    std::atomic<int> command{0}; // PhaseKind of the in-flight phase
    const std::function<void(std::size_t)>* task = nullptr;

    // Per-rank result slots for the in-flight phase; rank r writes slot r only.
    std::vector<std::exception_ptr> rank_errors;
    std::vector<double> rank_seconds;

    std::vector<std::thread> threads; // ranks 1..world-1
    std::function<void(const std::string&)> debug_sink;

    // Functions built against this pool, in build order; distribute() walks
    // this and ships the not-yet-distributed ones.
    std::vector<std::weak_ptr<FunctionCore>> built_functions;
};

// Core phase driver; WorkerPool::run_phase and the collectives forward here.
PhaseReport run_pool_phase(PoolState& st, PhaseKind kind,
                           const std::function<void(std::size_t)>& work);
void shutdown_pool(PoolState& st);

void require_idle(const PoolState& st, const char* what);

} // namespace synkpar::detail

#include "synkpar/worker_pool.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <mutex>
#include <sstream>

#include "internal.hpp"

#ifdef __linux__
#include <pthread.h>
#include <sched.h>
#endif

namespace synkpar {

namespace {

// At most one live pool per session; the slot also backs phase_in_flight().
std::mutex g_live_mutex;
detail::PoolState* g_live_pool = nullptr;
std::uint64_t g_session_counter = 0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool pin_current_thread(std::size_t core) {
#ifdef __linux__
    cpu_set_t set;
    CPU_ZERO(&set);
    CPU_SET(core % CPU_SETSIZE, &set);
    return pthread_setaffinity_np(pthread_self(), sizeof(set), &set) == 0;
#else
    (void)core;
    return false;
#endif
}

std::size_t default_world_size() {
    if (const char* env = std::getenv("SYNKPAR_WORKERS")) {
        char* end = nullptr;
        unsigned long v = std::strtoul(env, &end, 10);
        if (end == env || *end != '\0' || v == 0) {
            throw ArgumentError(std::string("SYNKPAR_WORKERS must be a positive integer, got \"") +
                                env + "\"");
        }
        return static_cast<std::size_t>(v);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

// Mark this rank's slot complete; the last rank publishes the phase id.
void finish_rank(detail::PoolState& st, std::uint64_t phase_id) {
    if (st.remaining.fetch_sub(1) == 1) {
        st.completed_seq.store(phase_id);
        st.completed_seq.notify_all();
    }
}

void worker_main(std::shared_ptr<detail::PoolState> st, std::size_t rank) {
    std::uint64_t seen = 0;
    for (;;) {
        // Park until the master publishes a phase id we have not run yet.
        for (;;) {
            std::uint64_t cur = st->phase_seq.load();
            if (cur != seen) {
                seen = cur;
                break;
            }
            st->phase_seq.wait(cur);
        }
        if (st->command.load() == static_cast<int>(PhaseKind::Shutdown)) {
            finish_rank(*st, seen);
            return;
        }
        auto t0 = Clock::now();
        try {
            (*st->task)(rank);
        } catch (...) {
            st->rank_errors[rank] = std::current_exception();
        }
        st->rank_seconds[rank] = seconds_since(t0);
        finish_rank(*st, seen);
    }
}

void wait_for_completion(detail::PoolState& st, std::uint64_t phase_id) {
    for (;;) {
        std::uint64_t done = st.completed_seq.load();
        if (done == phase_id) return;
        st.completed_seq.wait(done);
    }
}

std::string format_phase_line(const PhaseReport& rep) {
    std::ostringstream os;
    os << "phase=" << rep.phase_id << " kind=" << phase_kind_name(rep.kind) << " rank_us=[";
    for (std::size_t r = 0; r < rep.rank_seconds.size(); ++r) {
        if (r) os << ',';
        os << static_cast<long long>(rep.rank_seconds[r] * 1e6);
    }
    os << ']';
    return os.str();
}

} // namespace

const char* phase_kind_name(PhaseKind kind) noexcept {
    switch (kind) {
    case PhaseKind::CallFunction: return "call_function";
    case PhaseKind::Collective: return "collective";
    case PhaseKind::ScatterVar: return "scatter_var";
    case PhaseKind::Distribute: return "distribute";
    case PhaseKind::Shutdown: return "shutdown";
    }
    return "?";
}

double PhaseReport::max_seconds() const noexcept {
    double m = 0.0;
    for (double s : rank_seconds) m = std::max(m, s);
    return m;
}

double PhaseReport::mean_seconds() const noexcept {
    if (rank_seconds.empty()) return 0.0;
    double total = 0.0;
    for (double s : rank_seconds) total += s;
    return total / static_cast<double>(rank_seconds.size());
}

namespace detail {

std::shared_ptr<PoolState> state_of(const WorkerPool& pool) {
    if (!pool.st_) throw LifecycleError("worker pool handle is empty (moved from?)");
    return pool.st_;
}

void require_idle(const PoolState& st, const char* what) {
    switch (static_cast<PoolLifecycle>(st.lifecycle.load())) {
    case PoolLifecycle::Idle:
        return;
    case PoolLifecycle::InPhase:
        throw LifecycleError(std::string(what) + ": a phase is already in flight");
    case PoolLifecycle::ShutDown:
        throw LifecycleError(std::string(what) + ": pool is shut down");
    }
}

PhaseReport run_pool_phase(PoolState& st, PhaseKind kind,
                           const std::function<void(std::size_t)>& work) {
    require_idle(st, "run_phase");

    st.rank_errors.assign(st.world, nullptr);
    st.rank_seconds.assign(st.world, 0.0);
    st.task = &work;
    st.command.store(static_cast<int>(kind));
    st.remaining.store(st.world);
    st.lifecycle.store(static_cast<int>(PoolLifecycle::InPhase));

    std::uint64_t phase_id = st.phase_seq.fetch_add(1) + 1;
    st.phase_seq.notify_all();

    // The master is rank 0 and does the same work as everyone else.
    auto t0 = Clock::now();
    try {
        work(0);
    } catch (...) {
        st.rank_errors[0] = std::current_exception();
    }
    st.rank_seconds[0] = seconds_since(t0);
    finish_rank(st, phase_id);
    wait_for_completion(st, phase_id);

    st.task = nullptr;
    st.lifecycle.store(static_cast<int>(PoolLifecycle::Idle));

    PhaseReport rep{phase_id, kind, st.rank_seconds};
    if (st.debug_sink) st.debug_sink(format_phase_line(rep));

    for (std::size_t r = 0; r < st.world; ++r) {
        if (!st.rank_errors[r]) continue;
        std::string message = "unknown error";
        try {
            std::rethrow_exception(st.rank_errors[r]);
        } catch (const std::exception& e) {
            message = e.what();
        } catch (...) {
        }
        shutdown_pool(st); // fail-stop: no recovery after a rank failure
        throw PhaseError(r, message);
    }
    return rep;
}

void shutdown_pool(PoolState& st) {
    if (static_cast<PoolLifecycle>(st.lifecycle.load()) == PoolLifecycle::ShutDown) return;

    // Release the parked workers into a Shutdown phase, then join.
    st.rank_errors.assign(st.world, nullptr);
    st.rank_seconds.assign(st.world, 0.0);
    st.command.store(static_cast<int>(PhaseKind::Shutdown));
    st.remaining.store(st.world);
    std::uint64_t phase_id = st.phase_seq.fetch_add(1) + 1;
    st.phase_seq.notify_all();
    finish_rank(st, phase_id);
    wait_for_completion(st, phase_id);
    for (std::thread& t : st.threads) {
        if (t.joinable()) t.join();
    }
    st.threads.clear();
    st.lifecycle.store(static_cast<int>(PoolLifecycle::ShutDown));

    std::lock_guard<std::mutex> lock(g_live_mutex);
    if (g_live_pool == &st) g_live_pool = nullptr;
}

} // namespace detail

WorkerPool WorkerPool::fork(ForkOptions opts) {
    std::size_t world;
    if (opts.workers.has_value()) {
        if (*opts.workers == 0) throw ArgumentError("fork(): world size must be >= 1");
        world = *opts.workers;
    } else {
        world = default_world_size();
    }

    auto st = std::make_shared<detail::PoolState>();
    st->world = world;
    st->pin_threads = opts.pin_threads;

    {
        std::lock_guard<std::mutex> lock(g_live_mutex);
        if (g_live_pool != nullptr) {
            throw LifecycleError("fork(): a worker pool is already live; shut it down first");
        }
        st->session_id = ++g_session_counter;
        g_live_pool = st.get();
    }

    if (opts.pin_threads && !pin_current_thread(0)) st->pin_failures++;
    st->threads.reserve(world - 1);
    for (std::size_t rank = 1; rank < world; ++rank) {
        st->threads.emplace_back([st, rank] {
            if (st->pin_threads && !pin_current_thread(rank)) {
                // Best effort; count so the bench can report it.
                st->pin_failures++;
            }
            worker_main(st, rank);
        });
    }
    return WorkerPool(std::move(st));
}

WorkerPool::WorkerPool(WorkerPool&&) noexcept = default;

WorkerPool& WorkerPool::operator=(WorkerPool&& other) noexcept {
    if (this != &other) {
        if (st_) detail::shutdown_pool(*st_);
        st_ = std::move(other.st_);
    }
    return *this;
}

WorkerPool::~WorkerPool() {
    if (st_) detail::shutdown_pool(*st_);
}

std::size_t WorkerPool::world_size() const {
    return detail::state_of(*this)->world;
}

bool WorkerPool::alive() const noexcept {
    return st_ && static_cast<detail::PoolLifecycle>(st_->lifecycle.load()) !=
                      detail::PoolLifecycle::ShutDown;
}

PhaseReport WorkerPool::run_phase(PhaseKind kind, const std::function<void(std::size_t)>& work) {
    return detail::run_pool_phase(*detail::state_of(*this), kind, work);
}

void WorkerPool::shutdown() {
    detail::shutdown_pool(*detail::state_of(*this));
}

void WorkerPool::set_debug_sink(std::function<void(const std::string&)> sink) {
    detail::state_of(*this)->debug_sink = std::move(sink);
}

std::size_t WorkerPool::pin_failures() const {
    return detail::state_of(*this)->pin_failures;
}

bool phase_in_flight() noexcept {
    std::lock_guard<std::mutex> lock(g_live_mutex);
    return g_live_pool != nullptr &&
           static_cast<detail::PoolLifecycle>(g_live_pool->lifecycle.load()) ==
               detail::PoolLifecycle::InPhase;
}

} // namespace synkpar

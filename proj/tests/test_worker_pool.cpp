#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include "support.hpp"
#include "synkpar/worker_pool.hpp"

using namespace synkpar;

TEST_CASE("fork creates W ranks; one live pool at a time") {
    WorkerPool pool = WorkerPool::fork(4);
    CHECK(pool.world_size() == 4);
    CHECK(pool.alive());

    CHECK_THROWS_AS((void)WorkerPool::fork(2), LifecycleError); // double fork

    pool.shutdown();
    CHECK_FALSE(pool.alive());
    pool.shutdown(); // idempotent

    WorkerPool second = WorkerPool::fork(2); // legal after shutdown
    CHECK(second.world_size() == 2);
}

TEST_CASE("fork(0) is an argument error") {
    CHECK_THROWS_AS((void)WorkerPool::fork(0), ArgumentError);
    ForkOptions opts;
    opts.workers = 0;
    CHECK_THROWS_AS((void)WorkerPool::fork(opts), ArgumentError);
}

TEST_CASE("SYNKPAR_WORKERS drives the default world size") {
    ::setenv("SYNKPAR_WORKERS", "3", 1);
    {
        WorkerPool pool = WorkerPool::fork();
        CHECK(pool.world_size() == 3);
    }
    ::setenv("SYNKPAR_WORKERS", "garbage", 1);
    CHECK_THROWS_AS((void)WorkerPool::fork(), ArgumentError);
    ::setenv("SYNKPAR_WORKERS", "0", 1);
    CHECK_THROWS_AS((void)WorkerPool::fork(), ArgumentError);
    ::unsetenv("SYNKPAR_WORKERS");
    {
        WorkerPool pool = WorkerPool::fork();
        CHECK(pool.world_size() >= 1); // hardware default
    }
    // explicit count beats the environment
    ::setenv("SYNKPAR_WORKERS", "5", 1);
    {
        WorkerPool pool = WorkerPool::fork(2);
        CHECK(pool.world_size() == 2);
    }
    ::unsetenv("SYNKPAR_WORKERS");
}

TEST_CASE("run_phase executes every rank exactly once; master is rank 0") {
    WorkerPool pool = WorkerPool::fork(4);
    std::vector<std::atomic<int>> hits(4);
    std::thread::id master = std::this_thread::get_id();
    std::atomic<bool> rank0_is_master{false};

    PhaseReport rep = pool.run_phase(PhaseKind::CallFunction, [&](std::size_t rank) {
        hits[rank].fetch_add(1);
        if (rank == 0 && std::this_thread::get_id() == master) rank0_is_master = true;
    });

    for (auto& h : hits) CHECK(h.load() == 1);
    CHECK(rank0_is_master.load());
    CHECK(rep.rank_seconds.size() == 4);
    CHECK(rep.straggler_seconds() >= 0.0);

    PhaseReport rep2 = pool.run_phase(PhaseKind::Collective, [](std::size_t) {});
    CHECK(rep2.phase_id > rep.phase_id); // ids increase
}

TEST_CASE("run_phase_collect returns rank-ordered values") {
    WorkerPool pool = WorkerPool::fork(4);
    auto [values, rep] = pool.run_phase_collect<std::size_t>(
        PhaseKind::CallFunction, [](std::size_t rank) { return rank * 10; });
    REQUIRE(values.size() == 4);
    for (std::size_t r = 0; r < 4; ++r) CHECK(values[r] == r * 10);
}

TEST_CASE("many sequential phases stay balanced") {
    WorkerPool pool = WorkerPool::fork(3);
    std::atomic<long> total{0};
    for (int i = 0; i < 200; ++i) {
        pool.run_phase(PhaseKind::CallFunction, [&](std::size_t) { total.fetch_add(1); });
    }
    CHECK(total.load() == 600);
}

TEST_CASE("rank failure fail-stops the pool, lowest rank wins") {
    WorkerPool pool = WorkerPool::fork(4);
    bool caught = false;
    try {
        pool.run_phase(PhaseKind::CallFunction, [](std::size_t rank) {
            if (rank == 2) throw std::runtime_error("boom on two");
        });
    } catch (const PhaseError& e) {
        caught = true;
        CHECK(e.rank() == 2);
        CHECK(std::string(e.what()).find("rank 2") != std::string::npos);
        CHECK(std::string(e.what()).find("boom on two") != std::string::npos);
    }
    CHECK(caught);
    CHECK_FALSE(pool.alive()); // fail-stop
    CHECK_THROWS_AS(pool.run_phase(PhaseKind::CallFunction, [](std::size_t) {}),
                    LifecycleError);

    WorkerPool pool2 = WorkerPool::fork(4);
    try {
        pool2.run_phase(PhaseKind::CallFunction, [](std::size_t rank) {
            if (rank == 1 || rank == 3) throw std::runtime_error("multi");
        });
        CHECK(false);
    } catch (const PhaseError& e) {
        CHECK(e.rank() == 1); // lowest failing rank reported
    }
}

TEST_CASE("phases after shutdown are lifecycle errors") {
    WorkerPool pool = WorkerPool::fork(2);
    pool.shutdown();
    CHECK_THROWS_AS(pool.run_phase(PhaseKind::CallFunction, [](std::size_t) {}),
                    LifecycleError);
}

TEST_CASE("fork then shutdown with zero phases joins cleanly") {
    WorkerPool pool = WorkerPool::fork(8);
    pool.shutdown();
    CHECK_FALSE(pool.alive());
}

TEST_CASE("debug sink receives one line per phase") {
    WorkerPool pool = WorkerPool::fork(2);
    std::vector<std::string> lines;
    pool.set_debug_sink([&](const std::string& line) { lines.push_back(line); });
    pool.run_phase(PhaseKind::Collective, [](std::size_t) {});
    pool.run_phase(PhaseKind::CallFunction, [](std::size_t) {});
    REQUIRE(lines.size() == 2);
    CHECK(lines[0].find("phase=") != std::string::npos);
    CHECK(lines[0].find("kind=collective") != std::string::npos);
    CHECK(lines[0].find("rank_us=[") != std::string::npos);
    CHECK(lines[1].find("kind=call_function") != std::string::npos);
}

TEST_CASE("moved-from handles are inert") {
    WorkerPool pool = WorkerPool::fork(2);
    WorkerPool moved = std::move(pool);
    CHECK(moved.alive());
    CHECK(moved.world_size() == 2);
    moved.run_phase(PhaseKind::CallFunction, [](std::size_t) {});
}

TEST_CASE("W=1 pool runs phases on the master alone") {
    WorkerPool pool = WorkerPool::fork(1);
    std::size_t seen = 99;
    pool.run_phase(PhaseKind::CallFunction, [&](std::size_t rank) { seen = rank; });
    CHECK(seen == 0);
}

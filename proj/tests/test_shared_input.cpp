#include <doctest.h>

#include <filesystem>

#include "support.hpp"
#include "synkpar/shared_input.hpp"
#include "synkpar/worker_pool.hpp"

using namespace synkpar;

TEST_CASE("alloc: shape, capacity, zero init") {
    auto s0 = shared_input_stats();

    SharedInputArray a = SharedInputArray::alloc({4, 2}, DType::Float64, 64);
    CHECK(a.shape() == std::vector<std::size_t>{4, 2});
    CHECK(a.capacity() == 64);
    CHECK(a.rows() == 4);
    CHECK_FALSE(a.freed());
    for (std::size_t i = 0; i < 8; ++i) CHECK(a.view().get(i) == 0.0);

    SharedInputArray dflt = SharedInputArray::alloc({3, 3});
    CHECK(dflt.capacity() == 9); // capacity defaults to the view size

    SharedInputArray empty = SharedInputArray::alloc({0, 3}, DType::Float32);
    CHECK(empty.capacity() == 0);
    CHECK(empty.rows() == 0);

    CHECK_THROWS_AS((void)SharedInputArray::alloc({2}, DType::Float64, 1), ArgumentError);

    // Two arrays carry storage; the zero-capacity one allocates no bytes and
    // the failed alloc must not count either.
    auto s1 = shared_input_stats();
    CHECK(s1.total_allocations == s0.total_allocations + 2);
    CHECK(s1.live_allocations == s0.live_allocations + 2);

    // ids are unique and increasing
    CHECK(dflt.id() > a.id());
    CHECK(empty.id() > dflt.id());
}

TEST_CASE("write replaces selected rows only") {
    SharedInputArray a = SharedInputArray::alloc({3, 2});
    a.write_all(testsup::iota_buffer({3, 2}));
    a.write({1, 2}, NdBuffer::from<double>({10.0, 11.0}, {1, 2}));
    NdBuffer v = a.view();
    CHECK(v.get(0) == 0.0);
    CHECK(v.get(1) == 1.0);
    CHECK(v.get(2) == 10.0);
    CHECK(v.get(3) == 11.0);
    CHECK(v.get(4) == 4.0);
    CHECK(v.get(5) == 5.0);

    CHECK_THROWS_AS(a.write({0, 1}, NdBuffer::zeros({1, 3})), ShapeError);
    CHECK_THROWS_AS(a.write({0, 2}, NdBuffer::zeros({1, 2})), ShapeError);
    CHECK_THROWS_AS(a.write({2, 4}, NdBuffer::zeros({2, 2})), BoundsError);
    CHECK_THROWS_AS(a.write_all(NdBuffer::zeros({3, 2}, DType::Float32)), DTypeError);
}

TEST_CASE("reshape stays within capacity and preserves the linear prefix") {
    SharedInputArray a = SharedInputArray::alloc({4, 2}, DType::Float64, 64);
    a.write_all(testsup::iota_buffer({4, 2}));

    a.reshape({8, 2}); // grows within capacity, no reallocation
    CHECK(a.shape() == std::vector<std::size_t>{8, 2});
    for (std::size_t i = 0; i < 8; ++i) CHECK(a.view().get(i) == static_cast<double>(i));

    a.reshape({2, 4}); // same 8 elements reinterpreted row-major
    for (std::size_t i = 0; i < 8; ++i) CHECK(a.view().get(i) == static_cast<double>(i));

    a.reshape({2}); // shrink, then grow back: elements still there
    a.reshape({8});
    for (std::size_t i = 0; i < 8; ++i) CHECK(a.view().get(i) == static_cast<double>(i));

    SharedInputArray small = SharedInputArray::alloc({8});
    CHECK_THROWS_AS(small.reshape({3, 3}), CapacityError);
    CHECK(small.shape() == std::vector<std::size_t>{8}); // unchanged after failure
}

TEST_CASE("free: all later access errors, storage is returned") {
    auto before = shared_input_stats();
    SharedInputArray a = SharedInputArray::alloc({4});
    CHECK(shared_input_stats().live_allocations == before.live_allocations + 1);

    SharedInputArray alias = a; // second handle to the same array
    a.free();
    CHECK(a.freed());
    CHECK(alias.freed());
    CHECK(shared_input_stats().live_allocations == before.live_allocations);

    CHECK_THROWS_AS((void)a.view(), UseAfterFreeError);
    CHECK_THROWS_AS(alias.write_all(NdBuffer::zeros({4})), UseAfterFreeError);
    CHECK_THROWS_AS(a.reshape({2}), UseAfterFreeError);
    CHECK_THROWS_AS(a.free(), UseAfterFreeError); // double free
}

TEST_CASE("from_buffer and file round trip") {
    NdBuffer data = testsup::random_buffer({5, 3}, 7, DType::Float32);
    SharedInputArray a = SharedInputArray::from_buffer(data);
    CHECK(a.view().equals_bitwise(data));
    CHECK_FALSE(a.view().shares_storage(data)); // own storage

    auto path = std::filesystem::temp_directory_path() / "synkpar_shared_io.synk";
    a.to_file(path.string());
    SharedInputArray b = SharedInputArray::from_file(path.string(), 32);
    CHECK(b.view().equals_bitwise(data));
    CHECK(b.capacity() == 32);
    std::filesystem::remove(path);
}

TEST_CASE("mutation is rejected while a phase is in flight") {
    SharedInputArray a = SharedInputArray::alloc({4});
    WorkerPool pool = WorkerPool::fork(2);
    bool rejected = false;
    pool.run_phase(PhaseKind::CallFunction, [&](std::size_t rank) {
        if (rank == 0) {
            try {
                a.write_all(NdBuffer::zeros({4}));
            } catch (const LifecycleError&) {
                rejected = true;
            }
        }
    });
    CHECK(rejected);
    pool.shutdown();
    a.write_all(NdBuffer::zeros({4})); // fine again outside phases
}

TEST_CASE("empty handle use errors") {
    SharedInputArray none;
    CHECK_FALSE(none.valid());
    CHECK_THROWS_AS((void)none.view(), ArgumentError);
}

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "support.hpp"
#include "synkpar/tensor.hpp"

using namespace synkpar;

TEST_CASE("construction and element access") {
    NdBuffer z = NdBuffer::zeros({2, 3});
    CHECK(z.rank() == 2);
    CHECK(z.size() == 6);
    CHECK(z.byte_size() == 48);
    CHECK(z.rows() == 2);
    CHECK(z.row_size() == 3);
    for (std::size_t i = 0; i < 6; ++i) CHECK(z.get(i) == 0.0);

    NdBuffer f = NdBuffer::full({4}, 2.5, DType::Float32);
    CHECK(f.dtype() == DType::Float32);
    CHECK(f.byte_size() == 16);
    CHECK(f.get(3) == 2.5);

    NdBuffer s = NdBuffer::scalar(7.0);
    CHECK(s.rank() == 0);
    CHECK(s.size() == 1);
    CHECK(s.get(0) == 7.0);
    CHECK_THROWS_AS((void)s.rows(), ShapeError);

    z.set(4, -1.5);
    CHECK(z.get(4) == -1.5);
    CHECK_THROWS_AS((void)z.get(6), BoundsError);
    CHECK_THROWS_AS(z.set(6, 0.0), BoundsError);

    z.fill(3.0);
    CHECK(z.get(0) == 3.0);
    CHECK(z.get(5) == 3.0);
}

TEST_CASE("typed construction and span access") {
    NdBuffer a = NdBuffer::from<double>({1.0, 2.0, 3.0, 4.0}, {2, 2});
    CHECK(a.dtype() == DType::Float64);
    auto v = a.as<double>();
    CHECK(v.size() == 4);
    CHECK(v[2] == 3.0);
    CHECK_THROWS_AS((void)a.as<float>(), DTypeError);

    NdBuffer b = NdBuffer::from<float>({1.5f, -2.0f}, {2});
    CHECK(b.dtype() == DType::Float32);
    CHECK(b.as<float>()[1] == -2.0f);
    CHECK(b.get(1) == -2.0);

    auto m = a.as_mut<double>();
    m[0] = 9.0;
    CHECK(a.get(0) == 9.0);

    CHECK_THROWS_AS((NdBuffer::from<double>({1.0, 2.0}, {3})), ShapeError);
}

TEST_CASE("shallow copies alias, clone does not") {
    NdBuffer a = testsup::iota_buffer({3, 2});
    NdBuffer shallow = a;
    CHECK(shallow.shares_storage(a));
    shallow.set(0, 100.0);
    CHECK(a.get(0) == 100.0);

    NdBuffer deep = a.clone();
    CHECK_FALSE(deep.shares_storage(a));
    deep.set(0, -1.0);
    CHECK(a.get(0) == 100.0);
    CHECK(deep.same_shape(a));
}

TEST_CASE("view_reshaped aliases with a new shape") {
    NdBuffer a = testsup::iota_buffer({2, 6});
    NdBuffer v = a.view_reshaped({3, 4});
    CHECK(v.shares_storage(a));
    CHECK(v.shape() == std::vector<std::size_t>{3, 4});
    v.set(11, 99.0);
    CHECK(a.get(11) == 99.0);
    CHECK_THROWS_AS((void)a.view_reshaped({5}), ShapeError);
}

TEST_CASE("equals_bitwise") {
    NdBuffer a = testsup::random_buffer({4, 3}, 1);
    CHECK(a.equals_bitwise(a.clone()));
    NdBuffer b = a.clone();
    // One-ulp perturbation: far below any tolerance, but a different bit pattern.
    b.set(5, std::nextafter(b.get(5), std::numeric_limits<double>::infinity()));
    CHECK_FALSE(a.equals_bitwise(b));
    CHECK_FALSE(a.equals_bitwise(a.view_reshaped({3, 4})));
    NdBuffer f32 = NdBuffer::zeros({2}, DType::Float32);
    NdBuffer f64 = NdBuffer::zeros({2}, DType::Float64);
    CHECK_FALSE(f32.equals_bitwise(f64));
    // zero-row buffers with equal shapes compare equal
    CHECK(NdBuffer::zeros({0, 3}).equals_bitwise(NdBuffer::zeros({0, 3})));
}

TEST_CASE("slice_rows is a zero-copy view") {
    NdBuffer a = testsup::iota_buffer({5, 2});
    NdBuffer s = slice_rows(a, {1, 3});
    CHECK(s.shares_storage(a));
    CHECK(s.shape() == std::vector<std::size_t>{2, 2});
    CHECK(s.get(0) == 2.0); // row 1 starts at flat 2
    CHECK(s.get(3) == 5.0);

    NdBuffer empty = slice_rows(a, {2, 2});
    CHECK(empty.rows() == 0);
    CHECK(empty.size() == 0);

    CHECK_THROWS_AS((void)slice_rows(a, {3, 6}), BoundsError);
    CHECK_THROWS_AS((void)slice_rows(a, {3, 2}), BoundsError);
    NdBuffer scalar = NdBuffer::scalar(1.0);
    CHECK_THROWS_AS((void)slice_rows(scalar, {0, 1}), ShapeError);
}

TEST_CASE("gather_rows copies selected rows") {
    NdBuffer a = testsup::iota_buffer({4, 2});
    std::vector<std::size_t> idx{3, 0, 3};
    NdBuffer g = gather_rows(a, idx);
    CHECK_FALSE(g.shares_storage(a));
    CHECK(g.shape() == std::vector<std::size_t>{3, 2});
    CHECK(g.get(0) == 6.0);
    CHECK(g.get(2) == 0.0);
    CHECK(g.get(4) == 6.0);
    std::vector<std::size_t> bad{4};
    CHECK_THROWS_AS((void)gather_rows(a, bad), BoundsError);
}

TEST_CASE("combine_inplace elementwise ops") {
    NdBuffer acc = NdBuffer::from<double>({1.0, -2.0, 3.0}, {3});
    NdBuffer other = NdBuffer::from<double>({4.0, -5.0, 0.5}, {3});

    NdBuffer s = acc.clone();
    combine_inplace(s, other, ReduceOp::Sum);
    CHECK(s.get(0) == 5.0);
    CHECK(s.get(1) == -7.0);

    NdBuffer mx = acc.clone();
    combine_inplace(mx, other, ReduceOp::Max);
    CHECK(mx.get(0) == 4.0);
    CHECK(mx.get(1) == -2.0);

    NdBuffer mn = acc.clone();
    combine_inplace(mn, other, ReduceOp::Min);
    CHECK(mn.get(1) == -5.0);
    CHECK(mn.get(2) == 0.5);

    NdBuffer pr = acc.clone();
    combine_inplace(pr, other, ReduceOp::Prod);
    CHECK(pr.get(0) == 4.0);
    CHECK(pr.get(2) == 1.5);

    NdBuffer wrong = NdBuffer::zeros({4});
    CHECK_THROWS_AS(combine_inplace(wrong, other, ReduceOp::Sum), ShapeError);
    NdBuffer m = acc.clone();
    CHECK_THROWS_AS(combine_inplace(m, other, ReduceOp::Mean), ArgumentError);
    CHECK_THROWS_AS(combine_inplace(m, other, ReduceOp::Gather), ArgumentError);
}

TEST_CASE("weighted_mean_inplace") {
    NdBuffer acc = NdBuffer::from<double>({2.0}, {1});
    NdBuffer other = NdBuffer::from<double>({5.0}, {1});
    weighted_mean_inplace(acc, 1, other, 2);
    CHECK(acc.get(0) == doctest::Approx(4.0).epsilon(1e-15)); // (2*1 + 5*2) / 3
}

TEST_CASE("concat_rows") {
    NdBuffer a = testsup::iota_buffer({2, 2});
    NdBuffer b = testsup::iota_buffer({1, 2}, 10.0);
    std::vector<NdBuffer> parts{a, b};
    NdBuffer c = concat_rows(parts);
    CHECK(c.shape() == std::vector<std::size_t>{3, 2});
    CHECK(c.get(4) == 10.0);

    std::vector<NdBuffer> empty;
    NdBuffer e = concat_rows(empty);
    CHECK(e.rank() == 1);
    CHECK(e.size() == 0);

    // zero-row parts contribute shape but no data
    std::vector<NdBuffer> withEmpty{NdBuffer::zeros({0, 2}), a};
    CHECK(concat_rows(withEmpty).shape() == std::vector<std::size_t>{2, 2});

    std::vector<NdBuffer> bad{a, testsup::iota_buffer({1, 3})};
    CHECK_THROWS_AS((void)concat_rows(bad), ShapeError);
}

TEST_CASE("partition_rows spreads the remainder over leading parts") {
    auto p = partition_rows(10, 4);
    REQUIRE(p.size() == 4);
    CHECK(p[0] == RowRange{0, 3});
    CHECK(p[1] == RowRange{3, 6});
    CHECK(p[2] == RowRange{6, 8});
    CHECK(p[3] == RowRange{8, 10});

    auto q = partition_rows(3, 8);
    REQUIRE(q.size() == 8);
    CHECK(q[0].count() == 1);
    CHECK(q[2].count() == 1);
    CHECK(q[3].count() == 0);
    CHECK(q[7].count() == 0);
    CHECK(q[7].stop == 3);

    auto z = partition_rows(0, 4);
    REQUIRE(z.size() == 4);
    for (const auto& r : z) CHECK(r.count() == 0);

    auto one = partition_rows(64, 1);
    REQUIRE(one.size() == 1);
    CHECK(one[0] == RowRange{0, 64});

    CHECK_THROWS_AS((void)partition_rows(4, 0), ArgumentError);

    // partition is always a disjoint cover, in order
    for (std::size_t n : {0u, 1u, 7u, 64u}) {
        for (std::size_t w : {1u, 2u, 3u, 8u}) {
            auto parts = partition_rows(n, w);
            std::size_t covered = 0;
            for (const auto& r : parts) {
                CHECK(r.start == covered);
                covered = r.stop;
            }
            CHECK(covered == n);
        }
    }
}

TEST_CASE("flatten_concat and unflatten round trip") {
    NdBuffer w = testsup::random_buffer({3, 2}, 5);
    NdBuffer b = testsup::random_buffer({2}, 6);
    std::vector<NdBuffer> params{w, b};
    FlatPack pack = flatten_concat(params);
    CHECK(pack.flat.rank() == 1);
    CHECK(pack.flat.size() == 8);
    REQUIRE(pack.segments.size() == 2);
    CHECK(pack.segments[0].offset == 0);
    CHECK(pack.segments[0].length == 6);
    CHECK(pack.segments[1].offset == 6);
    CHECK(pack.segments[1].shape == std::vector<std::size_t>{2});

    auto views = unflatten(pack.flat, pack.segments);
    REQUIRE(views.size() == 2);
    CHECK(views[0].shares_storage(pack.flat));
    CHECK(testsup::max_err(views[0], w) == 0.0);
    CHECK(testsup::max_err(views[1], b) == 0.0);

    // writes through the view land in the flat buffer
    views[1].set(0, 42.0);
    CHECK(pack.flat.get(6) == 42.0);
}

TEST_CASE("scale_inplace") {
    NdBuffer a = NdBuffer::from<double>({1.0, -2.0}, {2});
    scale_inplace(a, 0.5);
    CHECK(a.get(0) == 0.5);
    CHECK(a.get(1) == -1.0);
    scale_inplace(a, 1.0); // exact no-op
    CHECK(a.get(0) == 0.5);
}

TEST_CASE("selection validation and counting") {
    IndexSelection range = RowRange{1, 4};
    IndexSelection list = IndexList{0, 2, 2};
    CHECK(selection_count(range) == 3);
    CHECK(selection_count(list) == 3);
    validate_selection(range, 4);
    validate_selection(list, 3);
    CHECK_THROWS_AS(validate_selection(IndexSelection(RowRange{1, 5}), 4), BoundsError);
    CHECK_THROWS_AS(validate_selection(IndexSelection(RowRange{3, 2}), 4), BoundsError);
    CHECK_THROWS_AS(validate_selection(IndexSelection(IndexList{3}), 3), BoundsError);
}

TEST_CASE("excerpt_rows composes selection and partition") {
    NdBuffer a = testsup::iota_buffer({6, 1});

    SUBCASE("no selection: plain partition view") {
        NdBuffer e = excerpt_rows(a, std::nullopt, {2, 5});
        CHECK(e.shares_storage(a));
        CHECK(e.rows() == 3);
        CHECK(e.get(0) == 2.0);
    }
    SUBCASE("range selection composes offsets, still zero-copy") {
        IndexSelection sel = RowRange{1, 6}; // rows 1..5
        NdBuffer e = excerpt_rows(a, sel, {2, 4}); // part [2,4) of the selection
        CHECK(e.shares_storage(a));
        CHECK(e.rows() == 2);
        CHECK(e.get(0) == 3.0);
        CHECK(e.get(1) == 4.0);
    }
    SUBCASE("index list gathers a copy") {
        IndexSelection sel = IndexList{5, 0, 3, 3};
        NdBuffer e = excerpt_rows(a, sel, {1, 3});
        CHECK_FALSE(e.shares_storage(a));
        CHECK(e.rows() == 2);
        CHECK(e.get(0) == 0.0);
        CHECK(e.get(1) == 3.0);
    }
}

TEST_CASE("dtype and reduce-op names") {
    CHECK(std::strcmp(dtype_name(DType::Float32), "float32") == 0);
    CHECK(std::strcmp(dtype_name(DType::Float64), "float64") == 0);
    CHECK(std::strcmp(reduce_op_name(ReduceOp::Sum), "sum") == 0);
    CHECK(std::strcmp(reduce_op_name(ReduceOp::Gather), "gather") == 0);
}

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "synkpar/errors.hpp"

namespace synkpar {

enum class DType : std::uint8_t {
    Float32 = 1,
    Float64 = 2,
};

constexpr std::size_t dtype_size(DType dt) noexcept {
    return dt == DType::Float32 ? 4 : 8;
}

const char* dtype_name(DType dt) noexcept;

// Elementwise combine / gather selector for outputs and collectives.
enum class ReduceOp {
    Sum,
    Mean,
    Max,
    Min,
    Prod,
    Gather,
};

const char* reduce_op_name(ReduceOp op) noexcept;

// Half-open row interval [start, stop).
struct RowRange {
    std::size_t start = 0;
    std::size_t stop = 0;

    std::size_t count() const noexcept { return stop - start; }
    bool operator==(const RowRange&) const = default;
};

/// Dense row-major n-dimensional numeric buffer. The leading dimension of a
/// rank >= 1 buffer indexes independent data points for scattering purposes.
///
/// Copies are shallow and alias the same storage (like a numpy array); use
/// clone() for an independent buffer. Views produced by slice_rows /
/// view_reshaped / unflatten alias the parent. Concurrent access is legal only
/// when all accessors read, or writers touch disjoint row ranges — the worker
/// engine's barriers enforce that discipline for library-managed buffers.
class NdBuffer {
public:
    // Rank-1, zero rows, no storage.
    NdBuffer() = default;

    static NdBuffer zeros(std::vector<std::size_t> shape, DType dtype = DType::Float64);
    static NdBuffer full(std::vector<std::size_t> shape, double value, DType dtype = DType::Float64);
    static NdBuffer scalar(double value, DType dtype = DType::Float64);

    template <class T>
    static NdBuffer from(const std::vector<T>& values, std::vector<std::size_t> shape);

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    DType dtype() const noexcept { return dtype_; }

    std::size_t size() const noexcept;       // element count (rank-0 => 1)
    std::size_t byte_size() const noexcept { return size() * dtype_size(dtype_); }
    std::size_t rows() const;                // leading extent; rank-0 => ShapeError
    std::size_t row_size() const;            // elements per leading-dimension row

    template <class T>
    std::span<const T> as() const;
    template <class T>
    std::span<T> as_mut();

    const std::byte* bytes() const noexcept;
    std::byte* bytes_mut() noexcept;

    // dtype-erased element access, converting through double.
    double get(std::size_t flat_index) const;
    void set(std::size_t flat_index, double value);

    void fill(double value);

    NdBuffer clone() const;
    // Same storage reinterpreted with a new shape of equal element count.
    NdBuffer view_reshaped(std::vector<std::size_t> new_shape) const;

    bool shares_storage(const NdBuffer& other) const noexcept { return store_ && store_ == other.store_; }
    bool same_shape(const NdBuffer& other) const noexcept { return shape_ == other.shape_; }

    // True when the two buffers have equal dtype, shape and bit patterns.
    bool equals_bitwise(const NdBuffer& other) const noexcept;

    std::string shape_string() const;

private:
    friend NdBuffer slice_rows(const NdBuffer&, RowRange);
    friend std::vector<NdBuffer> unflatten(const NdBuffer&, std::span<const struct FlatSegment>);
    friend class SharedInputArray;

    NdBuffer(std::shared_ptr<std::byte[]> store, std::size_t offset_bytes,
             std::vector<std::size_t> shape, DType dtype)
        : store_(std::move(store)), offset_(offset_bytes), shape_(std::move(shape)), dtype_(dtype) {}

    static std::shared_ptr<std::byte[]> allocate(std::size_t bytes);

    std::shared_ptr<std::byte[]> store_;
    std::size_t offset_ = 0; // bytes into store_
    std::vector<std::size_t> shape_{0};
    DType dtype_ = DType::Float64;
};

std::size_t element_count(std::span<const std::size_t> shape) noexcept;

// ---- row / shard / index operations ----------------------------------------

// Zero-copy view of rows [range.start, range.stop). Rank >= 1 required.
NdBuffer slice_rows(const NdBuffer& buf, RowRange range);

// New buffer whose row j is buf row indexes[j]; duplicates allowed. Always copies.
NdBuffer gather_rows(const NdBuffer& buf, std::span<const std::size_t> indexes);

// acc[i] = op(acc[i], other[i]). Elementwise ops only (not Gather/Mean).
void combine_inplace(NdBuffer& acc, const NdBuffer& other, ReduceOp op);

// acc = (acc*acc_weight + other*other_weight) / (acc_weight + other_weight).
void weighted_mean_inplace(NdBuffer& acc, std::size_t acc_weight,
                           const NdBuffer& other, std::size_t other_weight);

// Concatenate along the leading dimension, in part order. An empty parts list
// yields an empty rank-1 buffer.
NdBuffer concat_rows(std::span<const NdBuffer> parts);

// n_parts contiguous disjoint ranges covering [0, n_rows); the first
// n_rows % n_parts ranges hold the extra row.
std::vector<RowRange> partition_rows(std::size_t n_rows, std::size_t n_parts);

// Flatten a list of buffers into one rank-1 buffer plus segment table.
struct FlatSegment {
    std::size_t offset = 0; // elements into the flat buffer
    std::size_t length = 0; // element count
    std::vector<std::size_t> shape;
};

struct FlatPack {
    NdBuffer flat;
    std::vector<FlatSegment> segments;
};

FlatPack flatten_concat(std::span<const NdBuffer> buffers);

// Zero-copy views of the flat buffer, one per segment.
std::vector<NdBuffer> unflatten(const NdBuffer& flat, std::span<const FlatSegment> segments);

// Multiply every element by factor.
void scale_inplace(NdBuffer& buf, double factor);

// ---- row selection (input indexing) -----------------------------------------

using IndexList = std::vector<std::size_t>;
// Rows of a call selected either as a contiguous slice or an explicit list.
using IndexSelection = std::variant<RowRange, IndexList>;

std::size_t selection_count(const IndexSelection& sel) noexcept;
void validate_selection(const IndexSelection& sel, std::size_t n_rows);

// Rows `part` of the (selected) row set of buf. RowRange selections and the
// no-selection case produce zero-copy views; index lists copy.
NdBuffer excerpt_rows(const NdBuffer& buf, const std::optional<IndexSelection>& sel, RowRange part);

} // namespace synkpar

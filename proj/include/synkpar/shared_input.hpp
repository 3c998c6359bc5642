#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "synkpar/tensor.hpp"

namespace synkpar {

// Allocation accounting, used by tests to prove alloc/free balance.
struct SharedInputStats {
    std::uint64_t total_allocations = 0;
    std::uint64_t live_allocations = 0;
};

SharedInputStats shared_input_stats() noexcept;

/// Named input array readable by every worker rank. The outward-facing view
/// may be smaller than the underlying allocation: reshape() grows or shrinks
/// the view within the fixed capacity without moving storage, so previously
/// written elements keep their linear row-major positions.
///
/// Mutation (write/reshape/free) is legal only between phases; any attempt
/// while a parallel call is in flight is rejected. All ranks therefore observe
/// identical contents for the duration of a phase.
///
/// Handles are shared references to one underlying array; after free(), every
/// handle to it errors on access. Ids are monotonically increasing and never
/// reused within a session.
class SharedInputArray {
public:
    SharedInputArray() = default; // empty handle; any use errors

    static SharedInputArray alloc(std::vector<std::size_t> shape, DType dtype = DType::Float64,
                                  std::optional<std::size_t> capacity_hint = std::nullopt);

    // Allocate and fill from an existing buffer.
    static SharedInputArray from_buffer(const NdBuffer& data,
                                        std::optional<std::size_t> capacity_hint = std::nullopt);

    // SYNK binary tensor file round-trip.
    static SharedInputArray from_file(const std::string& path,
                                      std::optional<std::size_t> capacity_hint = std::nullopt);
    void to_file(const std::string& path) const;

    std::uint64_t id() const;
    std::size_t capacity() const; // elements
    bool freed() const;
    const std::vector<std::size_t>& shape() const;
    DType dtype() const;
    std::size_t rows() const;

    // The outward-facing array; aliases the underlying storage.
    NdBuffer view() const;

    // Replace rows [range.start, range.stop) of the view.
    void write(RowRange range, const NdBuffer& rows);
    // Overwrite the whole view (shape must match).
    void write_all(const NdBuffer& data);

    // Change the view's shape in place; product(new_shape) must fit capacity.
    void reshape(std::vector<std::size_t> new_shape);

    // Release the storage; all later access on any handle errors.
    void free();

    bool valid() const noexcept { return rec_ != nullptr; }

private:
    struct Record;
    explicit SharedInputArray(std::shared_ptr<Record> rec) : rec_(std::move(rec)) {}
    Record& live(const char* what) const; // throws on empty handle or freed array

    std::shared_ptr<Record> rec_;
};

} // namespace synkpar

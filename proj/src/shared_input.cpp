#include "synkpar/shared_input.hpp"

#include <atomic>
#include <cstring>

#include "synkpar/tensor_io.hpp"
#include "synkpar/worker_pool.hpp"

namespace synkpar {

namespace {

std::atomic<std::uint64_t> g_next_id{1};
std::atomic<std::uint64_t> g_total_allocations{0};
std::atomic<std::uint64_t> g_live_allocations{0};

void require_outside_phase(const char* what) {
    if (phase_in_flight()) {
        throw LifecycleError(std::string(what) + ": illegal while a parallel call is in flight");
    }
}

} // namespace

SharedInputStats shared_input_stats() noexcept {
    return {g_total_allocations.load(), g_live_allocations.load()};
}

struct SharedInputArray::Record {
    std::uint64_t id = 0;
    std::shared_ptr<std::byte[]> store; // capacity * element-size bytes
    std::size_t capacity = 0;           // elements
    std::vector<std::size_t> shape;
    DType dtype = DType::Float64;
    bool freed = false;
};

SharedInputArray SharedInputArray::alloc(std::vector<std::size_t> shape, DType dtype,
                                         std::optional<std::size_t> capacity_hint) {
    std::size_t n = element_count(shape);
    if (capacity_hint && *capacity_hint < n) {
        throw ArgumentError("alloc(): capacity hint " + std::to_string(*capacity_hint) +
                            " is smaller than the requested size " + std::to_string(n));
    }
    std::size_t capacity = capacity_hint ? *capacity_hint : n;

    auto rec = std::make_shared<Record>();
    rec->id = g_next_id.fetch_add(1);
    rec->capacity = capacity;
    rec->shape = std::move(shape);
    rec->dtype = dtype;
    if (capacity > 0) {
        std::size_t bytes = capacity * dtype_size(dtype);
        g_total_allocations.fetch_add(1);
        g_live_allocations.fetch_add(1);
        // Deleter keeps the live counter honest no matter how the storage is
        // released (explicit free or last handle dropped).
        rec->store = std::shared_ptr<std::byte[]>(new std::byte[bytes](), [](std::byte* p) {
            g_live_allocations.fetch_sub(1);
            delete[] p;
        });
    }
    return SharedInputArray(std::move(rec));
}

SharedInputArray SharedInputArray::from_buffer(const NdBuffer& data,
                                               std::optional<std::size_t> capacity_hint) {
    SharedInputArray arr = alloc(data.shape(), data.dtype(), capacity_hint);
    if (data.size() > 0) {
        std::memcpy(arr.rec_->store.get(), data.bytes(), data.byte_size());
    }
    return arr;
}

SharedInputArray SharedInputArray::from_file(const std::string& path,
                                             std::optional<std::size_t> capacity_hint) {
    return from_buffer(load_tensor(path), capacity_hint);
}

void SharedInputArray::to_file(const std::string& path) const {
    save_tensor(path, view());
}

SharedInputArray::Record& SharedInputArray::live(const char* what) const {
    if (!rec_) throw ArgumentError(std::string(what) + ": empty shared-input handle");
    if (rec_->freed) {
        throw UseAfterFreeError(std::string(what) + ": shared input array " +
                                std::to_string(rec_->id) + " was freed");
    }
    return *rec_;
}

std::uint64_t SharedInputArray::id() const {
    if (!rec_) throw ArgumentError("id(): empty shared-input handle");
    return rec_->id;
}

std::size_t SharedInputArray::capacity() const { return live("capacity").capacity; }

bool SharedInputArray::freed() const {
    if (!rec_) throw ArgumentError("freed(): empty shared-input handle");
    return rec_->freed;
}

const std::vector<std::size_t>& SharedInputArray::shape() const { return live("shape").shape; }

DType SharedInputArray::dtype() const { return live("dtype").dtype; }

std::size_t SharedInputArray::rows() const { return view().rows(); }

NdBuffer SharedInputArray::view() const {
    Record& rec = live("view");
    return NdBuffer(rec.store, 0, rec.shape, rec.dtype);
}

void SharedInputArray::write(RowRange range, const NdBuffer& rows) {
    Record& rec = live("write");
    require_outside_phase("write");
    NdBuffer dst = slice_rows(view(), range); // validates the range
    if (rows.dtype() != rec.dtype) {
        throw DTypeError(std::string("write(): data is ") + dtype_name(rows.dtype()) +
                         ", array is " + dtype_name(rec.dtype));
    }
    if (!dst.same_shape(rows)) {
        throw ShapeError("write(): data shape " + rows.shape_string() +
                         " does not fill range shape " + dst.shape_string());
    }
    if (rows.size() > 0) std::memcpy(dst.bytes_mut(), rows.bytes(), rows.byte_size());
}

void SharedInputArray::write_all(const NdBuffer& data) {
    Record& rec = live("write_all");
    if (data.shape() != rec.shape) {
        throw ShapeError("write_all(): shape " + data.shape_string() + " != view shape");
    }
    if (rec.shape.empty()) { // rank-0: no rows to slice
        require_outside_phase("write_all");
        if (data.dtype() != rec.dtype) {
            throw DTypeError(std::string("write_all(): data is ") + dtype_name(data.dtype()) +
                             ", array is " + dtype_name(rec.dtype));
        }
        std::memcpy(rec.store.get(), data.bytes(), data.byte_size());
        return;
    }
    write(RowRange{0, rec.shape[0]}, data);
}

void SharedInputArray::reshape(std::vector<std::size_t> new_shape) {
    Record& rec = live("reshape");
    require_outside_phase("reshape");
    std::size_t n = element_count(new_shape);
    if (n > rec.capacity) {
        throw CapacityError("reshape(): " + std::to_string(n) + " elements exceed capacity " +
                            std::to_string(rec.capacity));
    }
    // Storage is untouched: elements up to min(old, new) linear length keep
    // their row-major positions.
    rec.shape = std::move(new_shape);
}

void SharedInputArray::free() {
    Record& rec = live("free");
    require_outside_phase("free");
    rec.store.reset();
    rec.freed = true;
}

} // namespace synkpar

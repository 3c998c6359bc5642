#include "synkpar/tensor.hpp"

#include <algorithm>
#include <cstring>
#include <limits>
#include <sstream>

namespace synkpar {

const char* dtype_name(DType dt) noexcept {
    return dt == DType::Float32 ? "float32" : "float64";
}

const char* reduce_op_name(ReduceOp op) noexcept {
    switch (op) {
    case ReduceOp::Sum: return "sum";
    case ReduceOp::Mean: return "mean";
    case ReduceOp::Max: return "max";
    case ReduceOp::Min: return "min";
    case ReduceOp::Prod: return "prod";
    case ReduceOp::Gather: return "gather";
    }
    return "?";
}

std::size_t element_count(std::span<const std::size_t> shape) noexcept {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

std::shared_ptr<std::byte[]> NdBuffer::allocate(std::size_t bytes) {
    if (bytes == 0) return nullptr;
    // Value-initialized: zeros() relies on this.
    return std::shared_ptr<std::byte[]>(new std::byte[bytes]());
}

NdBuffer NdBuffer::zeros(std::vector<std::size_t> shape, DType dtype) {
    std::size_t n = element_count(shape);
    NdBuffer out(allocate(n * dtype_size(dtype)), 0, std::move(shape), dtype);
    return out;
}

NdBuffer NdBuffer::full(std::vector<std::size_t> shape, double value, DType dtype) {
    NdBuffer out = zeros(std::move(shape), dtype);
    out.fill(value);
    return out;
}

NdBuffer NdBuffer::scalar(double value, DType dtype) {
    NdBuffer out = zeros({}, dtype);
    out.set(0, value);
    return out;
}

template <class T>
NdBuffer NdBuffer::from(const std::vector<T>& values, std::vector<std::size_t> shape) {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    if (values.size() != element_count(shape)) {
        throw ShapeError("from(): " + std::to_string(values.size()) + " values for shape of " +
                         std::to_string(element_count(shape)) + " elements");
    }
    DType dt = std::is_same_v<T, float> ? DType::Float32 : DType::Float64;
    NdBuffer out = zeros(std::move(shape), dt);
    std::memcpy(out.bytes_mut(), values.data(), values.size() * sizeof(T));
    return out;
}

template NdBuffer NdBuffer::from<float>(const std::vector<float>&, std::vector<std::size_t>);
template NdBuffer NdBuffer::from<double>(const std::vector<double>&, std::vector<std::size_t>);

std::size_t NdBuffer::size() const noexcept {
    return element_count(shape_);
}

std::size_t NdBuffer::rows() const {
    if (shape_.empty()) throw ShapeError("rows(): rank-0 buffer has no leading dimension");
    return shape_[0];
}

std::size_t NdBuffer::row_size() const {
    if (shape_.empty()) throw ShapeError("row_size(): rank-0 buffer has no leading dimension");
    std::size_t n = 1;
    for (std::size_t i = 1; i < shape_.size(); ++i) n *= shape_[i];
    return n;
}

template <class T>
std::span<const T> NdBuffer::as() const {
    if (dtype_size(dtype_) != sizeof(T)) {
        throw DTypeError(std::string("as<>: buffer is ") + dtype_name(dtype_));
    }
    return {reinterpret_cast<const T*>(bytes()), size()};
}

template <class T>
std::span<T> NdBuffer::as_mut() {
    if (dtype_size(dtype_) != sizeof(T)) {
        throw DTypeError(std::string("as_mut<>: buffer is ") + dtype_name(dtype_));
    }
    return {reinterpret_cast<T*>(bytes_mut()), size()};
}

template std::span<const float> NdBuffer::as<float>() const;
template std::span<const double> NdBuffer::as<double>() const;
template std::span<float> NdBuffer::as_mut<float>();
template std::span<double> NdBuffer::as_mut<double>();

const std::byte* NdBuffer::bytes() const noexcept {
    return store_ ? store_.get() + offset_ : nullptr;
}

std::byte* NdBuffer::bytes_mut() noexcept {
    return store_ ? store_.get() + offset_ : nullptr;
}

double NdBuffer::get(std::size_t flat_index) const {
    if (flat_index >= size()) {
        throw BoundsError("get(): index " + std::to_string(flat_index) + " out of " +
                          std::to_string(size()));
    }
    if (dtype_ == DType::Float32) {
        return static_cast<double>(reinterpret_cast<const float*>(bytes())[flat_index]);
    }
    return reinterpret_cast<const double*>(bytes())[flat_index];
}

void NdBuffer::set(std::size_t flat_index, double value) {
    if (flat_index >= size()) {
        throw BoundsError("set(): index " + std::to_string(flat_index) + " out of " +
                          std::to_string(size()));
    }
    if (dtype_ == DType::Float32) {
        reinterpret_cast<float*>(bytes_mut())[flat_index] = static_cast<float>(value);
    } else {
        reinterpret_cast<double*>(bytes_mut())[flat_index] = value;
    }
}

void NdBuffer::fill(double value) {
    std::size_t n = size();
    if (dtype_ == DType::Float32) {
        float v = static_cast<float>(value);
        float* p = reinterpret_cast<float*>(bytes_mut());
        std::fill(p, p + n, v);
    } else {
        double* p = reinterpret_cast<double*>(bytes_mut());
        std::fill(p, p + n, value);
    }
}

NdBuffer NdBuffer::clone() const {
    NdBuffer out = zeros(shape_, dtype_);
    if (size() > 0) std::memcpy(out.bytes_mut(), bytes(), byte_size());
    return out;
}

NdBuffer NdBuffer::view_reshaped(std::vector<std::size_t> new_shape) const {
    if (element_count(new_shape) != size()) {
        NdBuffer probe; // only for shape_string formatting
        probe.shape_ = new_shape;
        throw ShapeError("view_reshaped(): " + probe.shape_string() + " has " +
                         std::to_string(element_count(new_shape)) + " elements, buffer has " +
                         std::to_string(size()));
    }
    return NdBuffer(store_, offset_, std::move(new_shape), dtype_);
}

bool NdBuffer::equals_bitwise(const NdBuffer& other) const noexcept {
    if (dtype_ != other.dtype_ || shape_ != other.shape_) return false;
    if (size() == 0) return true;
    return std::memcmp(bytes(), other.bytes(), byte_size()) == 0;
}

std::string NdBuffer::shape_string() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << ", ";
        os << shape_[i];
    }
    os << ')';
    return os.str();
}

// ---- row / shard / index operations ----------------------------------------

NdBuffer slice_rows(const NdBuffer& buf, RowRange range) {
    std::size_t n = buf.rows(); // throws on rank-0
    if (range.start > range.stop || range.stop > n) {
        throw BoundsError("slice_rows(): [" + std::to_string(range.start) + ", " +
                          std::to_string(range.stop) + ") out of " + std::to_string(n) + " rows");
    }
    std::vector<std::size_t> shape = buf.shape();
    shape[0] = range.count();
    std::size_t row_bytes = buf.row_size() * dtype_size(buf.dtype());
    return NdBuffer(buf.store_, buf.offset_ + range.start * row_bytes, std::move(shape), buf.dtype());
}

NdBuffer gather_rows(const NdBuffer& buf, std::span<const std::size_t> indexes) {
    std::size_t n = buf.rows();
    std::vector<std::size_t> shape = buf.shape();
    shape[0] = indexes.size();
    NdBuffer out = NdBuffer::zeros(std::move(shape), buf.dtype());
    std::size_t row_bytes = buf.row_size() * dtype_size(buf.dtype());
    const std::byte* src = buf.bytes();
    std::byte* dst = out.bytes_mut();
    for (std::size_t j = 0; j < indexes.size(); ++j) {
        std::size_t i = indexes[j];
        if (i >= n) {
            throw BoundsError("gather_rows(): index " + std::to_string(i) + " out of " +
                              std::to_string(n) + " rows");
        }
        std::memcpy(dst + j * row_bytes, src + i * row_bytes, row_bytes);
    }
    return out;
}

namespace {

template <class T, class F>
void zip_inplace(NdBuffer& acc, const NdBuffer& other, F f) {
    auto a = acc.as_mut<T>();
    auto b = other.as<T>();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = f(a[i], b[i]);
}

template <class F>
void zip_dispatch(NdBuffer& acc, const NdBuffer& other, F f) {
    if (acc.dtype() == DType::Float32) {
        zip_inplace<float>(acc, other, f);
    } else {
        zip_inplace<double>(acc, other, f);
    }
}

void check_combinable(const NdBuffer& acc, const NdBuffer& other, const char* what) {
    if (acc.dtype() != other.dtype()) {
        throw DTypeError(std::string(what) + ": dtype mismatch " + dtype_name(acc.dtype()) +
                         " vs " + dtype_name(other.dtype()));
    }
    if (!acc.same_shape(other)) {
        throw ShapeError(std::string(what) + ": shape mismatch " + acc.shape_string() + " vs " +
                         other.shape_string());
    }
}

} // namespace

void combine_inplace(NdBuffer& acc, const NdBuffer& other, ReduceOp op) {
    check_combinable(acc, other, "combine_inplace");
    switch (op) {
    case ReduceOp::Sum:
        zip_dispatch(acc, other, [](auto a, auto b) { return a + b; });
        break;
    case ReduceOp::Max:
        zip_dispatch(acc, other, [](auto a, auto b) { return b > a ? b : a; });
        break;
    case ReduceOp::Min:
        zip_dispatch(acc, other, [](auto a, auto b) { return b < a ? b : a; });
        break;
    case ReduceOp::Prod:
        zip_dispatch(acc, other, [](auto a, auto b) { return a * b; });
        break;
    case ReduceOp::Mean:
    case ReduceOp::Gather:
        throw ArgumentError(std::string("combine_inplace(): ") + reduce_op_name(op) +
                            " is not an elementwise combine");
    }
}

void weighted_mean_inplace(NdBuffer& acc, std::size_t acc_weight,
                           const NdBuffer& other, std::size_t other_weight) {
    check_combinable(acc, other, "weighted_mean_inplace");
    if (acc_weight + other_weight == 0) {
        throw ArgumentError("weighted_mean_inplace(): both weights are zero");
    }
    double wa = static_cast<double>(acc_weight);
    double wb = static_cast<double>(other_weight);
    double inv = 1.0 / (wa + wb);
    zip_dispatch(acc, other, [=](auto a, auto b) {
        using T = decltype(a);
        return static_cast<T>((static_cast<double>(a) * wa + static_cast<double>(b) * wb) * inv);
    });
}

NdBuffer concat_rows(std::span<const NdBuffer> parts) {
    if (parts.empty()) return NdBuffer::zeros({0});
    const NdBuffer& head = parts[0];
    std::size_t total = 0;
    for (const NdBuffer& p : parts) {
        if (p.dtype() != head.dtype()) {
            throw DTypeError("concat_rows(): mixed dtypes");
        }
        if (p.rank() != head.rank() ||
            !std::equal(p.shape().begin() + 1, p.shape().end(), head.shape().begin() + 1)) {
            throw ShapeError("concat_rows(): trailing shape mismatch " + p.shape_string() +
                             " vs " + head.shape_string());
        }
        total += p.rows();
    }
    std::vector<std::size_t> shape = head.shape();
    shape[0] = total;
    NdBuffer out = NdBuffer::zeros(std::move(shape), head.dtype());
    std::size_t row_bytes = head.row_size() * dtype_size(head.dtype());
    std::byte* dst = out.bytes_mut();
    for (const NdBuffer& p : parts) {
        std::size_t nbytes = p.rows() * row_bytes;
        if (nbytes > 0) std::memcpy(dst, p.bytes(), nbytes);
        dst += nbytes;
    }
    return out;
}

std::vector<RowRange> partition_rows(std::size_t n_rows, std::size_t n_parts) {
    if (n_parts == 0) throw ArgumentError("partition_rows(): zero parts");
    std::vector<RowRange> parts(n_parts);
    std::size_t base = n_rows / n_parts;
    std::size_t extra = n_rows % n_parts;
    std::size_t at = 0;
    for (std::size_t i = 0; i < n_parts; ++i) {
        std::size_t len = base + (i < extra ? 1 : 0);
        parts[i] = RowRange{at, at + len};
        at += len;
    }
    return parts;
}

FlatPack flatten_concat(std::span<const NdBuffer> buffers) {
    if (buffers.empty()) throw ArgumentError("flatten_concat(): empty buffer list");
    DType dt = buffers[0].dtype();
    std::size_t total = 0;
    for (const NdBuffer& b : buffers) {
        if (b.dtype() != dt) throw DTypeError("flatten_concat(): mixed dtypes");
        total += b.size();
    }
    FlatPack pack;
    pack.flat = NdBuffer::zeros({total}, dt);
    pack.segments.reserve(buffers.size());
    std::size_t at = 0;
    std::byte* dst = pack.flat.bytes_mut();
    for (const NdBuffer& b : buffers) {
        pack.segments.push_back(FlatSegment{at, b.size(), b.shape()});
        if (b.size() > 0) std::memcpy(dst + at * dtype_size(dt), b.bytes(), b.byte_size());
        at += b.size();
    }
    return pack;
}

std::vector<NdBuffer> unflatten(const NdBuffer& flat, std::span<const FlatSegment> segments) {
    if (flat.rank() != 1) throw ShapeError("unflatten(): flat buffer must be rank-1");
    std::vector<NdBuffer> out;
    out.reserve(segments.size());
    std::size_t es = dtype_size(flat.dtype());
    for (const FlatSegment& seg : segments) {
        if (seg.offset + seg.length > flat.size()) {
            throw BoundsError("unflatten(): segment past end of flat buffer");
        }
        if (element_count(seg.shape) != seg.length) {
            throw ShapeError("unflatten(): segment shape does not match its length");
        }
        out.push_back(NdBuffer(flat.store_, flat.offset_ + seg.offset * es, seg.shape, flat.dtype()));
    }
    return out;
}

void scale_inplace(NdBuffer& buf, double factor) {
    if (buf.dtype() == DType::Float32) {
        for (float& v : buf.as_mut<float>()) v = static_cast<float>(v * factor);
    } else {
        for (double& v : buf.as_mut<double>()) v *= factor;
    }
}

// ---- row selection -----------------------------------------------------------

std::size_t selection_count(const IndexSelection& sel) noexcept {
    if (const auto* r = std::get_if<RowRange>(&sel)) return r->count();
    return std::get<IndexList>(sel).size();
}

void validate_selection(const IndexSelection& sel, std::size_t n_rows) {
    if (const auto* r = std::get_if<RowRange>(&sel)) {
        if (r->start > r->stop || r->stop > n_rows) {
            throw BoundsError("selection [" + std::to_string(r->start) + ", " +
                              std::to_string(r->stop) + ") out of " + std::to_string(n_rows) +
                              " rows");
        }
        return;
    }
    for (std::size_t i : std::get<IndexList>(sel)) {
        if (i >= n_rows) {
            throw BoundsError("selection index " + std::to_string(i) + " out of " +
                              std::to_string(n_rows) + " rows");
        }
    }
}

NdBuffer excerpt_rows(const NdBuffer& buf, const std::optional<IndexSelection>& sel, RowRange part) {
    if (!sel) return slice_rows(buf, part);
    if (const auto* r = std::get_if<RowRange>(&*sel)) {
        return slice_rows(buf, RowRange{r->start + part.start, r->start + part.stop});
    }
    const IndexList& list = std::get<IndexList>(*sel);
    if (part.stop > list.size()) {
        throw BoundsError("excerpt_rows(): part past end of index list");
    }
    return gather_rows(buf, std::span<const std::size_t>(list).subspan(part.start, part.count()));
}

} // namespace synkpar

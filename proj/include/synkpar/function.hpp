#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "synkpar/replicated.hpp"
#include "synkpar/shared_input.hpp"
#include "synkpar/tensor.hpp"
#include "synkpar/worker_pool.hpp"

namespace synkpar {

namespace detail {
struct FunctionCore;
}

enum class InputMode {
    // Partition the argument's leading dimension across ranks.
    Scatter,
    // Hand every rank the identical full argument (by reference, never copied).
    Broadcast,
};

struct InputSpec {
    InputMode mode = InputMode::Scatter;
};

struct OutputSpec {
    ReduceOp reduce = ReduceOp::Sum;
};

enum class UpdateCombine {
    // Sum deltas across slices; apply by adding to the replica.
    Add,
    // Row-weighted mean of deltas across slices; apply by replacing the replica.
    WeightedMeanByRows,
    // Replace the replica outright (may change its shape). Illegal with
    // num_slices > 1: there is no sound way to accumulate it.
    Overwrite,
};

const char* update_combine_name(UpdateCombine c) noexcept;

// Declared at build time: which variable a function may update, and how.
struct UpdateSpec {
    ReplicatedVariable var;
    UpdateCombine combine = UpdateCombine::Add;
};

// Emitted by a kernel: one pending update against this rank's replica of var.
// Deltas are accumulated across slices and applied once, after the last slice,
// so every slice computes against the pre-call replica values.
struct UpdateDelta {
    std::uint64_t var_id = 0;
    NdBuffer delta;
    UpdateCombine combine = UpdateCombine::Add;
};

// Per-invocation facts handed to the kernel alongside its input tensors.
struct KernelContext {
    std::size_t rank = 0;
    std::size_t world = 1;
    std::size_t slice = 0;      // which sub-shard of this rank's share
    std::size_t num_slices = 1;
    std::size_t shard_rows = 0; // rows in this invocation's inputs

    // Pre-call values of this rank's replicas of the kernel's `reads`
    // variables, in declaration order. Read-only: mutation goes through
    // UpdateDelta.
    const std::vector<NdBuffer>* replicas = nullptr;

    const NdBuffer& replica(std::size_t i) const;
};

struct KernelResult {
    std::vector<NdBuffer> outputs;
    std::vector<UpdateDelta> updates;
};

using KernelFn =
    std::function<KernelResult(const std::vector<NdBuffer>& inputs, const KernelContext& ctx)>;

/// A pure per-rank procedure: deterministic in its inputs and replica values,
/// no hidden state, never mutates replicas directly.
struct Kernel {
    std::string name;
    std::size_t arity = 0;                  // tensor input count
    std::vector<ReplicatedVariable> reads;  // implicit inputs, by declaration order
    KernelFn fn;
};

struct CallOptions {
    // Sub-divide each rank's share into this many sequential kernel calls,
    // aggregating outputs in place and deferring updates to one application
    // at the end. Bounds peak memory without changing results.
    std::size_t num_slices = 1;

    // Select the effective rows of explicit scatter arguments before
    // partitioning (a contiguous range or an explicit index list).
    std::optional<IndexSelection> indexes;

    // Row selection for replica-backed (implicit) scatter arguments, applied
    // by each rank to its own replica. One entry = same selection everywhere;
    // W entries = per-rank selections.
    std::optional<std::vector<IndexSelection>> replica_indexes;
};

// Timing breakdown of one call. rank_compute_s is kernel time per rank;
// scatter_s is the mean per-rank excerpt/shuffle time; straggler_s is
// max(rank task) - mean(rank task) over the phase.
struct CallReport {
    std::vector<double> rank_compute_s;
    std::vector<std::size_t> rank_rows; // effective rows consumed per rank
    double scatter_s = 0.0;
    double reduce_s = 0.0;
    double straggler_s = 0.0;
    double total_s = 0.0;

    double compute_mean_s() const noexcept;
};

struct CallResult {
    std::vector<NdBuffer> outputs;
    CallReport report;
};

// An argument to call(): an in-memory buffer, a shared input array, or a
// replicated variable (the rank-local "already on the device" case).
class FunctionArg {
public:
    FunctionArg(NdBuffer buf) : value_(std::move(buf)) {}
    FunctionArg(SharedInputArray arr) : value_(std::move(arr)) {}
    FunctionArg(ReplicatedVariable var) : value_(std::move(var)) {}

    const std::variant<NdBuffer, SharedInputArray, ReplicatedVariable>& value() const {
        return value_;
    }

private:
    std::variant<NdBuffer, SharedInputArray, ReplicatedVariable> value_;
};

/// Handle to a built parallel function. Callable only after distribute();
/// call() runs the scatter -> compute -> reduce/gather sequence as one
/// barrier-delimited phase plus a master-side fold.
class ParallelFunction {
public:
    ParallelFunction() = default; // empty handle; any use errors

    std::uint64_t id() const;
    const std::string& name() const;
    std::size_t arity() const;
    bool distributed() const;
    bool valid() const noexcept { return core_ != nullptr; }

    // Declared combine mode for a variable this function updates, if any.
    std::optional<UpdateCombine> update_combine_for(std::uint64_t var_id) const;

    CallResult call(const std::vector<FunctionArg>& args, const CallOptions& opts = {}) const;

    // Reference semantics for equivalence testing: runs the kernel once on
    // the master over all (indexed) rows with num_slices = 1, applying
    // updates to rank 0's replicas only. Does not go through the phase
    // machinery at all.
    std::vector<NdBuffer> call_serial(const std::vector<FunctionArg>& args,
                                      const std::optional<IndexSelection>& indexes =
                                          std::nullopt) const;

private:
    friend ParallelFunction function(WorkerPool&, Kernel, std::vector<InputSpec>,
                                     std::vector<OutputSpec>, std::vector<UpdateSpec>);
    friend void distribute(WorkerPool&);

    explicit ParallelFunction(std::shared_ptr<detail::FunctionCore> core)
        : core_(std::move(core)) {}

    std::shared_ptr<detail::FunctionCore> core_;
};

// Build a parallel function on a forked pool. The handle is not callable
// until distribute() ships it to every rank.
ParallelFunction function(WorkerPool& pool, Kernel kernel, std::vector<InputSpec> inputs,
                          std::vector<OutputSpec> outputs, std::vector<UpdateSpec> updates = {});

// Ship every built-but-undistributed function to all ranks. Idempotent;
// functions built after a distribute() need a second call (only the new
// ones ship).
void distribute(WorkerPool& pool);

} // namespace synkpar

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "synkpar/shared_input.hpp"
#include "synkpar/tensor.hpp"
#include "synkpar/worker_pool.hpp"

namespace synkpar {

class ReplicatedVariable;

namespace detail {
struct VarRecord;
// Function-layer access to per-rank replica storage; not part of the user API.
std::vector<NdBuffer>& replicas_of(const ReplicatedVariable& var);
std::shared_ptr<PoolState> pool_of(const ReplicatedVariable& var);
} // namespace detail

/// A variable with one independent NdBuffer replica per worker rank. Kernels
/// read the replica of the rank they run on; mutation flows either through
/// collectives (uniform across ranks) or through per-rank update deltas.
///
/// Collectives are barrier-delimited phases issued by the master. Replica
/// folds use a fixed binomial-tree combine order — pairs (r, r + 2^k) — so
/// floating-point results are identical run to run.
class ReplicatedVariable {
public:
    ReplicatedVariable() = default; // empty handle; any use errors

    std::uint64_t id() const;
    std::size_t world() const;
    DType dtype() const;
    bool valid() const noexcept { return rec_ != nullptr; }

    // Overwrite every replica with a copy of the src replica.
    void broadcast(std::size_t src_rank = 0);

    // Leave op-fold of all replicas on every rank. Mean weighs ranks equally
    // (replicas are peer values, not data shards). Gather is not an all-reduce.
    void all_reduce(ReduceOp op);

    // Fold into the dst replica only; other replicas unchanged.
    void reduce(ReduceOp op, std::size_t dst_rank);

    // Rank-order concatenation of the replicas into a fresh buffer.
    NdBuffer gather() const;

    // Copy-out / copy-in of a single rank's replica. Legal whenever no phase
    // is in flight (including after pool shutdown, for post-mortem reads).
    NdBuffer get_value(std::size_t rank) const;
    void set_value(std::size_t rank, const NdBuffer& value);

    // Rank r's replica becomes its partition share of (indexed) data rows;
    // leading extents may end up unequal. Indexes select rows first, with the
    // same semantics as function-call input indexing.
    void scatter_value(const NdBuffer& data,
                       const std::optional<IndexSelection>& indexes = std::nullopt);
    void scatter_value(const SharedInputArray& data,
                       const std::optional<IndexSelection>& indexes = std::nullopt);

    // True when all replicas are bitwise identical (the coherence check
    // synchronous SGD relies on).
    bool replicas_coherent() const;

private:
    friend std::vector<NdBuffer>& detail::replicas_of(const ReplicatedVariable&);
    friend std::shared_ptr<detail::PoolState> detail::pool_of(const ReplicatedVariable&);
    friend ReplicatedVariable replicate(WorkerPool&, const NdBuffer&);

    explicit ReplicatedVariable(std::shared_ptr<detail::VarRecord> rec) : rec_(std::move(rec)) {}

    std::shared_ptr<detail::VarRecord> rec_;
};

// Register a variable on a forked pool: every rank receives an independent
// copy of init.
ReplicatedVariable replicate(WorkerPool& pool, const NdBuffer& init);

} // namespace synkpar

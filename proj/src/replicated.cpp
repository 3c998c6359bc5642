#include "synkpar/replicated.hpp"

#include <atomic>

#include "internal.hpp"

namespace synkpar {

namespace {

std::atomic<std::uint64_t> g_next_var_id{1};

// Fold in fixed binomial-tree order: pairs (r, r+step) for step = 1,2,4,…
// The order never depends on timing, so floating-point results are
// deterministic run to run.
NdBuffer tree_fold(const std::vector<NdBuffer>& parts, ReduceOp op) {
    std::size_t w = parts.size();
    std::vector<NdBuffer> acc;
    acc.reserve(w);
    for (const NdBuffer& p : parts) acc.push_back(p.clone());
    ReduceOp fold_op = (op == ReduceOp::Mean) ? ReduceOp::Sum : op;
    for (std::size_t step = 1; step < w; step *= 2) {
        for (std::size_t r = 0; r + step < w; r += 2 * step) {
            combine_inplace(acc[r], acc[r + step], fold_op);
        }
    }
    if (op == ReduceOp::Mean) scale_inplace(acc[0], 1.0 / static_cast<double>(w));
    return std::move(acc[0]);
}

void check_elementwise_op(ReduceOp op, const char* what) {
    if (op == ReduceOp::Gather) {
        throw ArgumentError(std::string(what) + ": Gather is not a reduction (use gather())");
    }
}

} // namespace

namespace detail {

struct VarRecord {
    std::uint64_t id = 0;
    std::shared_ptr<PoolState> pool;
    std::vector<NdBuffer> replicas; // slot r owned by rank r during phases
};

std::vector<NdBuffer>& replicas_of(const ReplicatedVariable& var) {
    if (!var.rec_) throw ArgumentError("empty replicated-variable handle");
    return var.rec_->replicas;
}

std::shared_ptr<PoolState> pool_of(const ReplicatedVariable& var) {
    if (!var.rec_) throw ArgumentError("empty replicated-variable handle");
    return var.rec_->pool;
}

namespace {

VarRecord& live(const std::shared_ptr<VarRecord>& rec, const char* what) {
    if (!rec) throw ArgumentError(std::string(what) + ": empty replicated-variable handle");
    return *rec;
}

void check_rank(const VarRecord& rec, std::size_t rank, const char* what) {
    if (rank >= rec.replicas.size()) {
        throw ArgumentError(std::string(what) + ": rank " + std::to_string(rank) + " out of " +
                            std::to_string(rec.replicas.size()));
    }
}

void check_equal_shapes(const VarRecord& rec, const char* what) {
    for (std::size_t r = 1; r < rec.replicas.size(); ++r) {
        if (!rec.replicas[r].same_shape(rec.replicas[0])) {
            throw ShapeError(std::string(what) + ": replica shapes differ across ranks (" +
                             rec.replicas[0].shape_string() + " vs rank " + std::to_string(r) +
                             " " + rec.replicas[r].shape_string() + ")");
        }
    }
}

// get/set are master-issued and rank-targeted; they are legal whenever no
// phase is in flight, even on a shut-down pool.
void require_no_phase(const VarRecord& rec, const char* what) {
    if (static_cast<PoolLifecycle>(rec.pool->lifecycle.load()) == PoolLifecycle::InPhase) {
        throw LifecycleError(std::string(what) + ": illegal while a phase is in flight");
    }
}

} // namespace
} // namespace detail

ReplicatedVariable replicate(WorkerPool& pool, const NdBuffer& init) {
    auto st = detail::state_of(pool);
    detail::require_idle(*st, "replicate");

    auto rec = std::make_shared<detail::VarRecord>();
    rec->id = g_next_var_id.fetch_add(1);
    rec->pool = st;
    rec->replicas.resize(st->world);
    detail::run_pool_phase(*st, PhaseKind::Distribute,
                           [&](std::size_t rank) { rec->replicas[rank] = init.clone(); });
    return ReplicatedVariable(std::move(rec));
}

std::uint64_t ReplicatedVariable::id() const { return detail::live(rec_, "id").id; }

std::size_t ReplicatedVariable::world() const {
    return detail::live(rec_, "world").replicas.size();
}

DType ReplicatedVariable::dtype() const {
    return detail::live(rec_, "dtype").replicas.at(0).dtype();
}

void ReplicatedVariable::broadcast(std::size_t src_rank) {
    detail::VarRecord& rec = detail::live(rec_, "broadcast");
    detail::check_rank(rec, src_rank, "broadcast");
    const NdBuffer src = rec.replicas[src_rank];
    detail::run_pool_phase(*rec.pool, PhaseKind::Collective, [&](std::size_t rank) {
        if (rank != src_rank) rec.replicas[rank] = src.clone();
    });
}

void ReplicatedVariable::all_reduce(ReduceOp op) {
    detail::VarRecord& rec = detail::live(rec_, "all_reduce");
    check_elementwise_op(op, "all_reduce");
    detail::check_equal_shapes(rec, "all_reduce");
    // Two phases: rank 0 folds the pre-call replicas, then every rank
    // installs its own copy of the folded value.
    NdBuffer folded;
    detail::run_pool_phase(*rec.pool, PhaseKind::Collective, [&](std::size_t rank) {
        if (rank == 0) folded = tree_fold(rec.replicas, op);
    });
    detail::run_pool_phase(*rec.pool, PhaseKind::Collective, [&](std::size_t rank) {
        rec.replicas[rank] = folded.clone();
    });
}

void ReplicatedVariable::reduce(ReduceOp op, std::size_t dst_rank) {
    detail::VarRecord& rec = detail::live(rec_, "reduce");
    check_elementwise_op(op, "reduce");
    detail::check_rank(rec, dst_rank, "reduce");
    detail::check_equal_shapes(rec, "reduce");
    NdBuffer folded;
    detail::run_pool_phase(*rec.pool, PhaseKind::Collective, [&](std::size_t rank) {
        if (rank == 0) folded = tree_fold(rec.replicas, op);
    });
    rec.replicas[dst_rank] = std::move(folded);
}

NdBuffer ReplicatedVariable::gather() const {
    detail::VarRecord& rec = detail::live(rec_, "gather");
    NdBuffer out;
    detail::run_pool_phase(*rec.pool, PhaseKind::Collective, [&](std::size_t rank) {
        if (rank == 0) out = concat_rows(rec.replicas);
    });
    return out;
}

NdBuffer ReplicatedVariable::get_value(std::size_t rank) const {
    detail::VarRecord& rec = detail::live(rec_, "get_value");
    detail::check_rank(rec, rank, "get_value");
    detail::require_no_phase(rec, "get_value");
    return rec.replicas[rank].clone();
}

void ReplicatedVariable::set_value(std::size_t rank, const NdBuffer& value) {
    detail::VarRecord& rec = detail::live(rec_, "set_value");
    detail::check_rank(rec, rank, "set_value");
    detail::require_no_phase(rec, "set_value");
    rec.replicas[rank] = value.clone();
}

void ReplicatedVariable::scatter_value(const NdBuffer& data,
                                       const std::optional<IndexSelection>& indexes) {
    detail::VarRecord& rec = detail::live(rec_, "scatter_value");
    std::size_t n = data.rows(); // throws on rank-0 data
    std::size_t eff = n;
    if (indexes) {
        validate_selection(*indexes, n);
        eff = selection_count(*indexes);
    }
    std::vector<RowRange> parts = partition_rows(eff, rec.replicas.size());
    detail::run_pool_phase(*rec.pool, PhaseKind::ScatterVar, [&](std::size_t rank) {
        // Each rank excerpts its own share; clone so replicas never alias the
        // source rows.
        rec.replicas[rank] = excerpt_rows(data, indexes, parts[rank]).clone();
    });
}

void ReplicatedVariable::scatter_value(const SharedInputArray& data,
                                       const std::optional<IndexSelection>& indexes) {
    scatter_value(data.view(), indexes);
}

bool ReplicatedVariable::replicas_coherent() const {
    detail::VarRecord& rec = detail::live(rec_, "replicas_coherent");
    detail::require_no_phase(rec, "replicas_coherent");
    for (std::size_t r = 1; r < rec.replicas.size(); ++r) {
        if (!rec.replicas[r].equals_bitwise(rec.replicas[0])) return false;
    }
    return true;
}

} // namespace synkpar

#include "synkpar/function.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>

#include "internal.hpp"

namespace synkpar {

namespace {

std::atomic<std::uint64_t> g_next_fn_id{1};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

} // namespace

const char* update_combine_name(UpdateCombine c) noexcept {
    switch (c) {
    case UpdateCombine::Add: return "add";
    case UpdateCombine::WeightedMeanByRows: return "weighted_mean_by_rows";
    case UpdateCombine::Overwrite: return "overwrite";
    }
    return "?";
}

const NdBuffer& KernelContext::replica(std::size_t i) const {
    if (!replicas || i >= replicas->size()) {
        throw ArgumentError("kernel context: replica index " + std::to_string(i) +
                            " out of range");
    }
    return (*replicas)[i];
}

double CallReport::compute_mean_s() const noexcept {
    if (rank_compute_s.empty()) return 0.0;
    double total = 0.0;
    for (double s : rank_compute_s) total += s;
    return total / static_cast<double>(rank_compute_s.size());
}

namespace detail {

struct FunctionCore {
    std::uint64_t id = 0;
    std::shared_ptr<PoolState> pool;
    Kernel kernel;
    std::vector<InputSpec> inputs;
    std::vector<OutputSpec> outputs;
    std::vector<UpdateSpec> updates;
    bool distributed = false;
    std::vector<char> rank_ready; // slot r set by rank r during Distribute
};

} // namespace detail

namespace {

detail::FunctionCore& live_core(const std::shared_ptr<detail::FunctionCore>& core,
                                const char* what) {
    if (!core) throw ArgumentError(std::string(what) + ": empty function handle");
    return *core;
}

// ---- shared aggregation machinery (slice level and rank level) --------------

// Accumulates one output across contributions (slices within a rank, or ranks
// at the master fold). Contributions arrive in a fixed order, so floating-
// point results are deterministic. Mean is weighted by contribution row
// counts; Gather concatenates in arrival order.
struct OutputAccumulator {
    ReduceOp op = ReduceOp::Sum;
    bool has = false;
    NdBuffer acc;
    std::size_t weight = 0;
    std::vector<NdBuffer> parts; // Gather only

    void add(const NdBuffer& value, std::size_t rows) {
        if (op == ReduceOp::Gather) {
            parts.push_back(value);
            return;
        }
        if (!has) {
            // Clone: the kernel's buffer may alias an input view or replica.
            acc = value.clone();
            weight = rows;
            has = true;
            return;
        }
        if (op == ReduceOp::Mean) {
            weighted_mean_inplace(acc, weight, value, rows);
            weight += rows;
        } else {
            combine_inplace(acc, value, op);
        }
    }

    NdBuffer finish() {
        if (op == ReduceOp::Gather) {
            // Zero contributions: empty gather (rank-1 by convention, the
            // trailing dims are unknowable without running the kernel).
            return parts.empty() ? NdBuffer::zeros({0}) : concat_rows(parts);
        }
        if (!has) {
            throw ArgumentError(std::string("reduce over zero contributing shards for ") +
                                reduce_op_name(op) + " (no neutral element)");
        }
        return std::move(acc);
    }
};

// Accumulates one variable's updates across slices; applied exactly once
// after the last slice, so slices always compute against pre-call values.
struct UpdateAccumulator {
    UpdateCombine combine = UpdateCombine::Add;
    bool has = false;
    NdBuffer acc;
    std::size_t weight = 0;

    void add(const NdBuffer& delta, std::size_t rows) {
        if (!has) {
            acc = delta.clone();
            weight = rows;
            has = true;
            return;
        }
        switch (combine) {
        case UpdateCombine::Add:
            combine_inplace(acc, delta, ReduceOp::Sum);
            break;
        case UpdateCombine::WeightedMeanByRows:
            weighted_mean_inplace(acc, weight, delta, rows);
            weight += rows;
            break;
        case UpdateCombine::Overwrite:
            // Unreachable: Overwrite with more than one slice is rejected
            // before the phase starts.
            throw SlicingConflictError("overwrite update produced by more than one slice");
        }
    }

    void apply(NdBuffer& replica) const {
        switch (combine) {
        case UpdateCombine::Add:
            if (!replica.same_shape(acc)) {
                throw ShapeError("update delta shape " + acc.shape_string() +
                                 " != replica shape " + replica.shape_string());
            }
            combine_inplace(replica, acc, ReduceOp::Sum);
            break;
        case UpdateCombine::WeightedMeanByRows:
            if (!replica.same_shape(acc)) {
                throw ShapeError("update delta shape " + acc.shape_string() +
                                 " != replica shape " + replica.shape_string());
            }
            replica = acc.clone();
            break;
        case UpdateCombine::Overwrite:
            replica = acc.clone(); // may change the replica's shape
            break;
        }
    }
};

// ---- call planning -----------------------------------------------------------

struct ResolvedArg {
    enum class Kind { ExplicitScatter, ExplicitBroadcast, ImplicitScatter, ImplicitBroadcast };
    Kind kind = Kind::ExplicitScatter;
    NdBuffer buffer;        // explicit kinds
    ReplicatedVariable var; // implicit kinds
};

struct CallPlan {
    std::size_t world = 1;
    std::size_t num_slices = 1;
    std::vector<ResolvedArg> args;
    std::optional<IndexSelection> explicit_sel;
    std::vector<std::optional<IndexSelection>> implicit_sel; // per rank
    bool has_scatter = false;
    std::vector<RowRange> explicit_parts;
    std::vector<std::size_t> eff_rows; // per-rank effective rows (Mean weights)
    std::size_t eff_total = 0;
};

ResolvedArg resolve_arg(const FunctionArg& arg, InputMode mode, detail::PoolState* pool,
                        std::size_t position) {
    ResolvedArg out;
    bool scatter = (mode == InputMode::Scatter);
    if (const auto* buf = std::get_if<NdBuffer>(&arg.value())) {
        out.kind = scatter ? ResolvedArg::Kind::ExplicitScatter
                           : ResolvedArg::Kind::ExplicitBroadcast;
        out.buffer = *buf;
    } else if (const auto* arr = std::get_if<SharedInputArray>(&arg.value())) {
        out.kind = scatter ? ResolvedArg::Kind::ExplicitScatter
                           : ResolvedArg::Kind::ExplicitBroadcast;
        out.buffer = arr->view();
    } else {
        const auto& var = std::get<ReplicatedVariable>(arg.value());
        if (detail::pool_of(var).get() != pool) {
            throw ArgumentError("call(): argument " + std::to_string(position) +
                                " is a variable of a different pool");
        }
        out.kind = scatter ? ResolvedArg::Kind::ImplicitScatter
                           : ResolvedArg::Kind::ImplicitBroadcast;
        out.var = var;
    }
    if (scatter && out.kind == ResolvedArg::Kind::ExplicitScatter && out.buffer.rank() == 0) {
        throw ShapeError("call(): scatter argument " + std::to_string(position) +
                         " must have rank >= 1");
    }
    return out;
}

CallPlan build_plan(const detail::FunctionCore& core, const std::vector<FunctionArg>& args,
                    const CallOptions& opts) {
    if (!core.distributed) {
        throw LifecycleError("call(): function \"" + core.kernel.name +
                             "\" has not been distributed");
    }
    if (args.size() != core.kernel.arity) {
        throw ArgumentError("call(): " + std::to_string(args.size()) + " arguments for arity " +
                            std::to_string(core.kernel.arity));
    }
    if (opts.num_slices == 0) throw ArgumentError("call(): num_slices must be >= 1");
    if (opts.num_slices > 1) {
        for (const UpdateSpec& u : core.updates) {
            if (u.combine == UpdateCombine::Overwrite) {
                throw SlicingConflictError(
                    "call(): overwrite update cannot be sliced (num_slices = " +
                    std::to_string(opts.num_slices) + "); accumulation is undefined");
            }
        }
    }

    CallPlan plan;
    plan.world = core.pool->world;
    plan.num_slices = opts.num_slices;
    plan.args.reserve(args.size());
    for (std::size_t i = 0; i < args.size(); ++i) {
        plan.args.push_back(resolve_arg(args[i], core.inputs[i].mode, core.pool.get(), i));
    }

    // Explicit scatter arguments: common leading extent, then the optional
    // global row selection, then the per-rank partition.
    std::optional<std::size_t> explicit_n;
    for (std::size_t i = 0; i < plan.args.size(); ++i) {
        const ResolvedArg& a = plan.args[i];
        if (a.kind != ResolvedArg::Kind::ExplicitScatter) continue;
        plan.has_scatter = true;
        std::size_t n = a.buffer.rows();
        if (explicit_n && *explicit_n != n) {
            throw ShapeError("call(): scatter arguments disagree on leading extent (" +
                             std::to_string(*explicit_n) + " vs " + std::to_string(n) + ")");
        }
        explicit_n = n;
    }
    std::size_t explicit_eff = 0;
    if (explicit_n) {
        if (opts.indexes) {
            validate_selection(*opts.indexes, *explicit_n);
            plan.explicit_sel = opts.indexes;
            explicit_eff = selection_count(*opts.indexes);
        } else {
            explicit_eff = *explicit_n;
        }
        plan.explicit_parts = partition_rows(explicit_eff, plan.world);
    }

    // Implicit (replica-backed) scatter arguments: per-rank local selections.
    bool has_implicit = false;
    std::vector<std::size_t> implicit_count(plan.world, 0);
    plan.implicit_sel.assign(plan.world, std::nullopt);
    if (opts.replica_indexes) {
        const auto& sels = *opts.replica_indexes;
        if (sels.size() != 1 && sels.size() != plan.world) {
            throw ArgumentError("call(): replica_indexes must hold 1 or world-size selections, got " +
                                std::to_string(sels.size()));
        }
        for (std::size_t r = 0; r < plan.world; ++r) {
            plan.implicit_sel[r] = sels.size() == 1 ? sels[0] : sels[r];
        }
    }
    for (std::size_t i = 0; i < plan.args.size(); ++i) {
        const ResolvedArg& a = plan.args[i];
        if (a.kind != ResolvedArg::Kind::ImplicitScatter) continue;
        plan.has_scatter = true;
        const std::vector<NdBuffer>& replicas = detail::replicas_of(a.var);
        for (std::size_t r = 0; r < plan.world; ++r) {
            std::size_t rows = replicas[r].rows(); // throws on rank-0 replica
            std::size_t count = rows;
            if (plan.implicit_sel[r]) {
                validate_selection(*plan.implicit_sel[r], rows);
                count = selection_count(*plan.implicit_sel[r]);
            }
            if (has_implicit && implicit_count[r] != count) {
                throw ShapeError("call(): implicit scatter arguments disagree on rank " +
                                 std::to_string(r) + " row count");
            }
            implicit_count[r] = count;
        }
        has_implicit = true;
    }
    if (opts.replica_indexes && !has_implicit) {
        throw ArgumentError("call(): replica_indexes given but no replica-backed scatter argument");
    }

    // Per-rank effective rows: the Mean weights and the slicing domain.
    plan.eff_rows.assign(plan.world, 0);
    for (std::size_t r = 0; r < plan.world; ++r) {
        if (explicit_n && has_implicit) {
            if (plan.explicit_parts[r].count() != implicit_count[r]) {
                throw ShapeError("call(): rank " + std::to_string(r) + " explicit share (" +
                                 std::to_string(plan.explicit_parts[r].count()) +
                                 " rows) != implicit share (" +
                                 std::to_string(implicit_count[r]) + " rows)");
            }
            plan.eff_rows[r] = implicit_count[r];
        } else if (explicit_n) {
            plan.eff_rows[r] = plan.explicit_parts[r].count();
        } else if (has_implicit) {
            plan.eff_rows[r] = implicit_count[r];
        } else {
            plan.eff_rows[r] = 1; // no scatter inputs: every rank contributes once
        }
        plan.eff_total += plan.eff_rows[r];
    }

    if (plan.has_scatter && plan.eff_total == 0) {
        for (const OutputSpec& o : core.outputs) {
            if (o.reduce != ReduceOp::Gather) {
                throw ArgumentError(std::string("call(): zero effective rows with a ") +
                                    reduce_op_name(o.reduce) +
                                    " output (no neutral element)");
            }
        }
    }
    return plan;
}

// Build rank r's full-share input buffers (pre-slicing). Scatter excerpts are
// views for contiguous selections and copies for index lists.
std::vector<NdBuffer> rank_local_inputs(const CallPlan& plan, std::size_t rank) {
    std::vector<NdBuffer> local;
    local.reserve(plan.args.size());
    for (const ResolvedArg& a : plan.args) {
        switch (a.kind) {
        case ResolvedArg::Kind::ExplicitScatter:
            local.push_back(excerpt_rows(a.buffer, plan.explicit_sel, plan.explicit_parts[rank]));
            break;
        case ResolvedArg::Kind::ExplicitBroadcast:
            local.push_back(a.buffer);
            break;
        case ResolvedArg::Kind::ImplicitScatter: {
            const NdBuffer& replica = detail::replicas_of(a.var)[rank];
            std::size_t count = plan.implicit_sel[rank]
                                    ? selection_count(*plan.implicit_sel[rank])
                                    : replica.rows();
            local.push_back(excerpt_rows(replica, plan.implicit_sel[rank], RowRange{0, count}));
            break;
        }
        case ResolvedArg::Kind::ImplicitBroadcast:
            local.push_back(detail::replicas_of(a.var)[rank]);
            break;
        }
    }
    return local;
}

std::vector<NdBuffer> read_replicas_of(const Kernel& kernel, std::size_t rank) {
    std::vector<NdBuffer> reads;
    reads.reserve(kernel.reads.size());
    for (const ReplicatedVariable& var : kernel.reads) {
        reads.push_back(detail::replicas_of(var)[rank]);
    }
    return reads;
}

// Locate the declared update spec for a delta; contract violations throw.
std::size_t update_slot(const detail::FunctionCore& core, const UpdateDelta& delta) {
    for (std::size_t u = 0; u < core.updates.size(); ++u) {
        if (core.updates[u].var.id() == delta.var_id) {
            if (core.updates[u].combine != delta.combine) {
                throw ArgumentError("kernel emitted a " +
                                    std::string(update_combine_name(delta.combine)) +
                                    " update for variable " + std::to_string(delta.var_id) +
                                    ", declared " +
                                    update_combine_name(core.updates[u].combine));
            }
            return u;
        }
    }
    throw ArgumentError("kernel emitted an update for undeclared variable " +
                        std::to_string(delta.var_id));
}

// Run rank r's whole share: excerpt, slice loop, in-place output aggregation,
// deferred update application. Fills the caller's per-rank result slots.
void run_rank_share(const detail::FunctionCore& core, const CallPlan& plan, std::size_t rank,
                    std::vector<NdBuffer>& outputs_slot, double& excerpt_seconds,
                    double& compute_seconds) {
    auto t_excerpt = Clock::now();
    std::vector<NdBuffer> local = rank_local_inputs(plan, rank);
    excerpt_seconds = seconds_since(t_excerpt);

    std::vector<NdBuffer> reads = read_replicas_of(core.kernel, rank);

    std::vector<OutputAccumulator> out_acc(core.outputs.size());
    for (std::size_t i = 0; i < core.outputs.size(); ++i) out_acc[i].op = core.outputs[i].reduce;
    std::vector<UpdateAccumulator> upd_acc(core.updates.size());
    for (std::size_t u = 0; u < core.updates.size(); ++u) {
        upd_acc[u].combine = core.updates[u].combine;
    }

    KernelContext ctx;
    ctx.rank = rank;
    ctx.world = plan.world;
    ctx.num_slices = plan.num_slices;
    ctx.replicas = &reads;

    auto consume = [&](const std::vector<NdBuffer>& inputs, std::size_t slice,
                       std::size_t rows) {
        ctx.slice = slice;
        ctx.shard_rows = rows;
        auto t0 = Clock::now();
        KernelResult result = core.kernel.fn(inputs, ctx);
        compute_seconds += seconds_since(t0);
        if (result.outputs.size() != core.outputs.size()) {
            throw ArgumentError("kernel \"" + core.kernel.name + "\" returned " +
                                std::to_string(result.outputs.size()) + " outputs, declared " +
                                std::to_string(core.outputs.size()));
        }
        for (std::size_t i = 0; i < result.outputs.size(); ++i) {
            out_acc[i].add(result.outputs[i], rows);
        }
        for (const UpdateDelta& delta : result.updates) {
            upd_acc[update_slot(core, delta)].add(delta.delta, rows);
        }
    };

    if (!plan.has_scatter) {
        // No data to slice: the kernel runs exactly once per rank.
        consume(local, 0, 0);
    } else {
        std::size_t eff = plan.eff_rows[rank];
        if (eff == 0) return; // empty shard: no kernel call, no contribution
        std::vector<RowRange> slices = partition_rows(eff, plan.num_slices);
        for (std::size_t s = 0; s < slices.size(); ++s) {
            if (slices[s].count() == 0) continue;
            std::vector<NdBuffer> inputs;
            inputs.reserve(local.size());
            for (std::size_t i = 0; i < local.size(); ++i) {
                bool scatter = plan.args[i].kind == ResolvedArg::Kind::ExplicitScatter ||
                               plan.args[i].kind == ResolvedArg::Kind::ImplicitScatter;
                inputs.push_back(scatter ? slice_rows(local[i], slices[s]) : local[i]);
            }
            consume(inputs, s, slices[s].count());
        }
    }

    // Deferred one-shot update application, to this rank's replicas only.
    for (std::size_t u = 0; u < core.updates.size(); ++u) {
        if (!upd_acc[u].has) continue;
        upd_acc[u].apply(detail::replicas_of(core.updates[u].var)[rank]);
    }

    outputs_slot.clear();
    for (OutputAccumulator& acc : out_acc) outputs_slot.push_back(acc.finish());
}

} // namespace

// ---- public handle -----------------------------------------------------------

std::uint64_t ParallelFunction::id() const { return live_core(core_, "id").id; }

const std::string& ParallelFunction::name() const { return live_core(core_, "name").kernel.name; }

std::size_t ParallelFunction::arity() const { return live_core(core_, "arity").kernel.arity; }

bool ParallelFunction::distributed() const {
    return live_core(core_, "distributed").distributed;
}

std::optional<UpdateCombine> ParallelFunction::update_combine_for(std::uint64_t var_id) const {
    const detail::FunctionCore& core = live_core(core_, "update_combine_for");
    for (const UpdateSpec& spec : core.updates) {
        if (spec.var.id() == var_id) return spec.combine;
    }
    return std::nullopt;
}

CallResult ParallelFunction::call(const std::vector<FunctionArg>& args,
                                  const CallOptions& opts) const {
    detail::FunctionCore& core = live_core(core_, "call");
    auto t_total = Clock::now();
    CallPlan plan = build_plan(core, args, opts);

    std::size_t world = plan.world;
    std::vector<std::vector<NdBuffer>> rank_outputs(world);
    std::vector<double> excerpt_s(world, 0.0);
    std::vector<double> compute_s(world, 0.0);

    PhaseReport phase = detail::run_pool_phase(
        *core.pool, PhaseKind::CallFunction, [&](std::size_t rank) {
            run_rank_share(core, plan, rank, rank_outputs[rank], excerpt_s[rank],
                           compute_s[rank]);
        });

    // Master-side fold across ranks, in rank order (deterministic).
    auto t_reduce = Clock::now();
    CallResult result;
    result.outputs.reserve(core.outputs.size());
    for (std::size_t i = 0; i < core.outputs.size(); ++i) {
        OutputAccumulator fold;
        fold.op = core.outputs[i].reduce;
        for (std::size_t r = 0; r < world; ++r) {
            if (plan.has_scatter && plan.eff_rows[r] == 0) continue; // empty shard
            fold.add(rank_outputs[r][i], plan.eff_rows[r]);
        }
        result.outputs.push_back(fold.finish());
    }

    result.report.rank_compute_s = std::move(compute_s);
    result.report.rank_rows = plan.eff_rows;
    result.report.reduce_s = seconds_since(t_reduce);
    double excerpt_total = 0.0;
    for (double s : excerpt_s) excerpt_total += s;
    result.report.scatter_s = excerpt_total / static_cast<double>(world);
    result.report.straggler_s = phase.straggler_seconds();
    result.report.total_s = seconds_since(t_total);
    return result;
}

std::vector<NdBuffer> ParallelFunction::call_serial(
    const std::vector<FunctionArg>& args, const std::optional<IndexSelection>& indexes) const {
    detail::FunctionCore& core = live_core(core_, "call_serial");
    detail::require_idle(*core.pool, "call_serial");
    if (!core.distributed) {
        throw LifecycleError("call_serial(): function \"" + core.kernel.name +
                             "\" has not been distributed");
    }
    if (args.size() != core.kernel.arity) {
        throw ArgumentError("call_serial(): " + std::to_string(args.size()) +
                            " arguments for arity " + std::to_string(core.kernel.arity));
    }

    // One kernel invocation on the master over all (indexed) rows; updates
    // land on rank 0's replicas. No phase machinery is involved, which is
    // what makes this path a usable oracle for call().
    std::vector<ResolvedArg> resolved;
    resolved.reserve(args.size());
    for (std::size_t i = 0; i < args.size(); ++i) {
        resolved.push_back(resolve_arg(args[i], core.inputs[i].mode, core.pool.get(), i));
    }

    std::optional<std::size_t> n;
    std::optional<std::size_t> implicit_rows;
    bool has_scatter = false;
    for (const ResolvedArg& a : resolved) {
        if (a.kind == ResolvedArg::Kind::ExplicitScatter) {
            has_scatter = true;
            std::size_t rows = a.buffer.rows();
            if (n && *n != rows) {
                throw ShapeError("call_serial(): scatter arguments disagree on leading extent");
            }
            n = rows;
        } else if (a.kind == ResolvedArg::Kind::ImplicitScatter) {
            has_scatter = true;
            if (!implicit_rows) implicit_rows = detail::replicas_of(a.var)[0].rows();
        }
    }

    std::size_t eff = 0;
    std::optional<IndexSelection> sel = indexes;
    if (n) {
        if (sel) {
            validate_selection(*sel, *n);
            eff = selection_count(*sel);
        } else {
            eff = *n;
        }
    } else if (implicit_rows) {
        eff = *implicit_rows;
    }

    std::vector<NdBuffer> inputs;
    inputs.reserve(resolved.size());
    for (const ResolvedArg& a : resolved) {
        switch (a.kind) {
        case ResolvedArg::Kind::ExplicitScatter:
            inputs.push_back(excerpt_rows(a.buffer, sel, RowRange{0, eff}));
            break;
        case ResolvedArg::Kind::ExplicitBroadcast:
            inputs.push_back(a.buffer);
            break;
        case ResolvedArg::Kind::ImplicitScatter:
        case ResolvedArg::Kind::ImplicitBroadcast:
            inputs.push_back(detail::replicas_of(a.var)[0]);
            break;
        }
    }

    if (has_scatter && eff == 0) {
        std::vector<NdBuffer> outputs;
        for (const OutputSpec& o : core.outputs) {
            if (o.reduce != ReduceOp::Gather) {
                throw ArgumentError(std::string("call_serial(): zero effective rows with a ") +
                                    reduce_op_name(o.reduce) + " output (no neutral element)");
            }
            outputs.push_back(NdBuffer::zeros({0}));
        }
        return outputs;
    }

    std::vector<NdBuffer> reads = read_replicas_of(core.kernel, 0);
    KernelContext ctx;
    ctx.rank = 0;
    ctx.world = core.pool->world;
    ctx.slice = 0;
    ctx.num_slices = 1;
    ctx.shard_rows = has_scatter ? eff : 0;
    ctx.replicas = &reads;

    KernelResult result = core.kernel.fn(inputs, ctx);
    if (result.outputs.size() != core.outputs.size()) {
        throw ArgumentError("kernel \"" + core.kernel.name + "\" returned " +
                            std::to_string(result.outputs.size()) + " outputs, declared " +
                            std::to_string(core.outputs.size()));
    }

    for (const UpdateDelta& delta : result.updates) {
        std::size_t u = update_slot(core, delta);
        UpdateAccumulator acc;
        acc.combine = core.updates[u].combine;
        acc.add(delta.delta, ctx.shard_rows);
        acc.apply(detail::replicas_of(core.updates[u].var)[0]);
    }

    std::vector<NdBuffer> outputs;
    outputs.reserve(result.outputs.size());
    for (const NdBuffer& out : result.outputs) outputs.push_back(out.clone());
    return outputs;
}

ParallelFunction function(WorkerPool& pool, Kernel kernel, std::vector<InputSpec> inputs,
                          std::vector<OutputSpec> outputs, std::vector<UpdateSpec> updates) {
    auto st = detail::state_of(pool);
    detail::require_idle(*st, "function");
    if (!kernel.fn) throw ArgumentError("function(): kernel has no callable");
    if (inputs.size() != kernel.arity) {
        throw ArgumentError("function(): " + std::to_string(inputs.size()) +
                            " input specs for kernel arity " + std::to_string(kernel.arity));
    }
    if (outputs.empty() && updates.empty()) {
        throw ArgumentError("function(): no outputs and no updates; nothing to compute");
    }
    for (const ReplicatedVariable& var : kernel.reads) {
        if (detail::pool_of(var).get() != st.get()) {
            throw ArgumentError("function(): read variable belongs to a different pool");
        }
    }
    for (const UpdateSpec& u : updates) {
        if (detail::pool_of(u.var).get() != st.get()) {
            throw ArgumentError("function(): update variable belongs to a different pool");
        }
    }

    auto core = std::make_shared<detail::FunctionCore>();
    core->id = g_next_fn_id.fetch_add(1);
    core->pool = st;
    core->kernel = std::move(kernel);
    core->inputs = std::move(inputs);
    core->outputs = std::move(outputs);
    core->updates = std::move(updates);
    core->rank_ready.assign(st->world, 0);
    st->built_functions.push_back(core);
    return ParallelFunction(std::move(core));
}

void distribute(WorkerPool& pool) {
    auto st = detail::state_of(pool);
    std::vector<std::shared_ptr<detail::FunctionCore>> pending;
    for (const auto& weak : st->built_functions) {
        if (auto core = weak.lock(); core && !core->distributed) pending.push_back(core);
    }
    if (pending.empty()) return; // nothing built (or everything already shipped)

    // One phase ships all pending kernels: each rank marks its own ready slot.
    detail::run_pool_phase(*st, PhaseKind::Distribute, [&](std::size_t rank) {
        for (const auto& core : pending) core->rank_ready[rank] = 1;
    });
    for (const auto& core : pending) core->distributed = true;
}

} // namespace synkpar

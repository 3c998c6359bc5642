#pragma once

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "synkpar/function.hpp"
#include "synkpar/replicated.hpp"
#include "synkpar/tensor.hpp"
#include "synkpar/worker_pool.hpp"

namespace synkpar {

// ---- update rules --------------------------------------------------------------
//
// Elementwise formulas, fixed so trajectories are reproducible:
//   SGD:       θ ← θ − lr·g
//   Momentum:  v ← µv − lr·g;  θ ← θ + µv − lr·g          (Nesterov)
//   RMSProp:   a ← ρa + (1−ρ)g²;  θ ← θ − lr·g/√(a+ε)
//   Adam:      m ← β1·m + (1−β1)g;  v ← β2·v + (1−β2)g²
//              θ ← θ − lr·(m/(1−β1^t)) / (√(v/(1−β2^t)) + ε)

struct SgdRule {};

struct MomentumRule {
    double mu = 0.9;
};

struct RmsPropRule {
    double rho = 0.9;
    double eps = 1e-6;
};

struct AdamRule {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

using UpdateRule = std::variant<SgdRule, MomentumRule, RmsPropRule, AdamRule>;

const char* update_rule_name(const UpdateRule& rule) noexcept;

// One rank's optimizer: the rule, the step size, the step counter, and the
// rule's auxiliary flat buffers (velocity | mean-square | first+second
// moments), all the same length as the flat parameter vector. Auxiliary
// state is rank-local and never communicated.
struct OptimizerState {
    UpdateRule rule;
    double lr = 0.01;
    std::uint64_t t = 0;
    std::vector<NdBuffer> aux;
};

OptimizerState make_optimizer(UpdateRule rule, double lr, std::size_t n_params,
                              DType dtype = DType::Float64);

// In-place steps over flat buffers; each increments state.t exactly once.
void step_sgd(OptimizerState& state, NdBuffer& params, const NdBuffer& grads);
void step_momentum(OptimizerState& state, NdBuffer& params, const NdBuffer& grads);
void step_rmsprop(OptimizerState& state, NdBuffer& params, const NdBuffer& grads);
void step_adam(OptimizerState& state, NdBuffer& params, const NdBuffer& grads);

// Dispatch on state.rule.
void apply_update(OptimizerState& state, NdBuffer& params, const NdBuffer& grads);

bool all_finite(const NdBuffer& buf) noexcept;

// ---- flattened parameter/gradient block -----------------------------------------

/// Parameters and gradients of a model as two rank-1 replicated variables of
/// equal length, plus the segment table mapping model tensors to flat ranges.
/// Parameter replicas are bitwise identical across ranks after every step.
struct FlatParamBlock {
    ReplicatedVariable params;
    ReplicatedVariable grads;
    std::vector<FlatSegment> segments;
    std::size_t length = 0;

    static FlatParamBlock create(WorkerPool& pool, std::span<const NdBuffer> initial_params);

    // Copy of one rank's parameters, split back into model tensors.
    std::vector<NdBuffer> read_params(std::size_t rank = 0) const;
};

// ---- synchronous trainer ----------------------------------------------------------

struct TrainerOptions {
    // Combine gradients across ranks after the gradient call. Disabling this
    // leaves each rank training on its own shard only (the ablation case:
    // replicas diverge as soon as shards differ).
    bool all_reduce = true;
    // Mean (default) keeps W-worker training on the same trajectory as serial
    // large-batch training; Sum is exposed as an option.
    ReduceOp grad_op = ReduceOp::Mean;
    // Debug checks (off by default): bitwise replica coherence after each
    // step; finite gradients after each gradient call.
    bool verify_coherence = false;
    bool check_finite = false;
};

struct StepReport {
    double loss = 0.0;
    CallReport grad_call;
    CallReport step_call;
    double allreduce_s = 0.0;
    double total_s = 0.0;
};

/// Drives one synchronous step: gradient function -> (pre-scale for unequal
/// shards) -> all-reduce of the flat gradient -> identical per-rank update
/// rule. The update runs as an ordinary parallel function of arity 1 (the
/// step counter, broadcast), reading {params, grads, aux...} replicas and
/// overwriting them, so every rank applies the same deterministic rule and
/// parameter replicas stay bitwise coherent.
class SyncSgd {
public:
    // f_grad contract: output 0 is the scalar loss with Mean reduce; the
    // gradient lands in block.grads as a per-rank shard-mean via an Overwrite
    // update (or Add, in which case grads are zeroed before every call).
    SyncSgd(WorkerPool& pool, FlatParamBlock block, UpdateRule rule, double lr,
            TrainerOptions opts = {});

    double train_step(const ParallelFunction& f_grad, const std::vector<FunctionArg>& batch,
                      const CallOptions& call_opts = {});

    const FlatParamBlock& block() const { return block_; }
    const StepReport& last_report() const { return last_; }
    std::uint64_t step_count() const { return t_; }
    double learning_rate() const { return lr_; }

private:
    WorkerPool* pool_; // non-owning; the pool outlives the trainer
    FlatParamBlock block_;
    TrainerOptions opts_;
    UpdateRule rule_;
    double lr_ = 0.01;
    std::vector<ReplicatedVariable> aux_;
    ParallelFunction f_step_;
    std::uint64_t t_ = 0;
    StepReport last_;
};

} // namespace synkpar

#include "synkpar/sgd.hpp"

#include <chrono>
#include <cmath>

namespace synkpar {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::size_t aux_count(const UpdateRule& rule) noexcept {
    if (std::holds_alternative<SgdRule>(rule)) return 0;
    if (std::holds_alternative<AdamRule>(rule)) return 2;
    return 1; // momentum velocity or rmsprop mean-square
}

void check_step_shapes(const OptimizerState& state, const NdBuffer& params,
                       const NdBuffer& grads, const char* what) {
    if (params.dtype() != grads.dtype()) {
        throw DTypeError(std::string(what) + ": params/grads dtype mismatch");
    }
    if (params.size() != grads.size()) {
        throw ShapeError(std::string(what) + ": params length " + std::to_string(params.size()) +
                         " != grads length " + std::to_string(grads.size()));
    }
    if (state.aux.size() != aux_count(state.rule)) {
        throw ArgumentError(std::string(what) + ": optimizer state holds " +
                            std::to_string(state.aux.size()) + " auxiliary buffers, rule needs " +
                            std::to_string(aux_count(state.rule)));
    }
    for (const NdBuffer& a : state.aux) {
        if (a.size() != params.size() || a.dtype() != params.dtype()) {
            throw ShapeError(std::string(what) + ": auxiliary buffer does not match params");
        }
    }
}

// All arithmetic in double, cast once on store, so f32 and f64 parameter
// blocks follow the same formulas.

template <class T>
void sgd_impl(std::span<T> p, std::span<const T> g, double lr) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = static_cast<T>(static_cast<double>(p[i]) - lr * static_cast<double>(g[i]));
    }
}

template <class T>
void momentum_impl(std::span<T> p, std::span<T> v, std::span<const T> g, double mu, double lr) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        double vn = mu * static_cast<double>(v[i]) - lr * static_cast<double>(g[i]);
        v[i] = static_cast<T>(vn);
        p[i] = static_cast<T>(static_cast<double>(p[i]) + mu * vn -
                              lr * static_cast<double>(g[i]));
    }
}

template <class T>
void rmsprop_impl(std::span<T> p, std::span<T> a, std::span<const T> g, double rho, double eps,
                  double lr) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        double gi = static_cast<double>(g[i]);
        double an = rho * static_cast<double>(a[i]) + (1.0 - rho) * gi * gi;
        a[i] = static_cast<T>(an);
        p[i] = static_cast<T>(static_cast<double>(p[i]) - lr * gi / std::sqrt(an + eps));
    }
}

template <class T>
void adam_impl(std::span<T> p, std::span<T> m, std::span<T> v, std::span<const T> g, double b1,
               double b2, double eps, double lr, std::uint64_t t) {
    double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t i = 0; i < p.size(); ++i) {
        double gi = static_cast<double>(g[i]);
        double mn = b1 * static_cast<double>(m[i]) + (1.0 - b1) * gi;
        double vn = b2 * static_cast<double>(v[i]) + (1.0 - b2) * gi * gi;
        m[i] = static_cast<T>(mn);
        v[i] = static_cast<T>(vn);
        p[i] = static_cast<T>(static_cast<double>(p[i]) -
                              lr * (mn / c1) / (std::sqrt(vn / c2) + eps));
    }
}

} // namespace

const char* update_rule_name(const UpdateRule& rule) noexcept {
    if (std::holds_alternative<SgdRule>(rule)) return "sgd";
    if (std::holds_alternative<MomentumRule>(rule)) return "momentum";
    if (std::holds_alternative<RmsPropRule>(rule)) return "rmsprop";
    return "adam";
}

OptimizerState make_optimizer(UpdateRule rule, double lr, std::size_t n_params, DType dtype) {
    OptimizerState state;
    state.rule = rule;
    state.lr = lr;
    for (std::size_t i = 0; i < aux_count(rule); ++i) {
        state.aux.push_back(NdBuffer::zeros({n_params}, dtype));
    }
    return state;
}

void step_sgd(OptimizerState& state, NdBuffer& params, const NdBuffer& grads) {
    check_step_shapes(state, params, grads, "step_sgd");
    state.t += 1;
    if (params.dtype() == DType::Float32) {
        sgd_impl(params.as_mut<float>(), grads.as<float>(), state.lr);
    } else {
        sgd_impl(params.as_mut<double>(), grads.as<double>(), state.lr);
    }
}

void step_momentum(OptimizerState& state, NdBuffer& params, const NdBuffer& grads) {
    check_step_shapes(state, params, grads, "step_momentum");
    double mu = std::get<MomentumRule>(state.rule).mu;
    state.t += 1;
    if (params.dtype() == DType::Float32) {
        momentum_impl(params.as_mut<float>(), state.aux[0].as_mut<float>(), grads.as<float>(), mu,
                      state.lr);
    } else {
        momentum_impl(params.as_mut<double>(), state.aux[0].as_mut<double>(),
                      grads.as<double>(), mu, state.lr);
    }
}

void step_rmsprop(OptimizerState& state, NdBuffer& params, const NdBuffer& grads) {
    check_step_shapes(state, params, grads, "step_rmsprop");
    const auto& rule = std::get<RmsPropRule>(state.rule);
    state.t += 1;
    if (params.dtype() == DType::Float32) {
        rmsprop_impl(params.as_mut<float>(), state.aux[0].as_mut<float>(), grads.as<float>(),
                     rule.rho, rule.eps, state.lr);
    } else {
        rmsprop_impl(params.as_mut<double>(), state.aux[0].as_mut<double>(), grads.as<double>(),
                     rule.rho, rule.eps, state.lr);
    }
}

void step_adam(OptimizerState& state, NdBuffer& params, const NdBuffer& grads) {
    check_step_shapes(state, params, grads, "step_adam");
    const auto& rule = std::get<AdamRule>(state.rule);
    state.t += 1;
    if (params.dtype() == DType::Float32) {
        adam_impl(params.as_mut<float>(), state.aux[0].as_mut<float>(), state.aux[1].as_mut<float>(),
                  grads.as<float>(), rule.beta1, rule.beta2, rule.eps, state.lr, state.t);
    } else {
        adam_impl(params.as_mut<double>(), state.aux[0].as_mut<double>(),
                  state.aux[1].as_mut<double>(), grads.as<double>(), rule.beta1, rule.beta2,
                  rule.eps, state.lr, state.t);
    }
}

void apply_update(OptimizerState& state, NdBuffer& params, const NdBuffer& grads) {
    if (std::holds_alternative<SgdRule>(state.rule)) {
        step_sgd(state, params, grads);
    } else if (std::holds_alternative<MomentumRule>(state.rule)) {
        step_momentum(state, params, grads);
    } else if (std::holds_alternative<RmsPropRule>(state.rule)) {
        step_rmsprop(state, params, grads);
    } else {
        step_adam(state, params, grads);
    }
}

bool all_finite(const NdBuffer& buf) noexcept {
    std::size_t n = buf.size();
    if (buf.dtype() == DType::Float32) {
        auto v = buf.as<float>();
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(v[i])) return false;
        }
    } else {
        auto v = buf.as<double>();
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(v[i])) return false;
        }
    }
    return true;
}

// ---- flattened parameter/gradient block -----------------------------------------

FlatParamBlock FlatParamBlock::create(WorkerPool& pool, std::span<const NdBuffer> initial_params) {
    FlatPack pack = flatten_concat(initial_params);
    FlatParamBlock block;
    block.segments = std::move(pack.segments);
    block.length = pack.flat.size();
    block.params = replicate(pool, pack.flat);
    block.grads = replicate(pool, NdBuffer::zeros({block.length}, pack.flat.dtype()));
    return block;
}

std::vector<NdBuffer> FlatParamBlock::read_params(std::size_t rank) const {
    NdBuffer flat = params.get_value(rank);
    return unflatten(flat, segments);
}

// ---- synchronous trainer ----------------------------------------------------------

SyncSgd::SyncSgd(WorkerPool& pool, FlatParamBlock block, UpdateRule rule, double lr,
                 TrainerOptions opts)
    : pool_(&pool), block_(std::move(block)), opts_(opts), rule_(rule), lr_(lr) {
    DType dt = block_.params.dtype();
    std::size_t n_aux = aux_count(rule_);
    NdBuffer zero = NdBuffer::zeros({block_.length}, dt);
    for (std::size_t i = 0; i < n_aux; ++i) aux_.push_back(replicate(pool, zero));

    Kernel kernel;
    kernel.name = std::string("step_") + update_rule_name(rule_);
    kernel.arity = 1; // the step counter, broadcast to every rank
    kernel.reads = {block_.params, block_.grads};
    for (const ReplicatedVariable& a : aux_) kernel.reads.push_back(a);

    std::uint64_t params_id = block_.params.id();
    std::vector<std::uint64_t> aux_ids;
    for (const ReplicatedVariable& a : aux_) aux_ids.push_back(a.id());
    UpdateRule rule_copy = rule_;
    double lr_copy = lr_;

    kernel.fn = [params_id, aux_ids, rule_copy, lr_copy,
                 n_aux](const std::vector<NdBuffer>& in, const KernelContext& ctx) {
        // Inputs and replicas fully determine the result: the same rule runs
        // on the same all-reduced gradient everywhere, so replicas of params
        // and aux state stay bitwise identical across ranks.
        double t_now = in[0].get(0);
        NdBuffer params = ctx.replica(0).clone();
        const NdBuffer& grads = ctx.replica(1);
        OptimizerState state;
        state.rule = rule_copy;
        state.lr = lr_copy;
        state.t = static_cast<std::uint64_t>(t_now + 0.5) - 1; // step_* increments to t_now
        for (std::size_t i = 0; i < n_aux; ++i) state.aux.push_back(ctx.replica(2 + i).clone());
        apply_update(state, params, grads);

        KernelResult result;
        result.updates.push_back(UpdateDelta{params_id, std::move(params), UpdateCombine::Overwrite});
        for (std::size_t i = 0; i < n_aux; ++i) {
            result.updates.push_back(
                UpdateDelta{aux_ids[i], std::move(state.aux[i]), UpdateCombine::Overwrite});
        }
        return result;
    };

    std::vector<UpdateSpec> update_specs{UpdateSpec{block_.params, UpdateCombine::Overwrite}};
    for (const ReplicatedVariable& a : aux_) {
        update_specs.push_back(UpdateSpec{a, UpdateCombine::Overwrite});
    }
    f_step_ = function(pool, std::move(kernel), {InputSpec{InputMode::Broadcast}}, {},
                       std::move(update_specs));
    distribute(pool);
}

double SyncSgd::train_step(const ParallelFunction& f_grad, const std::vector<FunctionArg>& batch,
                           const CallOptions& call_opts) {
    auto t_total = Clock::now();
    StepReport report;
    std::size_t world = pool_->world_size();

    auto combine = f_grad.update_combine_for(block_.grads.id());
    if (!combine) {
        throw ArgumentError("train_step(): gradient function does not update the gradient block");
    }
    if (*combine == UpdateCombine::Add) {
        // Accumulating gradient functions start from zero every step.
        NdBuffer zero = NdBuffer::zeros({block_.length}, block_.grads.dtype());
        for (std::size_t r = 0; r < world; ++r) block_.grads.set_value(r, zero);
    }

    CallResult grad_result = f_grad.call(batch, call_opts);
    if (grad_result.outputs.empty()) {
        throw ArgumentError("train_step(): gradient function must output the loss");
    }
    double loss = grad_result.outputs[0].get(0);
    report.grad_call = grad_result.report;

    if (opts_.check_finite) {
        for (std::size_t r = 0; r < world; ++r) {
            if (!all_finite(block_.grads.get_value(r))) {
                throw NumericError("train_step(): non-finite gradient elements on rank " +
                                   std::to_string(r));
            }
        }
    }

    if (opts_.all_reduce) {
        if (opts_.grad_op == ReduceOp::Mean) {
            // Unequal shards: pre-scale each rank's shard-mean gradient by
            // rows_r·W/total so the equal-weight all-reduce mean equals the
            // global row mean exactly. Equal shards give factor 1, skipped.
            const std::vector<std::size_t>& rows = grad_result.report.rank_rows;
            std::size_t total = 0;
            for (std::size_t r : rows) total += r;
            bool unequal = false;
            for (std::size_t r = 0; r < rows.size(); ++r) {
                if (rows[r] * world != total) unequal = true;
            }
            if (unequal && total > 0) {
                for (std::size_t r = 0; r < world; ++r) {
                    double factor = static_cast<double>(rows[r]) * static_cast<double>(world) /
                                    static_cast<double>(total);
                    NdBuffer g = block_.grads.get_value(r);
                    scale_inplace(g, factor);
                    block_.grads.set_value(r, g);
                }
            }
        }
        auto t0 = Clock::now();
        block_.grads.all_reduce(opts_.grad_op);
        report.allreduce_s = seconds_since(t0);
    }

    NdBuffer step_arg = NdBuffer::scalar(static_cast<double>(t_ + 1));
    CallResult step_result = f_step_.call({FunctionArg(step_arg)});
    report.step_call = step_result.report;
    t_ += 1;

    if (opts_.verify_coherence && !block_.params.replicas_coherent()) {
        throw CoherenceError("train_step(): parameter replicas diverged after step " +
                             std::to_string(t_));
    }

    report.loss = loss;
    report.total_s = seconds_since(t_total);
    last_ = report;
    return loss;
}

} // namespace synkpar

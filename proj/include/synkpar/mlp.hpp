#pragma once

// Deterministic MLP regression workload: seeded init, a linear teacher
// dataset, and a closed-form loss/gradient pass. Serves as the standard
// kernel payload for the trainer and the benchmark; everything is
// reproducible from (config, seed) alone.

#include <cstdint>
#include <vector>

#include "synkpar/function.hpp"
#include "synkpar/sgd.hpp"
#include "synkpar/tensor.hpp"

namespace synkpar {

struct MlpConfig {
    std::size_t in_dim = 8;
    std::size_t width = 32;
    std::size_t out_dim = 4;
    std::size_t layers = 2; // number of weight matrices, >= 1
    std::uint64_t seed = 0;
};

// Parameter list is [W0, b0, W1, b1, ...]: W_l is (d_l, d_{l+1}), b_l is
// (d_{l+1},) with d_0 = in_dim, d_layers = out_dim, d_middle = width.
std::vector<std::vector<std::size_t>> mlp_param_shapes(const MlpConfig& config);

// Seeded Gaussian init, scale 1/sqrt(fan_in); biases start at zero.
std::vector<NdBuffer> mlp_init_params(const MlpConfig& config, DType dtype);

struct LossGrad {
    double loss = 0.0;
    NdBuffer grad; // flat, same length/dtype as the flat parameter vector
};

// Forward + backward over one batch. Hidden layers use tanh, the last layer
// is linear; loss is 0.5/n * sum((pred - y)^2) so the gradient is the mean
// over the batch rows. Layer dimensions are inferred from `segments`
// (alternating rank-2 weight / rank-1 bias entries).
LossGrad mlp_loss_grad(const NdBuffer& flat_params, const std::vector<FlatSegment>& segments,
                       const NdBuffer& x, const NdBuffer& y);

struct Dataset {
    NdBuffer x; // (rows, in_dim)
    NdBuffer y; // (rows, out_dim)
};

// x ~ N(0,1); y = x * T for a seeded teacher matrix T, so the regression
// target is exactly realizable and loss decreases monotonically at small lr.
Dataset mlp_make_dataset(std::size_t rows, const MlpConfig& config, std::uint64_t seed,
                         DType dtype);

// Gradient kernel for SyncSgd::train_step: arity 2 (x shard, y shard), reads
// the flat parameter block, outputs the mean loss, and replaces the gradient
// block with the shard-mean gradient (row-weighted across slices).
Kernel mlp_grad_kernel(const FlatParamBlock& block, std::string name = "mlp_grad");

// Update specs matching mlp_grad_kernel's single gradient delta.
std::vector<UpdateSpec> mlp_grad_updates(const FlatParamBlock& block);

} // namespace synkpar

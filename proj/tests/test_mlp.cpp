#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "synkpar/mlp.hpp"

using namespace synkpar;

namespace {

// Flatten a parameter list and return the segment table alongside.
std::pair<NdBuffer, std::vector<FlatSegment>> flatten(const std::vector<NdBuffer>& params) {
    FlatPack pack = flatten_concat(params);
    return {pack.flat, pack.segments};
}

} // namespace

TEST_CASE("parameter shapes chain through the hidden width") {
    MlpConfig cfg;
    cfg.in_dim = 5;
    cfg.width = 7;
    cfg.out_dim = 3;
    cfg.layers = 3;
    auto shapes = mlp_param_shapes(cfg);
    REQUIRE(shapes.size() == 6);
    CHECK(shapes[0] == std::vector<std::size_t>{5, 7});
    CHECK(shapes[1] == std::vector<std::size_t>{7});
    CHECK(shapes[2] == std::vector<std::size_t>{7, 7});
    CHECK(shapes[3] == std::vector<std::size_t>{7});
    CHECK(shapes[4] == std::vector<std::size_t>{7, 3});
    CHECK(shapes[5] == std::vector<std::size_t>{3});

    // One layer: a single linear map, no hidden width at all.
    MlpConfig linear = cfg;
    linear.layers = 1;
    auto lin_shapes = mlp_param_shapes(linear);
    REQUIRE(lin_shapes.size() == 2);
    CHECK(lin_shapes[0] == std::vector<std::size_t>{5, 3});
    CHECK(lin_shapes[1] == std::vector<std::size_t>{3});

    MlpConfig bad = cfg;
    bad.layers = 0;
    CHECK_THROWS_AS((void)mlp_param_shapes(bad), ArgumentError);
}

TEST_CASE("init is deterministic in the seed and scaled by fan-in") {
    MlpConfig cfg;
    cfg.seed = 42;
    std::vector<NdBuffer> a = mlp_init_params(cfg, DType::Float64);
    std::vector<NdBuffer> b = mlp_init_params(cfg, DType::Float64);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].equals_bitwise(b[i]));

    MlpConfig other = cfg;
    other.seed = 43;
    std::vector<NdBuffer> c = mlp_init_params(other, DType::Float64);
    CHECK_FALSE(a[0].equals_bitwise(c[0]));

    // Biases start at zero; weights do not.
    bool weight_nonzero = false;
    for (std::size_t i = 0; i < a[0].size(); ++i) weight_nonzero |= (a[0].get(i) != 0.0);
    CHECK(weight_nonzero);
    for (std::size_t i = 0; i < a[1].size(); ++i) CHECK(a[1].get(i) == 0.0);
}

TEST_CASE("gradient matches central finite differences") {
    MlpConfig cfg;
    cfg.in_dim = 3;
    cfg.width = 4;
    cfg.out_dim = 2;
    cfg.layers = 2;
    cfg.seed = 7;
    auto [flat, segments] = flatten(mlp_init_params(cfg, DType::Float64));
    Dataset data = mlp_make_dataset(6, cfg, 99, DType::Float64);

    LossGrad lg = mlp_loss_grad(flat, segments, data.x, data.y);
    CHECK(std::isfinite(lg.loss));
    CHECK(lg.grad.size() == flat.size());

    const double h = 1e-6;
    for (std::size_t i = 0; i < flat.size(); ++i) {
        NdBuffer plus = flat.clone();
        NdBuffer minus = flat.clone();
        plus.set(i, flat.get(i) + h);
        minus.set(i, flat.get(i) - h);
        double numeric = (mlp_loss_grad(plus, segments, data.x, data.y).loss -
                          mlp_loss_grad(minus, segments, data.x, data.y).loss) /
                         (2.0 * h);
        CHECK(testsup::elem_err(lg.grad.get(i), numeric) <= 1e-6);
    }
}

TEST_CASE("loss_grad input validation") {
    MlpConfig cfg;
    cfg.in_dim = 3;
    cfg.width = 4;
    cfg.out_dim = 2;
    auto [flat, segments] = flatten(mlp_init_params(cfg, DType::Float64));
    Dataset data = mlp_make_dataset(4, cfg, 1, DType::Float64);

    CHECK_THROWS_AS((void)mlp_loss_grad(flat, segments, NdBuffer::zeros({0, 3}), NdBuffer::zeros({0, 2})),
                    ArgumentError); // empty batch has no mean loss
    CHECK_THROWS_AS((void)mlp_loss_grad(flat, segments, NdBuffer::zeros({4, 5}), data.y),
                    ShapeError); // x feature width mismatch
    CHECK_THROWS_AS((void)mlp_loss_grad(flat, segments, data.x, NdBuffer::zeros({3, 2})),
                    ShapeError); // row-count mismatch
}

TEST_CASE("dataset is seeded and realizable") {
    MlpConfig cfg;
    cfg.in_dim = 4;
    cfg.width = 8;
    cfg.out_dim = 2;
    Dataset a = mlp_make_dataset(32, cfg, 5, DType::Float64);
    Dataset b = mlp_make_dataset(32, cfg, 5, DType::Float64);
    CHECK(a.x.equals_bitwise(b.x));
    CHECK(a.y.equals_bitwise(b.y));
    CHECK(a.x.shape() == std::vector<std::size_t>{32, 4});
    CHECK(a.y.shape() == std::vector<std::size_t>{32, 2});
    Dataset c = mlp_make_dataset(32, cfg, 6, DType::Float64);
    CHECK_FALSE(a.x.equals_bitwise(c.x));

    // The teacher is linear, so vanilla gradient descent must reduce the loss.
    auto [flat, segments] = flatten(mlp_init_params(cfg, DType::Float64));
    OptimizerState st = make_optimizer(SgdRule{}, 0.05, flat.size());
    double first = mlp_loss_grad(flat, segments, a.x, a.y).loss;
    double loss = first;
    for (int step = 0; step < 25; ++step) {
        LossGrad lg = mlp_loss_grad(flat, segments, a.x, a.y);
        loss = lg.loss;
        step_sgd(st, flat, lg.grad);
    }
    double last = mlp_loss_grad(flat, segments, a.x, a.y).loss;
    CHECK(last < first * 0.5);
    CHECK(last < loss); // still descending at the end
}

TEST_CASE("parallel gradient kernel equals the direct computation") {
    MlpConfig cfg;
    cfg.in_dim = 3;
    cfg.width = 5;
    cfg.out_dim = 2;
    cfg.seed = 11;
    std::vector<NdBuffer> init = mlp_init_params(cfg, DType::Float64);
    Dataset data = mlp_make_dataset(10, cfg, 3, DType::Float64);

    auto [flat, segments] = flatten(init);
    LossGrad direct = mlp_loss_grad(flat, segments, data.x, data.y);

    WorkerPool pool = WorkerPool::fork(2);
    FlatParamBlock block = FlatParamBlock::create(pool, init);
    ParallelFunction f =
        function(pool, mlp_grad_kernel(block),
                 {InputSpec{InputMode::Scatter}, InputSpec{InputMode::Scatter}},
                 {OutputSpec{ReduceOp::Mean}}, mlp_grad_updates(block));
    distribute(pool);

    CallResult res = f.call({FunctionArg(data.x), FunctionArg(data.y)});
    CHECK(testsup::elem_err(res.outputs[0].get(0), direct.loss) <= 1e-12);

    // Equal shards (5 + 5 rows): the rank-local shard means averaged with
    // equal weights equal the full-batch mean up to fold reassociation.
    NdBuffer g0 = block.grads.get_value(0);
    NdBuffer g1 = block.grads.get_value(1);
    REQUIRE(g0.size() == direct.grad.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < g0.size(); ++i) {
        double mean = 0.5 * (g0.get(i) + g1.get(i));
        worst = std::max(worst, testsup::elem_err(mean, direct.grad.get(i)));
    }
    CHECK(worst <= 1e-12);

    // Sliced execution accumulates the same shard-mean gradient.
    CallResult sliced =
        f.call({FunctionArg(data.x), FunctionArg(data.y)}, CallOptions{.num_slices = 3});
    CHECK(testsup::max_err(block.grads.get_value(0), g0) <= 1e-12);
    CHECK(testsup::elem_err(sliced.outputs[0].get(0), direct.loss) <= 1e-12);
}

TEST_CASE("trainer drives the mlp kernel end to end") {
    MlpConfig cfg;
    cfg.in_dim = 4;
    cfg.width = 6;
    cfg.out_dim = 2;
    cfg.seed = 21;
    Dataset data = mlp_make_dataset(12, cfg, 8, DType::Float64);

    WorkerPool pool = WorkerPool::fork(2);
    FlatParamBlock block = FlatParamBlock::create(pool, mlp_init_params(cfg, DType::Float64));
    ParallelFunction f =
        function(pool, mlp_grad_kernel(block),
                 {InputSpec{InputMode::Scatter}, InputSpec{InputMode::Scatter}},
                 {OutputSpec{ReduceOp::Mean}}, mlp_grad_updates(block));
    distribute(pool);

    TrainerOptions topts;
    topts.verify_coherence = true;
    SyncSgd trainer(pool, block, AdamRule{}, 0.01, topts);
    double first = trainer.train_step(f, {FunctionArg(data.x), FunctionArg(data.y)});
    double last = first;
    for (int s = 0; s < 30; ++s) {
        last = trainer.train_step(f, {FunctionArg(data.x), FunctionArg(data.y)});
    }
    CHECK(last < first);
    CHECK(block.params.replicas_coherent());
    CHECK(trainer.step_count() == 31);
}

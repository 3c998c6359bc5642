#include "synkpar/mlp.hpp"

#include <cmath>
#include <random>
#include <string>

namespace synkpar {

namespace {

void check_config(const MlpConfig& config) {
    if (config.layers == 0) throw ArgumentError("mlp: layers must be >= 1");
    if (config.in_dim == 0 || config.out_dim == 0 || (config.layers > 1 && config.width == 0)) {
        throw ArgumentError("mlp: dimensions must be positive");
    }
}

std::vector<double> to_double_vec(const NdBuffer& buf) {
    std::vector<double> out(buf.size());
    if (buf.dtype() == DType::Float32) {
        auto v = buf.as<float>();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(v[i]);
    } else {
        auto v = buf.as<double>();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i];
    }
    return out;
}

// c (n x p) += a (n x m) * b (m x p), i-k-j order for locality.
void matmul_acc(const double* a, const double* b, double* c, std::size_t n, std::size_t m,
                std::size_t p) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a + i * m;
        double* ci = c + i * p;
        for (std::size_t k = 0; k < m; ++k) {
            double aik = ai[k];
            if (aik == 0.0) continue;
            const double* bk = b + k * p;
            for (std::size_t j = 0; j < p; ++j) ci[j] += aik * bk[j];
        }
    }
}

// c (m x p) += a^T (a is n x m) * d (n x p).
void matmul_at_acc(const double* a, const double* d, double* c, std::size_t n, std::size_t m,
                   std::size_t p) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a + i * m;
        const double* di = d + i * p;
        for (std::size_t k = 0; k < m; ++k) {
            double aik = ai[k];
            if (aik == 0.0) continue;
            double* ck = c + k * p;
            for (std::size_t j = 0; j < p; ++j) ck[j] += aik * di[j];
        }
    }
}

// c (n x m) += d (n x p) * b^T (b is m x p).
void matmul_bt_acc(const double* d, const double* b, double* c, std::size_t n, std::size_t m,
                   std::size_t p) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* di = d + i * p;
        double* ci = c + i * m;
        for (std::size_t k = 0; k < m; ++k) {
            const double* bk = b + k * p;
            double acc = 0.0;
            for (std::size_t j = 0; j < p; ++j) acc += di[j] * bk[j];
            ci[k] += acc;
        }
    }
}

struct LayerDims {
    std::vector<std::size_t> d; // d[0] = in, d[L] = out
};

LayerDims infer_dims(const std::vector<FlatSegment>& segments) {
    if (segments.empty() || segments.size() % 2 != 0) {
        throw ArgumentError("mlp_loss_grad: segments must alternate weight/bias pairs");
    }
    std::size_t layers = segments.size() / 2;
    LayerDims dims;
    dims.d.resize(layers + 1);
    for (std::size_t l = 0; l < layers; ++l) {
        const auto& ws = segments[2 * l].shape;
        const auto& bs = segments[2 * l + 1].shape;
        if (ws.size() != 2 || bs.size() != 1 || bs[0] != ws[1]) {
            throw ArgumentError("mlp_loss_grad: segment " + std::to_string(2 * l) +
                                " is not a (weight, bias) pair");
        }
        if (l == 0) {
            dims.d[0] = ws[0];
        } else if (ws[0] != dims.d[l]) {
            throw ShapeError("mlp_loss_grad: layer " + std::to_string(l) +
                             " input dim does not chain");
        }
        dims.d[l + 1] = ws[1];
    }
    return dims;
}

} // namespace

std::vector<std::vector<std::size_t>> mlp_param_shapes(const MlpConfig& config) {
    check_config(config);
    std::vector<std::vector<std::size_t>> shapes;
    for (std::size_t l = 0; l < config.layers; ++l) {
        std::size_t d_in = (l == 0) ? config.in_dim : config.width;
        std::size_t d_out = (l + 1 == config.layers) ? config.out_dim : config.width;
        shapes.push_back({d_in, d_out});
        shapes.push_back({d_out});
    }
    return shapes;
}

std::vector<NdBuffer> mlp_init_params(const MlpConfig& config, DType dtype) {
    auto shapes = mlp_param_shapes(config);
    std::mt19937_64 rng(config.seed);
    std::vector<NdBuffer> params;
    for (std::size_t i = 0; i < shapes.size(); i += 2) {
        const auto& ws = shapes[i];
        double scale = 1.0 / std::sqrt(static_cast<double>(ws[0]));
        std::normal_distribution<double> dist(0.0, scale);
        NdBuffer w = NdBuffer::zeros(ws, dtype);
        for (std::size_t j = 0; j < w.size(); ++j) w.set(j, dist(rng));
        params.push_back(std::move(w));
        params.push_back(NdBuffer::zeros(shapes[i + 1], dtype)); // bias starts at zero
    }
    return params;
}

LossGrad mlp_loss_grad(const NdBuffer& flat_params, const std::vector<FlatSegment>& segments,
                       const NdBuffer& x, const NdBuffer& y) {
    if (flat_params.rank() != 1) throw ShapeError("mlp_loss_grad: flat_params must be rank 1");
    if (x.rank() != 2 || y.rank() != 2) throw ShapeError("mlp_loss_grad: x and y must be rank 2");
    if (x.shape()[0] != y.shape()[0]) {
        throw ShapeError("mlp_loss_grad: x rows " + std::to_string(x.shape()[0]) +
                         " != y rows " + std::to_string(y.shape()[0]));
    }
    LayerDims dims = infer_dims(segments);
    std::size_t layers = dims.d.size() - 1;
    std::size_t expected = 0;
    for (const FlatSegment& s : segments) expected += element_count(s.shape);
    if (flat_params.size() != expected) {
        throw ShapeError("mlp_loss_grad: flat_params length does not match segments");
    }
    if (x.shape()[1] != dims.d[0]) throw ShapeError("mlp_loss_grad: x columns != input dim");
    if (y.shape()[1] != dims.d[layers]) throw ShapeError("mlp_loss_grad: y columns != output dim");
    std::size_t n = x.shape()[0];
    if (n == 0) throw ArgumentError("mlp_loss_grad: empty batch");

    std::vector<double> theta = to_double_vec(flat_params);
    const double* w_of = theta.data();
    std::vector<const double*> w_ptr(layers), b_ptr(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        w_ptr[l] = w_of + segments[2 * l].offset;
        b_ptr[l] = w_of + segments[2 * l + 1].offset;
    }

    // Forward: acts[0] = x, acts[l+1] = activation(acts[l] * W_l + b_l).
    std::vector<std::vector<double>> acts(layers + 1);
    acts[0] = to_double_vec(x);
    for (std::size_t l = 0; l < layers; ++l) {
        std::size_t din = dims.d[l];
        std::size_t dout = dims.d[l + 1];
        std::vector<double> z(n * dout);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < dout; ++j) z[i * dout + j] = b_ptr[l][j];
        }
        matmul_acc(acts[l].data(), w_ptr[l], z.data(), n, din, dout);
        if (l + 1 < layers) {
            for (double& v : z) v = std::tanh(v);
        }
        acts[l + 1] = std::move(z);
    }

    std::vector<double> ydat = to_double_vec(y);
    const std::vector<double>& pred = acts[layers];
    double loss = 0.0;
    std::vector<double> delta(n * dims.d[layers]);
    double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < delta.size(); ++i) {
        double diff = pred[i] - ydat[i];
        loss += diff * diff;
        delta[i] = diff * inv_n;
    }
    loss *= 0.5 * inv_n;

    // Backward: accumulate per-layer weight/bias grads straight into the
    // flat gradient vector.
    std::vector<double> grad(theta.size(), 0.0);
    for (std::size_t l = layers; l-- > 0;) {
        std::size_t din = dims.d[l];
        std::size_t dout = dims.d[l + 1];
        double* gw = grad.data() + segments[2 * l].offset;
        double* gb = grad.data() + segments[2 * l + 1].offset;
        matmul_at_acc(acts[l].data(), delta.data(), gw, n, din, dout);
        for (std::size_t i = 0; i < n; ++i) {
            const double* di = delta.data() + i * dout;
            for (std::size_t j = 0; j < dout; ++j) gb[j] += di[j];
        }
        if (l > 0) {
            std::vector<double> prev(n * din, 0.0);
            matmul_bt_acc(delta.data(), w_ptr[l], prev.data(), n, din, dout);
            const std::vector<double>& a = acts[l]; // tanh outputs
            for (std::size_t i = 0; i < prev.size(); ++i) prev[i] *= 1.0 - a[i] * a[i];
            delta = std::move(prev);
        }
    }

    LossGrad out;
    out.loss = loss;
    out.grad = NdBuffer::zeros({theta.size()}, flat_params.dtype());
    for (std::size_t i = 0; i < grad.size(); ++i) out.grad.set(i, grad[i]);
    return out;
}

Dataset mlp_make_dataset(std::size_t rows, const MlpConfig& config, std::uint64_t seed,
                         DType dtype) {
    check_config(config);
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> teacher(config.in_dim * config.out_dim);
    double scale = 1.0 / std::sqrt(static_cast<double>(config.in_dim));
    for (double& t : teacher) t = dist(rng) * scale;

    Dataset ds;
    ds.x = NdBuffer::zeros({rows, config.in_dim}, dtype);
    ds.y = NdBuffer::zeros({rows, config.out_dim}, dtype);
    std::vector<double> xi(config.in_dim);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < config.in_dim; ++j) {
            xi[j] = dist(rng);
            ds.x.set(i * config.in_dim + j, xi[j]);
        }
        for (std::size_t k = 0; k < config.out_dim; ++k) {
            double acc = 0.0;
            for (std::size_t j = 0; j < config.in_dim; ++j) {
                acc += xi[j] * teacher[j * config.out_dim + k];
            }
            ds.y.set(i * config.out_dim + k, acc);
        }
    }
    return ds;
}

Kernel mlp_grad_kernel(const FlatParamBlock& block, std::string name) {
    Kernel kernel;
    kernel.name = std::move(name);
    kernel.arity = 2;
    kernel.reads = {block.params};
    std::vector<FlatSegment> segments = block.segments;
    std::uint64_t grads_id = block.grads.id();
    kernel.fn = [segments, grads_id](const std::vector<NdBuffer>& in, const KernelContext& ctx) {
        LossGrad lg = mlp_loss_grad(ctx.replica(0), segments, in[0], in[1]);
        KernelResult result;
        result.outputs.push_back(NdBuffer::scalar(lg.loss));
        result.updates.push_back(
            UpdateDelta{grads_id, std::move(lg.grad), UpdateCombine::WeightedMeanByRows});
        return result;
    };
    return kernel;
}

std::vector<UpdateSpec> mlp_grad_updates(const FlatParamBlock& block) {
    return {UpdateSpec{block.grads, UpdateCombine::WeightedMeanByRows}};
}

} // namespace synkpar

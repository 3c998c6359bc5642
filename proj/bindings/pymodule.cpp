// Python bindings for the synkpar library. Arrays cross the boundary as
// copies (numpy <-> NdBuffer), which keeps ownership trivial; the heavy
// lifting stays in C++. Python-defined kernels run on worker threads under
// the GIL, so they serialize — useful for prototyping and tests, while
// native kernels (e.g. the MLP gradient) run fully parallel.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "synkpar/bench.hpp"
#include "synkpar/errors.hpp"
#include "synkpar/function.hpp"
#include "synkpar/mlp.hpp"
#include "synkpar/sgd.hpp"
#include "synkpar/shared_input.hpp"
#include "synkpar/tensor.hpp"
#include "synkpar/tensor_io.hpp"
#include "synkpar/worker_pool.hpp"

namespace py = pybind11;
using namespace synkpar;

namespace {

// ---- string <-> enum maps ----------------------------------------------------

DType dtype_from_string(const std::string& name) {
    if (name == "f32" || name == "float32") return DType::Float32;
    if (name == "f64" || name == "float64") return DType::Float64;
    throw ArgumentError("unknown dtype '" + name + "' (use 'f32' or 'f64')");
}

std::string dtype_to_string(DType dt) { return dt == DType::Float32 ? "f32" : "f64"; }

ReduceOp reduce_from_string(const std::string& name) {
    if (name == "sum") return ReduceOp::Sum;
    if (name == "mean") return ReduceOp::Mean;
    if (name == "max") return ReduceOp::Max;
    if (name == "min") return ReduceOp::Min;
    if (name == "prod") return ReduceOp::Prod;
    if (name == "gather") return ReduceOp::Gather;
    throw ArgumentError("unknown reduce op '" + name + "'");
}

UpdateCombine combine_from_string(const std::string& name) {
    if (name == "add") return UpdateCombine::Add;
    if (name == "weighted_mean" || name == "wmbr") return UpdateCombine::WeightedMeanByRows;
    if (name == "overwrite") return UpdateCombine::Overwrite;
    throw ArgumentError("unknown update combine '" + name + "'");
}

InputMode input_mode_from_string(const std::string& name) {
    if (name == "scatter") return InputMode::Scatter;
    if (name == "broadcast") return InputMode::Broadcast;
    throw ArgumentError("unknown input mode '" + name + "' (use 'scatter' or 'broadcast')");
}

// ---- numpy <-> NdBuffer (always by copy) --------------------------------------

NdBuffer buffer_from_array(const py::array& input) {
    std::vector<std::size_t> shape(static_cast<std::size_t>(input.ndim()));
    for (std::size_t d = 0; d < shape.size(); ++d) {
        shape[d] = static_cast<std::size_t>(input.shape(static_cast<py::ssize_t>(d)));
    }
    if (py::isinstance<py::array_t<float>>(input)) {
        auto a = py::array_t<float, py::array::c_style | py::array::forcecast>::ensure(input);
        NdBuffer out = NdBuffer::zeros(shape, DType::Float32);
        if (out.size() > 0) std::memcpy(out.bytes_mut(), a.data(), out.byte_size());
        return out;
    }
    auto a = py::array_t<double, py::array::c_style | py::array::forcecast>::ensure(input);
    if (!a) throw DTypeError("array is not convertible to a floating-point buffer");
    NdBuffer out = NdBuffer::zeros(shape, DType::Float64);
    if (out.size() > 0) std::memcpy(out.bytes_mut(), a.data(), out.byte_size());
    return out;
}

py::array array_from_buffer(const NdBuffer& buf) {
    std::vector<py::ssize_t> shape(buf.shape().begin(), buf.shape().end());
    if (buf.dtype() == DType::Float32) {
        py::array_t<float> out(shape);
        if (buf.size() > 0) std::memcpy(out.mutable_data(), buf.bytes(), buf.byte_size());
        return out;
    }
    py::array_t<double> out(shape);
    if (buf.size() > 0) std::memcpy(out.mutable_data(), buf.bytes(), buf.byte_size());
    return out;
}

// ---- option plumbing ----------------------------------------------------------

std::optional<IndexSelection> selection_from_py(const py::object& indexes) {
    if (indexes.is_none()) return std::nullopt;
    if (py::isinstance<py::tuple>(indexes)) {
        auto t = indexes.cast<py::tuple>();
        if (t.size() != 2) {
            throw ArgumentError("indexes tuple must be (start, stop)");
        }
        return IndexSelection(RowRange{t[0].cast<std::size_t>(), t[1].cast<std::size_t>()});
    }
    return IndexSelection(indexes.cast<std::vector<std::size_t>>());
}

CallOptions call_options_from_py(std::size_t num_slices, const py::object& indexes,
                                 const py::object& replica_indexes) {
    CallOptions opts;
    opts.num_slices = num_slices;
    opts.indexes = selection_from_py(indexes);
    if (!replica_indexes.is_none()) {
        // A list of selections: one entry applies everywhere, W entries are
        // per-rank. Each entry is a (start, stop) tuple or an index list.
        std::vector<IndexSelection> sels;
        for (const auto& item : replica_indexes.cast<py::sequence>()) {
            auto sel = selection_from_py(py::reinterpret_borrow<py::object>(item));
            if (!sel) throw ArgumentError("replica_indexes entries must not be None");
            sels.push_back(std::move(*sel));
        }
        opts.replica_indexes = std::move(sels);
    }
    return opts;
}

std::vector<FunctionArg> args_from_py(const py::sequence& args) {
    std::vector<FunctionArg> out;
    out.reserve(args.size());
    for (const auto& item : args) {
        py::object obj = py::reinterpret_borrow<py::object>(item);
        if (py::isinstance<SharedInputArray>(obj)) {
            out.emplace_back(obj.cast<SharedInputArray>());
        } else if (py::isinstance<ReplicatedVariable>(obj)) {
            out.emplace_back(obj.cast<ReplicatedVariable>());
        } else {
            out.emplace_back(buffer_from_array(obj.cast<py::array>()));
        }
    }
    return out;
}

py::dict report_to_py(const CallReport& report) {
    py::dict out;
    out["rank_compute_s"] = report.rank_compute_s;
    out["rank_rows"] = report.rank_rows;
    out["scatter_s"] = report.scatter_s;
    out["reduce_s"] = report.reduce_s;
    out["straggler_s"] = report.straggler_s;
    out["total_s"] = report.total_s;
    return out;
}

// Python kernel context handed to user callables.
struct PyKernelContext {
    std::size_t rank = 0;
    std::size_t world = 0;
    std::size_t slice = 0;
    std::size_t num_slices = 1;
    std::size_t shard_rows = 0;
    std::vector<NdBuffer> replicas;
};

// Wraps a Python callable as a Kernel. The callable receives
// (inputs: list[ndarray], ctx) and returns the outputs followed by one update
// delta per declared update, all as arrays. The py::function lives behind a
// shared_ptr whose deleter re-acquires the GIL: kernel copies are destroyed
// on worker threads that do not hold it.
Kernel kernel_from_py(std::string name, std::size_t arity, const py::function& fn,
                      std::vector<ReplicatedVariable> reads, std::size_t n_outputs,
                      const std::vector<std::pair<ReplicatedVariable, std::string>>& updates) {
    std::vector<std::pair<std::uint64_t, UpdateCombine>> slots;
    slots.reserve(updates.size());
    for (const auto& [var, combine] : updates) {
        slots.emplace_back(var.id(), combine_from_string(combine));
    }

    auto shared_fn = std::shared_ptr<py::function>(new py::function(fn), [](py::function* p) {
        if (Py_IsInitialized()) {
            py::gil_scoped_acquire gil;
            delete p;
        } else {
            p->release(); // interpreter gone; dropping the handle is all we can do
            delete p;
        }
    });

    Kernel kernel;
    kernel.name = std::move(name);
    kernel.arity = arity;
    kernel.reads = std::move(reads);
    kernel.fn = [shared_fn, n_outputs, slots](const std::vector<NdBuffer>& inputs,
                                              const KernelContext& ctx) {
        py::gil_scoped_acquire gil;
        py::list py_inputs;
        for (const NdBuffer& b : inputs) py_inputs.append(array_from_buffer(b));

        PyKernelContext py_ctx;
        py_ctx.rank = ctx.rank;
        py_ctx.world = ctx.world;
        py_ctx.slice = ctx.slice;
        py_ctx.num_slices = ctx.num_slices;
        py_ctx.shard_rows = ctx.shard_rows;
        if (ctx.replicas) py_ctx.replicas = *ctx.replicas;

        py::object result = (*shared_fn)(py_inputs, py_ctx);
        auto seq = result.cast<py::sequence>();
        if (seq.size() != n_outputs + slots.size()) {
            throw ArgumentError("python kernel returned " + std::to_string(seq.size()) +
                                " arrays, expected " + std::to_string(n_outputs) +
                                " outputs + " + std::to_string(slots.size()) + " updates");
        }
        KernelResult out;
        for (std::size_t i = 0; i < n_outputs; ++i) {
            out.outputs.push_back(buffer_from_array(seq[i].cast<py::array>()));
        }
        for (std::size_t j = 0; j < slots.size(); ++j) {
            out.updates.push_back(UpdateDelta{slots[j].first,
                                              buffer_from_array(seq[n_outputs + j].cast<py::array>()),
                                              slots[j].second});
        }
        return out;
    };
    return kernel;
}

ParallelFunction make_function_impl(
    WorkerPool& pool, Kernel kernel, const std::vector<std::string>& input_modes,
    const std::vector<std::string>& output_ops,
    const std::vector<std::pair<ReplicatedVariable, std::string>>& updates) {
    std::vector<InputSpec> inputs;
    for (const std::string& m : input_modes) inputs.push_back({input_mode_from_string(m)});
    std::vector<OutputSpec> outputs;
    for (const std::string& o : output_ops) outputs.push_back({reduce_from_string(o)});
    std::vector<UpdateSpec> specs;
    for (const auto& [var, combine] : updates) {
        specs.push_back(UpdateSpec{var, combine_from_string(combine)});
    }
    return function(pool, std::move(kernel), std::move(inputs), std::move(outputs),
                    std::move(specs));
}

UpdateRule rule_from_py(const py::object& rule) {
    if (py::isinstance<SgdRule>(rule)) return rule.cast<SgdRule>();
    if (py::isinstance<MomentumRule>(rule)) return rule.cast<MomentumRule>();
    if (py::isinstance<RmsPropRule>(rule)) return rule.cast<RmsPropRule>();
    if (py::isinstance<AdamRule>(rule)) return rule.cast<AdamRule>();
    throw ArgumentError("rule must be one of SgdRule, MomentumRule, RmsPropRule, AdamRule");
}

} // namespace

PYBIND11_MODULE(_synkpar, m) {
    m.doc() = "Synchronous data-parallel execution engine (CPU worker ranks)";

    // Base first, derived after: later registrations are matched first, so
    // every subclass maps to its own Python type before the base catches it.
    py::object base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<BoundsError>(m, "BoundsError", base.ptr());
    py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
    py::register_exception<DTypeError>(m, "DTypeError", base.ptr());
    py::register_exception<ArgumentError>(m, "ArgumentError", base.ptr());
    py::register_exception<CapacityError>(m, "CapacityError", base.ptr());
    py::register_exception<UseAfterFreeError>(m, "UseAfterFreeError", base.ptr());
    py::register_exception<LifecycleError>(m, "LifecycleError", base.ptr());
    py::register_exception<SlicingConflictError>(m, "SlicingConflictError", base.ptr());
    py::register_exception<CoherenceError>(m, "CoherenceError", base.ptr());
    py::register_exception<NumericError>(m, "NumericError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());
    py::register_exception<PhaseError>(m, "PhaseError", base.ptr());

    // ---- worker pool -----------------------------------------------------------

    py::class_<WorkerPool>(m, "Pool")
        .def(py::init([](const py::object& workers, bool pin_threads) {
                 ForkOptions opts;
                 if (!workers.is_none()) opts.workers = workers.cast<std::size_t>();
                 opts.pin_threads = pin_threads;
                 return WorkerPool::fork(opts);
             }),
             py::arg("workers") = py::none(), py::arg("pin_threads") = false)
        .def_property_readonly("world_size", &WorkerPool::world_size)
        .def_property_readonly("alive", &WorkerPool::alive)
        .def("shutdown", &WorkerPool::shutdown, py::call_guard<py::gil_scoped_release>())
        .def("__enter__", [](WorkerPool& self) -> WorkerPool& { return self; })
        .def("__exit__", [](WorkerPool& self, const py::object&, const py::object&,
                            const py::object&) {
            py::gil_scoped_release release;
            self.shutdown();
            return false;
        });

    // ---- shared input arrays -----------------------------------------------------

    py::class_<SharedInputArray>(m, "SharedInput")
        .def_static(
            "alloc",
            [](const std::vector<std::size_t>& shape, const std::string& dtype,
               const py::object& capacity) {
                std::optional<std::size_t> hint;
                if (!capacity.is_none()) hint = capacity.cast<std::size_t>();
                return SharedInputArray::alloc(shape, dtype_from_string(dtype), hint);
            },
            py::arg("shape"), py::arg("dtype") = "f64", py::arg("capacity") = py::none())
        .def_static(
            "from_array",
            [](const py::array& data, const py::object& capacity) {
                std::optional<std::size_t> hint;
                if (!capacity.is_none()) hint = capacity.cast<std::size_t>();
                return SharedInputArray::from_buffer(buffer_from_array(data), hint);
            },
            py::arg("data"), py::arg("capacity") = py::none())
        .def_static(
            "from_file",
            [](const std::string& path, const py::object& capacity) {
                std::optional<std::size_t> hint;
                if (!capacity.is_none()) hint = capacity.cast<std::size_t>();
                return SharedInputArray::from_file(path, hint);
            },
            py::arg("path"), py::arg("capacity") = py::none())
        .def("to_file", &SharedInputArray::to_file, py::arg("path"))
        .def_property_readonly("id", &SharedInputArray::id)
        .def_property_readonly("capacity", &SharedInputArray::capacity)
        .def_property_readonly("freed", &SharedInputArray::freed)
        .def_property_readonly("shape", [](const SharedInputArray& self) { return self.shape(); })
        .def_property_readonly("dtype",
                               [](const SharedInputArray& self) {
                                   return dtype_to_string(self.dtype());
                               })
        .def_property_readonly("rows", &SharedInputArray::rows)
        .def("array", [](const SharedInputArray& self) { return array_from_buffer(self.view()); })
        .def(
            "write",
            [](SharedInputArray& self, std::size_t start, std::size_t stop,
               const py::array& rows) { self.write(RowRange{start, stop}, buffer_from_array(rows)); },
            py::arg("start"), py::arg("stop"), py::arg("rows"))
        .def("write_all",
             [](SharedInputArray& self, const py::array& data) {
                 self.write_all(buffer_from_array(data));
             })
        .def("reshape", &SharedInputArray::reshape, py::arg("shape"))
        .def("free", &SharedInputArray::free);

    // ---- replicated variables ------------------------------------------------------

    py::class_<ReplicatedVariable>(m, "Replicated")
        .def_property_readonly("id", &ReplicatedVariable::id)
        .def_property_readonly("world", &ReplicatedVariable::world)
        .def_property_readonly("dtype",
                               [](const ReplicatedVariable& self) {
                                   return dtype_to_string(self.dtype());
                               })
        .def("broadcast", &ReplicatedVariable::broadcast, py::arg("src_rank") = 0,
             py::call_guard<py::gil_scoped_release>())
        .def(
            "all_reduce",
            [](ReplicatedVariable& self, const std::string& op) {
                ReduceOp r = reduce_from_string(op);
                py::gil_scoped_release release;
                self.all_reduce(r);
            },
            py::arg("op") = "sum")
        .def(
            "reduce",
            [](ReplicatedVariable& self, const std::string& op, std::size_t dst_rank) {
                ReduceOp r = reduce_from_string(op);
                py::gil_scoped_release release;
                self.reduce(r, dst_rank);
            },
            py::arg("op"), py::arg("dst_rank"))
        .def("gather",
             [](const ReplicatedVariable& self) {
                 NdBuffer out;
                 {
                     py::gil_scoped_release release;
                     out = self.gather();
                 }
                 return array_from_buffer(out);
             })
        .def("get", [](const ReplicatedVariable& self,
                       std::size_t rank) { return array_from_buffer(self.get_value(rank)); },
             py::arg("rank"))
        .def(
            "set",
            [](ReplicatedVariable& self, std::size_t rank, const py::array& value) {
                self.set_value(rank, buffer_from_array(value));
            },
            py::arg("rank"), py::arg("value"))
        .def(
            "scatter",
            [](ReplicatedVariable& self, const py::array& data, const py::object& indexes) {
                NdBuffer buf = buffer_from_array(data);
                auto sel = selection_from_py(indexes);
                py::gil_scoped_release release;
                self.scatter_value(buf, sel);
            },
            py::arg("data"), py::arg("indexes") = py::none())
        .def_property_readonly("coherent", &ReplicatedVariable::replicas_coherent);

    m.def(
        "replicate",
        [](WorkerPool& pool, const py::array& init) {
            return replicate(pool, buffer_from_array(init));
        },
        py::arg("pool"), py::arg("init"));

    // ---- kernels and parallel functions -----------------------------------------------

    py::class_<PyKernelContext>(m, "KernelContext")
        .def_readonly("rank", &PyKernelContext::rank)
        .def_readonly("world", &PyKernelContext::world)
        .def_readonly("slice", &PyKernelContext::slice)
        .def_readonly("num_slices", &PyKernelContext::num_slices)
        .def_readonly("shard_rows", &PyKernelContext::shard_rows)
        .def("replica", [](const PyKernelContext& self, std::size_t i) {
            if (i >= self.replicas.size()) {
                throw ArgumentError("replica index " + std::to_string(i) + " out of range (" +
                                    std::to_string(self.replicas.size()) + " declared reads)");
            }
            return array_from_buffer(self.replicas[i]);
        });

    py::class_<Kernel>(m, "Kernel")
        .def_property_readonly("name", [](const Kernel& k) { return k.name; })
        .def_property_readonly("arity", [](const Kernel& k) { return k.arity; });

    m.def(
        "py_kernel",
        [](const std::string& name, std::size_t arity, const py::function& fn,
           const std::vector<ReplicatedVariable>& reads, std::size_t n_outputs,
           const std::vector<std::pair<ReplicatedVariable, std::string>>& updates) {
            return kernel_from_py(name, arity, fn, reads, n_outputs, updates);
        },
        py::arg("name"), py::arg("arity"), py::arg("fn"),
        py::arg("reads") = std::vector<ReplicatedVariable>{}, py::arg("n_outputs") = 1,
        py::arg("updates") = std::vector<std::pair<ReplicatedVariable, std::string>>{},
        "Wrap a Python callable (inputs, ctx) -> [outputs..., update_deltas...] as a kernel");

    py::class_<ParallelFunction>(m, "Function")
        .def_property_readonly("name", &ParallelFunction::name)
        .def_property_readonly("arity", &ParallelFunction::arity)
        .def_property_readonly("distributed", &ParallelFunction::distributed)
        .def(
            "call",
            [](ParallelFunction& self, const py::sequence& args, std::size_t num_slices,
               const py::object& indexes, const py::object& replica_indexes) {
                std::vector<FunctionArg> fargs = args_from_py(args);
                CallOptions opts = call_options_from_py(num_slices, indexes, replica_indexes);
                CallResult result = [&] {
                    py::gil_scoped_release release;
                    return self.call(fargs, opts);
                }();
                py::list outputs;
                for (const NdBuffer& out : result.outputs) outputs.append(array_from_buffer(out));
                return outputs;
            },
            py::arg("args"), py::arg("num_slices") = 1, py::arg("indexes") = py::none(),
            py::arg("replica_indexes") = py::none())
        .def(
            "call_with_report",
            [](ParallelFunction& self, const py::sequence& args, std::size_t num_slices,
               const py::object& indexes, const py::object& replica_indexes) {
                std::vector<FunctionArg> fargs = args_from_py(args);
                CallOptions opts = call_options_from_py(num_slices, indexes, replica_indexes);
                CallResult result = [&] {
                    py::gil_scoped_release release;
                    return self.call(fargs, opts);
                }();
                py::list outputs;
                for (const NdBuffer& out : result.outputs) outputs.append(array_from_buffer(out));
                return py::make_tuple(outputs, report_to_py(result.report));
            },
            py::arg("args"), py::arg("num_slices") = 1, py::arg("indexes") = py::none(),
            py::arg("replica_indexes") = py::none())
        .def(
            "call_serial",
            [](ParallelFunction& self, const py::sequence& args, const py::object& indexes) {
                std::vector<FunctionArg> fargs = args_from_py(args);
                auto sel = selection_from_py(indexes);
                std::vector<NdBuffer> result = [&] {
                    py::gil_scoped_release release;
                    return self.call_serial(fargs, sel);
                }();
                py::list outputs;
                for (const NdBuffer& out : result) outputs.append(array_from_buffer(out));
                return outputs;
            },
            py::arg("args"), py::arg("indexes") = py::none());

    m.def(
        "make_function",
        [](WorkerPool& pool, const Kernel& kernel, const std::vector<std::string>& inputs,
           const std::vector<std::string>& outputs,
           const std::vector<std::pair<ReplicatedVariable, std::string>>& updates) {
            return make_function_impl(pool, kernel, inputs, outputs, updates);
        },
        py::arg("pool"), py::arg("kernel"), py::arg("inputs"), py::arg("outputs"),
        py::arg("updates") = std::vector<std::pair<ReplicatedVariable, std::string>>{},
        "Register a parallel function (inputs: 'scatter'/'broadcast'; outputs: reduce ops)");

    m.def(
        "distribute", [](WorkerPool& pool) { distribute(pool); },
        py::call_guard<py::gil_scoped_release>(), py::arg("pool"),
        "Distribute every registered-but-undistributed function to the worker ranks");

    // ---- optimizers and the synchronous trainer -----------------------------------------

    py::class_<SgdRule>(m, "SgdRule").def(py::init<>());
    py::class_<MomentumRule>(m, "MomentumRule")
        .def(py::init([](double mu) { return MomentumRule{mu}; }), py::arg("mu") = 0.9)
        .def_readwrite("mu", &MomentumRule::mu);
    py::class_<RmsPropRule>(m, "RmsPropRule")
        .def(py::init([](double rho, double eps) { return RmsPropRule{rho, eps}; }),
             py::arg("rho") = 0.9, py::arg("eps") = 1e-6)
        .def_readwrite("rho", &RmsPropRule::rho)
        .def_readwrite("eps", &RmsPropRule::eps)
        ;
    py::class_<AdamRule>(m, "AdamRule")
        .def(py::init([](double beta1, double beta2, double eps) {
                 return AdamRule{beta1, beta2, eps};
             }),
             py::arg("beta1") = 0.9, py::arg("beta2") = 0.999, py::arg("eps") = 1e-8)
        .def_readwrite("beta1", &AdamRule::beta1)
        .def_readwrite("beta2", &AdamRule::beta2)
        .def_readwrite("eps", &AdamRule::eps);

    py::class_<FlatParamBlock>(m, "ParamBlock")
        .def_static(
            "create",
            [](WorkerPool& pool, const py::sequence& params) {
                std::vector<NdBuffer> buffers;
                for (const auto& p : params) {
                    buffers.push_back(buffer_from_array(
                        py::reinterpret_borrow<py::object>(p).cast<py::array>()));
                }
                return FlatParamBlock::create(pool, buffers);
            },
            py::arg("pool"), py::arg("params"))
        .def_readonly("params", &FlatParamBlock::params)
        .def_readonly("grads", &FlatParamBlock::grads)
        .def_readonly("length", &FlatParamBlock::length)
        .def_property_readonly("segments",
                               [](const FlatParamBlock& self) {
                                   py::list out;
                                   for (const FlatSegment& seg : self.segments) {
                                       out.append(py::make_tuple(seg.offset, seg.length,
                                                                 seg.shape));
                                   }
                                   return out;
                               })
        .def(
            "read_params",
            [](const FlatParamBlock& self, std::size_t rank) {
                py::list out;
                for (const NdBuffer& p : self.read_params(rank)) {
                    out.append(array_from_buffer(p));
                }
                return out;
            },
            py::arg("rank") = 0);

    py::class_<SyncSgd>(m, "Trainer")
        .def(py::init([](WorkerPool& pool, const FlatParamBlock& block, const py::object& rule,
                         double lr, bool all_reduce, const std::string& grad_op,
                         bool verify_coherence, bool check_finite) {
                 TrainerOptions opts;
                 opts.all_reduce = all_reduce;
                 opts.grad_op = reduce_from_string(grad_op);
                 opts.verify_coherence = verify_coherence;
                 opts.check_finite = check_finite;
                 return SyncSgd(pool, block, rule_from_py(rule), lr, opts);
             }),
             py::arg("pool"), py::arg("block"), py::arg("rule"), py::arg("lr") = 0.01,
             py::arg("all_reduce") = true, py::arg("grad_op") = "mean",
             py::arg("verify_coherence") = false, py::arg("check_finite") = false)
        .def(
            "train_step",
            [](SyncSgd& self, const ParallelFunction& f_grad, const py::sequence& args,
               std::size_t num_slices, const py::object& indexes) {
                std::vector<FunctionArg> fargs = args_from_py(args);
                CallOptions opts = call_options_from_py(num_slices, indexes, py::none());
                py::gil_scoped_release release;
                return self.train_step(f_grad, fargs, opts);
            },
            py::arg("f_grad"), py::arg("args"), py::arg("num_slices") = 1,
            py::arg("indexes") = py::none())
        .def_property_readonly("block", &SyncSgd::block)
        .def_property_readonly("step_count", &SyncSgd::step_count)
        .def_property_readonly("learning_rate", &SyncSgd::learning_rate)
        .def_property_readonly("last_report", [](const SyncSgd& self) {
            const StepReport& r = self.last_report();
            py::dict out;
            out["loss"] = r.loss;
            out["grad_call"] = report_to_py(r.grad_call);
            out["step_call"] = report_to_py(r.step_call);
            out["allreduce_s"] = r.allreduce_s;
            out["total_s"] = r.total_s;
            return out;
        });

    // ---- MLP workload helpers ------------------------------------------------------

    py::class_<MlpConfig>(m, "MlpConfig")
        .def(py::init([](std::size_t in_dim, std::size_t width, std::size_t out_dim,
                         std::size_t layers, std::uint64_t seed) {
                 MlpConfig cfg;
                 cfg.in_dim = in_dim;
                 cfg.width = width;
                 cfg.out_dim = out_dim;
                 cfg.layers = layers;
                 cfg.seed = seed;
                 return cfg;
             }),
             py::arg("in_dim") = 8, py::arg("width") = 32, py::arg("out_dim") = 4,
             py::arg("layers") = 2, py::arg("seed") = 0)
        .def_readwrite("in_dim", &MlpConfig::in_dim)
        .def_readwrite("width", &MlpConfig::width)
        .def_readwrite("out_dim", &MlpConfig::out_dim)
        .def_readwrite("layers", &MlpConfig::layers)
        .def_readwrite("seed", &MlpConfig::seed);

    m.def(
        "mlp_init_params",
        [](const MlpConfig& cfg, const std::string& dtype) {
            py::list out;
            for (const NdBuffer& p : mlp_init_params(cfg, dtype_from_string(dtype))) {
                out.append(array_from_buffer(p));
            }
            return out;
        },
        py::arg("config"), py::arg("dtype") = "f64");

    m.def(
        "mlp_make_dataset",
        [](std::size_t rows, const MlpConfig& cfg, std::uint64_t seed, const std::string& dtype) {
            Dataset d = mlp_make_dataset(rows, cfg, seed, dtype_from_string(dtype));
            return py::make_tuple(array_from_buffer(d.x), array_from_buffer(d.y));
        },
        py::arg("rows"), py::arg("config"), py::arg("seed") = 0, py::arg("dtype") = "f64");

    m.def("mlp_grad_kernel",
          [](const FlatParamBlock& block, const std::string& name) {
              return mlp_grad_kernel(block, name);
          },
          py::arg("block"), py::arg("name") = "mlp_grad",
          "Native shard-mean gradient kernel over a flattened MLP parameter block");

    // ---- tensor file round trip ------------------------------------------------------

    m.def(
        "save_tensor",
        [](const std::string& path, const py::array& data) {
            save_tensor(path, buffer_from_array(data));
        },
        py::arg("path"), py::arg("data"));
    m.def(
        "load_tensor", [](const std::string& path) { return array_from_buffer(load_tensor(path)); },
        py::arg("path"));

    // ---- benchmark ---------------------------------------------------------------------

    m.def(
        "run_bench_json",
        [](const std::vector<std::size_t>& workers, std::size_t steps, std::size_t batch,
           const std::string& batch_mode, bool shuffle, bool all_reduce, std::size_t num_slices,
           std::size_t width, std::size_t layers, std::uint64_t seed, std::size_t in_dim,
           std::size_t out_dim, double learning_rate, bool pin_threads) {
            BenchConfig cfg;
            cfg.workers = workers;
            cfg.steps = steps;
            cfg.batch = batch;
            cfg.batch_mode = parse_batch_mode(batch_mode);
            cfg.shuffle = shuffle;
            cfg.all_reduce = all_reduce;
            cfg.num_slices = num_slices;
            cfg.width = width;
            cfg.layers = layers;
            cfg.seed = seed;
            cfg.in_dim = in_dim;
            cfg.out_dim = out_dim;
            cfg.learning_rate = learning_rate;
            cfg.pin_threads = pin_threads;
            std::string out;
            {
                py::gil_scoped_release release;
                out = report_to_json(run_bench(cfg));
            }
            return out;
        },
        py::arg("workers") = std::vector<std::size_t>{1, 2}, py::arg("steps") = 4,
        py::arg("batch") = 16, py::arg("batch_mode") = "scaled", py::arg("shuffle") = true,
        py::arg("all_reduce") = true, py::arg("num_slices") = 1, py::arg("width") = 32,
        py::arg("layers") = 2, py::arg("seed") = 0, py::arg("in_dim") = 16,
        py::arg("out_dim") = 4, py::arg("learning_rate") = 1e-3, py::arg("pin_threads") = false,
        "Run the scaling benchmark and return the JSON report as a string");
}

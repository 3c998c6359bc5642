#include "synkpar/bench.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "synkpar/function.hpp"
#include "synkpar/mlp.hpp"
#include "synkpar/sgd.hpp"
#include "synkpar/shared_input.hpp"
#include "synkpar/worker_pool.hpp"

namespace synkpar {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void validate_config(const BenchConfig& cfg) {
    if (cfg.workers.empty()) throw ArgumentError("bench: workers list is empty");
    for (std::size_t w : cfg.workers) {
        if (w == 0) throw ArgumentError("bench: worker counts must be >= 1");
    }
    if (cfg.steps == 0) throw ArgumentError("bench: steps must be >= 1");
    if (cfg.batch == 0) throw ArgumentError("bench: batch must be >= 1");
    if (cfg.num_slices == 0) throw ArgumentError("bench: num_slices must be >= 1");
    if (cfg.layers == 0) throw ArgumentError("bench: layers must be >= 1");
    if (cfg.width == 0 || cfg.in_dim == 0 || cfg.out_dim == 0) {
        throw ArgumentError("bench: model dimensions must be positive");
    }
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t step) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (step + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Base selection for one step: `batch` rows out of `rows`. Shuffled steps
// draw a seeded with-replacement sample; unshuffled steps walk the dataset
// cyclically (contiguous range whenever it does not wrap).
IndexSelection base_selection(const BenchConfig& cfg, std::size_t rows, std::size_t step) {
    if (cfg.shuffle) {
        std::mt19937_64 rng(mix_seed(cfg.seed, step));
        std::uniform_int_distribution<std::size_t> dist(0, rows - 1);
        IndexList list(cfg.batch);
        for (std::size_t& v : list) v = dist(rng);
        return list;
    }
    std::size_t start = (step * cfg.batch) % rows;
    if (start + cfg.batch <= rows) return RowRange{start, start + cfg.batch};
    IndexList list(cfg.batch);
    for (std::size_t i = 0; i < cfg.batch; ++i) list[i] = (start + i) % rows;
    return list;
}

// Scaled mode tiles the base selection once per rank, so every rank computes
// the identical base batch: per-step numerics stay independent of W while the
// work per step grows by W. Fixed mode scatters the base batch across ranks.
IndexSelection step_selection(const BenchConfig& cfg, const IndexSelection& base,
                              std::size_t world) {
    if (cfg.batch_mode == BatchMode::Fixed || world == 1) return base;
    IndexList tiled;
    tiled.reserve(cfg.batch * world);
    if (const auto* range = std::get_if<RowRange>(&base)) {
        for (std::size_t r = 0; r < world; ++r) {
            for (std::size_t i = range->start; i < range->stop; ++i) tiled.push_back(i);
        }
    } else {
        const auto& list = std::get<IndexList>(base);
        for (std::size_t r = 0; r < world; ++r) {
            tiled.insert(tiled.end(), list.begin(), list.end());
        }
    }
    return tiled;
}

std::size_t global_rows_per_step(const BenchConfig& cfg, std::size_t world) {
    return cfg.batch_mode == BatchMode::ScaledByWorkers ? cfg.batch * world : cfg.batch;
}

} // namespace

const char* batch_mode_name(BatchMode mode) noexcept {
    return mode == BatchMode::Fixed ? "fixed" : "scaled";
}

BatchMode parse_batch_mode(const std::string& text) {
    if (text == "fixed") return BatchMode::Fixed;
    if (text == "scaled") return BatchMode::ScaledByWorkers;
    throw ArgumentError("bench: batch mode must be 'fixed' or 'scaled', got '" + text + "'");
}

ReportFormat parse_report_format(const std::string& text) {
    if (text == "json") return ReportFormat::Json;
    if (text == "csv") return ReportFormat::Csv;
    throw ArgumentError("bench: format must be 'json' or 'csv', got '" + text + "'");
}

bool parse_on_off(const std::string& text) {
    if (text == "on") return true;
    if (text == "off") return false;
    throw ArgumentError("bench: expected 'on' or 'off', got '" + text + "'");
}

std::vector<std::size_t> parse_worker_list(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) {
            throw ArgumentError("bench: empty entry in workers list '" + text + "'");
        }
        std::size_t pos = 0;
        unsigned long v = 0;
        try {
            v = std::stoul(item, &pos);
        } catch (const std::exception&) {
            throw ArgumentError("bench: bad worker count '" + item + "'");
        }
        if (pos != item.size() || v == 0) {
            throw ArgumentError("bench: bad worker count '" + item + "'");
        }
        out.push_back(static_cast<std::size_t>(v));
    }
    if (out.empty()) throw ArgumentError("bench: workers list is empty");
    return out;
}

BenchReport run_bench(const BenchConfig& cfg) {
    validate_config(cfg);

    MlpConfig model;
    model.in_dim = cfg.in_dim;
    model.width = cfg.width;
    model.out_dim = cfg.out_dim;
    model.layers = cfg.layers;
    model.seed = cfg.seed;

    std::size_t rows = cfg.dataset_rows ? cfg.dataset_rows
                                        : std::max<std::size_t>(1024, 2 * cfg.batch);
    Dataset data = mlp_make_dataset(rows, model, cfg.seed, DType::Float64);
    SharedInputArray sx = SharedInputArray::from_buffer(data.x);
    SharedInputArray sy = SharedInputArray::from_buffer(data.y);

    BenchReport report;
    report.config = cfg;

    for (std::size_t world : cfg.workers) {
        ForkOptions fopts;
        fopts.workers = world;
        fopts.pin_threads = cfg.pin_threads;
        WorkerPool pool = WorkerPool::fork(fopts);

        // Same seed at every W: identical init and dataset, so loss
        // trajectories are comparable across worker counts.
        FlatParamBlock block = FlatParamBlock::create(pool, mlp_init_params(model, DType::Float64));
        ParallelFunction f_grad =
            function(pool, mlp_grad_kernel(block),
                     {InputSpec{InputMode::Scatter}, InputSpec{InputMode::Scatter}},
                     {OutputSpec{ReduceOp::Mean}}, mlp_grad_updates(block));

        TrainerOptions topts;
        topts.all_reduce = cfg.all_reduce;
        topts.grad_op = ReduceOp::Mean;
        SyncSgd trainer(pool, block, AdamRule{}, cfg.learning_rate, topts);

        BenchRun run;
        run.workers = world;

        auto t_run = Clock::now();
        for (std::size_t step = 0; step < cfg.steps; ++step) {
            auto t_sel = Clock::now();
            IndexSelection base = base_selection(cfg, rows, step);
            IndexSelection selection = step_selection(cfg, base, world);
            double select_s = seconds_since(t_sel);

            CallOptions copts;
            copts.num_slices = cfg.num_slices;
            copts.indexes = std::move(selection);

            double loss = trainer.train_step(f_grad, {FunctionArg(sx), FunctionArg(sy)}, copts);
            const StepReport& sr = trainer.last_report();

            run.losses.push_back(loss);
            run.function_s += sr.grad_call.compute_mean_s() + sr.step_call.compute_mean_s();
            run.shuffle_s += select_s + sr.grad_call.scatter_s;
            run.straggler_s += sr.grad_call.straggler_s + sr.step_call.straggler_s;
            run.allreduce_s += sr.allreduce_s;
        }
        run.total_s = seconds_since(t_run);

        run.replicas_coherent = trainer.block().params.replicas_coherent();

        double denom = run.total_s > 0.0 ? run.total_s : 1e-12;
        run.steps_per_s = static_cast<double>(cfg.steps) / denom;
        run.rows_per_s =
            static_cast<double>(cfg.steps * global_rows_per_step(cfg, world)) / denom;

        report.runs.push_back(std::move(run));
        pool.shutdown(); // one live pool at a time
    }

    double base1 = 0.0, base2 = 0.0;
    for (const BenchRun& r : report.runs) {
        if (r.workers == 1 && base1 == 0.0) base1 = r.rows_per_s;
        if (r.workers == 2 && base2 == 0.0) base2 = r.rows_per_s;
    }
    for (BenchRun& r : report.runs) {
        r.speedup_vs_1 = base1 > 0.0 ? r.rows_per_s / base1 : 0.0;
        r.speedup_vs_2 = base2 > 0.0 ? r.rows_per_s / base2 : 0.0;
    }

    if (!cfg.report_path.empty()) emit_report(report, cfg.format, cfg.report_path);
    return report;
}

std::string report_to_json(const BenchReport& report) {
    nlohmann::ordered_json config;
    config["workers"] = report.config.workers;
    config["steps"] = report.config.steps;
    config["batch"] = report.config.batch;
    config["batch_mode"] = batch_mode_name(report.config.batch_mode);
    config["shuffle"] = report.config.shuffle;
    config["all_reduce"] = report.config.all_reduce;
    config["num_slices"] = report.config.num_slices;
    config["width"] = report.config.width;
    config["layers"] = report.config.layers;
    config["seed"] = report.config.seed;
    config["in_dim"] = report.config.in_dim;
    config["out_dim"] = report.config.out_dim;
    config["dataset_rows"] = report.config.dataset_rows;
    config["learning_rate"] = report.config.learning_rate;
    // CPU kernels run synchronously inside the phase, so per-rank times are
    // true execution times on a monotonic clock.
    config["timing"] = "synchronous CPU kernels, steady clock";

    nlohmann::ordered_json runs = nlohmann::ordered_json::array();
    for (const BenchRun& r : report.runs) {
        nlohmann::ordered_json jr;
        jr["workers"] = r.workers;
        jr["total_s"] = r.total_s;
        jr["function_s"] = r.function_s;
        jr["shuffle_s"] = r.shuffle_s;
        jr["straggler_s"] = r.straggler_s;
        jr["allreduce_s"] = r.allreduce_s;
        jr["steps_per_s"] = r.steps_per_s;
        jr["rows_per_s"] = r.rows_per_s;
        jr["speedup_vs_1"] = r.speedup_vs_1;
        jr["speedup_vs_2"] = r.speedup_vs_2;
        runs.push_back(std::move(jr));
    }

    nlohmann::ordered_json root;
    root["config"] = std::move(config);
    root["runs"] = std::move(runs);
    return root.dump(2) + "\n";
}

std::string report_to_csv(const BenchReport& report) {
    std::ostringstream out;
    out << "workers,total_s,function_s,shuffle_s,straggler_s,allreduce_s,steps_per_s,"
           "rows_per_s,speedup_vs_1,speedup_vs_2\n";
    out.precision(17);
    for (const BenchRun& r : report.runs) {
        out << r.workers << ',' << r.total_s << ',' << r.function_s << ',' << r.shuffle_s << ','
            << r.straggler_s << ',' << r.allreduce_s << ',' << r.steps_per_s << ','
            << r.rows_per_s << ',' << r.speedup_vs_1 << ',' << r.speedup_vs_2 << '\n';
    }
    return out.str();
}

void emit_report(const BenchReport& report, ReportFormat format, const std::string& path) {
    std::string text =
        format == ReportFormat::Json ? report_to_json(report) : report_to_csv(report);
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw IoError("bench: cannot open report path '" + path + "'");
    file.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!file) throw IoError("bench: failed writing report to '" + path + "'");
}

} // namespace synkpar

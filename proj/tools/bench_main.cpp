// bench: scaling benchmark for the synkpar worker-pool engine.
//
//   bench --workers 1,2,4,8 --steps 20 --batch 64 --batch-mode scaled \
//         --shuffle on --all-reduce on --slices 1 --width 512 --layers 4 \
//         --seed 7 --report out.json --format json
//
// Without --report the serialized report is printed to stdout.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "synkpar/bench.hpp"
#include "synkpar/errors.hpp"

int main(int argc, char** argv) {
    CLI::App app{"synkpar scaling benchmark"};

    std::string workers = "1,2,4";
    std::size_t steps = 20;
    std::size_t batch = 64;
    std::string batch_mode = "scaled";
    std::string shuffle = "on";
    std::string all_reduce = "on";
    std::size_t slices = 1;
    std::size_t width = 512;
    std::size_t layers = 4;
    std::uint64_t seed = 0;
    std::string report_path;
    std::string format = "json";

    app.add_option("--workers", workers, "Comma-separated worker counts (e.g. 1,2,4,8)");
    app.add_option("--steps", steps, "Training steps per worker count");
    app.add_option("--batch", batch, "Per-worker batch (scaled mode) / global batch (fixed mode)");
    app.add_option("--batch-mode", batch_mode, "fixed|scaled");
    app.add_option("--shuffle", shuffle, "on|off: sample batch rows vs walk the dataset");
    app.add_option("--all-reduce", all_reduce, "on|off: gradient all-reduce ablation");
    app.add_option("--slices", slices, "Input slices per call (num_slices)");
    app.add_option("--width", width, "Hidden width of the model");
    app.add_option("--layers", layers, "Number of weight layers");
    app.add_option("--seed", seed, "RNG seed (data, init, shuffles)");
    app.add_option("--report", report_path, "Report file path (omit to print to stdout)");
    app.add_option("--format", format, "json|csv");

    CLI11_PARSE(app, argc, argv);

    try {
        synkpar::BenchConfig cfg;
        cfg.workers = synkpar::parse_worker_list(workers);
        cfg.steps = steps;
        cfg.batch = batch;
        cfg.batch_mode = synkpar::parse_batch_mode(batch_mode);
        cfg.shuffle = synkpar::parse_on_off(shuffle);
        cfg.all_reduce = synkpar::parse_on_off(all_reduce);
        cfg.num_slices = slices;
        cfg.width = width;
        cfg.layers = layers;
        cfg.seed = seed;
        cfg.report_path = report_path;
        cfg.format = synkpar::parse_report_format(format);

        synkpar::BenchReport report = synkpar::run_bench(cfg);

        if (report_path.empty()) {
            std::string text = cfg.format == synkpar::ReportFormat::Json
                                   ? synkpar::report_to_json(report)
                                   : synkpar::report_to_csv(report);
            std::fputs(text.c_str(), stdout);
        } else {
            for (const synkpar::BenchRun& run : report.runs) {
                std::printf("W=%zu  total=%.3fs  function=%.3fs  shuffle=%.3fs  "
                            "straggler=%.3fs  allreduce=%.3fs  rows/s=%.1f  speedup_vs_1=%.2f\n",
                            run.workers, run.total_s, run.function_s, run.shuffle_s,
                            run.straggler_s, run.allreduce_s, run.rows_per_s, run.speedup_vs_1);
            }
            std::printf("report written to %s\n", report_path.c_str());
        }
        return 0;
    } catch (const synkpar::ArgumentError& e) {
        std::fprintf(stderr, "bench: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "bench: %s\n", e.what());
        return 1;
    }
}

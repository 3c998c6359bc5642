#pragma once

// Benchmark harness: scaling curves over worker counts with a
// Table-style timing breakdown (function / shuffle / straggler /
// all-reduce), fixed-vs-scaled batch modes, shuffle on/off, and the
// gradient all-reduce ablation. All runs are deterministic from the seed.

#include <cstdint>
#include <string>
#include <vector>

#include "synkpar/tensor.hpp"

namespace synkpar {

enum class BatchMode {
    Fixed,          // same global batch at every worker count (strong scaling)
    ScaledByWorkers // per-worker batch held constant: global = batch * W
};

enum class ReportFormat { Json, Csv };

struct BenchConfig {
    std::vector<std::size_t> workers{1, 2, 4};
    std::size_t steps = 20;
    std::size_t batch = 64; // per-worker batch (scaled mode) / global batch (fixed mode)
    BatchMode batch_mode = BatchMode::ScaledByWorkers;
    bool shuffle = true;
    bool all_reduce = true;
    std::size_t num_slices = 1;
    std::size_t width = 512;
    std::size_t layers = 4;
    std::uint64_t seed = 0;
    std::string report_path; // empty: do not write a file
    ReportFormat format = ReportFormat::Json;
    bool pin_threads = true;
    // model/data details not exposed on the CLI
    std::size_t in_dim = 64;
    std::size_t out_dim = 16;
    std::size_t dataset_rows = 0; // 0: auto-size from the batch
    double learning_rate = 1e-3;
};

struct BenchRun {
    std::size_t workers = 0;
    double total_s = 0.0;
    double function_s = 0.0;
    double shuffle_s = 0.0;
    double straggler_s = 0.0;
    double allreduce_s = 0.0;
    double steps_per_s = 0.0;
    double rows_per_s = 0.0;
    double speedup_vs_1 = 0.0; // 0 when no W=1 run is present
    double speedup_vs_2 = 0.0; // 0 when no W=2 run is present
    // not part of the file schema; used by tests and the determinism contract
    std::vector<double> losses;
    bool replicas_coherent = true;
};

struct BenchReport {
    BenchConfig config;
    std::vector<BenchRun> runs;
};

// Runs the full sweep over config.workers (one pool at a time) and writes the
// report file when report_path is set.
BenchReport run_bench(const BenchConfig& config);

std::string report_to_json(const BenchReport& report);
std::string report_to_csv(const BenchReport& report);

// Writes the report in the given format; unwritable path -> IoError.
void emit_report(const BenchReport& report, ReportFormat format, const std::string& path);

const char* batch_mode_name(BatchMode mode) noexcept;
BatchMode parse_batch_mode(const std::string& text);         // "fixed" | "scaled"
ReportFormat parse_report_format(const std::string& text);   // "json" | "csv"
bool parse_on_off(const std::string& text);                  // "on" | "off"
std::vector<std::size_t> parse_worker_list(const std::string& text); // "1,2,4"

} // namespace synkpar

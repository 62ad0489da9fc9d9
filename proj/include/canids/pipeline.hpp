#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace canids::pipeline {

// Subcommand entry points. The CLI is a thin flag-parsing wrapper over these
// so tests can drive the exact same file-to-file paths.

struct GenerateOpts {
    std::string config_path;
    std::string out_path;
};
void run_generate(const GenerateOpts& o);

struct InjectOpts {
    std::string in_path;
    std::string out_path;
    std::string config_path;
    std::string attack; // "dos" | "fuzz"
};
void run_inject(const InjectOpts& o);

struct TrainOpts {
    std::string dos_path, fuzz_path;
    std::string out_bundle;
    std::string history_path;
    std::string checkpoint_dir; // default: <out_bundle>.checkpoints
    int epochs = 25;
    int phase2_epochs = -1; // -1: same as epochs
    int batch_size = 64;
    double learning_rate = 1e-4;
    uint64_t seed = 1;
    bool frozen_clock = false;
};
void run_train(const TrainOpts& o);

struct QuantizeOpts {
    std::string model_bundle;
    std::vector<std::string> calib_logs;
    std::string out_bundle;
    int calib_windows = 1024;
    int fine_tune_epochs = 0;
    int batch_size = 64;
    double learning_rate = 1e-4;
    uint64_t seed = 1;
};
void run_quantize(const QuantizeOpts& o);

struct EvaluateOpts {
    std::string bundle;
    std::string log_path;
    std::string attack; // also the plain-T hint
    std::string report_path;
    std::string roc_csv_path; // optional
    double threshold = 0.5;
    bool frozen_clock = false;
};
void run_evaluate(const EvaluateOpts& o);

struct BenchOpts {
    std::string bundle;
    std::string log_path; // optional; synthetic ids otherwise
    std::string report_path;
    int reps = 2000;
    int warmup = 200;
    double bitrate = 1e6;
    int dlc = 8;
    bool stuffed = true;
    int threads = 1; // > 1 adds a concurrent-throughput measurement
    uint64_t seed = 1;
    bool frozen_clock = false;
};
void run_bench(const BenchOpts& o);

struct DetectOpts {
    std::string bundle;
    std::string log_path;
    std::string out_path;
    double threshold = 0.5;
};
void run_detect(const DetectOpts& o);

std::string host_description();

} // namespace canids::pipeline

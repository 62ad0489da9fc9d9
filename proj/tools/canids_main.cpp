// canids: synthesize CAN traffic, inject attacks, train/quantize the
// detector, and run evaluation, latency benchmarks and per-frame detection.

#include <cstdio>
#include <exception>

#include <CLI11.hpp>

#include "canids/error.hpp"
#include "canids/pipeline.hpp"

namespace {

using namespace canids;
using namespace canids::pipeline;

int exit_code_for(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Usage: return 1;
    case ErrorKind::Parse:
    case ErrorKind::Validation:
    case ErrorKind::Domain:
    case ErrorKind::Shape:
    case ErrorKind::Checksum:
    case ErrorKind::Version: return 2;
    case ErrorKind::Io:
    case ErrorKind::Training:
    case ErrorKind::Quantization: return 3;
    }
    return 3;
}

const char* class_for(ErrorKind kind) {
    const int code = exit_code_for(kind);
    return code == 1 ? "usage" : code == 2 ? "data" : "runtime";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"CAN intrusion detection pipeline"};
    app.require_subcommand(1);

    GenerateOpts gen;
    auto* cmd_gen = app.add_subcommand("generate", "synthesize a benign CAN log");
    cmd_gen->add_option("--config", gen.config_path, "JSON config with a 'benign' section")
        ->required();
    cmd_gen->add_option("--out", gen.out_path, "output log CSV")->required();

    InjectOpts inj;
    auto* cmd_inj = app.add_subcommand("inject", "inject an attack into a log");
    cmd_inj->add_option("--in", inj.in_path, "input log CSV")->required();
    cmd_inj->add_option("--out", inj.out_path, "output log CSV")->required();
    cmd_inj->add_option("--config", inj.config_path, "JSON config with a 'dos'/'fuzz' section")
        ->required();
    cmd_inj->add_option("--attack", inj.attack, "dos | fuzz")->required();

    TrainOpts tr;
    auto* cmd_tr = app.add_subcommand("train", "transfer-train the detector on two attack logs");
    cmd_tr->add_option("--dos", tr.dos_path, "DoS-labeled log CSV")->required();
    cmd_tr->add_option("--fuzz", tr.fuzz_path, "fuzzing-labeled log CSV")->required();
    cmd_tr->add_option("--out", tr.out_bundle, "output model bundle directory")->required();
    cmd_tr->add_option("--history", tr.history_path, "training history JSON");
    cmd_tr->add_option("--checkpoint-dir", tr.checkpoint_dir, "checkpoint directory");
    cmd_tr->add_option("--epochs", tr.epochs, "phase-1 epochs");
    cmd_tr->add_option("--phase2-epochs", tr.phase2_epochs, "phase-2 epochs (default: --epochs)");
    cmd_tr->add_option("--batch", tr.batch_size, "minibatch size");
    cmd_tr->add_option("--lr", tr.learning_rate, "learning rate");
    cmd_tr->add_option("--seed", tr.seed, "master seed");
    cmd_tr->add_flag("--frozen-clock", tr.frozen_clock, "freeze report timestamps");

    QuantizeOpts qz;
    auto* cmd_qz = app.add_subcommand("quantize", "quantize a float bundle to int8");
    cmd_qz->add_option("--model", qz.model_bundle, "float model bundle")->required();
    cmd_qz->add_option("--calib", qz.calib_logs, "calibration log CSV (repeatable)")->required();
    cmd_qz->add_option("--out", qz.out_bundle, "output quant bundle directory")->required();
    cmd_qz->add_option("--calib-windows", qz.calib_windows, "windows sampled for calibration");
    cmd_qz->add_option("--fine-tune-epochs", qz.fine_tune_epochs,
                       "post-quantization fine-tuning epochs (0 = plain PTQ)");
    cmd_qz->add_option("--batch", qz.batch_size, "fine-tuning batch size");
    cmd_qz->add_option("--lr", qz.learning_rate, "fine-tuning learning rate");
    cmd_qz->add_option("--seed", qz.seed, "seed for sampling/fine-tuning");

    EvaluateOpts ev;
    auto* cmd_ev = app.add_subcommand("evaluate", "evaluate a bundle on a labeled log");
    cmd_ev->add_option("--model", ev.bundle, "model bundle (float or quant)")->required();
    cmd_ev->add_option("--log", ev.log_path, "labeled log CSV")->required();
    cmd_ev->add_option("--attack", ev.attack, "dos | fuzz (report tag and plain-T hint)")
        ->required();
    cmd_ev->add_option("--report", ev.report_path, "output report JSON")->required();
    cmd_ev->add_option("--roc-csv", ev.roc_csv_path, "optional ROC points CSV");
    cmd_ev->add_option("--threshold", ev.threshold, "decision threshold");
    cmd_ev->add_flag("--frozen-clock", ev.frozen_clock, "freeze report timestamps");

    BenchOpts be;
    auto* cmd_be = app.add_subcommand("bench", "measure per-frame latency and line-rate budget");
    cmd_be->add_option("--model", be.bundle, "model bundle (float or quant)")->required();
    cmd_be->add_option("--log", be.log_path, "log CSV for the id stream (default: synthetic)");
    cmd_be->add_option("--report", be.report_path, "output report JSON")->required();
    cmd_be->add_option("--reps", be.reps, "total measured invocations");
    cmd_be->add_option("--warmup", be.warmup, "leading invocations to discard");
    cmd_be->add_option("--bitrate", be.bitrate, "CAN bitrate in bit/s");
    cmd_be->add_option("--dlc", be.dlc, "frame DLC for the budget");
    cmd_be->add_flag("--stuffed,!--no-stuffed", be.stuffed, "worst-case bit stuffing");
    cmd_be->add_option("--threads", be.threads, "add a concurrent-throughput run when > 1");
    cmd_be->add_option("--seed", be.seed, "seed for the synthetic id stream");
    cmd_be->add_flag("--frozen-clock", be.frozen_clock, "freeze report timestamps");

    DetectOpts de;
    auto* cmd_de = app.add_subcommand("detect", "per-frame verdicts for a log");
    cmd_de->add_option("--model", de.bundle, "model bundle (float or quant)")->required();
    cmd_de->add_option("--log", de.log_path, "input log CSV")->required();
    cmd_de->add_option("--out", de.out_path, "verdict CSV (timestamp,id,score,verdict)")
        ->required();
    cmd_de->add_option("--threshold", de.threshold, "decision threshold");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "canids: error[usage]: %s\n", e.what());
        return 1;
    }

    try {
        if (*cmd_gen) run_generate(gen);
        else if (*cmd_inj) run_inject(inj);
        else if (*cmd_tr) run_train(tr);
        else if (*cmd_qz) run_quantize(qz);
        else if (*cmd_ev) run_evaluate(ev);
        else if (*cmd_be) run_bench(be);
        else if (*cmd_de) run_detect(de);
    } catch (const Error& e) {
        std::fprintf(stderr, "canids: error[%s]: %s\n", class_for(e.kind()), e.what());
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "canids: error[runtime]: %s\n", e.what());
        return 3;
    }
    return 0;
}

#include "canids/pipeline.hpp"

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <thread>
#include <variant>

#include <nlohmann/json.hpp>

#include "canids/bench.hpp"
#include "canids/canbus.hpp"
#include "canids/error.hpp"
#include "canids/eval.hpp"
#include "canids/features.hpp"
#include "canids/model_io.hpp"
#include "canids/train.hpp"
#include "canids/trafgen.hpp"

namespace canids::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("bad JSON in " + path + ": " + e.what());
    }
    return j;
}

void write_json_file(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path);
}

std::string timestamp_field(bool frozen) {
    if (frozen) return "1970-01-01T00:00:00Z";
    char buf[32];
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::optional<FrameLabel> hint_from_attack(const std::string& attack) {
    if (attack == "dos") return FrameLabel::DosAttack;
    if (attack == "fuzz") return FrameLabel::FuzzingAttack;
    if (attack.empty()) return std::nullopt;
    throw UsageError("unknown attack kind '" + attack + "' (expected dos or fuzz)");
}

} // namespace

std::string host_description() {
    std::string cpu = "unknown-cpu";
    std::ifstream in("/proc/cpuinfo");
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("model name", 0) == 0) {
            const auto colon = line.find(':');
            if (colon != std::string::npos) {
                cpu = line.substr(colon + 1);
                while (!cpu.empty() && cpu.front() == ' ') cpu.erase(cpu.begin());
            }
            break;
        }
    }
    return cpu + " / " + std::to_string(std::thread::hardware_concurrency()) + " hw threads";
}

void run_generate(const GenerateOpts& o) {
    const json cfg = load_json_file(o.config_path);
    if (!cfg.contains("benign")) throw ValidationError("config has no 'benign' section");
    const BenignProfile profile = benign_profile_from_json(cfg.at("benign"));
    const FrameLog log = gen_benign(profile);
    save_log_file(log, o.out_path);
}

void run_inject(const InjectOpts& o) {
    const json cfg = load_json_file(o.config_path);
    const FrameLog log = load_log_file(o.in_path, hint_from_attack(o.attack));
    FrameLog out;
    if (o.attack == "dos") {
        if (!cfg.contains("dos")) throw ValidationError("config has no 'dos' section");
        out = inject_dos(log, dos_params_from_json(cfg.at("dos")));
    } else if (o.attack == "fuzz") {
        if (!cfg.contains("fuzz")) throw ValidationError("config has no 'fuzz' section");
        out = inject_fuzzing(log, fuzz_params_from_json(cfg.at("fuzz")));
    } else {
        throw UsageError("inject needs --attack dos or --attack fuzz");
    }
    save_log_file(out, o.out_path);
}

namespace {

json history_to_json(const TrainHistory& h) {
    json epochs = json::array();
    for (const EpochRecord& r : h.epochs) {
        epochs.push_back({{"epoch", r.epoch},
                          {"train_loss", r.train_loss},
                          {"val_loss", r.val_loss},
                          {"val_accuracy", r.val_accuracy},
                          {"checkpoint", r.checkpoint}});
    }
    return {{"epochs", epochs}, {"best_epoch", h.best_epoch}, {"early_stopped", h.early_stopped}};
}

} // namespace

void run_train(const TrainOpts& o) {
    const FrameLog dos_log = load_log_file(o.dos_path, FrameLabel::DosAttack);
    const FrameLog fuzz_log = load_log_file(o.fuzz_path, FrameLabel::FuzzingAttack);
    const std::vector<LabeledWindow> dos_windows = stream_windows(dos_log);
    const std::vector<LabeledWindow> fuzz_windows = stream_windows(fuzz_log);

    ModelConfig arch; // deployed architecture
    TrainConfig cfg;
    cfg.learning_rate = o.learning_rate;
    cfg.epochs = o.epochs;
    cfg.batch_size = o.batch_size;
    cfg.seed = o.seed;
    cfg.checkpoint_dir =
        o.checkpoint_dir.empty() ? o.out_bundle + ".checkpoints" : o.checkpoint_dir;

    const int phase2 = o.phase2_epochs < 0 ? o.epochs : o.phase2_epochs;
    TransferResult result = transfer_train(arch, cfg, phase2, dos_windows, fuzz_windows);
    save_bundle(result.model, o.out_bundle);

    char crc_hex[16];
    std::snprintf(crc_hex, sizeof(crc_hex), "%08x", parameter_crc(result.model));
    json report;
    report["config"] = {{"dos_log", o.dos_path},
                        {"fuzz_log", o.fuzz_path},
                        {"epochs", o.epochs},
                        {"phase2_epochs", phase2},
                        {"batch_size", o.batch_size},
                        {"learning_rate", o.learning_rate},
                        {"seed", o.seed},
                        {"checkpoint_dir", cfg.checkpoint_dir},
                        {"out_bundle", o.out_bundle}};
    report["phase1"] = history_to_json(result.history1);
    report["phase2"] = history_to_json(result.history2);
    report["final_eval"] = {{"dos", eval_report_to_json(result.dos_report)},
                            {"fuzz", eval_report_to_json(result.fuzz_report)}};
    report["parameter_crc32"] = crc_hex;
    report["generated_at"] = timestamp_field(o.frozen_clock);
    if (!o.history_path.empty()) write_json_file(report, o.history_path);
}

void run_quantize(const QuantizeOpts& o) {
    CnnModel model = load_float_bundle(o.model_bundle);
    const CnnModel folded = model.bn_folded ? std::move(model) : fold_batchnorm(model);

    if (o.calib_logs.empty()) throw UsageError("quantize needs at least one --calib log");
    std::vector<LabeledWindow> windows;
    for (const std::string& path : o.calib_logs) {
        const FrameLog log = load_log_file(path);
        std::vector<LabeledWindow> w = stream_windows(log);
        windows.insert(windows.end(), w.begin(), w.end());
    }
    if (windows.empty()) throw DomainError("calibration logs produced no windows");

    // Seeded uniform sample of the calibration windows.
    std::vector<int64_t> order(windows.size());
    std::iota(order.begin(), order.end(), int64_t{0});
    Rng rng(splitmix64(o.seed ^ 0xca11bULL));
    rng.shuffle(order);
    const size_t take = std::min<size_t>(static_cast<size_t>(o.calib_windows), windows.size());
    std::vector<InputTensor> calib_set;
    calib_set.reserve(take);
    for (size_t i = 0; i < take; ++i)
        calib_set.push_back(windows[static_cast<size_t>(order[i])].tensor);

    const CalibrationProfile profile = calibrate(folded, calib_set);
    if (o.fine_tune_epochs > 0) {
        FineTuneConfig ftc;
        ftc.epochs = o.fine_tune_epochs;
        ftc.batch_size = o.batch_size;
        ftc.learning_rate = o.learning_rate;
        ftc.seed = o.seed;
        const FineTuneResult ft = fine_tune_quantized(folded, profile, windows, ftc);
        save_bundle(ft.qmodel, o.out_bundle);
    } else {
        save_bundle(quantize_model(folded, profile), o.out_bundle);
    }
}

void run_evaluate(const EvaluateOpts& o) {
    const AnyModel model = load_bundle(o.bundle);
    const FrameLog log = load_log_file(o.log_path, hint_from_attack(o.attack));
    const std::vector<LabeledWindow> windows = stream_windows(log);
    if (windows.empty()) throw DomainError("log has fewer than 4 frames");

    std::vector<int> labels(windows.size());
    for (size_t i = 0; i < windows.size(); ++i) labels[i] = windows[i].label;
    const std::vector<float> scores = std::visit(
        [&windows](const auto& m) { return score_windows(m, windows); }, model);

    EvalReport r;
    r.attack = o.attack;
    r.threshold = o.threshold;
    r.sample_count = static_cast<int64_t>(windows.size());
    r.cm = confusion(scores, labels, o.threshold);
    r.metrics = metrics(r.cm);
    auto [curve, auc] = roc_auc(scores, labels);
    r.auc = auc;

    json report = eval_report_to_json(r);
    report["engine"] = std::holds_alternative<QuantModel>(model) ? "quant" : "float";
    report["config"] = {{"bundle", o.bundle},
                        {"log", o.log_path},
                        {"attack", o.attack},
                        {"threshold", o.threshold}};
    report["generated_at"] = timestamp_field(o.frozen_clock);
    write_json_file(report, o.report_path);

    if (!o.roc_csv_path.empty()) {
        std::ofstream out(o.roc_csv_path);
        if (!out) throw IoError("cannot open for writing: " + o.roc_csv_path);
        write_roc_csv(curve, out);
    }
}

void run_bench(const BenchOpts& o) {
    AnyModel loaded = load_bundle(o.bundle);
    std::unique_ptr<InferenceEngine> engine;
    if (auto* q = std::get_if<QuantModel>(&loaded))
        engine = std::make_unique<QuantEngine>(std::move(*q));
    else
        engine = std::make_unique<FloatEngine>(std::move(std::get<CnnModel>(loaded)));

    std::vector<uint16_t> ids;
    if (!o.log_path.empty()) {
        const FrameLog log = load_log_file(o.log_path);
        ids.reserve(log.frames.size());
        for (const CanFrame& fr : log.frames) ids.push_back(fr.id);
    } else {
        Rng rng(splitmix64(o.seed ^ 0xbe9c4ULL));
        ids.resize(1024);
        for (auto& id : ids) id = static_cast<uint16_t>(rng.below(2048));
    }
    if (ids.empty()) throw DomainError("bench needs a non-empty id stream");

    const LatencyStats stats = measure_latency(*engine, ids, o.reps, o.warmup);
    const LineRateBudget budget = line_rate_budget(stats, o.bitrate, o.dlc, o.stuffed);

    json report;
    report["engine"] = engine->kind();
    report["latency"] = {{"count", stats.count},
                         {"mean_s", stats.mean},
                         {"median_s", stats.median},
                         {"p99_s", stats.p99},
                         {"max_s", stats.max}};
    report["budget"] = {{"bitrate", budget.bitrate},
                        {"dlc", budget.dlc},
                        {"stuffed", budget.stuffed},
                        {"frame_time_s", budget.frame_time},
                        {"headroom", budget.headroom},
                        {"below_line_rate", budget.below_line_rate}};
    if (o.threads > 1)
        report["throughput_fps"] = measure_throughput(*engine, ids, o.reps, o.threads);
    report["host"] = host_description();
    report["config"] = {{"bundle", o.bundle},       {"log", o.log_path},
                        {"reps", o.reps},           {"warmup", o.warmup},
                        {"bitrate", o.bitrate},     {"dlc", o.dlc},
                        {"stuffed", o.stuffed},     {"threads", o.threads},
                        {"seed", o.seed}};
    report["generated_at"] = timestamp_field(o.frozen_clock);
    write_json_file(report, o.report_path);
}

void run_detect(const DetectOpts& o) {
    AnyModel loaded = load_bundle(o.bundle);
    std::unique_ptr<InferenceEngine> engine;
    if (auto* q = std::get_if<QuantModel>(&loaded))
        engine = std::make_unique<QuantEngine>(std::move(*q));
    else
        engine = std::make_unique<FloatEngine>(std::move(std::get<CnnModel>(loaded)));

    const FrameLog log = load_log_file(o.log_path);
    std::ofstream out(o.out_path);
    if (!out) throw IoError("cannot open for writing: " + o.out_path);
    out << "timestamp,id,score,verdict\n";

    IdWindow window;
    char buf[96];
    for (const CanFrame& fr : log.frames) {
        window.push(fr.id);
        if (!window.full()) continue;
        const float score = engine->score(window_to_tensor(window));
        const int verdict = static_cast<double>(score) >= o.threshold ? 1 : 0;
        std::snprintf(buf, sizeof(buf), "%.6f,%04x,%.9g,%d\n", fr.timestamp, fr.id,
                      static_cast<double>(score), verdict);
        out << buf;
    }
    if (!out) throw IoError("write failed: " + o.out_path);
}

} // namespace canids::pipeline

#include "canids/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "canids/error.hpp"
#include "canids/model_io.hpp"

namespace canids {

namespace fs = std::filesystem;

DataSplit split_dataset(const std::vector<LabeledWindow>& windows, const TrainConfig& cfg) {
    if (windows.size() < 20) throw DomainError("need at least 20 windows to split");
    if (std::abs(cfg.train_frac + cfg.val_frac + cfg.test_frac - 1.0) > 1e-9)
        throw DomainError("split fractions must sum to 1");

    std::vector<int64_t> order(windows.size());
    std::iota(order.begin(), order.end(), int64_t{0});
    Rng rng(splitmix64(cfg.seed ^ 0x5b117ULL));
    rng.shuffle(order);

    const size_t n = windows.size();
    const size_t n_val = static_cast<size_t>(static_cast<double>(n) * cfg.val_frac);
    const size_t n_test = static_cast<size_t>(static_cast<double>(n) * cfg.test_frac);
    const size_t n_train = n - n_val - n_test;

    DataSplit s;
    s.train.reserve(n_train);
    s.val.reserve(n_val);
    s.test.reserve(n_test);
    for (size_t i = 0; i < n_train; ++i) s.train.push_back(windows[static_cast<size_t>(order[i])]);
    for (size_t i = 0; i < n_val; ++i)
        s.val.push_back(windows[static_cast<size_t>(order[n_train + i])]);
    for (size_t i = 0; i < n_test; ++i)
        s.test.push_back(windows[static_cast<size_t>(order[n_train + n_val + i])]);
    return s;
}

namespace {

std::pair<double, double> val_loss_and_accuracy(const CnnModel& model,
                                                const std::vector<LabeledWindow>& val) {
    const std::vector<float> scores = score_windows(model, val);
    std::vector<int> labels(val.size());
    for (size_t i = 0; i < val.size(); ++i) labels[i] = val[i].label;
    const auto bce = bce_loss(scores, labels);
    int64_t correct = 0;
    for (size_t i = 0; i < val.size(); ++i) {
        const int predicted = scores[i] >= 0.5f ? 1 : 0;
        if (predicted == labels[i]) ++correct;
    }
    return {bce.loss, static_cast<double>(correct) / static_cast<double>(val.size())};
}

std::string checkpoint_path(const std::string& dir, int epoch) {
    char name[32];
    std::snprintf(name, sizeof(name), "epoch_%03d", epoch);
    return (fs::path(dir) / name).string();
}

} // namespace

std::pair<CnnModel, TrainHistory> train_model(CnnModel model, DataSplit split,
                                              const TrainConfig& cfg, const EpochHook& hook) {
    if (split.train.empty() || split.val.empty())
        throw DomainError("training needs non-empty train and val sets");
    if (cfg.epochs < 1) throw DomainError("epochs must be >= 1");
    if (cfg.batch_size < 1) throw DomainError("batch_size must be >= 1");
    if (cfg.checkpoint_dir.empty()) throw DomainError("checkpoint_dir must be set");

    fs::create_directories(cfg.checkpoint_dir);

    TrainHistory history;
    AdamState adam = adam_init(model);
    std::vector<int64_t> order(split.train.size());
    std::iota(order.begin(), order.end(), int64_t{0});

    double best_acc = -1.0;
    int consecutive_drops = 0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        if (hook) hook(epoch, split.val);

        Rng shuffle_rng(splitmix64(cfg.seed ^ (0xe90c4ULL + static_cast<uint64_t>(epoch))));
        shuffle_rng.shuffle(order);
        Rng dropout_rng(splitmix64(cfg.seed ^ (0xd209ULL + static_cast<uint64_t>(epoch))));

        double loss_sum = 0.0;
        size_t seen = 0;
        ForwardCache cache;
        for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(cfg.batch_size)) {
            const size_t count = std::min(static_cast<size_t>(cfg.batch_size), order.size() - begin);
            Tensor batch = windows_to_batch(split.train, order, begin, count);
            std::vector<int> labels = windows_to_labels(split.train, order, begin, count);

            std::vector<float> probs =
                model_forward(model, batch, Mode::Train, &cache, &dropout_rng);
            const auto bce = bce_loss(probs, labels);
            if (!std::isfinite(bce.loss)) {
                const std::string last = history.epochs.empty()
                                             ? "none"
                                             : history.epochs.back().checkpoint;
                throw TrainingError("non-finite training loss; last good checkpoint: " + last);
            }
            loss_sum += bce.loss * static_cast<double>(count);
            seen += count;

            Gradients grads = model_backward(model, cache, labels);
            adam_step(model, grads, adam, cfg.learning_rate);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(seen);
        auto [vloss, vacc] = val_loss_and_accuracy(model, split.val);
        rec.val_loss = vloss;
        rec.val_accuracy = vacc;
        rec.checkpoint = checkpoint_path(cfg.checkpoint_dir, epoch);
        save_bundle(model, rec.checkpoint);
        history.epochs.push_back(rec);

        if (vacc > best_acc) {
            best_acc = vacc;
            history.best_epoch = epoch;
        }
        if (vacc < best_acc - cfg.early_stop.drop_threshold) {
            if (++consecutive_drops >= cfg.early_stop.patience) {
                history.early_stopped = true;
                break;
            }
        } else {
            consecutive_drops = 0;
        }
    }

    CnnModel best = load_float_bundle(history.epochs[static_cast<size_t>(history.best_epoch - 1)]
                                          .checkpoint);
    return {std::move(best), std::move(history)};
}

TransferResult transfer_train(const ModelConfig& arch, const TrainConfig& cfg, int phase2_epochs,
                              const std::vector<LabeledWindow>& dos_windows,
                              const std::vector<LabeledWindow>& fuzz_windows) {
    TransferResult r;
    r.dos_split = split_dataset(dos_windows, cfg);

    TrainConfig cfg1 = cfg;
    cfg1.checkpoint_dir = (fs::path(cfg.checkpoint_dir) / "phase1").string();
    CnnModel fresh = make_model<float>(arch, cfg.seed);
    auto [m1, h1] = train_model(std::move(fresh), r.dos_split, cfg1);
    r.phase1_model = m1;
    r.history1 = std::move(h1);

    TrainConfig cfg2 = cfg;
    cfg2.checkpoint_dir = (fs::path(cfg.checkpoint_dir) / "phase2").string();
    cfg2.seed = splitmix64(cfg.seed ^ 0x9a5e2ULL);
    r.fuzz_split = split_dataset(fuzz_windows, cfg2);

    if (phase2_epochs > 0) {
        cfg2.epochs = phase2_epochs;
        auto [m2, h2] = train_model(std::move(m1), r.fuzz_split, cfg2);
        r.model = std::move(m2);
        r.history2 = std::move(h2);
    } else {
        r.model = std::move(m1); // identity continuation
    }

    r.dos_report = evaluate_model(r.model, r.dos_split.test, "dos");
    r.fuzz_report = evaluate_model(r.model, r.fuzz_split.test, "fuzz");
    return r;
}

} // namespace canids

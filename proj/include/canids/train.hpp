#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "canids/eval.hpp"
#include "canids/features.hpp"
#include "canids/nn.hpp"

namespace canids {

struct EarlyStopConfig {
    double drop_threshold = 0.02; // val accuracy more than this below best...
    int patience = 3;             // ...for this many consecutive epochs stops
};

struct TrainConfig {
    double learning_rate = 1e-4;
    int epochs = 25;
    int batch_size = 64;
    double train_frac = 0.80, val_frac = 0.15, test_frac = 0.05;
    uint64_t seed = 1;
    EarlyStopConfig early_stop;
    std::string checkpoint_dir; // bundles epoch_001.. are written here
};

struct DataSplit {
    std::vector<LabeledWindow> train, val, test;
};

// Seeded uniform shuffle, then a contiguous 80/15/5 cut; val/test sizes are
// floored and the remainder goes to train.
DataSplit split_dataset(const std::vector<LabeledWindow>& windows, const TrainConfig& cfg);

struct EpochRecord {
    int epoch = 0; // 1-based
    double train_loss = 0, val_loss = 0, val_accuracy = 0;
    std::string checkpoint;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0; // 1-based; 0 when no epoch ran
    bool early_stopped = false;
};

// Test/instrumentation hook, called before each epoch with mutable access to
// the validation set.
using EpochHook = std::function<void(int epoch, std::vector<LabeledWindow>& val)>;

// Minibatch Adam over BCE with per-epoch checkpointing; returns the
// best-validation-accuracy checkpointed model.
std::pair<CnnModel, TrainHistory> train_model(CnnModel model, DataSplit split,
                                              const TrainConfig& cfg,
                                              const EpochHook& hook = {});

struct TransferResult {
    CnnModel model;        // the single weight set served for both attacks
    CnnModel phase1_model; // checkpoint after the first attack phase
    TrainHistory history1, history2;
    DataSplit dos_split, fuzz_split;
    EvalReport dos_report, fuzz_report;
};

// Phase 1 trains from fresh init on the first attack; phase 2 continues the
// same parameters (same learning rate, nothing frozen) on the second; the
// final weights are evaluated on both test splits. phase2_epochs == 0 skips
// phase 2 entirely.
TransferResult transfer_train(const ModelConfig& arch, const TrainConfig& cfg, int phase2_epochs,
                              const std::vector<LabeledWindow>& dos_windows,
                              const std::vector<LabeledWindow>& fuzz_windows);

} // namespace canids

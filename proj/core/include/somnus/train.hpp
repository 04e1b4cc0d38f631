#pragma once

#include <string>
#include <vector>

#include "somnus/cost.hpp"
#include "somnus/data.hpp"
#include "somnus/model.hpp"
#include "somnus/optim.hpp"

namespace somnus {

// Whether the installed bundle's parameters take optimizer updates. Chain and
// adapter parameters always train.
enum class FreezeMode { frozen, unfrozen };

const char* to_string(FreezeMode m);

struct EpochStats {
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    double wall_seconds = 0.0;  // excluded from deterministic metrics files
};

struct RunRecord {
    std::string model_id;
    std::string config_hash;
    double initial_train_loss = 0.0;
    double initial_test_accuracy = 0.0;
    std::vector<EpochStats> epochs;
    bool aborted = false;
    std::string abort_reason;
    CostReport cost;
    double total_wall_seconds = 0.0;

    double final_test_accuracy() const {
        return epochs.empty() ? initial_test_accuracy : epochs.back().test_accuracy;
    }
    double final_train_loss() const {
        return epochs.empty() ? initial_train_loss : epochs.back().train_loss;
    }
};

// Supervised training loop: per epoch, seeded shuffle, batched
// forward / cross-entropy / backward / adam. Train loss and accuracy are the
// running values over the epoch's batches (pre-update logits); test accuracy
// is a full evaluation pass. Divergence aborts with the partial record kept.
RunRecord train(BlockGraph& graph, const Dataset& train_set, const Dataset& test_set,
                const OptimizerConfig& opt, FreezeMode freeze);

// Exact fraction of correct argmax predictions (lowest index wins ties).
double evaluate(const BlockGraph& graph, const Dataset& ds);

}  // namespace somnus

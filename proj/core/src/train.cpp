#include "somnus/train.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "somnus/error.hpp"
#include "somnus/ops.hpp"
#include "somnus/rng.hpp"

namespace somnus {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::size_t count_correct(const Tensor& logits, const IntTensor& labels) {
    IntTensor pred = argmax(logits, 1);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.numel(); ++i) {
        if (pred.data()[i] == labels.data()[i]) ++correct;
    }
    return correct;
}

std::vector<std::size_t> batch_indices(const std::vector<std::size_t>& order,
                                       std::size_t start, std::size_t batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    return {order.begin() + start, order.begin() + end};
}

double full_loss(const BlockGraph& graph, const Dataset& ds, int batch_size) {
    double total = 0.0;
    for (std::size_t start = 0; start < ds.size();
         start += static_cast<std::size_t>(batch_size)) {
        std::vector<std::size_t> idx;
        for (std::size_t i = start;
             i < std::min(ds.size(), start + static_cast<std::size_t>(batch_size)); ++i) {
            idx.push_back(i);
        }
        Batch b = ds.batch(idx);
        total += cross_entropy(graph.forward(b), b.labels).item() *
                 static_cast<double>(idx.size());
    }
    return total / static_cast<double>(ds.size());
}

}  // namespace

const char* to_string(FreezeMode m) {
    return m == FreezeMode::frozen ? "frozen" : "unfrozen";
}

double evaluate(const BlockGraph& graph, const Dataset& ds) {
    if (ds.size() == 0) throw ValueError("evaluate: empty dataset");
    constexpr std::size_t kEvalBatch = 256;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < ds.size(); start += kEvalBatch) {
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < std::min(ds.size(), start + kEvalBatch); ++i) {
            idx.push_back(i);
        }
        Batch b = ds.batch(idx);
        correct += count_correct(graph.forward(b), b.labels);
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

RunRecord train(BlockGraph& graph, const Dataset& train_set, const Dataset& test_set,
                const OptimizerConfig& opt, FreezeMode freeze) {
    opt.validate();
    if (train_set.size() == 0) throw ValueError("train: empty training set");
    if (graph.bundle()) graph.bundle()->set_frozen(freeze == FreezeMode::frozen);

    const auto t0 = std::chrono::steady_clock::now();
    RunRecord record;
    record.model_id = graph.model_id();
    record.cost = graph.cost_report();
    record.initial_train_loss = full_loss(graph, train_set, opt.batch_size);
    record.initial_test_accuracy = evaluate(graph, test_set);

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    Rng order_rng(derive_seed(opt.seed, "train/order"));
    const auto params = graph.registry().all();

    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        const auto epoch_start = std::chrono::steady_clock::now();
        order_rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        bool diverged = false;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(opt.batch_size)) {
            auto idx = batch_indices(order, start, static_cast<std::size_t>(opt.batch_size));
            Batch batch = train_set.batch(idx);
            Tensor logits = graph.forward(batch);
            Tensor loss = cross_entropy(logits, batch.labels);
            if (!std::isfinite(loss.item())) {
                record.aborted = true;
                record.abort_reason = "non-finite loss in epoch " + std::to_string(epoch);
                diverged = true;
                break;
            }
            loss_sum += loss.item() * static_cast<double>(idx.size());
            correct += count_correct(logits, batch.labels);
            backward(loss);
            try {
                adam_step(params, opt);
            } catch (const DivergenceError& e) {
                record.aborted = true;
                record.abort_reason = e.what();
                diverged = true;
                break;
            }
        }
        if (diverged) break;
        EpochStats stats;
        stats.train_loss = loss_sum / static_cast<double>(order.size());
        stats.train_accuracy =
            static_cast<double>(correct) / static_cast<double>(order.size());
        stats.test_accuracy = evaluate(graph, test_set);
        stats.wall_seconds = seconds_since(epoch_start);
        record.epochs.push_back(stats);
    }
    record.total_wall_seconds = seconds_since(t0);
    return record;
}

}  // namespace somnus

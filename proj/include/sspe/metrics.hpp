#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <vector>

#include <json.hpp>

namespace sspe {

// Incremented when an F1 denominator degenerates to zero.
inline std::atomic<std::uint64_t>& f1_zero_division_count() {
    static std::atomic<std::uint64_t> n{0};
    return n;
}

// KL-2 is the positive class for every derived rate.
struct ConfusionCounts {
    long tp = 0;
    long fp = 0;
    long fn = 0;
    long tn = 0;

    long total() const { return tp + fp + fn + tn; }

    double accuracy() const {
        return total() == 0 ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(total());
    }

    double f1() const {
        const long denom = 2 * tp + fp + fn;
        if (denom == 0) {
            f1_zero_division_count().fetch_add(1, std::memory_order_relaxed);
            return 0.0;
        }
        return 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
    }
};

struct MetricsReport {
    double accuracy = 0.0;
    double f1 = 0.0;
    ConfusionCounts confusion;
    std::vector<double> epoch_losses;
    std::vector<double> epoch_val_accuracy;
    // Convergence diagnostic on the eval split; never used for checkpoint
    // selection (that stays on validation accuracy).
    std::vector<double> epoch_eval_accuracy;
    int best_epoch = -1;  // 1-based; -1 when no training happened
    double runtime_seconds = 0.0;
};

inline void to_json(nlohmann::json& j, const MetricsReport& r) {
    j = nlohmann::json{{"accuracy", r.accuracy},
                       {"f1", r.f1},
                       {"confusion", {{"tp", r.confusion.tp},
                                      {"fp", r.confusion.fp},
                                      {"fn", r.confusion.fn},
                                      {"tn", r.confusion.tn}}},
                       {"epoch_losses", r.epoch_losses},
                       {"epoch_val_accuracy", r.epoch_val_accuracy},
                       {"epoch_eval_accuracy", r.epoch_eval_accuracy},
                       {"best_epoch", r.best_epoch},
                       {"runtime_seconds", r.runtime_seconds}};
}

inline void from_json(const nlohmann::json& j, MetricsReport& r) {
    r.accuracy = j.value("accuracy", 0.0);
    r.f1 = j.value("f1", 0.0);
    if (j.contains("confusion")) {
        const auto& c = j.at("confusion");
        r.confusion.tp = c.value("tp", 0L);
        r.confusion.fp = c.value("fp", 0L);
        r.confusion.fn = c.value("fn", 0L);
        r.confusion.tn = c.value("tn", 0L);
    }
    r.epoch_losses = j.value("epoch_losses", std::vector<double>{});
    r.epoch_val_accuracy = j.value("epoch_val_accuracy", std::vector<double>{});
    r.epoch_eval_accuracy = j.value("epoch_eval_accuracy", std::vector<double>{});
    r.best_epoch = j.value("best_epoch", -1);
    r.runtime_seconds = j.value("runtime_seconds", 0.0);
}

// First epoch (1-based) whose validation accuracy reaches 90% of the run's
// final (peak validation) accuracy; used by the match-number convergence
// comparisons. The peak is the run's final model by construction, since the
// best-validation checkpoint is the one retained.
inline int epochs_to_90pct(const std::vector<double>& val_acc) {
    if (val_acc.empty()) return 0;
    double peak = 0.0;
    for (double a : val_acc) peak = std::max(peak, a);
    const double threshold = 0.9 * peak;
    for (std::size_t e = 0; e < val_acc.size(); ++e)
        if (val_acc[e] >= threshold) return static_cast<int>(e) + 1;
    return static_cast<int>(val_acc.size());
}

}  // namespace sspe

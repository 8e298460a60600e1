#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sspe/config.hpp"
#include "sspe/metrics.hpp"
#include "sspe/train.hpp"

namespace sspe {

struct AblationRow {
    std::string condition;
    std::uint64_t seed;
    double accuracy;
    double f1;
    int epochs_to_90;
};

struct AblationResult {
    std::vector<AblationRow> rows;
    std::string curves_csv;  // per-epoch long format, filled by the n-sweep
};

namespace detail {

inline std::string fmt6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

struct Condition {
    std::string name;
    ExperimentConfig cfg;
};

inline ExperimentConfig ce_only(ExperimentConfig c) {
    c.alpha = 0.0;
    c.beta = 1.0;
    return c;
}

inline std::vector<Condition> suite_conditions(const std::string& suite,
                                               const ExperimentConfig& base) {
    std::vector<Condition> out;
    const std::vector<std::vector<int>> key_triplets = {{1, 2, 3}, {4, 5, 6}, {7, 8, 9}};

    if (suite == "pe-compare") {
        // rows: PE kinds; columns: no SSPE ("all") + SSPE per candidate key set.
        // The none x SSPE cells are skipped, as shuffling carries no meaning
        // without a position signal to shuffle.
        for (const std::string kind : {"none", "sinusoidal-1d", "grid-2d", "relative"}) {
            ExperimentConfig c = ce_only(base);
            c.pe_kind = kind;
            c.exchange_n = 0;
            c.sspe = false;
            out.push_back({kind + std::string("/all"), c});
            if (kind == "none") continue;
            for (const auto& keys : key_triplets) {
                ExperimentConfig s = c;
                s.sspe = true;
                s.key_set = keys;
                std::string tag;
                for (int k : keys) tag += std::to_string(k);
                out.push_back({kind + std::string("/sspe-") + tag, s});
            }
        }
    } else if (suite == "key-select") {
        for (const auto& keys : key_triplets) {
            ExperimentConfig c = ce_only(base);
            c.exchange_n = 0;
            c.sspe = true;
            c.key_set = keys;
            std::string tag;
            for (int k : keys) tag += std::to_string(k);
            out.push_back({"sspe-" + tag, c});
        }
    } else if (suite == "mask-select") {
        // pairs over the #456 candidates; the excluded patch is zeroed
        const std::vector<std::pair<std::vector<int>, int>> pairs = {
            {{4, 5}, 6}, {{4, 6}, 5}, {{5, 6}, 4}};
        for (const auto& [pair, masked] : pairs) {
            ExperimentConfig c = ce_only(base);
            c.exchange_n = 0;
            c.sspe = true;
            c.key_set = pair;
            c.mask_cells = {masked};
            out.push_back({"pair-" + std::to_string(pair[0]) + std::to_string(pair[1]) + "-mask" +
                               std::to_string(masked),
                           c});
        }
    } else if (suite == "hyper-grid") {
        {
            ExperimentConfig c = ce_only(base);
            c.exchange_n = std::max(1, base.exchange_n);
            c.sspe = true;
            out.push_back({"ce-only", c});
        }
        for (int ei = 1; ei <= 6; ++ei) {
            const double eps = 0.05 * ei;
            for (int ai = 1; ai <= 10; ++ai) {
                const double alpha = 0.1 * ai;
                ExperimentConfig c = base;
                c.exchange_n = std::max(1, base.exchange_n);
                c.sspe = true;
                c.epsilon = eps;
                c.alpha = alpha;
                c.beta = 1.0 - alpha;
                char name[64];
                std::snprintf(name, sizeof(name), "eps%.2f-a%.1f-b%.1f", eps, alpha, 1.0 - alpha);
                out.push_back({name, c});
            }
        }
    } else if (suite == "n-sweep") {
        for (int n = 0; n <= 4; ++n) {
            ExperimentConfig c = n == 0 ? ce_only(base) : base;
            c.sspe = true;
            c.exchange_n = n;
            out.push_back({"n" + std::to_string(n), c});
        }
    } else if (suite == "pe-dropout") {
        for (const double rate : {0.0, 0.2, 0.3, 0.5}) {
            ExperimentConfig c = ce_only(base);
            c.exchange_n = 0;
            c.sspe = true;
            c.pe_dropout_rate = rate;
            char name[32];
            std::snprintf(name, sizeof(name), "dropout-%.1f", rate);
            out.push_back({name, c});
        }
    } else {
        throw std::invalid_argument("unknown ablation suite: " + suite);
    }
    return out;
}

}  // namespace detail

inline const std::vector<std::uint64_t>& default_suite_seeds() {
    static const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    return seeds;
}

// Runs every condition of a suite over the given seeds. Rows come back in
// condition-major order; the CSV layout is one row per (condition, seed).
inline AblationResult run_ablation(const std::string& suite, const ExperimentConfig& base,
                                   const std::vector<LoadedSample>& samples,
                                   const std::vector<std::uint64_t>& seeds) {
    AblationResult result;
    std::ostringstream curves;
    if (suite == "n-sweep") curves << "condition,seed,epoch,train_loss,val_accuracy,eval_accuracy\n";
    for (const auto& cond : detail::suite_conditions(suite, base)) {
        for (const std::uint64_t seed : seeds) {
            ExperimentConfig cfg = cond.cfg;
            cfg.seed = seed;
            const TrainResult tr = train(cfg, samples);
            result.rows.push_back({cond.name, seed, tr.report.accuracy, tr.report.f1,
                                   epochs_to_90pct(tr.report.epoch_eval_accuracy)});
            if (suite == "n-sweep") {
                for (std::size_t e = 0; e < tr.report.epoch_losses.size(); ++e)
                    curves << cond.name << "," << seed << "," << (e + 1) << ","
                           << detail::fmt6(tr.report.epoch_losses[e]) << ","
                           << detail::fmt6(tr.report.epoch_val_accuracy[e]) << ","
                           << detail::fmt6(tr.report.epoch_eval_accuracy[e]) << "\n";
            }
        }
    }
    result.curves_csv = curves.str();
    return result;
}

inline std::string ablation_to_csv(const AblationResult& r) {
    std::ostringstream out;
    out << "condition,seed,accuracy,f1,epochs_to_90pct\n";
    for (const AblationRow& row : r.rows)
        out << row.condition << "," << row.seed << "," << detail::fmt6(row.accuracy) << ","
            << detail::fmt6(row.f1) << "," << row.epochs_to_90 << "\n";
    return out.str();
}

// Mean and sample standard deviation per condition, for the report command.
inline std::string summarize_ablation_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream out;
    out << "condition,n,mean_accuracy,sd_accuracy,mean_f1,sd_f1,mean_epochs_to_90pct\n";
    std::vector<std::string> seen;
    for (const AblationRow& row : rows) {
        if (std::find(seen.begin(), seen.end(), row.condition) != seen.end()) continue;
        seen.push_back(row.condition);
        std::vector<const AblationRow*> group;
        for (const AblationRow& r2 : rows)
            if (r2.condition == row.condition) group.push_back(&r2);
        auto mean_of = [&](auto proj) {
            double s = 0.0;
            for (const AblationRow* g : group) s += proj(*g);
            return s / static_cast<double>(group.size());
        };
        auto sd_of = [&](auto proj, double mean) {
            if (group.size() < 2) return 0.0;
            double s = 0.0;
            for (const AblationRow* g : group) s += (proj(*g) - mean) * (proj(*g) - mean);
            return std::sqrt(s / static_cast<double>(group.size() - 1));
        };
        const double ma = mean_of([](const AblationRow& r2) { return r2.accuracy; });
        const double mf = mean_of([](const AblationRow& r2) { return r2.f1; });
        const double me = mean_of([](const AblationRow& r2) { return double(r2.epochs_to_90); });
        out << row.condition << "," << group.size() << "," << detail::fmt6(ma) << ","
            << detail::fmt6(sd_of([](const AblationRow& r2) { return r2.accuracy; }, ma)) << ","
            << detail::fmt6(mf) << ","
            << detail::fmt6(sd_of([](const AblationRow& r2) { return r2.f1; }, mf)) << ","
            << detail::fmt6(me) << "\n";
    }
    return out.str();
}

inline std::vector<AblationRow> ablation_rows_from_csv(std::istream& in) {
    std::vector<AblationRow> rows;
    std::string line;
    if (!std::getline(in, line) || line != "condition,seed,accuracy,f1,epochs_to_90pct")
        throw std::runtime_error("ablation csv: bad header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cond, seed, acc, f1, e90;
        if (!std::getline(row, cond, ',') || !std::getline(row, seed, ',') ||
            !std::getline(row, acc, ',') || !std::getline(row, f1, ',') ||
            !std::getline(row, e90, ','))
            throw std::runtime_error("ablation csv: bad row: " + line);
        rows.push_back({cond, std::stoull(seed), std::stod(acc), std::stod(f1), std::stoi(e90)});
    }
    return rows;
}

}  // namespace sspe

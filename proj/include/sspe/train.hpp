#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sspe/augment.hpp"
#include "sspe/config.hpp"
#include "sspe/dataset.hpp"
#include "sspe/encoder.hpp"
#include "sspe/loss.hpp"
#include "sspe/metrics.hpp"
#include "sspe/rng.hpp"

namespace sspe {

struct LoadedSample {
    ManifestEntry entry;
    Image image;
};

inline std::vector<LoadedSample> load_samples(const DatasetManifest& manifest,
                                              const std::string& dataset_dir) {
    namespace fs = std::filesystem;
    std::vector<LoadedSample> out;
    out.reserve(manifest.entries.size());
    for (const ManifestEntry& e : manifest.entries)
        out.push_back({e, load_image((fs::path(dataset_dir) / e.path).string())});
    return out;
}

inline void apply_mask(TokenGrid& grid, const std::vector<int>& mask_cells) {
    for (int k : mask_cells) {
        if (k < 1 || k > grid.num_patches())
            throw std::invalid_argument("mask cell out of range: " + std::to_string(k));
        double* row = grid.tokens.row_ptr(static_cast<std::size_t>(k) - 1);
        std::fill(row, row + grid.tokens.cols, 0.0);
    }
}

inline ModelState init_model(const ExperimentConfig& cfg, int grid_rows, int grid_cols) {
    Rng rng(seed_hash(cfg.seed, 0x1217u));
    ModelState m;
    m.params = init_encoder_params(cfg.patch_pixels * cfg.patch_pixels, cfg.embed_dim, cfg.heads,
                                   cfg.depth, cfg.mlp_hidden, rng);
    const int P = grid_rows * grid_cols;
    switch (cfg.pe()) {
        case PeKind::none: m.pe = no_pe(); break;
        case PeKind::sinusoidal_1d:
            m.pe = sinusoidal_pe(static_cast<std::size_t>(P) + 1,
                                 static_cast<std::size_t>(cfg.embed_dim));
            break;
        case PeKind::grid_2d:
            m.pe = grid_2d_pe(grid_rows, grid_cols, static_cast<std::size_t>(cfg.embed_dim));
            break;
        case PeKind::relative:
            m.pe = relative_pe(grid_rows, grid_cols, static_cast<std::size_t>(cfg.embed_dim), rng);
            break;
    }
    m.pe_trainable = cfg.pe() == PeKind::relative || (cfg.pe_learnable && cfg.pe() != PeKind::none);
    return m;
}

// Momentum-free first-order updates by default; "adam" selects the
// adaptive-moment variant.
class Optimizer {
public:
    Optimizer(const std::string& kind, double lr) : adam_(kind == "adam"), lr_(lr) {}

    void begin_step() { ++t_; }

    void update(std::size_t slot, Matrix& param, const Matrix& grad) {
        if (!adam_) {
            for (std::size_t i = 0; i < param.data.size(); ++i)
                param.data[i] -= lr_ * grad.data[i];
            return;
        }
        if (slot >= m_.size()) {
            m_.resize(slot + 1);
            v_.resize(slot + 1);
        }
        if (m_[slot].data.empty()) {
            m_[slot] = Matrix(param.rows, param.cols);
            v_[slot] = Matrix(param.rows, param.cols);
        }
        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
        for (std::size_t i = 0; i < param.data.size(); ++i) {
            m_[slot].data[i] = b1 * m_[slot].data[i] + (1.0 - b1) * grad.data[i];
            v_[slot].data[i] = b2 * v_[slot].data[i] + (1.0 - b2) * grad.data[i] * grad.data[i];
            param.data[i] -=
                lr_ * (m_[slot].data[i] / bc1) / (std::sqrt(v_[slot].data[i] / bc2) + eps);
        }
    }

private:
    bool adam_;
    double lr_;
    long t_ = 0;
    std::vector<Matrix> m_, v_;
};

// Inference always uses the identity plan; training-time shuffling never
// leaks into evaluation.
inline MetricsReport evaluate(const ModelState& model, const ExperimentConfig& cfg,
                              const std::vector<LoadedSample>& samples, Split split) {
    MetricsReport r;
    for (const LoadedSample& s : samples) {
        if (s.entry.split != split) continue;
        TokenGrid grid = embed_patches(s.image, cfg.patch_pixels);
        apply_mask(grid, cfg.mask_cells);
        const PositionPlan identity = PositionPlan::identity(grid.num_patches());
        const Matrix logits = encode(grid, model.pe, identity, model.params);
        const Grade pred = logits.data[1] > logits.data[0] ? Grade::kl2 : Grade::kl0;
        if (s.entry.grade == Grade::kl2)
            (pred == Grade::kl2 ? r.confusion.tp : r.confusion.fn)++;
        else
            (pred == Grade::kl2 ? r.confusion.fp : r.confusion.tn)++;
    }
    if (r.confusion.total() == 0) throw std::invalid_argument("evaluate: split is empty");
    r.accuracy = r.confusion.accuracy();
    r.f1 = r.confusion.f1();
    return r;
}

class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainResult {
    ModelState best_state;
    MetricsReport report;
};

// Per epoch: bootstrap oversampling, conventional augmentation, fresh SSPE
// plan per sequence, key-patch exchange against N candidates, hybrid loss,
// first-order update. The best-validation-accuracy weights are retained.
// Fully deterministic given (config, seed).
inline TrainResult train(const ExperimentConfig& cfg, const std::vector<LoadedSample>& samples,
                         std::ostream* log_jsonl = nullptr) {
    cfg.validate();
    const auto t_start = std::chrono::steady_clock::now();

    std::vector<std::size_t> train_pos;
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (samples[i].entry.split == Split::train) train_pos.push_back(i);
    if (train_pos.empty()) throw std::invalid_argument("train: empty training split");

    const Image& probe = samples[train_pos.front()].image;
    const int grid_rows = probe.height / cfg.patch_pixels;
    const int grid_cols = probe.width / cfg.patch_pixels;
    const int P = grid_rows * grid_cols;
    KeySet key_set(cfg.key_set);
    key_set.validate(P);
    if (cfg.exchange_n > 0 && key_set.indices.empty())
        throw std::invalid_argument("train: exchange requires a non-empty key set");

    ModelState model = init_model(cfg, grid_rows, grid_cols);
    Optimizer opt(cfg.optimizer, cfg.learning_rate);
    const HybridLossConfig loss_cfg = cfg.loss_config();
    AugmentConfig aug;
    aug.rotation_deg_min = -cfg.rotation_deg;
    aug.rotation_deg_max = cfg.rotation_deg;
    aug.brightness_min = 1.0 - cfg.brightness_delta;
    aug.brightness_max = 1.0 + cfg.brightness_delta;
    aug.contrast_min = 1.0 - cfg.contrast_delta;
    aug.contrast_max = 1.0 + cfg.contrast_delta;

    auto make_grid = [&](std::size_t pos, Rng& rng) {
        const Image img = conventional_augment(samples[pos].image, rng, aug);
        TokenGrid grid = embed_patches(img, cfg.patch_pixels);
        apply_mask(grid, cfg.mask_cells);
        return LabeledGrid{std::move(grid), samples[pos].entry.grade, samples[pos].entry.id};
    };

    TrainResult result;
    result.best_state = model;
    double best_val = -1.0;

    struct EpochItem {
        TokenGrid tokens;
        Grade label;
        SetTag tag;
        PositionPlan plan;
    };

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng epoch_rng(seed_hash(cfg.seed, 0xB007u, static_cast<std::uint64_t>(epoch)));
        std::vector<std::size_t> order = bootstrap_oversample(
            train_pos, [&](std::size_t i) { return samples[i].entry.grade; }, epoch_rng);
        epoch_rng.shuffle(order);

        long full_count = 0, mixed_count = 0;
        StreamHash plan_hash;
        std::uint64_t pos_counter = 0;

        // Materialize the epoch's sequence stream: per target, conventional
        // augmentation, exchange against N fresh candidates, one fresh plan
        // per sequence. A batch is then a batch of sequences, so exchange
        // multiplies the number of optimizer steps per epoch.
        std::vector<EpochItem> items;
        for (const std::size_t target_pos : order) {
            ++pos_counter;
            Rng aug_rng(seed_hash(cfg.seed, 0xA06u, static_cast<std::uint64_t>(epoch), pos_counter));
            const LabeledGrid target = make_grid(target_pos, aug_rng);

            std::vector<LabeledSequence> seqs;
            if (cfg.exchange_n > 0 && train_pos.size() > 1) {
                Rng cand_rng(cfg.resample_candidates_per_epoch
                                 ? seed_hash(cfg.seed, 0xCA7u, static_cast<std::uint64_t>(epoch),
                                             pos_counter)
                                 : seed_hash(cfg.seed, 0xCA7u,
                                             static_cast<std::uint64_t>(target.id)));
                std::int64_t self_idx = -1;
                for (std::size_t i = 0; i < train_pos.size(); ++i)
                    if (train_pos[i] == target_pos) self_idx = static_cast<std::int64_t>(i);
                const std::size_t n_cand =
                    std::min(static_cast<std::size_t>(cfg.exchange_n), train_pos.size() - 1);
                const auto picks = cand_rng.sample_without_replacement(
                    0, static_cast<std::int64_t>(train_pos.size()) - 1, n_cand, self_idx);
                std::vector<LabeledGrid> candidates;
                for (std::size_t ci = 0; ci < picks.size(); ++ci) {
                    Rng crng(seed_hash(cfg.seed, 0xCAAu, static_cast<std::uint64_t>(epoch),
                                       pos_counter, static_cast<std::uint64_t>(ci)));
                    candidates.push_back(
                        make_grid(train_pos[static_cast<std::size_t>(picks[ci])], crng));
                }
                seqs = exchange_key_patches(target, candidates, key_set, cfg.dedupe_identity);
            } else {
                seqs.push_back(original_sequence(target));
            }

            for (std::size_t si = 0; si < seqs.size(); ++si) {
                Rng plan_rng(seed_hash(cfg.seed, 0x91Au, static_cast<std::uint64_t>(epoch),
                                       pos_counter, si));
                PositionPlan plan =
                    cfg.sspe ? make_sspe_plan(P, key_set, plan_rng) : PositionPlan::identity(P);
                if (cfg.pe_dropout_rate > 0.0)
                    plan = pe_dropout_plan(plan, cfg.pe_dropout_rate, plan_rng);
                for (int v : plan.assignment) plan_hash.update(static_cast<std::uint64_t>(v));
                (seqs[si].set_tag == SetTag::full_kl ? full_count : mixed_count)++;
                items.push_back(
                    {std::move(seqs[si].tokens), seqs[si].label, seqs[si].set_tag, std::move(plan)});
            }
        }
        {
            std::vector<std::size_t> perm(items.size());
            for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
            Rng seq_rng(seed_hash(cfg.seed, 0x5E9u, static_cast<std::uint64_t>(epoch)));
            seq_rng.shuffle(perm);
            std::vector<EpochItem> shuffled;
            shuffled.reserve(items.size());
            for (std::size_t i : perm) shuffled.push_back(std::move(items[i]));
            items = std::move(shuffled);
        }

        double loss_sum = 0.0;
        long batches = 0;
        for (std::size_t start = 0; start < items.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(items.size(), start + static_cast<std::size_t>(cfg.batch_size));
            Tape tape;
            const ParamNodes pn = stage_params(tape, model);
            std::vector<Tape::Id> loss_nodes;
            std::vector<SetTag> tags;
            for (std::size_t bi = start; bi < end; ++bi) {
                const Tape::Id logits = encode_on_tape(tape, pn, model, items[bi].tokens,
                                                       items[bi].plan);
                loss_nodes.push_back(sequence_loss_on_tape(tape, logits, items[bi].label,
                                                           items[bi].tag, cfg.epsilon));
                tags.push_back(items[bi].tag);
            }

            const Tape::Id total = hybrid_loss_on_tape(tape, loss_nodes, tags, loss_cfg);
            const double batch_loss = tape.value(total).data[0];
            if (!std::isfinite(batch_loss))
                throw TrainingDiverged("training diverged: non-finite loss at epoch " +
                                       std::to_string(epoch) + ", batch " +
                                       std::to_string(batches + 1));
            tape.backward(total);
            opt.begin_step();
            std::size_t slot = 0;
            for_each_param_grad(tape, pn, model, [&](Matrix& param, const Matrix& grad) {
                opt.update(slot++, param, grad);
            });
            loss_sum += batch_loss;
            ++batches;
        }

        const double epoch_loss = loss_sum / static_cast<double>(batches);
        const MetricsReport val = evaluate(model, cfg, samples, Split::val);
        const MetricsReport diag =
            evaluate(model, cfg, samples, split_from_string(cfg.eval_split));
        result.report.epoch_losses.push_back(epoch_loss);
        result.report.epoch_val_accuracy.push_back(val.accuracy);
        result.report.epoch_eval_accuracy.push_back(diag.accuracy);
        if (val.accuracy > best_val) {
            best_val = val.accuracy;
            result.best_state = model;
            result.report.best_epoch = epoch;
        }
        if (log_jsonl) {
            nlohmann::json line{{"epoch", epoch},
                                {"train_loss", epoch_loss},
                                {"val_accuracy", val.accuracy},
                                {"plan_hash", plan_hash.h},
                                {"full_count", full_count},
                                {"mixed_count", mixed_count},
                                {"sequences", full_count + mixed_count}};
            (*log_jsonl) << line.dump() << "\n";
        }
    }

    const MetricsReport final_eval =
        evaluate(result.best_state, cfg, samples, split_from_string(cfg.eval_split));
    result.report.accuracy = final_eval.accuracy;
    result.report.f1 = final_eval.f1;
    result.report.confusion = final_eval.confusion;
    result.report.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return result;
}

}  // namespace sspe

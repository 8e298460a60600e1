#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sspe/dataset.hpp"
#include "sspe/loss.hpp"
#include "sspe/pos_embed.hpp"

namespace sspe {

// Every knob of a run in one serializable record.
struct ExperimentConfig {
    // model
    std::string pe_kind = "sinusoidal-1d";
    bool pe_learnable = false;
    int patch_pixels = 16;
    int embed_dim = 32;
    int heads = 4;
    int depth = 2;
    int mlp_hidden = 64;

    // SSPE / augmentation
    bool sspe = true;
    std::vector<int> key_set = {4, 6};
    double pe_dropout_rate = 0.0;
    int exchange_n = 2;
    bool dedupe_identity = false;
    bool resample_candidates_per_epoch = true;
    std::vector<int> mask_cells;  // cells zeroed before encoding (masking runs)

    // conventional augmentation ranges (identity when zero)
    double rotation_deg = 10.0;
    double brightness_delta = 0.10;
    double contrast_delta = 0.10;

    // hybrid loss
    double epsilon = 0.2;
    double alpha = 0.3;
    double beta = 0.7;
    std::string reduction = "mean";

    // training
    int epochs = 30;
    int batch_size = 32;
    double learning_rate = 1e-3;
    std::string optimizer = "sgd";
    std::uint64_t seed = 1;

    // data
    std::string dataset_dir;
    std::string eval_split = "test";
    SyntheticConfig synthetic;

    PeKind pe() const { return pe_kind_from_string(pe_kind); }

    Reduction reduction_mode() const {
        if (reduction == "mean") return Reduction::mean;
        if (reduction == "sum") return Reduction::sum;
        throw std::invalid_argument("config: reduction must be mean or sum");
    }

    HybridLossConfig loss_config() const {
        HybridLossConfig c;
        c.epsilon = epsilon;
        c.alpha = alpha;
        c.beta = beta;
        c.reduction = reduction_mode();
        return c;
    }

    void validate() const {
        (void)pe();
        (void)reduction_mode();
        if (embed_dim <= 0 || embed_dim % 2 != 0)
            throw std::invalid_argument("config: embed_dim must be a positive even number");
        if (heads <= 0 || embed_dim % heads != 0)
            throw std::invalid_argument("config: embed_dim must be divisible by heads");
        if (pe_kind == "grid-2d" && embed_dim % 4 != 0)
            throw std::invalid_argument("config: grid-2d needs embed_dim divisible by 4");
        if (depth < 1) throw std::invalid_argument("config: depth must be >= 1");
        if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
        if (exchange_n < 0) throw std::invalid_argument("config: exchange_n must be >= 0");
        if (pe_dropout_rate < 0.0 || pe_dropout_rate >= 1.0)
            throw std::invalid_argument("config: pe_dropout_rate must lie in [0, 1)");
        if (std::abs(alpha + beta - 1.0) > 1e-12)
            throw std::invalid_argument("config: alpha + beta must equal 1");
        if (epsilon <= 0.0 || epsilon >= 1.0)
            throw std::invalid_argument("config: epsilon must lie in (0, 1)");
        if (optimizer != "sgd" && optimizer != "adam")
            throw std::invalid_argument("config: optimizer must be sgd or adam");
        (void)split_from_string(eval_split);
    }
};

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    j = nlohmann::json{{"pe_kind", c.pe_kind},
                       {"pe_learnable", c.pe_learnable},
                       {"patch_pixels", c.patch_pixels},
                       {"embed_dim", c.embed_dim},
                       {"heads", c.heads},
                       {"depth", c.depth},
                       {"mlp_hidden", c.mlp_hidden},
                       {"sspe", c.sspe},
                       {"key_set", c.key_set},
                       {"pe_dropout_rate", c.pe_dropout_rate},
                       {"exchange_n", c.exchange_n},
                       {"dedupe_identity", c.dedupe_identity},
                       {"resample_candidates_per_epoch", c.resample_candidates_per_epoch},
                       {"mask_cells", c.mask_cells},
                       {"rotation_deg", c.rotation_deg},
                       {"brightness_delta", c.brightness_delta},
                       {"contrast_delta", c.contrast_delta},
                       {"epsilon", c.epsilon},
                       {"alpha", c.alpha},
                       {"beta", c.beta},
                       {"reduction", c.reduction},
                       {"epochs", c.epochs},
                       {"batch_size", c.batch_size},
                       {"learning_rate", c.learning_rate},
                       {"optimizer", c.optimizer},
                       {"seed", c.seed},
                       {"dataset_dir", c.dataset_dir},
                       {"eval_split", c.eval_split},
                       {"synthetic", c.synthetic}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    c.pe_kind = j.value("pe_kind", c.pe_kind);
    c.pe_learnable = j.value("pe_learnable", c.pe_learnable);
    c.patch_pixels = j.value("patch_pixels", c.patch_pixels);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.heads = j.value("heads", c.heads);
    c.depth = j.value("depth", c.depth);
    c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
    c.sspe = j.value("sspe", c.sspe);
    c.key_set = j.value("key_set", c.key_set);
    c.pe_dropout_rate = j.value("pe_dropout_rate", c.pe_dropout_rate);
    c.exchange_n = j.value("exchange_n", c.exchange_n);
    c.dedupe_identity = j.value("dedupe_identity", c.dedupe_identity);
    c.resample_candidates_per_epoch =
        j.value("resample_candidates_per_epoch", c.resample_candidates_per_epoch);
    c.mask_cells = j.value("mask_cells", c.mask_cells);
    c.rotation_deg = j.value("rotation_deg", c.rotation_deg);
    c.brightness_delta = j.value("brightness_delta", c.brightness_delta);
    c.contrast_delta = j.value("contrast_delta", c.contrast_delta);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.alpha = j.value("alpha", c.alpha);
    c.beta = j.value("beta", c.beta);
    c.reduction = j.value("reduction", c.reduction);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.optimizer = j.value("optimizer", c.optimizer);
    c.seed = j.value("seed", c.seed);
    c.dataset_dir = j.value("dataset_dir", c.dataset_dir);
    c.eval_split = j.value("eval_split", c.eval_split);
    if (j.contains("synthetic")) c.synthetic = j.at("synthetic").get<SyntheticConfig>();
}

// Applies one "key=value" or "dotted.path=value" override onto a config JSON.
// The value is parsed as JSON when possible, otherwise taken as a string.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw std::invalid_argument("override must look like key=value: " + assignment);
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    nlohmann::json value;
    try {
        value = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::parse_error&) {
        value = raw;
    }
    nlohmann::json* cursor = &j;
    std::size_t pos = 0;
    while (true) {
        const std::size_t dot = key.find('.', pos);
        if (dot == std::string::npos) {
            (*cursor)[key.substr(pos)] = value;
            break;
        }
        cursor = &(*cursor)[key.substr(pos, dot - pos)];
        pos = dot + 1;
    }
}

}  // namespace sspe

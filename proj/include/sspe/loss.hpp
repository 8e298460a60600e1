#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "sspe/labels.hpp"
#include "sspe/matrix.hpp"
#include "sspe/tape.hpp"

namespace sspe {

constexpr double kLogFloor = 1e-12;

// Incremented whenever a probability had to be clamped at the log floor.
inline std::atomic<std::uint64_t>& log_clamp_count() {
    static std::atomic<std::uint64_t> n{0};
    return n;
}

// Per-class target weights after label smoothing; sums to 1.
struct SmoothedTarget {
    Matrix weights;
    double epsilon = 0.0;
};

// y_ls = y_hot * (1 - eps) + eps / 2, two classes.
inline SmoothedTarget smooth_labels(const Matrix& one_hot_vec, double epsilon) {
    if (epsilon <= 0.0 || epsilon >= 1.0)
        throw std::invalid_argument("smooth_labels: epsilon must lie in (0, 1)");
    if (one_hot_vec.size() != 2)
        throw std::invalid_argument("smooth_labels: expected a 2-class one-hot vector");
    double ones = 0.0;
    for (double v : one_hot_vec.data) {
        if (v != 0.0 && v != 1.0) throw std::invalid_argument("smooth_labels: not a one-hot vector");
        ones += v;
    }
    if (ones != 1.0) throw std::invalid_argument("smooth_labels: not a one-hot vector");
    SmoothedTarget out;
    out.epsilon = epsilon;
    out.weights = Matrix(1, 2);
    for (std::size_t j = 0; j < 2; ++j)
        out.weights.data[j] = one_hot_vec.data[j] * (1.0 - epsilon) + epsilon / 2.0;
    return out;
}

namespace detail {

inline void check_probs(const Matrix& probs) {
    double sum = 0.0;
    for (double p : probs.data) {
        if (p < 0.0) throw std::invalid_argument("loss: negative probability");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("loss: probabilities must sum to 1");
}

inline double floored_log(double p) {
    if (p < kLogFloor) {
        log_clamp_count().fetch_add(1, std::memory_order_relaxed);
        p = kLogFloor;
    }
    return std::log(p);
}

inline double weighted_nll(const Matrix& probs, const Matrix& weights) {
    probs.require_same_shape(weights, "loss");
    check_probs(probs);
    double loss = 0.0;
    for (std::size_t j = 0; j < probs.data.size(); ++j) {
        if (weights.data[j] == 0.0) continue;
        loss -= weights.data[j] * floored_log(probs.data[j]);
    }
    return loss;
}

}  // namespace detail

// Classical cross-entropy: -sum y_hot log p.
inline double ce_loss(const Matrix& probs, const Matrix& one_hot_vec) {
    return detail::weighted_nll(probs, one_hot_vec);
}

// Label-smoothing cross-entropy: -sum y_ls log p.
inline double lsce_loss(const Matrix& probs, const SmoothedTarget& target) {
    return detail::weighted_nll(probs, target.weights);
}

enum class Reduction { mean, sum };

// Weights of the hybrid objective; LSCE over mixed-KL members uses epsilon.
struct HybridLossConfig {
    double epsilon = 0.2;
    double alpha = 0.3;
    double beta = 0.7;
    Reduction reduction = Reduction::mean;

    void validate() const {
        if (epsilon <= 0.0 || epsilon >= 1.0)
            throw std::invalid_argument("hybrid loss: epsilon must lie in (0, 1)");
        if (alpha < 0.0 || alpha > 1.0 || beta < 0.0 || beta > 1.0)
            throw std::invalid_argument("hybrid loss: alpha and beta must lie in [0, 1]");
        if (std::abs(alpha + beta - 1.0) > 1e-12)
            throw std::invalid_argument("hybrid loss: alpha + beta must equal 1");
    }
};

// Index split of a batch into mixed-KL and full-KL members.
struct BatchPartition {
    std::vector<std::size_t> mixed_indices;
    std::vector<std::size_t> full_indices;
};

inline BatchPartition partition_batch(const std::vector<SetTag>& tags) {
    BatchPartition p;
    for (std::size_t i = 0; i < tags.size(); ++i)
        (tags[i] == SetTag::mixed_kl ? p.mixed_indices : p.full_indices).push_back(i);
    return p;
}

struct LossItem {
    Matrix probs;
    Grade label;
    SetTag tag;
};

// alpha * LSCE over the mixed-KL subset + beta * CE over the full-KL subset.
// An empty subset contributes 0. Mean reduction divides each subset's sum by
// its cardinality; sum reduction keeps the plain sums.
inline double hybrid_loss(const std::vector<LossItem>& batch, const HybridLossConfig& cfg) {
    cfg.validate();
    double mixed_sum = 0.0, full_sum = 0.0;
    std::size_t n_mixed = 0, n_full = 0;
    for (const LossItem& item : batch) {
        if (item.tag == SetTag::mixed_kl) {
            mixed_sum += lsce_loss(item.probs, smooth_labels(one_hot(item.label), cfg.epsilon));
            ++n_mixed;
        } else {
            full_sum += ce_loss(item.probs, one_hot(item.label));
            ++n_full;
        }
    }
    if (cfg.reduction == Reduction::mean) {
        if (n_mixed > 0) mixed_sum /= static_cast<double>(n_mixed);
        if (n_full > 0) full_sum /= static_cast<double>(n_full);
    }
    return cfg.alpha * mixed_sum + cfg.beta * full_sum;
}

// Tape-side hybrid objective over per-sequence logits nodes; same reduction
// semantics as hybrid_loss but fused from logits for stable gradients.
inline Tape::Id hybrid_loss_on_tape(Tape& t, const std::vector<Tape::Id>& loss_nodes,
                                    const std::vector<SetTag>& tags, const HybridLossConfig& cfg) {
    cfg.validate();
    if (loss_nodes.size() != tags.size())
        throw std::invalid_argument("hybrid_loss_on_tape: size mismatch");
    std::vector<Tape::Id> ids;
    std::vector<double> coeffs;
    const BatchPartition part = partition_batch(tags);
    const bool mean = cfg.reduction == Reduction::mean;
    const double wm = cfg.alpha / (mean && !part.mixed_indices.empty()
                                       ? static_cast<double>(part.mixed_indices.size())
                                       : 1.0);
    const double wf = cfg.beta / (mean && !part.full_indices.empty()
                                      ? static_cast<double>(part.full_indices.size())
                                      : 1.0);
    for (std::size_t i : part.mixed_indices) {
        ids.push_back(loss_nodes[i]);
        coeffs.push_back(wm);
    }
    for (std::size_t i : part.full_indices) {
        ids.push_back(loss_nodes[i]);
        coeffs.push_back(wf);
    }
    return t.weighted_sum(ids, coeffs);
}

// Per-sequence loss node from logits: CE for full-KL members, LSCE with the
// configured epsilon for mixed-KL members.
inline Tape::Id sequence_loss_on_tape(Tape& t, Tape::Id logits, Grade label, SetTag tag,
                                      double epsilon) {
    const Matrix weights =
        tag == SetTag::mixed_kl ? smooth_labels(one_hot(label), epsilon).weights : one_hot(label);
    return t.nll_from_logits(logits, weights);
}

}  // namespace sspe

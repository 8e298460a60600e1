#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "sspe/encoder.hpp"
#include "sspe/labels.hpp"
#include "sspe/pgm.hpp"
#include "sspe/plan.hpp"
#include "sspe/rng.hpp"

namespace sspe {

struct LabeledGrid {
    TokenGrid tokens;
    Grade grade = Grade::kl0;
    int id = -1;
};

// Where each key slot of a composed sequence came from.
struct Provenance {
    int target_id = -1;
    int candidate_id = -1;                // -1 when the sequence is untouched original data
    std::vector<int> key_slot_sources;    // per key slot: 0 = target, 1 = candidate
};

struct LabeledSequence {
    TokenGrid tokens;
    Grade label = Grade::kl0;
    SetTag set_tag = SetTag::full_kl;
    Provenance provenance;
};

inline LabeledSequence original_sequence(const LabeledGrid& g) {
    LabeledSequence s;
    s.tokens = g.tokens;
    s.label = g.grade;
    s.set_tag = SetTag::full_kl;
    s.provenance.target_id = g.id;
    return s;
}

// Key-patch exchange: for every candidate, emit all 2^|key_set| source
// combinations. Key slots are filled from the target or the candidate at the
// SAME grid index; non-key patches always come from the target. Labels follow
// assign_label over the key-slot grades; a sequence is full-KL iff its key
// patches share one grade.
inline std::vector<LabeledSequence> exchange_key_patches(const LabeledGrid& target,
                                                         const std::vector<LabeledGrid>& candidates,
                                                         const KeySet& key_set,
                                                         bool dedupe_identity = false) {
    if (key_set.indices.empty()) throw std::invalid_argument("exchange: key set must be non-empty");
    key_set.validate(target.tokens.num_patches());
    const std::size_t k = key_set.size();
    if (k > 20) throw std::invalid_argument("exchange: key set too large");
    std::vector<LabeledSequence> out;
    bool identity_emitted = false;
    for (const LabeledGrid& cand : candidates) {
        if (cand.id == target.id)
            throw std::invalid_argument("exchange: candidate id equals target id");
        if (cand.tokens.grid_rows != target.tokens.grid_rows ||
            cand.tokens.grid_cols != target.tokens.grid_cols ||
            cand.tokens.patch_pixels != target.tokens.patch_pixels)
            throw std::invalid_argument("exchange: geometry mismatch");
        for (std::size_t mask = 0; mask < (std::size_t{1} << k); ++mask) {
            if (dedupe_identity && mask == 0) {
                if (identity_emitted) continue;
                identity_emitted = true;
            }
            LabeledSequence s;
            s.tokens = target.tokens;
            s.provenance.target_id = target.id;
            s.provenance.candidate_id = cand.id;
            std::vector<Grade> slot_grades;
            for (std::size_t j = 0; j < k; ++j) {
                const bool from_candidate = (mask >> j) & 1u;
                const int patch = key_set.indices[j];
                if (from_candidate) {
                    const double* src = cand.tokens.tokens.row_ptr(static_cast<std::size_t>(patch) - 1);
                    double* dst = s.tokens.tokens.row_ptr(static_cast<std::size_t>(patch) - 1);
                    std::copy(src, src + cand.tokens.tokens.cols, dst);
                }
                slot_grades.push_back(from_candidate ? cand.grade : target.grade);
                s.provenance.key_slot_sources.push_back(from_candidate ? 1 : 0);
            }
            s.label = assign_label(slot_grades);
            const bool all_same = std::all_of(slot_grades.begin(), slot_grades.end(),
                                              [&](Grade g) { return g == slot_grades.front(); });
            s.set_tag = all_same ? SetTag::full_kl : SetTag::mixed_kl;
            out.push_back(std::move(s));
        }
    }
    return out;
}

// Ranges for the conventional augmentations; identity when every range is a
// single point ([0,0] rotation, [1,1] factors).
struct AugmentConfig {
    double rotation_deg_min = 0.0;
    double rotation_deg_max = 0.0;
    double brightness_min = 1.0;
    double brightness_max = 1.0;
    double contrast_min = 1.0;
    double contrast_max = 1.0;
};

namespace detail {

// Nearest-neighbor rotation about the image center, zero fill outside.
inline Image rotate_nn(const Image& img, double degrees) {
    if (degrees == 0.0) return img;
    const double rad = degrees * 3.141592653589793238462643383279502884 / 180.0;
    const double c = std::cos(rad), s = std::sin(rad);
    const double cy = (img.height - 1) / 2.0, cx = (img.width - 1) / 2.0;
    Image out(img.height, img.width, 0.0);
    for (int r = 0; r < img.height; ++r) {
        for (int col = 0; col < img.width; ++col) {
            // inverse map: rotate the destination coordinate by -degrees
            const double dy = r - cy, dx = col - cx;
            const double sy = cy + (s * dx + c * dy);
            const double sx = cx + (c * dx - s * dy);
            const long ir = std::lround(sy), ic = std::lround(sx);
            if (ir < 0 || ir >= img.height || ic < 0 || ic >= img.width) continue;
            out.at(r, col) = img.at(static_cast<int>(ir), static_cast<int>(ic));
        }
    }
    return out;
}

}  // namespace detail

// Random rotation, brightness and contrast, in that order; output clamped to
// [0, 1]. Applied to the raster before patch decomposition.
inline Image conventional_augment(const Image& img, Rng& rng, const AugmentConfig& cfg) {
    const double deg = rng.uniform(cfg.rotation_deg_min, cfg.rotation_deg_max);
    const double bright = rng.uniform(cfg.brightness_min, cfg.brightness_max);
    const double contrast = rng.uniform(cfg.contrast_min, cfg.contrast_max);
    Image out = detail::rotate_nn(img, deg);
    if (bright == 1.0 && contrast == 1.0) return out;
    for (double& v : out.px) {
        v *= bright;
        if (contrast != 1.0) v = 0.5 + (v - 0.5) * contrast;
        v = std::min(1.0, std::max(0.0, v));
    }
    return out;
}

// Keeps every item once and draws extra minority items with replacement until
// both classes are equally represented.
template <typename T, typename GradeFn>
std::vector<T> bootstrap_oversample(const std::vector<T>& items, GradeFn&& grade_of, Rng& rng) {
    std::vector<std::size_t> idx0, idx2;
    for (std::size_t i = 0; i < items.size(); ++i)
        (grade_of(items[i]) == Grade::kl0 ? idx0 : idx2).push_back(i);
    if (idx0.empty() || idx2.empty())
        throw std::invalid_argument("bootstrap_oversample: a class has zero items");
    std::vector<T> out = items;
    const auto& minority = idx0.size() < idx2.size() ? idx0 : idx2;
    const std::size_t deficit =
        idx0.size() < idx2.size() ? idx2.size() - idx0.size() : idx0.size() - idx2.size();
    for (std::size_t i = 0; i < deficit; ++i) {
        const std::size_t pick = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(minority.size()) - 1));
        out.push_back(items[minority[pick]]);
    }
    return out;
}

}  // namespace sspe

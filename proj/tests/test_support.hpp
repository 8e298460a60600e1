#pragma once

// Shared helpers for the unit and acceptance suites.

#include <cmath>
#include <string>
#include <vector>

#include "sspe/dataset.hpp"
#include "sspe/rng.hpp"
#include "sspe/train.hpp"

namespace sspe_test {

// Builds a fully in-memory dataset (no disk) with the standard 7:1:2 split.
inline std::vector<sspe::LoadedSample> make_loaded_dataset(const sspe::SyntheticConfig& cfg) {
    std::vector<sspe::ManifestEntry> entries;
    for (int id = 0; id < cfg.n0 + cfg.n2; ++id) {
        sspe::ManifestEntry e;
        e.grade = id < cfg.n0 ? sspe::Grade::kl0 : sspe::Grade::kl2;
        e.id = id;
        entries.push_back(e);
    }
    sspe::Rng split_rng(sspe::seed_hash(cfg.seed, 0x517117u));
    sspe::split_dataset(entries, 7, 1, 2, split_rng);
    std::vector<sspe::LoadedSample> samples;
    for (const auto& e : entries)
        samples.push_back({e, sspe::synthesize_image(cfg, e.id, e.grade)});
    return samples;
}

// Two-sided Welch t-test p-value via the normal approximation (large n).
inline double welch_p_value(const std::vector<double>& a, const std::vector<double>& b) {
    auto mean_var = [](const std::vector<double>& xs) {
        double m = 0.0;
        for (double x : xs) m += x;
        m /= static_cast<double>(xs.size());
        double v = 0.0;
        for (double x : xs) v += (x - m) * (x - m);
        v /= static_cast<double>(xs.size() - 1);
        return std::pair<double, double>{m, v};
    };
    const auto [ma, va] = mean_var(a);
    const auto [mb, vb] = mean_var(b);
    const double se = std::sqrt(va / static_cast<double>(a.size()) + vb / static_cast<double>(b.size()));
    if (se == 0.0) return 1.0;
    const double t = std::abs(ma - mb) / se;
    return std::erfc(t / std::sqrt(2.0));
}

// Pixel sum of an image with the given grid cells zeroed out.
inline double masked_pixel_sum(const sspe::Image& img, const std::vector<int>& masked_cells,
                               int patch_pixels) {
    const int gc = img.width / patch_pixels;
    sspe::Image copy = img;
    for (int k : masked_cells) {
        const int r0 = ((k - 1) / gc) * patch_pixels;
        const int c0 = ((k - 1) % gc) * patch_pixels;
        for (int r = 0; r < patch_pixels; ++r)
            for (int c = 0; c < patch_pixels; ++c) copy.at(r0 + r, c0 + c) = 0.0;
    }
    double s = 0.0;
    for (double v : copy.px) s += v;
    return s;
}

}  // namespace sspe_test

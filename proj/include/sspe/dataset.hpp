#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sspe/labels.hpp"
#include "sspe/pgm.hpp"
#include "sspe/plan.hpp"
#include "sspe/rng.hpp"

namespace sspe {

enum class Split { train, val, test };

inline const char* to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

inline Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw std::invalid_argument("unknown split: " + s);
}

struct ManifestEntry {
    std::string path;  // relative to the dataset directory
    Grade grade = Grade::kl0;
    Split split = Split::train;
    int id = -1;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    nlohmann::json generator_config;
};

// Synthetic localized-signal corpus: the class signal lives only in the key
// cells. Both classes share background, noise and distractor statistics; the
// per-image distractor count is drawn from the same distribution for both, so
// motif COUNT overlaps between classes while motif POSITION separates them.
struct SyntheticConfig {
    int image_side = 48;
    int patch_pixels = 16;
    std::vector<int> key_cells = {4, 6};
    double motif_amplitude = 0.18;
    double noise_sigma = 0.12;
    int distractor_max = 4;  // per-image count ~ U{0..distractor_max}
    int n0 = 160;
    int n2 = 130;
    std::uint64_t seed = 1;

    int grid_cols() const { return image_side / patch_pixels; }
    int grid_rows() const { return image_side / patch_pixels; }
    int num_cells() const { return grid_rows() * grid_cols(); }

    void validate() const {
        if (image_side <= 0 || patch_pixels <= 0 || image_side % patch_pixels != 0)
            throw std::invalid_argument("synthetic: image side must be a multiple of patch size");
        if (motif_amplitude < 0.0) throw std::invalid_argument("synthetic: amplitude must be >= 0");
        if (key_cells.empty()) throw std::invalid_argument("synthetic: key cells must be non-empty");
        for (int k : key_cells)
            if (k < 1 || k > num_cells())
                throw std::invalid_argument("synthetic: key cell out of range for the grid");
    }
};

inline void to_json(nlohmann::json& j, const SyntheticConfig& c) {
    j = nlohmann::json{{"image_side", c.image_side},
                       {"patch_pixels", c.patch_pixels},
                       {"key_cells", c.key_cells},
                       {"motif_amplitude", c.motif_amplitude},
                       {"noise_sigma", c.noise_sigma},
                       {"distractor_max", c.distractor_max},
                       {"n0", c.n0},
                       {"n2", c.n2},
                       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, SyntheticConfig& c) {
    c.image_side = j.value("image_side", c.image_side);
    c.patch_pixels = j.value("patch_pixels", c.patch_pixels);
    c.key_cells = j.value("key_cells", c.key_cells);
    c.motif_amplitude = j.value("motif_amplitude", c.motif_amplitude);
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    c.distractor_max = j.value("distractor_max", c.distractor_max);
    c.n0 = j.value("n0", c.n0);
    c.n2 = j.value("n2", c.n2);
    c.seed = j.value("seed", c.seed);
}

namespace detail {

// Bright ellipse pair at the medial/lateral edges of one grid cell.
inline void draw_motif(Image& img, const SyntheticConfig& cfg, int cell, Rng& rng) {
    const int pp = cfg.patch_pixels;
    const int r0 = ((cell - 1) / cfg.grid_cols()) * pp;
    const int c0 = ((cell - 1) % cfg.grid_cols()) * pp;
    for (int side = 0; side < 2; ++side) {
        const double cx = pp * (side == 0 ? 0.18 : 0.82) + rng.uniform(-0.05, 0.05) * pp;
        const double cy = pp * 0.5 + rng.uniform(-0.05, 0.05) * pp;
        const double ax = pp * 0.16 * rng.uniform(0.85, 1.15);
        const double ay = pp * 0.33 * rng.uniform(0.85, 1.15);
        const double amp = cfg.motif_amplitude * rng.uniform(0.8, 1.2);
        for (int y = 0; y < pp; ++y) {
            for (int x = 0; x < pp; ++x) {
                const double dy = (y - cy) / ay;
                const double dx = (x - cx) / ax;
                const double d2 = dy * dy + dx * dx;
                if (d2 < 1.0) img.at(r0 + y, c0 + x) += amp * (1.0 - d2);
            }
        }
    }
}

}  // namespace detail

// One synthetic raster: smooth low-frequency background + Gaussian noise +
// distractor motifs in random non-key cells (both classes, count-matched) and,
// for KL-2 only, the discriminative motif inside EACH key cell. The key-cell
// draws come last so masked images are distribution-identical across classes.
inline Image synthesize_image(const SyntheticConfig& cfg, int sample_id, Grade grade) {
    cfg.validate();
    Rng rng(seed_hash(cfg.seed, 0x5a5au, static_cast<std::uint64_t>(sample_id)));
    const int S = cfg.image_side;
    Image img(S, S, 0.45);

    // background: two random low-frequency cosine waves
    for (int wave = 0; wave < 2; ++wave) {
        const double amp = rng.uniform(0.03, 0.09);
        const double fy = rng.uniform(0.5, 2.0) / S;
        const double fx = rng.uniform(0.5, 2.0) / S;
        const double phase = rng.uniform(0.0, 6.283185307179586);
        for (int r = 0; r < S; ++r)
            for (int c = 0; c < S; ++c)
                img.at(r, c) += amp * std::cos(6.283185307179586 * (fy * r + fx * c) + phase);
    }
    for (double& v : img.px) v += rng.gauss(0.0, cfg.noise_sigma);

    // distractors: same count distribution and the same motif shape in both
    // classes, confined to non-key cells
    std::vector<int> non_key;
    KeySet keys(cfg.key_cells);
    for (int k = 1; k <= cfg.num_cells(); ++k)
        if (!keys.contains(k)) non_key.push_back(k);
    const int n_distract = static_cast<int>(rng.uniform_int(0, cfg.distractor_max));
    std::vector<int> cells = non_key;
    rng.shuffle(cells);
    for (int i = 0; i < n_distract && i < static_cast<int>(cells.size()); ++i)
        detail::draw_motif(img, cfg, cells[static_cast<std::size_t>(i)], rng);

    if (grade == Grade::kl2)
        for (int k : keys.indices) detail::draw_motif(img, cfg, k, rng);

    for (double& v : img.px) v = std::min(1.0, std::max(0.0, v));
    return img;
}

// Per-class random partition at the given ratio; fractional remainders go to
// the training split. Mutates the split field in place.
inline void split_dataset(std::vector<ManifestEntry>& entries, int r_train, int r_val, int r_test,
                          Rng& rng) {
    if (r_train <= 0 || r_val <= 0 || r_test <= 0)
        throw std::invalid_argument("split_dataset: ratio parts must be positive");
    const int total = r_train + r_val + r_test;
    for (Grade g : {Grade::kl0, Grade::kl2}) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < entries.size(); ++i)
            if (entries[i].grade == g) idx.push_back(i);
        if (idx.size() < 10)
            throw std::invalid_argument("split_dataset: class with fewer than 10 items");
        rng.shuffle(idx);
        const std::size_t n = idx.size();
        const std::size_t n_val = n * static_cast<std::size_t>(r_val) / static_cast<std::size_t>(total);
        const std::size_t n_test = n * static_cast<std::size_t>(r_test) / static_cast<std::size_t>(total);
        const std::size_t n_train = n - n_val - n_test;  // remainder lands here
        for (std::size_t i = 0; i < n; ++i) {
            Split s = Split::train;
            if (i >= n_train && i < n_train + n_val) s = Split::val;
            if (i >= n_train + n_val) s = Split::test;
            entries[idx[i]].split = s;
        }
    }
}

inline std::string manifest_to_csv(const DatasetManifest& m) {
    std::ostringstream out;
    out << "path,grade,split,id\n";
    for (const ManifestEntry& e : m.entries)
        out << e.path << "," << (e.grade == Grade::kl0 ? 0 : 2) << "," << to_string(e.split) << ","
            << e.id << "\n";
    return out.str();
}

inline DatasetManifest manifest_from_csv(std::istream& in) {
    DatasetManifest m;
    std::string line;
    if (!std::getline(in, line) || line != "path,grade,split,id")
        throw std::runtime_error("manifest: bad header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string path, grade, split, id;
        if (!std::getline(row, path, ',') || !std::getline(row, grade, ',') ||
            !std::getline(row, split, ',') || !std::getline(row, id, ','))
            throw std::runtime_error("manifest: bad row: " + line);
        ManifestEntry e;
        e.path = path;
        e.grade = grade_from_string(grade);
        e.split = split_from_string(split);
        e.id = std::stoi(id);
        m.entries.push_back(e);
    }
    return m;
}

// load_image per the data contract: P5, maxval 255, scaled to [0, 1].
inline Image load_image(const std::string& path) { return load_pgm(path); }

// Writes images, manifest.csv and a generator_config.json sidecar.
inline DatasetManifest generate_synthetic(const SyntheticConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    DatasetManifest manifest;
    nlohmann::json echo;
    to_json(echo, cfg);
    manifest.generator_config = echo;

    const int total = cfg.n0 + cfg.n2;
    for (int id = 0; id < total; ++id) {
        const Grade g = id < cfg.n0 ? Grade::kl0 : Grade::kl2;
        char name[64];
        std::snprintf(name, sizeof(name), "img_%05d_kl%d.pgm", id, g == Grade::kl0 ? 0 : 2);
        const Image img = synthesize_image(cfg, id, g);
        save_pgm((fs::path(out_dir) / name).string(), img);
        ManifestEntry e;
        e.path = name;
        e.grade = g;
        e.id = id;
        manifest.entries.push_back(e);
    }

    Rng split_rng(seed_hash(cfg.seed, 0x517117u));
    split_dataset(manifest.entries, 7, 1, 2, split_rng);

    {
        std::ofstream out(fs::path(out_dir) / "manifest.csv", std::ios::binary);
        out << manifest_to_csv(manifest);
    }
    {
        std::ofstream out(fs::path(out_dir) / "generator_config.json", std::ios::binary);
        out << manifest.generator_config.dump(2) << "\n";
    }
    return manifest;
}

inline DatasetManifest read_manifest(const std::string& dataset_dir) {
    namespace fs = std::filesystem;
    std::ifstream in(fs::path(dataset_dir) / "manifest.csv", std::ios::binary);
    if (!in) throw std::runtime_error("cannot open manifest.csv under " + dataset_dir);
    DatasetManifest m = manifest_from_csv(in);
    const fs::path sidecar = fs::path(dataset_dir) / "generator_config.json";
    if (fs::exists(sidecar)) {
        std::ifstream sc(sidecar);
        sc >> m.generator_config;
    }
    return m;
}

}  // namespace sspe

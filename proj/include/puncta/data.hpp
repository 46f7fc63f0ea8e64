#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "puncta/config.hpp"
#include "puncta/grid.hpp"
#include "puncta/io.hpp"
#include "puncta/rng.hpp"
#include "puncta/synth.hpp"
#include "puncta/texture.hpp"

namespace puncta {

// Patch index bases keep the random streams of the three cohorts disjoint
// and independent of cohort sizes.
inline constexpr std::uint64_t kTrainStreamBase = 0;
inline constexpr std::uint64_t kTestStreamBase = 1u << 20;
inline constexpr std::uint64_t kShiftStreamBase = 2u << 20;

// Cross-site surrogate: weaker contrast, heavier blur.
inline SynthConfig shifted_variant(const SynthConfig& cfg) {
    SynthConfig s = cfg;
    s.gain_lo *= 0.5;
    s.gain_hi *= 0.5;
    s.blur_sigma_lo *= 1.5;
    s.blur_sigma_hi *= 1.5;
    return s;
}

inline std::vector<std::string> list_files_sorted(const std::string& dir,
                                                  const std::vector<std::string>& exts) {
    if (!std::filesystem::is_directory(dir)) throw io_error("not a directory: " + dir);
    std::vector<std::string> out;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string ext = e.path().extension().string();
        if (std::find(exts.begin(), exts.end(), ext) != exts.end())
            out.push_back(e.path().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline Grid<double> load_patch_file(const std::string& path) {
    const std::string ext = std::filesystem::path(path).extension().string();
    if (ext == ".mct1") return read_mct1_grid<double>(path);
    if (ext == ".pgm") return read_pgm_patch<double>(path);
    throw io_error("unsupported patch format: " + path);
}

// Background provider: round-robin over a patch directory when one is
// configured, otherwise the deterministic texture generator.
class BackgroundSource {
public:
    BackgroundSource(const DataConfig& data, const SynthConfig& synth, std::uint64_t seed)
        : data_(data), patch_size_(synth.patch_size), seed_(seed) {
        if (!data.backgrounds_dir.empty()) {
            const auto files = list_files_sorted(data.backgrounds_dir, {".mct1", ".pgm"});
            if (files.empty())
                throw validation_error("backgrounds_dir has no .mct1/.pgm files: " +
                                       data.backgrounds_dir);
            for (const auto& f : files) {
                Grid<double> g = load_patch_file(f);
                if (g.h != patch_size_ || g.w != patch_size_)
                    throw validation_error("background size mismatch (" + std::to_string(g.h) +
                                           "x" + std::to_string(g.w) + " vs patch_size " +
                                           std::to_string(patch_size_) + "): " + f);
                pool_.push_back(std::move(g));
            }
        }
    }

    Grid<double> get(std::uint64_t index) const {
        if (!pool_.empty()) return pool_[index % pool_.size()];
        Rng rng(seed_, make_stream(StreamId::texture, index));
        return generate_texture_background(rng, data_.texture, patch_size_, patch_size_);
    }

private:
    DataConfig data_;
    int patch_size_;
    std::uint64_t seed_;
    std::vector<Grid<double>> pool_;
};

// Training sample in network precision.
struct Sample {
    Grid<float> xs;
    MaskGrid ys;
    MaskGrid ss;
};

inline Sample to_sample(const LabeledPatch& lp) {
    return Sample{grid_cast<float>(lp.xs), lp.ys, lp.ss};
}

inline std::vector<Sample> build_dataset(const BackgroundSource& bg, const SynthConfig& synth,
                                         std::uint64_t seed, std::uint64_t stream_base, int count) {
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const std::uint64_t idx = stream_base + static_cast<std::uint64_t>(i);
        const Grid<double> xb = bg.get(idx);
        Rng rng(seed, make_stream(StreamId::synth, idx));
        out.push_back(to_sample(make_labeled_patch(xb, rng, synth)));
    }
    return out;
}

// Loads pairs produced by the synth subcommand. Images are required; masks
// and seeds are matched by index and may be absent as a group.
inline std::vector<Sample> load_dataset(const std::string& dir) {
    const auto xs_files = list_files_sorted(dir, {".mct1"});
    if (xs_files.empty()) throw io_error("no .mct1 patches in " + dir);
    std::vector<Sample> out;
    out.reserve(xs_files.size());
    for (const auto& xf : xs_files) {
        const std::filesystem::path xp(xf);
        const std::string stem = xp.stem().string();
        if (stem.rfind("xs_", 0) != 0) continue;
        const std::string tag = stem.substr(3);
        Sample s;
        s.xs = read_mct1_grid<float>(xf);
        const auto yp = xp.parent_path() / ("ys_" + tag + ".pgm");
        const auto sp = xp.parent_path() / ("ss_" + tag + ".pgm");
        if (std::filesystem::exists(yp)) {
            s.ys = read_pgm_mask(yp.string());
            require_same_shape(s.xs, s.ys, "load_dataset");
        } else {
            s.ys = MaskGrid(s.xs.h, s.xs.w);
        }
        if (std::filesystem::exists(sp)) {
            s.ss = read_pgm_mask(sp.string());
            require_same_shape(s.xs, s.ss, "load_dataset");
        } else {
            s.ss = MaskGrid(s.xs.h, s.xs.w);
        }
        out.push_back(std::move(s));
    }
    if (out.empty()) throw io_error("no xs_*.mct1 patches in " + dir);
    return out;
}

} // namespace puncta

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sgf/segmentation.hpp"
#include "sgf/tensor.hpp"

namespace sgf {

namespace fs = std::filesystem;

enum class Split { Train, Val, Test };
std::string_view to_string(Split split);
Split parse_split(std::string_view name);

/// One manifest line: {"path": ..., "label": 0|1, "split": "train"|"val"|"test"}.
/// Label 1 is REAL, label 0 is FAKE.
struct ManifestEntry {
    fs::path path;
    int label = 0;
    Split split = Split::Train;
};

struct Manifest {
    std::vector<ManifestEntry> entries;
    std::vector<std::string> warnings;

    std::vector<ManifestEntry> split(Split which) const;
};

/// Parses a JSON Lines manifest. Relative paths resolve against the
/// manifest's directory. Errors name the offending line.
Manifest load_manifest(const fs::path& path);
void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries);

/// Decodes PNG or binary PPM/PGM into [h, w, 3] with values divided by the
/// channel maximum. Grayscale is replicated to three channels.
TensorF decode_image(const fs::path& path);
/// Values are clamped to [0, 1] and rounded to 8 bits.
void write_ppm(const fs::path& path, const TensorF& image);
void write_png(const fs::path& path, const TensorF& image);

/// Bilinear resize of [h, w, c] to [side, side, c] with pixel-center alignment.
TensorF resize_bilinear(const TensorF& image, std::size_t side);

struct Sample {
    TensorF image;  // [side, side, 3], values in [0, 1]
    int label = 0;
    std::string source;
};

/// Decodes and resizes every entry of one split; fails loudly on bad values.
std::vector<Sample> load_samples(const std::vector<ManifestEntry>& entries, std::size_t side);

// ---------------------------------------------------------------------------

struct SynthConfig {
    std::size_t count_per_class = 10;
    std::size_t size = 64;
    std::uint64_t seed = 0;
    double patch_min = 0.2;  // patch side as a fraction of the image side
    double patch_max = 0.4;
    std::size_t feather = 2;      // pixels
    std::size_t blur_radius = 1;  // box blur inside the pasted patch
    double noise_sigma = 0.02;
    double val_fraction = 0.2;
    double test_fraction = 0.0;
    std::string format = "ppm";  // ppm | png

    void validate() const;
};

struct SynthImage {
    TensorF image;  // 8-bit quantised, [size, size, 3]
    int label = 0;
    Split split = Split::Train;
    Block patch{};  // pasted rectangle, fakes only
    std::string name;
};

/// In-memory synthetic set. Reals are four low-frequency sinusoidal fields
/// plus Gaussian noise; fakes paste a blurred, feathered rectangle from a
/// different real image near the image center. Pure function of the config.
std::vector<SynthImage> synthesize(const SynthConfig& cfg);

/// Writes the images, "manifest.jsonl" and "synth_config.json" into `dir`.
Manifest generate_synthetic_dataset(const SynthConfig& cfg, const fs::path& dir);

std::vector<Sample> to_samples(const std::vector<SynthImage>& images, Split split);

// ---------------------------------------------------------------------------

/// Per-epoch shuffle seeded by (seed xor epoch); the last partial batch is kept.
std::vector<std::vector<std::size_t>> batch_iter(std::size_t sample_count, std::size_t batch_size,
                                                 std::uint64_t seed, std::size_t epoch);

/// Stacks the chosen samples into [b, side, side, 3].
TensorF stack_images(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices);
std::vector<int> gather_labels(const std::vector<Sample>& samples,
                               const std::vector<std::size_t>& indices);

}  // namespace sgf

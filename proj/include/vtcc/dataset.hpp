#pragma once

// Image datasets held as 8-bit pixels, plus the procedural generator used for
// desk-scale experiments.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "vtcc/augment.hpp"
#include "vtcc/rng.hpp"

namespace vtcc {

class DatasetError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

enum class DatasetKind { kImageDir, kBinaryRecords, kSynthetic };

std::string to_string(DatasetKind kind);
DatasetKind parse_dataset_kind(const std::string& text);

inline constexpr char kDatasetMagic[8] = {'V', 'T', 'C', 'C', 'D', 'S', '0', '1'};
inline constexpr uint16_t kUnlabeled = 0xFFFF;

struct Dataset {
    int channels = 0;
    int side = 0;
    std::vector<uint8_t> pixels;  // records back to back, channel-major
    std::vector<int> labels;      // -1 marks an unlabeled record

    int64_t size() const { return static_cast<int64_t>(labels.size()); }
    size_t record_bytes() const { return static_cast<size_t>(channels) * side * side; }
    // Pixels scaled to [0, 1].
    Image image(int64_t index) const;
    bool has_labels() const;  // every record labeled
    int num_classes() const;  // largest label + 1
    Dataset without_labels() const;
};

// Little-endian header "VTCCDS01", u32 count, u32 C, u32 side, then per
// record a u16 label (0xFFFF unlabeled) and C·side·side bytes.
Dataset read_binary_records(const std::filesystem::path& path);
void write_binary_records(const Dataset& data, const std::filesystem::path& path);

// One subdirectory of PNG files per class. Classes and files are taken in
// lexicographic order; the class index is the label.
Dataset load_image_dir(const std::filesystem::path& root);

// 8-bit PNG I/O; gray images decode to one channel, colour to three (alpha dropped).
Image read_png(const std::filesystem::path& path, int& channels_out);
void write_png(const Image& img, const std::filesystem::path& path);

struct SyntheticSpec {
    int classes = 4;
    int per_class = 128;
    int side = 32;
    uint64_t seed = 7;
    double noise = 0.05;

    void validate() const;  // ConfigError
};

// Per-sample draws of one procedural pattern.
struct PatternParams {
    double phase_x = 0.0;
    double phase_y = 0.0;
    double frequency = 1.0;  // multiplier on the class base frequency
    double shift_x = 0.0;    // position jitter as a fraction of the side
    double shift_y = 0.0;
};

PatternParams draw_pattern_params(SeededRng& rng);
// Noise-free single-channel pattern of class `label`, standardized to mean 0.5
// and standard deviation 0.2.
Image render_pattern(int label, int side, const PatternParams& params);
// Balanced labels interleaved by index (record i has label i mod K).
Dataset generate_synthetic(const SyntheticSpec& spec);

struct DataSourceConfig {
    DatasetKind kind = DatasetKind::kSynthetic;
    std::string path;  // file or directory; unused for synthetic
    SyntheticSpec synthetic;
};

Dataset load_dataset(const DataSourceConfig& source);

}  // namespace vtcc

#include "vtcc/dataset.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <numbers>

#include "vtcc/model_config.hpp"

namespace vtcc {

namespace {

void put_u16(std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

uint32_t get_u32(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 | static_cast<uint32_t>(p[2]) << 16 |
           static_cast<uint32_t>(p[3]) << 24;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

struct FileCloser {
    void operator()(FILE* f) const { std::fclose(f); }
};

}  // namespace

std::string to_string(DatasetKind kind) {
    switch (kind) {
        case DatasetKind::kImageDir: return "image_dir";
        case DatasetKind::kBinaryRecords: return "binary_records";
        case DatasetKind::kSynthetic: return "synthetic";
    }
    return "?";
}

DatasetKind parse_dataset_kind(const std::string& text) {
    if (text == "image_dir") return DatasetKind::kImageDir;
    if (text == "binary_records") return DatasetKind::kBinaryRecords;
    if (text == "synthetic") return DatasetKind::kSynthetic;
    throw ConfigError("unknown dataset kind '" + text + "' (image_dir, binary_records, synthetic)");
}

Image Dataset::image(int64_t index) const {
    if (index < 0 || index >= size()) throw DatasetError("record " + std::to_string(index) + " out of range");
    Image img = Image::zeros(channels, side, side);
    const uint8_t* src = pixels.data() + static_cast<size_t>(index) * record_bytes();
    for (size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<float>(src[i]) / 255.0f;
    return img;
}

bool Dataset::has_labels() const {
    return !labels.empty() && std::all_of(labels.begin(), labels.end(), [](int l) { return l >= 0; });
}

int Dataset::num_classes() const {
    int k = 0;
    for (int l : labels) k = std::max(k, l + 1);
    return k;
}

Dataset Dataset::without_labels() const {
    Dataset out = *this;
    std::fill(out.labels.begin(), out.labels.end(), -1);
    return out;
}

Dataset read_binary_records(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (bytes.size() < 20 || std::memcmp(p, kDatasetMagic, 8) != 0) {
        throw DatasetError(path.string() + ": bad magic, not a VTCCDS01 file");
    }
    const uint32_t count = get_u32(p + 8), channels = get_u32(p + 12), side = get_u32(p + 16);
    if (count == 0) throw DatasetError(path.string() + ": empty dataset (count=0)");
    if (channels == 0 || side == 0 || channels > 4 || side > 4096) {
        throw DatasetError(path.string() + ": bad geometry C=" + std::to_string(channels) + " side=" +
                           std::to_string(side));
    }
    Dataset data;
    data.channels = static_cast<int>(channels);
    data.side = static_cast<int>(side);
    const size_t rec = data.record_bytes();
    const size_t expected = 20 + static_cast<size_t>(count) * (2 + rec);
    if (bytes.size() != expected) {
        const size_t complete = bytes.size() < 20 ? 0 : (bytes.size() - 20) / (2 + rec);
        throw DatasetError(path.string() + ": " + (bytes.size() < expected ? "truncated at record " : "trailing bytes after record ") +
                           std::to_string(std::min<size_t>(complete, count)) + " of " + std::to_string(count));
    }
    data.pixels.resize(static_cast<size_t>(count) * rec);
    data.labels.resize(count);
    for (uint32_t i = 0; i < count; ++i) {
        const unsigned char* r = p + 20 + static_cast<size_t>(i) * (2 + rec);
        const uint16_t label = static_cast<uint16_t>(r[0] | r[1] << 8);
        data.labels[i] = label == kUnlabeled ? -1 : label;
        std::memcpy(data.pixels.data() + static_cast<size_t>(i) * rec, r + 2, rec);
    }
    return data;
}

void write_binary_records(const Dataset& data, const std::filesystem::path& path) {
    if (data.size() == 0) throw DatasetError("refusing to write an empty dataset");
    std::string out(kDatasetMagic, 8);
    put_u32(out, static_cast<uint32_t>(data.size()));
    put_u32(out, static_cast<uint32_t>(data.channels));
    put_u32(out, static_cast<uint32_t>(data.side));
    const size_t rec = data.record_bytes();
    for (int64_t i = 0; i < data.size(); ++i) {
        const int l = data.labels[i];
        if (l >= kUnlabeled) throw DatasetError("label " + std::to_string(l) + " does not fit the record format");
        put_u16(out, l < 0 ? kUnlabeled : static_cast<uint16_t>(l));
        out.append(reinterpret_cast<const char*>(data.pixels.data()) + i * rec, rec);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f || !f.write(out.data(), static_cast<std::streamsize>(out.size()))) {
        throw DatasetError("cannot write " + path.string());
    }
}

Image read_png(const std::filesystem::path& path, int& channels_out) {
    std::unique_ptr<FILE, FileCloser> file(std::fopen(path.c_str(), "rb"));
    if (!file) throw DatasetError("cannot open " + path.string());
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_stdio(&image, file.get())) {
        throw DatasetError(path.string() + ": " + image.message);
    }
    const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
    image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    const int channels = color ? 3 : 1;
    std::vector<uint8_t> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw DatasetError(path.string() + ": " + msg);
    }
    const int h = static_cast<int>(image.height), w = static_cast<int>(image.width);
    Image img = Image::zeros(channels, h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(c, y, x) = static_cast<float>(buffer[(static_cast<size_t>(y) * w + x) * channels + c]) / 255.0f;
    channels_out = channels;
    return img;
}

void write_png(const Image& img, const std::filesystem::path& path) {
    if (img.channels != 1 && img.channels != 3) throw DatasetError("write_png supports 1 or 3 channels");
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<uint8_t> buffer(static_cast<size_t>(img.width) * img.height * img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                buffer[(static_cast<size_t>(y) * img.width + x) * img.channels + c] =
                    static_cast<uint8_t>(std::lround(std::clamp(img.at(c, y, x), 0.0f, 1.0f) * 255.0f));
    if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr)) {
        throw DatasetError("cannot write " + path.string() + ": " + image.message);
    }
}

Dataset load_image_dir(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw DatasetError(root.string() + " is not a directory");
    std::vector<fs::path> classes;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) classes.push_back(entry.path());
    }
    std::sort(classes.begin(), classes.end());
    if (classes.empty()) throw DatasetError(root.string() + ": no class subdirectories");
    Dataset data;
    for (size_t label = 0; label < classes.size(); ++label) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(classes[label])) {
            std::string ext = entry.path().extension().string();
            std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
            if (entry.is_regular_file() && ext == ".png") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& file : files) {
            int channels = 0;
            const Image img = read_png(file, channels);
            if (img.height != img.width) {
                throw DatasetError(file.string() + ": image is " + std::to_string(img.width) + "x" +
                                   std::to_string(img.height) + ", expected square");
            }
            if (data.labels.empty()) {
                data.channels = channels;
                data.side = img.height;
            } else if (channels != data.channels || img.height != data.side) {
                throw DatasetError(file.string() + ": geometry " + std::to_string(channels) + "x" +
                                   std::to_string(img.height) + " differs from " + std::to_string(data.channels) +
                                   "x" + std::to_string(data.side));
            }
            for (float v : img.data) data.pixels.push_back(static_cast<uint8_t>(std::lround(v * 255.0f)));
            data.labels.push_back(static_cast<int>(label));
        }
    }
    if (data.labels.empty()) throw DatasetError(root.string() + ": empty dataset (no PNG files)");
    return data;
}

void SyntheticSpec::validate() const {
    if (classes < 2) throw ConfigError("synthetic classes must be at least 2");
    if (per_class < 1) throw ConfigError("synthetic per_class must be at least 1");
    if (side < 16) throw ConfigError("synthetic side must be at least 16");
    if (!(noise >= 0.0)) throw ConfigError("synthetic noise must be non-negative");
}

PatternParams draw_pattern_params(SeededRng& rng) {
    PatternParams p;
    p.phase_x = rng.uniform(0.0, 2.0 * std::numbers::pi);
    p.phase_y = rng.uniform(0.0, 2.0 * std::numbers::pi);
    p.frequency = rng.uniform(0.9, 1.1);
    p.shift_x = rng.uniform(-0.125, 0.125);
    p.shift_y = rng.uniform(-0.125, 0.125);
    return p;
}

Image render_pattern(int label, int side, const PatternParams& p) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    // Eight families; further classes reuse them at a higher base frequency.
    const int family = label % 8;
    const double f = 3.0 * (1.0 + 0.5 * (label / 8)) * p.frequency;
    auto blob = [](double u, double v, double cu, double cv, double s) {
        return std::exp(-((u - cu) * (u - cu) + (v - cv) * (v - cv)) / (2 * s * s));
    };
    std::vector<double> values(static_cast<size_t>(side) * side);
    for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
            const double u = (x + 0.5) / side, v = (y + 0.5) / side;
            const double su = u - p.shift_x, sv = v - p.shift_y;
            double val = 0.0;
            switch (family) {
                case 0: val = std::sin(two_pi * f * v + p.phase_y); break;
                case 1: val = std::sin(two_pi * f * u + p.phase_x); break;
                case 2: val = std::sin(two_pi * f * u + p.phase_x) * std::sin(two_pi * f * v + p.phase_y); break;
                case 3:
                    val = blob(su, sv, 0.3, 0.3, 0.1) + blob(su, sv, 0.7, 0.38, 0.1) + blob(su, sv, 0.48, 0.72, 0.1);
                    break;
                case 4: val = std::sin(two_pi * f * (u + v) / std::numbers::sqrt2 + p.phase_x); break;
                case 5: val = std::sin(two_pi * f * (u - v) / std::numbers::sqrt2 + p.phase_x); break;
                case 6: val = std::sin(two_pi * f * std::hypot(su - 0.5, sv - 0.5) * 2.0 + p.phase_x); break;
                default:
                    val = blob(su, sv, 0.25, 0.25, 0.07) + blob(su, sv, 0.75, 0.25, 0.07) +
                          blob(su, sv, 0.25, 0.75, 0.07) + blob(su, sv, 0.75, 0.75, 0.07);
                    break;
            }
            values[static_cast<size_t>(y) * side + x] = val;
        }
    }
    double mean = 0.0, var = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    for (double v : values) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(values.size()));
    Image img = Image::zeros(1, side, side);
    for (size_t i = 0; i < values.size(); ++i) {
        img.data[i] = static_cast<float>(0.5 + (sd > 1e-12 ? 0.2 * (values[i] - mean) / sd : 0.0));
    }
    return img;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    Dataset data;
    data.channels = 1;
    data.side = spec.side;
    const int64_t n = static_cast<int64_t>(spec.classes) * spec.per_class;
    data.pixels.resize(static_cast<size_t>(n) * data.record_bytes());
    data.labels.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        SeededRng rng(SeededRng::derive(spec.seed, {static_cast<uint64_t>(i)}));
        const int label = static_cast<int>(i % spec.classes);
        const Image img = render_pattern(label, spec.side, draw_pattern_params(rng));
        uint8_t* dst = data.pixels.data() + static_cast<size_t>(i) * data.record_bytes();
        for (size_t j = 0; j < img.data.size(); ++j) {
            const double v = std::clamp(img.data[j] + spec.noise * rng.normal(), 0.0, 1.0);
            dst[j] = static_cast<uint8_t>(std::lround(v * 255.0));
        }
        data.labels[i] = label;
    }
    return data;
}

Dataset load_dataset(const DataSourceConfig& source) {
    switch (source.kind) {
        case DatasetKind::kBinaryRecords: return read_binary_records(source.path);
        case DatasetKind::kImageDir: return load_image_dir(source.path);
        case DatasetKind::kSynthetic: return generate_synthetic(source.synthetic);
    }
    throw DatasetError("unknown dataset kind");
}

}  // namespace vtcc

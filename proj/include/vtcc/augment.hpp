#pragma once

// Stochastic view-pair generation. Images are planar float32 (C×H×W) with
// pixels in [0, 1] until the final normalization.

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "vtcc/rng.hpp"
#include "vtcc/tensor.hpp"

namespace vtcc {

struct Image {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;  // channel-major

    static Image zeros(int channels, int height, int width);
    float& at(int c, int y, int x) { return data[(static_cast<size_t>(c) * height + y) * width + x]; }
    float at(int c, int y, int x) const { return data[(static_cast<size_t>(c) * height + y) * width + x]; }
    size_t plane() const { return static_cast<size_t>(height) * width; }
};

struct AugmentationSpec {
    std::pair<double, double> crop_scale{0.08, 1.0};
    std::pair<double, double> aspect_range{3.0 / 4.0, 4.0 / 3.0};
    double flip_prob = 0.5;
    std::array<double, 4> jitter{0.4, 0.4, 0.2, 0.1};  // brightness, contrast, saturation, hue
    double jitter_prob = 0.8;
    double grayscale_prob = 0.2;
    std::array<double, 2> blur_prob{1.0, 0.1};  // per view
    std::array<double, 2> solarize_prob{0.0, 0.2};
    int output_side = 32;
    // Per-channel normalization; empty means 0.5 for every channel.
    std::vector<float> norm_mean;
    std::vector<float> norm_std;

    // Every stochastic step off and full-area crops.
    static AugmentationSpec none(int output_side);
    void validate() const;  // ConfigError
};

struct CropRect {
    int top = 0;
    int left = 0;
    int height = 0;
    int width = 0;
    bool operator==(const CropRect&) const = default;
};

// Up to 10 attempts at an area fraction in `scale` and a log-uniform aspect
// ratio in `aspect`, then the largest centered crop within the aspect range.
CropRect sample_crop(int height, int width, std::pair<double, double> scale, std::pair<double, double> aspect,
                     SeededRng& rng);
// Bilinear with half-pixel centers and edge clamping, no antialiasing.
Image crop_resize(const Image& img, const CropRect& rect, int output_side);
Image resize(const Image& img, int output_side);
Image random_resized_crop(const Image& img, std::pair<double, double> scale, int output_side, SeededRng& rng,
                          std::pair<double, double> aspect = {3.0 / 4.0, 4.0 / 3.0});

Image mirror(const Image& img);
Image horizontal_flip(const Image& img, double prob, SeededRng& rng);

Image adjust_brightness(const Image& img, double factor);
// Blends towards the mean luminance.
Image adjust_contrast(const Image& img, double factor);
// Blends towards the per-pixel luminance; RGB only.
Image adjust_saturation(const Image& img, double factor);
// Rotates hue by `shift` turns in HSV space; RGB only.
Image adjust_hue(const Image& img, double shift);
// Luminance 0.299 R + 0.587 G + 0.114 B written to every channel.
Image to_grayscale(const Image& img);
// Inverts pixels at or above `threshold`.
Image solarize(const Image& img, double threshold = 0.5);
// Jitter factors drawn uniformly, applied in a random order.
Image color_jitter(const Image& img, const std::array<double, 4>& strengths, SeededRng& rng);
// Jitter, grayscale and solarize for one view, clamped to [0, 1].
Image photometric_distortion(const Image& img, const AugmentationSpec& spec, int view, SeededRng& rng);

// Ceil(side / 10), bumped to the next odd number.
int blur_kernel_size(int side);
std::vector<double> gaussian_kernel(int size, double sigma);
// Separable blur with reflect padding (edge pixel not repeated).
Image gaussian_blur(const Image& img, double sigma, int kernel_size);
Image gaussian_blur(const Image& img, double prob, SeededRng& rng);

Image to_rgb(const Image& img);
Image normalize(const Image& img, std::span<const float> mean = {}, std::span<const float> stddev = {});

// Which stochastic steps fired for one view.
struct AugmentTrace {
    CropRect crop;
    bool flipped = false;
    bool jittered = false;
    bool grayscale = false;
    bool blurred = false;
    double blur_sigma = 0.0;
    bool solarized = false;
};

Image augment_view(const Image& img, const AugmentationSpec& spec, int view, SeededRng& rng,
                   AugmentTrace* trace = nullptr);
// Each view draws from its own sub-stream of `seed`.
std::pair<Image, Image> generate_view_pair(const Image& img, const AugmentationSpec& spec, uint64_t seed,
                                           std::array<AugmentTrace, 2>* traces = nullptr);
std::pair<Image, Image> generate_view_pair(const Image& img, const AugmentationSpec& spec, SeededRng& rng);

// Stacks equally sized images into an [N×C×H×W] tensor.
Tensor<float> stack_images(std::span<const Image> images);

}  // namespace vtcc

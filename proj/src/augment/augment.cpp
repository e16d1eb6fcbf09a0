#include "vtcc/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vtcc/model_config.hpp"

namespace vtcc {

namespace {

constexpr float kLumaR = 0.299f, kLumaG = 0.587f, kLumaB = 0.114f;

float clamp01(float v) { return std::clamp(v, 0.0f, 1.0f); }

void require_rgb(const Image& img, const char* op) {
    if (img.channels != 3) throw ShapeError(std::string(op) + " needs 3 channels, got " + std::to_string(img.channels));
}

std::vector<float> luminance(const Image& img) {
    const size_t n = img.plane();
    std::vector<float> out(n);
    const float* r = img.data.data();
    for (size_t i = 0; i < n; ++i) out[i] = kLumaR * r[i] + kLumaG * r[n + i] + kLumaB * r[2 * n + i];
    return out;
}

Image blend(const Image& img, std::span<const float> other, bool per_pixel, double factor) {
    Image out = img;
    const size_t n = img.plane();
    const auto f = static_cast<float>(factor);
    for (int c = 0; c < img.channels; ++c) {
        float* p = out.data.data() + c * n;
        for (size_t i = 0; i < n; ++i) p[i] = clamp01(f * p[i] + (1.0f - f) * other[per_pixel ? i : 0]);
    }
    return out;
}

// Mirror index into [0, n) without repeating the edge sample.
int reflect(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

void rgb_to_hsv(float r, float g, float b, float& h, float& s, float& v) {
    const float mx = std::max({r, g, b}), mn = std::min({r, g, b}), d = mx - mn;
    v = mx;
    s = mx > 0.0f ? d / mx : 0.0f;
    if (d <= 0.0f) {
        h = 0.0f;
        return;
    }
    if (mx == r) {
        h = (g - b) / d;
    } else if (mx == g) {
        h = 2.0f + (b - r) / d;
    } else {
        h = 4.0f + (r - g) / d;
    }
    h /= 6.0f;
    h -= std::floor(h);
}

void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b) {
    const float h6 = h * 6.0f;
    const int sector = static_cast<int>(std::floor(h6)) % 6;
    const float f = h6 - std::floor(h6);
    const float p = v * (1.0f - s), q = v * (1.0f - s * f), t = v * (1.0f - s * (1.0f - f));
    switch (sector) {
        case 0: r = v, g = t, b = p; break;
        case 1: r = q, g = v, b = p; break;
        case 2: r = p, g = v, b = t; break;
        case 3: r = p, g = q, b = v; break;
        case 4: r = t, g = p, b = v; break;
        default: r = v, g = p, b = q; break;
    }
}

}  // namespace

Image Image::zeros(int channels, int height, int width) {
    return Image{channels, height, width, std::vector<float>(static_cast<size_t>(channels) * height * width, 0.0f)};
}

AugmentationSpec AugmentationSpec::none(int output_side) {
    AugmentationSpec spec;
    spec.crop_scale = {1.0, 1.0};
    spec.aspect_range = {1.0, 1.0};
    spec.flip_prob = 0.0;
    spec.jitter = {0.0, 0.0, 0.0, 0.0};
    spec.jitter_prob = 0.0;
    spec.grayscale_prob = 0.0;
    spec.blur_prob = {0.0, 0.0};
    spec.solarize_prob = {0.0, 0.0};
    spec.output_side = output_side;
    return spec;
}

void AugmentationSpec::validate() const {
    auto prob = [](double p, const char* name) {
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string("augment.") + name + " must be in [0, 1]");
    };
    prob(flip_prob, "flip_prob");
    prob(jitter_prob, "jitter_prob");
    prob(grayscale_prob, "grayscale_prob");
    for (double p : blur_prob) prob(p, "blur_prob");
    for (double p : solarize_prob) prob(p, "solarize_prob");
    if (!(crop_scale.first > 0.0 && crop_scale.first <= crop_scale.second && crop_scale.second <= 1.0)) {
        throw ConfigError("augment.crop_scale must satisfy 0 < lo <= hi <= 1");
    }
    if (!(aspect_range.first > 0.0 && aspect_range.first <= aspect_range.second)) {
        throw ConfigError("augment.aspect_range must satisfy 0 < lo <= hi");
    }
    for (double s : jitter) {
        if (!(s >= 0.0)) throw ConfigError("augment.jitter strengths must be non-negative");
    }
    if (jitter[3] > 0.5) throw ConfigError("augment.jitter hue strength must be at most 0.5");
    if (output_side <= 0) throw ConfigError("augment.output_side must be positive");
    if (norm_mean.size() != norm_std.size()) throw ConfigError("augment.norm_mean and norm_std differ in length");
    for (float s : norm_std) {
        if (!(s > 0.0f)) throw ConfigError("augment.norm_std entries must be positive");
    }
}

CropRect sample_crop(int height, int width, std::pair<double, double> scale, std::pair<double, double> aspect,
                     SeededRng& rng) {
    const double area = static_cast<double>(height) * width;
    const double log_lo = std::log(aspect.first), log_hi = std::log(aspect.second);
    for (int attempt = 0; attempt < 10; ++attempt) {
        const double target = area * rng.uniform(scale.first, scale.second);
        const double ratio = std::exp(rng.uniform(log_lo, log_hi));
        const auto w = static_cast<int>(std::lround(std::sqrt(target * ratio)));
        const auto h = static_cast<int>(std::lround(std::sqrt(target / ratio)));
        if (w > 0 && h > 0 && w <= width && h <= height) {
            const auto top = static_cast<int>(rng.uniform_int(0, height - h));
            const auto left = static_cast<int>(rng.uniform_int(0, width - w));
            return {top, left, h, w};
        }
    }
    const double in_ratio = static_cast<double>(width) / height;
    int w = width, h = height;
    if (in_ratio < aspect.first) {
        h = std::min(height, static_cast<int>(std::lround(w / aspect.first)));
    } else if (in_ratio > aspect.second) {
        w = std::min(width, static_cast<int>(std::lround(h * aspect.second)));
    }
    return {(height - h) / 2, (width - w) / 2, h, w};
}

Image crop_resize(const Image& img, const CropRect& rect, int output_side) {
    if (rect.height < 1 || rect.width < 1 || rect.top < 0 || rect.left < 0 || rect.top + rect.height > img.height ||
        rect.left + rect.width > img.width) {
        throw ShapeError("crop rectangle outside the image");
    }
    Image out = Image::zeros(img.channels, output_side, output_side);
    const double sy = static_cast<double>(rect.height) / output_side, sx = static_cast<double>(rect.width) / output_side;
    struct Tap {
        int i0, i1;
        float w1;
    };
    auto taps = [](int n, double step, int offset, int extent) {
        std::vector<Tap> t(static_cast<size_t>(n));
        for (int o = 0; o < n; ++o) {
            const double src = std::max(0.0, (o + 0.5) * step - 0.5);
            const int i0 = std::min(static_cast<int>(src), extent - 1);
            const int i1 = std::min(i0 + 1, extent - 1);
            t[o] = {offset + i0, offset + i1, static_cast<float>(src - i0)};
        }
        return t;
    };
    const auto ty = taps(output_side, sy, rect.top, rect.height);
    const auto tx = taps(output_side, sx, rect.left, rect.width);
    for (int c = 0; c < img.channels; ++c) {
        for (int y = 0; y < output_side; ++y) {
            const Tap& a = ty[y];
            for (int x = 0; x < output_side; ++x) {
                const Tap& b = tx[x];
                const float top = img.at(c, a.i0, b.i0) * (1.0f - b.w1) + img.at(c, a.i0, b.i1) * b.w1;
                const float bottom = img.at(c, a.i1, b.i0) * (1.0f - b.w1) + img.at(c, a.i1, b.i1) * b.w1;
                out.at(c, y, x) = top * (1.0f - a.w1) + bottom * a.w1;
            }
        }
    }
    return out;
}

Image resize(const Image& img, int output_side) {
    if (img.height == output_side && img.width == output_side) return img;
    return crop_resize(img, {0, 0, img.height, img.width}, output_side);
}

Image random_resized_crop(const Image& img, std::pair<double, double> scale, int output_side, SeededRng& rng,
                          std::pair<double, double> aspect) {
    if (img.height < 2 || img.width < 2) throw ShapeError("random_resized_crop needs at least a 2x2 image");
    return crop_resize(img, sample_crop(img.height, img.width, scale, aspect, rng), output_side);
}

Image mirror(const Image& img) {
    Image out = img;
    for (int c = 0; c < img.channels; ++c) {
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
        }
    }
    return out;
}

Image horizontal_flip(const Image& img, double prob, SeededRng& rng) {
    return rng.bernoulli(prob) ? mirror(img) : img;
}

Image adjust_brightness(const Image& img, double factor) {
    const float zero = 0.0f;
    return blend(img, std::span(&zero, 1), false, factor);
}

Image adjust_contrast(const Image& img, double factor) {
    float m = 0.0f;
    if (img.channels == 3) {
        const auto lum = luminance(img);
        m = static_cast<float>(std::accumulate(lum.begin(), lum.end(), 0.0) / static_cast<double>(lum.size()));
    } else {
        m = static_cast<float>(std::accumulate(img.data.begin(), img.data.end(), 0.0) /
                               static_cast<double>(img.data.size()));
    }
    return blend(img, std::span(&m, 1), false, factor);
}

Image adjust_saturation(const Image& img, double factor) {
    require_rgb(img, "adjust_saturation");
    return blend(img, luminance(img), true, factor);
}

Image adjust_hue(const Image& img, double shift) {
    require_rgb(img, "adjust_hue");
    Image out = img;
    const size_t n = img.plane();
    float* r = out.data.data();
    float* g = r + n;
    float* b = g + n;
    for (size_t i = 0; i < n; ++i) {
        float h, s, v;
        rgb_to_hsv(r[i], g[i], b[i], h, s, v);
        h += static_cast<float>(shift);
        h -= std::floor(h);
        hsv_to_rgb(h, s, v, r[i], g[i], b[i]);
    }
    return out;
}

Image to_grayscale(const Image& img) {
    if (img.channels != 3) return img;
    const auto lum = luminance(img);
    Image out = img;
    for (int c = 0; c < 3; ++c) std::copy(lum.begin(), lum.end(), out.data.begin() + c * img.plane());
    return out;
}

Image solarize(const Image& img, double threshold) {
    Image out = img;
    const auto t = static_cast<float>(threshold);
    for (float& v : out.data) {
        if (v >= t) v = 1.0f - v;
    }
    return out;
}

Image color_jitter(const Image& img, const std::array<double, 4>& strengths, SeededRng& rng) {
    std::array<int, 4> order{0, 1, 2, 3};
    rng.shuffle(order.begin(), order.end());
    Image out = img;
    for (int op : order) {
        const double s = strengths[op];
        if (s <= 0.0) continue;
        switch (op) {
            case 0: out = adjust_brightness(out, rng.uniform(std::max(0.0, 1.0 - s), 1.0 + s)); break;
            case 1: out = adjust_contrast(out, rng.uniform(std::max(0.0, 1.0 - s), 1.0 + s)); break;
            case 2:
                if (out.channels == 3) out = adjust_saturation(out, rng.uniform(std::max(0.0, 1.0 - s), 1.0 + s));
                break;
            default:
                if (out.channels == 3) out = adjust_hue(out, rng.uniform(-s, s));
                break;
        }
    }
    return out;
}

Image photometric_distortion(const Image& img, const AugmentationSpec& spec, int view, SeededRng& rng) {
    Image out = img;
    if (rng.bernoulli(spec.jitter_prob)) out = color_jitter(out, spec.jitter, rng);
    if (rng.bernoulli(spec.grayscale_prob)) out = to_grayscale(out);
    if (rng.bernoulli(spec.solarize_prob[view])) out = solarize(out);
    for (float& v : out.data) v = clamp01(v);
    return out;
}

int blur_kernel_size(int side) {
    const int k = std::max(1, (side + 9) / 10);
    return k % 2 == 1 ? k : k + 1;
}

std::vector<double> gaussian_kernel(int size, double sigma) {
    const int r = size / 2;
    std::vector<double> k(static_cast<size_t>(size));
    double total = 0.0;
    for (int i = -r; i <= r; ++i) total += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (double& v : k) v /= total;
    return k;
}

Image gaussian_blur(const Image& img, double sigma, int kernel_size) {
    const auto kd = gaussian_kernel(kernel_size, sigma);
    const std::vector<float> k(kd.begin(), kd.end());
    const int r = kernel_size / 2;
    Image tmp = img, out = img;
    for (int c = 0; c < img.channels; ++c) {
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                float acc = 0.0f;
                for (int t = -r; t <= r; ++t) acc += k[t + r] * img.at(c, y, reflect(x + t, img.width));
                tmp.at(c, y, x) = acc;
            }
        }
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                float acc = 0.0f;
                for (int t = -r; t <= r; ++t) acc += k[t + r] * tmp.at(c, reflect(y + t, img.height), x);
                out.at(c, y, x) = acc;
            }
        }
    }
    return out;
}

Image gaussian_blur(const Image& img, double prob, SeededRng& rng) {
    if (!rng.bernoulli(prob)) return img;
    const double sigma = rng.uniform(0.1, 2.0);
    return gaussian_blur(img, sigma, blur_kernel_size(std::max(img.height, img.width)));
}

Image to_rgb(const Image& img) {
    if (img.channels != 1) return img;
    Image out = Image::zeros(3, img.height, img.width);
    for (int c = 0; c < 3; ++c) std::copy(img.data.begin(), img.data.end(), out.data.begin() + c * img.plane());
    return out;
}

Image normalize(const Image& img, std::span<const float> mean, std::span<const float> stddev) {
    if (!mean.empty() && (mean.size() != static_cast<size_t>(img.channels) || stddev.size() != mean.size())) {
        throw ShapeError("normalization statistics do not match " + std::to_string(img.channels) + " channels");
    }
    Image out = img;
    for (int c = 0; c < img.channels; ++c) {
        const float m = mean.empty() ? 0.5f : mean[c], s = mean.empty() ? 0.5f : stddev[c];
        float* p = out.data.data() + c * img.plane();
        for (size_t i = 0; i < img.plane(); ++i) p[i] = (p[i] - m) / s;
    }
    return out;
}

Image augment_view(const Image& img, const AugmentationSpec& spec, int view, SeededRng& rng, AugmentTrace* trace) {
    AugmentTrace t;
    const Image rgb = to_rgb(img);
    if (rgb.height < 2 || rgb.width < 2) throw ShapeError("augment_view needs at least a 2x2 image");
    t.crop = sample_crop(rgb.height, rgb.width, spec.crop_scale, spec.aspect_range, rng);
    Image x = crop_resize(rgb, t.crop, spec.output_side);
    if ((t.flipped = rng.bernoulli(spec.flip_prob))) x = mirror(x);
    // Same steps as photometric_distortion, with the blur before solarization.
    if ((t.jittered = rng.bernoulli(spec.jitter_prob))) x = color_jitter(x, spec.jitter, rng);
    if ((t.grayscale = rng.bernoulli(spec.grayscale_prob))) x = to_grayscale(x);
    for (float& v : x.data) v = clamp01(v);
    if ((t.blurred = rng.bernoulli(spec.blur_prob[view]))) {
        t.blur_sigma = rng.uniform(0.1, 2.0);
        x = gaussian_blur(x, t.blur_sigma, blur_kernel_size(spec.output_side));
    }
    if ((t.solarized = rng.bernoulli(spec.solarize_prob[view]))) x = solarize(x);
    for (float& v : x.data) v = clamp01(v);
    if (trace) *trace = t;
    return normalize(x, spec.norm_mean, spec.norm_std);
}

std::pair<Image, Image> generate_view_pair(const Image& img, const AugmentationSpec& spec, uint64_t seed,
                                           std::array<AugmentTrace, 2>* traces) {
    SeededRng ra(SeededRng::derive(seed, {0})), rb(SeededRng::derive(seed, {1}));
    Image a = augment_view(img, spec, 0, ra, traces ? &(*traces)[0] : nullptr);
    Image b = augment_view(img, spec, 1, rb, traces ? &(*traces)[1] : nullptr);
    return {std::move(a), std::move(b)};
}

std::pair<Image, Image> generate_view_pair(const Image& img, const AugmentationSpec& spec, SeededRng& rng) {
    return generate_view_pair(img, spec, rng.next_u64());
}

Tensor<float> stack_images(std::span<const Image> images) {
    if (images.empty()) throw ShapeError("stack_images needs at least one image");
    const Image& first = images.front();
    std::vector<float> values;
    values.reserve(images.size() * first.data.size());
    for (const Image& img : images) {
        if (img.channels != first.channels || img.height != first.height || img.width != first.width) {
            throw ShapeError("stack_images: images differ in shape");
        }
        values.insert(values.end(), img.data.begin(), img.data.end());
    }
    return Tensor<float>::from_vector(
        {static_cast<int64_t>(images.size()), first.channels, first.height, first.width}, std::move(values));
}

}  // namespace vtcc

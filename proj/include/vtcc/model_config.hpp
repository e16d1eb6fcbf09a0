#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace vtcc {

class ConfigError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

enum class StemKind { kPatchify, kConvolutional };
enum class PosEncoding { kLearnable, kSinusoidal, kNone };
enum class Pooling { kMean, kClsToken };

struct StemConfig {
    StemKind kind = StemKind::kConvolutional;
    int patch_size = 4;   // patchify: p×p kernel, stride p
    int conv_blocks = 2;  // convolutional: s stride-2 3×3 blocks
    // Output channels of each 3×3 block. Empty selects the ramp d/2^(s-1-i), min 8.
    std::vector<int> channels;
    int in_channels = 3;
    int embed_dim = 64;

    std::vector<int> channel_schedule() const;
    // Total spatial reduction: p, or 2^s.
    int downsample() const;
};

struct EncoderConfig {
    int depth = 2;
    int heads = 4;
    double mlp_ratio = 4.0;
    PosEncoding pos_encoding = PosEncoding::kLearnable;
    Pooling pool = Pooling::kMean;
};

struct ProjectorConfig {
    int hidden_dim = 64;  // MLP width; the presets use the backbone width
    int instance_out_dim = 128;
    int clusters = 4;     // K
};

struct ModelConfig {
    int image_side = 32;
    StemConfig stem;
    EncoderConfig encoder;
    ProjectorConfig projector;

    int embed_dim() const { return stem.embed_dim; }
    int patch_tokens() const;
    // Tokens entering the encoder (patch tokens, plus one with cls pooling).
    int sequence_length() const;
    void validate() const;

    // Shapes used in tests and the shipped configs.
    static ModelConfig desk();   // d=64, B=2, H=4, s=2, side=32
    static ModelConfig micro();  // d=8, B=1, H=2, s=1, side=8, K=3
    // ViT presets at 224×224 with the four-block convolutional stem.
    static ModelConfig vit_tiny(int clusters);
    static ModelConfig vit_small(int clusters);
    static ModelConfig vit_base(int clusters);
};

std::string to_string(StemKind kind);
std::string to_string(PosEncoding kind);
std::string to_string(Pooling kind);
StemKind parse_stem_kind(const std::string& text);
PosEncoding parse_pos_encoding(const std::string& text);
Pooling parse_pooling(const std::string& text);

}  // namespace vtcc

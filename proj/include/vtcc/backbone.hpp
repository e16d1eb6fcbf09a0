#pragma once

// Vision Transformer backbone: image stem, positional encoding, pre-LN encoder
// blocks, final LayerNorm and pooling to one d-dimensional vector per image.

#include <vector>

#include "vtcc/layers.hpp"
#include "vtcc/model_config.hpp"

namespace vtcc {

template <typename T>
struct Stem {
    StemConfig config;
    std::vector<Conv2d<T>> convs;     // convolutional stem only
    std::vector<BatchNorm<T>> norms;  // convolutional stem only
    Conv2d<T> proj;                   // p×p patch projection, or the final 1×1 conv

    static Stem create(const StemConfig& config, SeededRng& rng);
    // [N×C×S×S] -> [N×L×d], tokens in row-major grid order.
    Tensor<T> operator()(const Tensor<T>& images, NormMode mode);
    void visit(const std::string& prefix, ParamVisitor<T>& v);
};

template <typename T>
struct Attention {
    Linear<T> qkv;  // d -> 3d, no bias
    Linear<T> out;
    int heads = 1;

    static Attention create(int64_t dim, int heads, SeededRng& rng);
    void visit(const std::string& prefix, ParamVisitor<T>& v);
};

template <typename T>
struct EncoderBlock {
    LayerNorm<T> ln1;
    Attention<T> attn;
    LayerNorm<T> ln2;
    Linear<T> fc1;
    Linear<T> fc2;

    static EncoderBlock create(int64_t dim, int heads, double mlp_ratio, SeededRng& rng);
    void visit(const std::string& prefix, ParamVisitor<T>& v);
};

// Row i: sin(i/10000^(2j/d)) at column 2j and cos(...) at column 2j+1.
template <typename T>
Tensor<T> sinusoidal_table(int64_t length, int64_t dim);

// tokens [N×L×d] + table[:L]. Throws ShapeError if the table is shorter than L.
template <typename T>
Tensor<T> add_positional_encoding(const Tensor<T>& tokens, const Tensor<T>& table);

// Per head: softmax(Q·Kᵀ/√(d/H))·V, then the output projection.
template <typename T>
Tensor<T> multi_head_self_attention(const Tensor<T>& tokens, const Attention<T>& attn);

// x + MHSA(LN(x)), then x + MLP(LN(x)).
template <typename T>
Tensor<T> encoder_block(const Tensor<T>& tokens, const EncoderBlock<T>& block);

// [N×L×d] -> [N×d]: mean over tokens, or token 0 with cls pooling.
template <typename T>
Tensor<T> pool_tokens(const Tensor<T>& tokens, Pooling pool);

template <typename T>
struct Backbone {
    ModelConfig config;
    Stem<T> stem;
    Tensor<T> pos_table;  // learnable parameter, fixed sinusoid, or undefined
    Tensor<T> cls_token;  // [d], cls pooling only
    std::vector<EncoderBlock<T>> blocks;
    LayerNorm<T> final_norm;

    static Backbone create(const ModelConfig& config, SeededRng& rng);
    // Final normalized token sequence [N×L×d].
    Tensor<T> encode(const Tensor<T>& images, NormMode mode);
    // Pooled representation h [N×d].
    Tensor<T> forward(const Tensor<T>& images, NormMode mode);
    void visit(const std::string& prefix, ParamVisitor<T>& v);
};

}  // namespace vtcc

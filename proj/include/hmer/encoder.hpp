// Multi-scale dense-convolutional encoder: a strided 7x7 stem, three dense
// blocks separated by 1x1-conv + 2x2-pool transitions, per-scale 1x1
// reductions to a common width, and top-down 2x fusion. Produces three
// feature maps whose spatial extents differ by a factor of two per scale.
#pragma once

#include <array>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "hmer/tensor.hpp"

namespace hmer {

struct EncoderConfig {
    std::size_t stem_channels = 48;
    std::size_t growth_rate = 4;
    std::array<std::size_t, 3> layers_per_block{2, 2, 2};
    std::size_t reduced_channels = 16;

    // stem stride 2, pool after the stem, one pool per transition
    static constexpr std::size_t downsample_factor = 16;

    void validate() const {
        if (stem_channels < 1 || growth_rate < 1 || reduced_channels < 1)
            throw std::invalid_argument("encoder config: channel counts must be >= 1");
    }

    std::size_t block_input_channels(std::size_t block) const {
        std::size_t ch = stem_channels;
        for (std::size_t b = 0; b < block; ++b) ch += layers_per_block[b] * growth_rate;
        return ch;
    }
    std::size_t block_output_channels(std::size_t block) const {
        return block_input_channels(block) + layers_per_block[block] * growth_rate;
    }
};

// The three fused maps, finest (c1) to coarsest (c3); equal channel widths,
// adjacent scales differ by exactly 2x spatially.
struct EncodedFeatures {
    Tensor c1, c2, c3;
};

struct EncoderParams {
    Tensor stem;                              // [stem_channels,1,7,7]
    std::array<std::vector<Tensor>, 3> blocks; // 3x3 layer kernels per block
    std::array<Tensor, 2> transitions;        // 1x1, channel-preserving
    std::array<Tensor, 3> reductions;         // 1x1 down to reduced_channels
};

namespace detail {

inline Tensor init_kernel(Shape shape, std::mt19937_64& rng) {
    // fan_in = Cin * kh * kw
    const double r = 1.0 / std::sqrt(static_cast<double>(shape[1] * shape[2] * shape[3]));
    return uniform_tensor(std::move(shape), -r, r, rng, true);
}

}  // namespace detail

inline EncoderParams init_encoder(const EncoderConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    EncoderParams p;
    p.stem = detail::init_kernel({cfg.stem_channels, 1, 7, 7}, rng);
    for (std::size_t b = 0; b < 3; ++b) {
        std::size_t ch = cfg.block_input_channels(b);
        for (std::size_t l = 0; l < cfg.layers_per_block[b]; ++l) {
            p.blocks[b].push_back(detail::init_kernel({cfg.growth_rate, ch, 3, 3}, rng));
            ch += cfg.growth_rate;
        }
        if (b < 2)
            p.transitions[b] = detail::init_kernel({ch, ch, 1, 1}, rng);
        p.reductions[b] = detail::init_kernel({cfg.reduced_channels, ch, 1, 1}, rng);
    }
    return p;
}

// Layer k sees the channel-concatenation of the block input and all previous
// layer outputs; each layer is tanh then a same-padded conv.
inline Tensor dense_block(const Tensor& input, const std::vector<Tensor>& layer_kernels) {
    check_nchw(input, "dense_block");
    Tensor current = input;
    std::size_t channels = input.shape()[1];
    for (std::size_t l = 0; l < layer_kernels.size(); ++l) {
        const Tensor& k = layer_kernels[l];
        if (k.rank() != 4 || k.shape()[1] != channels)
            throw std::invalid_argument(
                "dense_block: layer " + std::to_string(l) + " kernel " + shape_str(k.shape()) +
                " does not consume " + std::to_string(channels) + " channels");
        if (k.shape()[2] % 2 == 0 || k.shape()[3] % 2 == 0)
            throw std::invalid_argument("dense_block: layer kernels must be odd-sized");
        const Tensor grown =
            conv2d(tanh(current), k, {1, 1}, {(k.shape()[2] - 1) / 2, (k.shape()[3] - 1) / 2});
        current = concat({current, grown}, 1);
        channels += k.shape()[0];
    }
    return current;
}

// Pre-fusion per-scale taps alongside the fused output, for tests and
// diagnostics.
struct EncoderTrace {
    Tensor stem_out;                  // after the 7x7 stride-2 conv
    std::array<Tensor, 3> reduced;    // 1x1 taps, finest to coarsest
    EncodedFeatures fused;
};

inline EncoderTrace encode_trace(const Tensor& image, const EncoderParams& p,
                                 const EncoderConfig& cfg) {
    check_nchw(image, "encode");
    if (image.shape()[1] != 1)
        throw std::invalid_argument("encode: want a single-channel image, got " +
                                    shape_str(image.shape()));
    const std::size_t H = image.shape()[2], W = image.shape()[3];
    const std::size_t f = EncoderConfig::downsample_factor;
    if (H < f || W < f || H % f != 0 || W % f != 0)
        throw std::invalid_argument("encode: image " + std::to_string(H) + "x" + std::to_string(W) +
                                    " must be a multiple of " + std::to_string(f) +
                                    " in each extent (minimum " + std::to_string(f) + "x" +
                                    std::to_string(f) + "); pad the input first");

    EncoderTrace tr;
    tr.stem_out = conv2d(image, p.stem, {2, 2}, {3, 3});
    Tensor x = max_pool2d(tr.stem_out, {2, 2}, {2, 2});

    Tensor act = tanh(dense_block(x, p.blocks[0]));
    tr.reduced[0] = conv2d(act, p.reductions[0], {1, 1}, {0, 0});
    x = max_pool2d(conv2d(act, p.transitions[0], {1, 1}, {0, 0}), {2, 2}, {2, 2});

    act = tanh(dense_block(x, p.blocks[1]));
    tr.reduced[1] = conv2d(act, p.reductions[1], {1, 1}, {0, 0});
    x = avg_pool2d(conv2d(act, p.transitions[1], {1, 1}, {0, 0}), {2, 2}, {2, 2});

    x = dense_block(x, p.blocks[2]);
    tr.reduced[2] = conv2d(tanh(x), p.reductions[2], {1, 1}, {0, 0});

    // top-down: coarse maps are upsampled and added into the finer taps
    tr.fused.c3 = tr.reduced[2];
    tr.fused.c2 = add(tr.reduced[1], upsample2x_nearest(tr.fused.c3));
    tr.fused.c1 = add(tr.reduced[0], upsample2x_nearest(tr.fused.c2));
    return tr;
}

inline EncodedFeatures encode(const Tensor& image, const EncoderParams& p,
                              const EncoderConfig& cfg) {
    return encode_trace(image, p, cfg).fused;
}

// One [0,1]-normalized 2-D map per stem channel; constant maps become zero.
inline std::vector<Tensor> dump_stem_features(const Tensor& image, const EncoderParams& p,
                                              const EncoderConfig& cfg) {
    const Tensor stem_out = encode_trace(image, p, cfg).stem_out;
    const std::size_t C = stem_out.shape()[1];
    const std::size_t H = stem_out.shape()[2], W = stem_out.shape()[3];
    std::vector<Tensor> maps;
    maps.reserve(C);
    for (std::size_t c = 0; c < C; ++c) {
        double lo = stem_out[c * H * W], hi = lo;
        for (std::size_t i = 0; i < H * W; ++i) {
            lo = std::min(lo, stem_out[c * H * W + i]);
            hi = std::max(hi, stem_out[c * H * W + i]);
        }
        Tensor m(Shape{H, W}, 0.0);
        if (hi > lo)
            for (std::size_t i = 0; i < H * W; ++i)
                m[i] = (stem_out[c * H * W + i] - lo) / (hi - lo);
        maps.push_back(std::move(m));
    }
    return maps;
}

}  // namespace hmer

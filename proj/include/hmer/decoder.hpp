// GRU decoder with per-scale coverage attention. Each scale carries its own
// attention parameters; coverage is the running sum of past attention maps,
// convolved into per-position features that enter the alignment energies.
// Decoding is greedy, step by step, until the stop token.
#pragma once

#include <array>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "hmer/encoder.hpp"
#include "hmer/tensor.hpp"

namespace hmer {

struct DecoderConfig {
    std::size_t hidden_dim = 32;
    std::size_t embed_dim = 16;
    std::size_t attn_dim = 32;
    std::size_t coverage_channels = 32;
    std::size_t coverage_kernel_size = 5;  // odd
    std::size_t max_decode_len = 200;
    bool coverage_enabled = true;

    void validate() const {
        if (hidden_dim < 1 || embed_dim < 1 || attn_dim < 1 || coverage_channels < 1 ||
            max_decode_len < 1)
            throw std::invalid_argument("decoder config: dimensions must be >= 1");
        if (coverage_kernel_size % 2 == 0)
            throw std::invalid_argument("decoder config: coverage kernel size must be odd");
    }
};

// Alignment parameters for one scale: energies are
// v_a . tanh(W_a h + U_a a_i + U_f f_i) with f from convolving coverage.
struct ScaleAttentionParams {
    Tensor W_a;  // [attn, hidden]
    Tensor U_a;  // [attn, feature_channels]
    Tensor U_f;  // [attn, coverage_channels]
    Tensor v_a;  // [attn]
    Tensor Q;    // [coverage_channels, 1, k, k]
};

struct GruParams {
    Tensor W_z, U_z;  // update gate
    Tensor W_r, U_r;  // reset gate
    Tensor W_n, U_n;  // candidate state
};

struct OutputParams {
    Tensor E;    // [vocab, embed] token embeddings, rows
    Tensor W_h;  // [embed, hidden]
    Tensor W_c;  // [embed, 3*feature_channels]
    Tensor W_0;  // [vocab, embed]
};

struct DecoderParams {
    Tensor W_ini;  // [hidden, feature_channels]
    std::array<ScaleAttentionParams, 3> attn;
    GruParams gru;
    OutputParams out;
};

// Per-scale decode-time accumulators. beta at step t is exactly the
// elementwise sum of the previous steps' attention maps.
struct ScaleAttentionState {
    Tensor beta;                        // [L]
    std::vector<Tensor> alpha_history;  // one [L] map per step
    std::size_t height = 0, width = 0;  // spatial layout of the L positions
};

struct DecoderState {
    Tensor h;  // [hidden]
    std::array<ScaleAttentionState, 3> scales;
    std::size_t prev_token = 0;
};

namespace detail {

inline Tensor init_matrix(Shape shape, std::mt19937_64& rng) {
    const double r = 1.0 / std::sqrt(static_cast<double>(shape.back()));
    return uniform_tensor(std::move(shape), -r, r, rng, true);
}

}  // namespace detail

inline DecoderParams init_decoder(const DecoderConfig& cfg, std::size_t feature_channels,
                                  std::size_t vocab_size, std::mt19937_64& rng) {
    cfg.validate();
    if (vocab_size < 2) throw std::invalid_argument("init_decoder: vocabulary too small");
    const std::size_t n = cfg.hidden_dim, m = cfg.embed_dim, na = cfg.attn_dim;
    const std::size_t C = feature_channels, q = cfg.coverage_channels;
    const std::size_t k = cfg.coverage_kernel_size;
    DecoderParams p;
    p.W_ini = detail::init_matrix({n, C}, rng);
    for (auto& a : p.attn) {
        a.W_a = detail::init_matrix({na, n}, rng);
        a.U_a = detail::init_matrix({na, C}, rng);
        a.U_f = detail::init_matrix({na, q}, rng);
        a.v_a = detail::init_matrix({na}, rng);
        a.Q = detail::init_kernel({q, 1, k, k}, rng);
    }
    const std::size_t u = m + 3 * C;  // GRU input: embedding + joint context
    p.gru.W_z = detail::init_matrix({n, u}, rng);
    p.gru.U_z = detail::init_matrix({n, n}, rng);
    p.gru.W_r = detail::init_matrix({n, u}, rng);
    p.gru.U_r = detail::init_matrix({n, n}, rng);
    p.gru.W_n = detail::init_matrix({n, u}, rng);
    p.gru.U_n = detail::init_matrix({n, n}, rng);
    p.out.E = detail::init_matrix({vocab_size, m}, rng);
    p.out.W_h = detail::init_matrix({m, n}, rng);
    p.out.W_c = detail::init_matrix({m, 3 * C}, rng);
    p.out.W_0 = detail::init_matrix({vocab_size, m}, rng);
    return p;
}

// Mean annotation of the coarsest map initializes the hidden state; coverage
// starts at zero on every scale and the first input token is <sos>.
inline DecoderState init_state(const EncodedFeatures& feats, const DecoderParams& params,
                               std::size_t sos_id) {
    DecoderState st;
    const Tensor abar = mean_rows(annotations(feats.c3));
    st.h = tanh(matmul(params.W_ini, abar));
    const Tensor* maps[3] = {&feats.c1, &feats.c2, &feats.c3};
    for (std::size_t s = 0; s < 3; ++s) {
        st.scales[s].height = maps[s]->shape()[2];
        st.scales[s].width = maps[s]->shape()[3];
        st.scales[s].beta = Tensor(Shape{st.scales[s].height * st.scales[s].width}, 0.0);
    }
    st.prev_token = sos_id;
    return st;
}

struct AttendResult {
    Tensor alpha;    // [L], nonnegative, sums to 1
    Tensor context;  // [C]
};

// One attention read over one scale. Updates the coverage accumulator and
// appends alpha to the history.
inline AttendResult attend(const ScaleAttentionParams& p, ScaleAttentionState& st,
                           const Tensor& a, const Tensor& h_prev, bool coverage_enabled) {
    if (a.rank() != 2)
        throw std::invalid_argument("attend: want [L,C] annotations, got " + shape_str(a.shape()));
    const std::size_t L = a.shape()[0];
    if (st.beta.size() != L)
        throw std::invalid_argument("attend: coverage holds " + std::to_string(st.beta.size()) +
                                    " positions but annotations have " + std::to_string(L));
    Tensor terms = matmul_nt(a, p.U_a);  // [L, attn]
    if (coverage_enabled) {
        const std::size_t k = p.Q.shape()[2];
        const Tensor cov = conv2d(as_image(st.beta, st.height, st.width), p.Q, {1, 1},
                                  {(k - 1) / 2, (k - 1) / 2});
        terms = add(terms, matmul_nt(annotations(cov), p.U_f));
    }
    const Tensor energies = matmul(tanh(add_rowvec(terms, matmul(p.W_a, h_prev))), p.v_a);
    AttendResult r;
    r.alpha = softmax(energies, 0);
    r.context = matmul(r.alpha, a);
    st.beta = add(st.beta, r.alpha);
    st.alpha_history.push_back(r.alpha);
    return r;
}

struct StepResult {
    Tensor logits;  // [vocab]
    Tensor context; // [3C] concatenated across scales
};

// One decode step: per-scale attention reads, context concatenation, GRU
// update, and the output projection. Mutates `st` in place.
inline StepResult step(DecoderState& st, const EncodedFeatures& feats, std::size_t input_token,
                       const DecoderParams& params, const DecoderConfig& cfg) {
    if (input_token >= params.out.E.shape()[0])
        throw std::invalid_argument("decoder step: token id " + std::to_string(input_token) +
                                    " out of range [0," + std::to_string(params.out.E.shape()[0]) +
                                    ")");
    const Tensor* maps[3] = {&feats.c1, &feats.c2, &feats.c3};
    std::array<Tensor, 3> contexts;
    for (std::size_t s = 0; s < 3; ++s) {
        const Tensor a = annotations(*maps[s]);
        contexts[s] = attend(params.attn[s], st.scales[s], a, st.h, cfg.coverage_enabled).context;
    }
    const Tensor c_t = concat({contexts[0], contexts[1], contexts[2]}, 0);
    const Tensor emb = embedding_lookup(params.out.E, input_token);
    const Tensor u = concat({emb, c_t}, 0);

    const Tensor z = sigmoid(add(matmul(params.gru.W_z, u), matmul(params.gru.U_z, st.h)));
    const Tensor r = sigmoid(add(matmul(params.gru.W_r, u), matmul(params.gru.U_r, st.h)));
    const Tensor n = tanh(add(matmul(params.gru.W_n, u), matmul(params.gru.U_n, mul(r, st.h))));
    st.h = add(mul(affine(z, -1.0, 1.0), st.h), mul(z, n));

    StepResult out;
    out.context = c_t;
    out.logits = matmul(params.out.W_0,
                        add(add(emb, matmul(params.out.W_h, st.h)), matmul(params.out.W_c, c_t)));
    st.prev_token = input_token;
    return out;
}

struct DecodeResult {
    std::vector<std::size_t> tokens;  // emitted ids, sentinels excluded
    std::array<std::vector<Tensor>, 3> alpha_history;
    std::array<std::pair<std::size_t, std::size_t>, 3> scale_extents;
    bool hit_max_len = false;
};

// Greedy decode: feed the argmax of the previous step until <eol> or the
// length cap; ties in the argmax resolve to the lowest id.
inline DecodeResult greedy_decode(const EncodedFeatures& feats, const DecoderParams& params,
                                  const DecoderConfig& cfg, std::size_t sos_id,
                                  std::size_t eol_id) {
    DecoderState st = init_state(feats, params, sos_id);
    DecodeResult res;
    res.hit_max_len = true;
    std::size_t input = sos_id;
    for (std::size_t t = 0; t < cfg.max_decode_len; ++t) {
        const StepResult sr = step(st, feats, input, params, cfg);
        const std::size_t next = argmax(sr.logits);
        if (next == eol_id) {
            res.hit_max_len = false;
            break;
        }
        res.tokens.push_back(next);
        input = next;
    }
    for (std::size_t s = 0; s < 3; ++s) {
        res.alpha_history[s] = st.scales[s].alpha_history;
        res.scale_extents[s] = {st.scales[s].height, st.scales[s].width};
    }
    return res;
}

}  // namespace hmer

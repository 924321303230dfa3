#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sumgan/rng.hpp"
#include "sumgan/tensor.hpp"

namespace sumgan::nn {

using ad::NamedParam;
using ad::Tensor;

/// Fixed sinusoidal position table, rows 0..n-1:
/// pe[t][2i] = sin(t / 10000^(2i/d)), pe[t][2i+1] = cos(t / 10000^(2i/d)).
Tensor positional_encoding(std::size_t n, std::size_t d);

struct Linear {
    std::size_t in = 0, out = 0;
    Tensor weight_t;  // [in x out], the transpose of the conventional W
    Tensor bias;      // [out]

    Linear() = default;
    Linear(std::size_t in_dim, std::size_t out_dim, Rng& rng);

    Tensor forward(const Tensor& x) const;  // [N x in] -> [N x out]
    void collect(const std::string& prefix, std::vector<NamedParam>& params) const;
};

/// One LSTM layer. Gate order in the packed 4H dimension is
/// (input, forget, candidate, output); the forget-gate bias starts at +1.
/// in_dim == 0 builds a cell whose input term is identically zero (used by
/// the decoder, which is driven by state alone).
struct LstmCell {
    std::size_t in = 0, hidden = 0;
    Tensor w_ih_t;  // [in x 4H], undefined when in == 0
    Tensor w_hh_t;  // [H x 4H]
    Tensor bias;    // [4H]

    LstmCell() = default;
    LstmCell(std::size_t in_dim, std::size_t hidden_dim, Rng& rng);

    /// x_t [1 x in] (ignored when in == 0), states [1 x H].
    std::pair<Tensor, Tensor> step(const Tensor& x_t, const Tensor& h_prev,
                                   const Tensor& c_prev) const;

    /// Step with the input contribution precomputed (one narrow of
    /// input_transform's result). Bit-identical to step(). w_hh_transposed,
    /// when given, must hold transpose(w_hh_t)'s value; sequence drivers
    /// cache it once instead of re-transposing every step.
    std::pair<Tensor, Tensor> step_pre(const Tensor& xw_row, const Tensor& h_prev,
                                       const Tensor& c_prev, const Tensor& bias_row,
                                       const Tensor& w_hh_transposed = Tensor()) const;

    Tensor input_transform(const Tensor& X) const;  // [N x in] -> [N x 4H]
    Tensor bias_row() const;                        // [1 x 4H]
    void collect(const std::string& prefix, std::vector<NamedParam>& params) const;
};

/// Run one cell over a sequence; row t of the result is the hidden state
/// emitted at input position t regardless of direction.
Tensor lstm_run_direction(const LstmCell& cell, const Tensor& X, bool reverse,
                          Tensor* final_h = nullptr, Tensor* final_c = nullptr);

/// Unidirectional stack.
struct Lstm {
    std::vector<LstmCell> layers;

    Lstm() = default;
    Lstm(std::size_t in_dim, std::size_t hidden_dim, std::size_t num_layers, Rng& rng);

    struct SeqOut {
        Tensor outputs;  // [N x H], last layer
        Tensor final_h;  // [1 x H], last layer at the last step
    };
    SeqOut forward(const Tensor& X) const;
    void collect(const std::string& prefix, std::vector<NamedParam>& params) const;
};

/// Bidirectional stack; each layer concatenates a forward and a backward
/// pass, so the output width is 2H.
struct BiLstm {
    std::vector<std::pair<LstmCell, LstmCell>> layers;  // {forward, backward}

    BiLstm() = default;
    BiLstm(std::size_t in_dim, std::size_t hidden_dim, std::size_t num_layers, Rng& rng);

    Tensor forward(const Tensor& X) const;  // [N x in] -> [N x 2H]
    void collect(const std::string& prefix, std::vector<NamedParam>& params) const;
};

/// State-driven 2-layer LSTM decoder: the seed vector becomes the initial
/// hidden state of both layers, the first layer has no input term, and a
/// linear head maps each step's hidden state to a d-dim output frame.
struct LstmDecoder {
    LstmCell l1;  // input-free
    LstmCell l2;  // in = H
    Linear head;  // H -> out_dim

    LstmDecoder() = default;
    LstmDecoder(std::size_t hidden_dim, std::size_t out_dim, Rng& rng);

    Tensor forward(const Tensor& seed_row, std::size_t n_steps) const;  // [N x out]
    void collect(const std::string& prefix, std::vector<NamedParam>& params) const;
};

struct MultiHeadAttention {
    std::size_t dim = 0, heads = 0, head_dim = 0;
    std::vector<Tensor> wq_t, wk_t, wv_t;  // per head [d x d_h]
    Tensor wo_t;                           // [d x d]

    MultiHeadAttention() = default;
    MultiHeadAttention(std::size_t d, std::size_t n_heads, Rng& rng);

    struct Out {
        Tensor y;                     // [Nq x d]
        std::vector<Tensor> weights;  // per head [Nq x Nk], rows sum to 1
    };
    /// Self-attention when q_in and kv_in are the same tensor; cross-
    /// attention otherwise.
    Out forward(const Tensor& q_in, const Tensor& kv_in) const;
    void collect(const std::string& prefix, std::vector<NamedParam>& params) const;
};

struct LayerNorm {
    Tensor gain, bias;
    double eps = 1e-5;

    LayerNorm() = default;
    explicit LayerNorm(std::size_t d);

    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, std::vector<NamedParam>& params) const;
};

/// Post-norm transformer encoder block with a d -> 4d -> d feed-forward.
struct TransformerEncoderBlock {
    MultiHeadAttention att;
    Linear ff1, ff2;
    LayerNorm ln1, ln2;

    TransformerEncoderBlock() = default;
    TransformerEncoderBlock(std::size_t d, std::size_t heads, Rng& rng);

    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, std::vector<NamedParam>& params) const;
};

/// Decoder block: self-attention, cross-attention over the encoder memory,
/// feed-forward; one layer norm after each sublayer.
struct TransformerDecoderBlock {
    MultiHeadAttention self_att, cross_att;
    Linear ff1, ff2;
    LayerNorm ln1, ln2, ln3;

    TransformerDecoderBlock() = default;
    TransformerDecoderBlock(std::size_t d, std::size_t heads, Rng& rng);

    Tensor forward(const Tensor& q, const Tensor& memory) const;
    void collect(const std::string& prefix, std::vector<NamedParam>& params) const;
};

/// Sequence-to-vector encoder: linear map, positional encodings, one
/// transformer encoder block, mean pooling over time.
struct Tse {
    Linear in_proj;  // d -> H
    TransformerEncoderBlock block;

    Tse() = default;
    Tse(std::size_t in_dim, std::size_t hidden_dim, std::size_t heads, Rng& rng);

    Tensor forward(const Tensor& X) const;  // [N x d] -> [H]
    void collect(const std::string& prefix, std::vector<NamedParam>& params) const;
};

/// Non-autoregressive transformer sequence-to-sequence: the decoder's
/// queries are the positional encodings of the target positions.
struct TransformerSeq2Seq {
    std::size_t dim = 0;
    TransformerEncoderBlock enc;
    TransformerDecoderBlock dec;

    TransformerSeq2Seq() = default;
    TransformerSeq2Seq(std::size_t d, std::size_t heads, Rng& rng);

    Tensor encode(const Tensor& X) const;  // adds positions, runs the block
    Tensor decode_from_memory(const Tensor& memory, std::size_t n) const;
    Tensor forward(const Tensor& X) const;  // [N x d] -> [N x d]
    void collect(const std::string& prefix, std::vector<NamedParam>& params) const;
};

}  // namespace sumgan::nn

#include "sumgan/layers.hpp"

#include <cmath>

namespace sumgan::nn {

namespace {

using namespace sumgan::ad;

Tensor init_uniform(const Shape& shape, std::size_t fan_in, Rng& rng) {
    const double b = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return Tensor::uniform(shape, rng, -b, b).set_requires_grad(true);
}

// Loop-invariant weight transpose, value-only (not recorded on any tape).
Tensor cached_transpose(const Tensor& w) { return transpose(detach(w)); }

}  // namespace

Tensor positional_encoding(std::size_t n, std::size_t d) {
    Tensor pe = Tensor::zeros({n, d});
    auto& v = pe.raw_value();
    for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t j = 0; j < d; ++j) {
            const std::size_t i = j / 2;
            const double denom =
                std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(d));
            const double angle = static_cast<double>(t) / denom;
            v[t * d + j] = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return pe;
}

// ---- Linear ----

Linear::Linear(std::size_t in_dim, std::size_t out_dim, Rng& rng)
    : in(in_dim),
      out(out_dim),
      weight_t(init_uniform({in_dim, out_dim}, in_dim, rng)),
      bias(init_uniform({out_dim}, in_dim, rng)) {}

Tensor Linear::forward(const Tensor& x) const {
    return add_row_broadcast(matmul(x, weight_t), bias);
}

void Linear::collect(const std::string& prefix, std::vector<NamedParam>& params) const {
    params.push_back({prefix + ".w", weight_t});
    params.push_back({prefix + ".b", bias});
}

// ---- LstmCell ----

LstmCell::LstmCell(std::size_t in_dim, std::size_t hidden_dim, Rng& rng)
    : in(in_dim), hidden(hidden_dim) {
    if (in > 0) {
        w_ih_t = init_uniform({in, 4 * hidden}, in, rng);
    }
    w_hh_t = init_uniform({hidden, 4 * hidden}, hidden, rng);
    bias = init_uniform({4 * hidden}, hidden, rng);
    // forget gate opens at the start
    for (std::size_t j = 0; j < hidden; ++j) bias.raw_value()[hidden + j] += 1.0;
}

Tensor LstmCell::bias_row() const { return reshape(bias, {1, 4 * hidden}); }

Tensor LstmCell::input_transform(const Tensor& X) const {
    return matmul(X, w_ih_t);
}

std::pair<Tensor, Tensor> LstmCell::step(const Tensor& x_t, const Tensor& h_prev,
                                         const Tensor& c_prev) const {
    Tensor xw;
    if (in > 0) xw = matmul(x_t, w_ih_t);
    return step_pre(xw, h_prev, c_prev, bias_row());
}

std::pair<Tensor, Tensor> LstmCell::step_pre(const Tensor& xw_row,
                                             const Tensor& h_prev,
                                             const Tensor& c_prev,
                                             const Tensor& brow,
                                             const Tensor& w_hh_transposed) const {
    Tensor hU = w_hh_transposed.defined()
                    ? matmul_pret(h_prev, w_hh_t, w_hh_transposed)
                    : matmul(h_prev, w_hh_t);
    Tensor pre = xw_row.defined() ? add(add(xw_row, hU), brow) : add(hU, brow);
    Tensor hc = lstm_gates(pre, c_prev);
    return {narrow(hc, 1, 0, hidden), narrow(hc, 1, hidden, hidden)};
}

void LstmCell::collect(const std::string& prefix, std::vector<NamedParam>& params) const {
    if (in > 0) params.push_back({prefix + ".w_ih", w_ih_t});
    params.push_back({prefix + ".w_hh", w_hh_t});
    params.push_back({prefix + ".b", bias});
}

Tensor lstm_run_direction(const LstmCell& cell, const Tensor& X, bool reverse,
                          Tensor* final_h, Tensor* final_c) {
    const std::size_t n = X.rows();
    const std::size_t H = cell.hidden;
    Tensor xw = cell.input_transform(X);  // [N x 4H]
    Tensor brow = cell.bias_row();
    Tensor whh_t = cached_transpose(cell.w_hh_t);
    Tensor h = Tensor::zeros({1, H});
    Tensor c = Tensor::zeros({1, H});
    std::vector<Tensor> rows(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t t = reverse ? n - 1 - i : i;
        auto [h2, c2] = cell.step_pre(narrow(xw, 0, t, 1), h, c, brow, whh_t);
        h = h2;
        c = c2;
        rows[t] = h2;
    }
    if (final_h != nullptr) *final_h = h;
    if (final_c != nullptr) *final_c = c;
    return concat(rows, 0);
}

// ---- Lstm ----

Lstm::Lstm(std::size_t in_dim, std::size_t hidden_dim, std::size_t num_layers, Rng& rng) {
    layers.reserve(num_layers);
    for (std::size_t l = 0; l < num_layers; ++l) {
        layers.emplace_back(l == 0 ? in_dim : hidden_dim, hidden_dim, rng);
    }
}

Lstm::SeqOut Lstm::forward(const Tensor& X) const {
    Tensor cur = X;
    Tensor final_h;
    for (const auto& cell : layers) {
        cur = lstm_run_direction(cell, cur, false, &final_h);
    }
    return {cur, final_h};
}

void Lstm::collect(const std::string& prefix, std::vector<NamedParam>& params) const {
    for (std::size_t l = 0; l < layers.size(); ++l) {
        layers[l].collect(prefix + ".l" + std::to_string(l), params);
    }
}

// ---- BiLstm ----

BiLstm::BiLstm(std::size_t in_dim, std::size_t hidden_dim, std::size_t num_layers,
               Rng& rng) {
    layers.reserve(num_layers);
    for (std::size_t l = 0; l < num_layers; ++l) {
        const std::size_t in = l == 0 ? in_dim : 2 * hidden_dim;
        LstmCell fwd(in, hidden_dim, rng);
        LstmCell bwd(in, hidden_dim, rng);
        layers.emplace_back(std::move(fwd), std::move(bwd));
    }
}

Tensor BiLstm::forward(const Tensor& X) const {
    Tensor cur = X;
    for (const auto& [fwd, bwd] : layers) {
        Tensor hf = lstm_run_direction(fwd, cur, false);
        Tensor hb = lstm_run_direction(bwd, cur, true);
        const Tensor parts[] = {hf, hb};
        cur = concat(parts, 1);
    }
    return cur;
}

void BiLstm::collect(const std::string& prefix, std::vector<NamedParam>& params) const {
    for (std::size_t l = 0; l < layers.size(); ++l) {
        layers[l].first.collect(prefix + ".l" + std::to_string(l) + ".fwd", params);
        layers[l].second.collect(prefix + ".l" + std::to_string(l) + ".bwd", params);
    }
}

// ---- LstmDecoder ----

LstmDecoder::LstmDecoder(std::size_t hidden_dim, std::size_t out_dim, Rng& rng)
    : l1(0, hidden_dim, rng), l2(hidden_dim, hidden_dim, rng),
      head(hidden_dim, out_dim, rng) {}

Tensor LstmDecoder::forward(const Tensor& seed_row, std::size_t n_steps) const {
    const std::size_t H = l1.hidden;
    Tensor b1 = l1.bias_row();
    Tensor b2 = l2.bias_row();
    Tensor w1t = cached_transpose(l1.w_hh_t);
    Tensor w2t = cached_transpose(l2.w_hh_t);
    Tensor w2it = cached_transpose(l2.w_ih_t);
    Tensor h1 = seed_row, c1 = Tensor::zeros({1, H});
    Tensor h2 = seed_row, c2 = Tensor::zeros({1, H});
    std::vector<Tensor> rows(n_steps);
    for (std::size_t t = 0; t < n_steps; ++t) {
        auto [nh1, nc1] = l1.step_pre(Tensor(), h1, c1, b1, w1t);
        h1 = nh1;
        c1 = nc1;
        auto [nh2, nc2] = l2.step_pre(matmul_pret(h1, l2.w_ih_t, w2it), h2, c2, b2, w2t);
        h2 = nh2;
        c2 = nc2;
        rows[t] = h2;
    }
    return head.forward(concat(rows, 0));
}

void LstmDecoder::collect(const std::string& prefix, std::vector<NamedParam>& params) const {
    l1.collect(prefix + ".l1", params);
    l2.collect(prefix + ".l2", params);
    head.collect(prefix + ".head", params);
}

// ---- MultiHeadAttention ----

MultiHeadAttention::MultiHeadAttention(std::size_t d, std::size_t n_heads, Rng& rng)
    : dim(d), heads(n_heads) {
    if (n_heads == 0 || d % n_heads != 0) {
        throw ConfigError("attention: model dim " + std::to_string(d) +
                          " is not divisible by head count " + std::to_string(n_heads));
    }
    head_dim = d / n_heads;
    for (std::size_t h = 0; h < heads; ++h) {
        wq_t.push_back(init_uniform({d, head_dim}, d, rng));
        wk_t.push_back(init_uniform({d, head_dim}, d, rng));
        wv_t.push_back(init_uniform({d, head_dim}, d, rng));
    }
    wo_t = init_uniform({d, d}, d, rng);
}

MultiHeadAttention::Out MultiHeadAttention::forward(const Tensor& q_in,
                                                    const Tensor& kv_in) const {
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    std::vector<Tensor> ctxs(heads);
    std::vector<Tensor> weights(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        Tensor q = matmul(q_in, wq_t[h]);
        Tensor k = matmul(kv_in, wk_t[h]);
        Tensor v = matmul(kv_in, wv_t[h]);
        Tensor scores = mul_const(matmul(q, transpose(k)), scale);
        Tensor att = softmax(scores, 1);
        weights[h] = att;
        ctxs[h] = matmul(att, v);
    }
    Tensor cat = concat(ctxs, 1);
    return {matmul(cat, wo_t), std::move(weights)};
}

void MultiHeadAttention::collect(const std::string& prefix,
                                 std::vector<NamedParam>& params) const {
    for (std::size_t h = 0; h < heads; ++h) {
        const std::string p = prefix + ".h" + std::to_string(h);
        params.push_back({p + ".wq", wq_t[h]});
        params.push_back({p + ".wk", wk_t[h]});
        params.push_back({p + ".wv", wv_t[h]});
    }
    params.push_back({prefix + ".wo", wo_t});
}

// ---- LayerNorm ----

LayerNorm::LayerNorm(std::size_t d)
    : gain(Tensor::full({d}, 1.0).set_requires_grad(true)),
      bias(Tensor::zeros({d}).set_requires_grad(true)) {}

Tensor LayerNorm::forward(const Tensor& x) const {
    return layer_norm(x, gain, bias, eps);
}

void LayerNorm::collect(const std::string& prefix, std::vector<NamedParam>& params) const {
    params.push_back({prefix + ".gain", gain});
    params.push_back({prefix + ".bias", bias});
}

// ---- Transformer blocks ----

TransformerEncoderBlock::TransformerEncoderBlock(std::size_t d, std::size_t heads, Rng& rng)
    : att(d, heads, rng), ff1(d, 4 * d, rng), ff2(4 * d, d, rng), ln1(d), ln2(d) {}

Tensor TransformerEncoderBlock::forward(const Tensor& x) const {
    Tensor a = att.forward(x, x).y;
    Tensor h = ln1.forward(add(x, a));
    Tensor f = ff2.forward(relu(ff1.forward(h)));
    return ln2.forward(add(h, f));
}

void TransformerEncoderBlock::collect(const std::string& prefix,
                                      std::vector<NamedParam>& params) const {
    att.collect(prefix + ".att", params);
    ff1.collect(prefix + ".ff1", params);
    ff2.collect(prefix + ".ff2", params);
    ln1.collect(prefix + ".ln1", params);
    ln2.collect(prefix + ".ln2", params);
}

TransformerDecoderBlock::TransformerDecoderBlock(std::size_t d, std::size_t heads, Rng& rng)
    : self_att(d, heads, rng), cross_att(d, heads, rng), ff1(d, 4 * d, rng),
      ff2(4 * d, d, rng), ln1(d), ln2(d), ln3(d) {}

Tensor TransformerDecoderBlock::forward(const Tensor& q, const Tensor& memory) const {
    Tensor a = self_att.forward(q, q).y;
    Tensor h = ln1.forward(add(q, a));
    Tensor c = cross_att.forward(h, memory).y;
    Tensor h2 = ln2.forward(add(h, c));
    Tensor f = ff2.forward(relu(ff1.forward(h2)));
    return ln3.forward(add(h2, f));
}

void TransformerDecoderBlock::collect(const std::string& prefix,
                                      std::vector<NamedParam>& params) const {
    self_att.collect(prefix + ".self", params);
    cross_att.collect(prefix + ".cross", params);
    ff1.collect(prefix + ".ff1", params);
    ff2.collect(prefix + ".ff2", params);
    ln1.collect(prefix + ".ln1", params);
    ln2.collect(prefix + ".ln2", params);
    ln3.collect(prefix + ".ln3", params);
}

// ---- Tse ----

Tse::Tse(std::size_t in_dim, std::size_t hidden_dim, std::size_t heads, Rng& rng)
    : in_proj(in_dim, hidden_dim, rng), block(hidden_dim, heads, rng) {}

Tensor Tse::forward(const Tensor& X) const {
    Tensor h = in_proj.forward(X);
    h = add(h, positional_encoding(h.rows(), h.cols()));
    h = block.forward(h);
    return mean(h, 0);
}

void Tse::collect(const std::string& prefix, std::vector<NamedParam>& params) const {
    in_proj.collect(prefix + ".proj", params);
    block.collect(prefix + ".block", params);
}

// ---- TransformerSeq2Seq ----

TransformerSeq2Seq::TransformerSeq2Seq(std::size_t d, std::size_t heads, Rng& rng)
    : dim(d), enc(d, heads, rng), dec(d, heads, rng) {}

Tensor TransformerSeq2Seq::encode(const Tensor& X) const {
    return enc.forward(add(X, positional_encoding(X.rows(), dim)));
}

Tensor TransformerSeq2Seq::decode_from_memory(const Tensor& memory, std::size_t n) const {
    return dec.forward(positional_encoding(n, dim), memory);
}

Tensor TransformerSeq2Seq::forward(const Tensor& X) const {
    return decode_from_memory(encode(X), X.rows());
}

void TransformerSeq2Seq::collect(const std::string& prefix,
                                 std::vector<NamedParam>& params) const {
    enc.collect(prefix + ".enc", params);
    dec.collect(prefix + ".dec", params);
}

}  // namespace sumgan::nn

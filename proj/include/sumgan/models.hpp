#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sumgan/layers.hpp"
#include "sumgan/losses.hpp"
#include "sumgan/rng.hpp"
#include "sumgan/tensor.hpp"

namespace sumgan::models {

using ad::NamedParam;
using ad::Tensor;

enum class VariantName { sum_gan, aed, std_enc, st, stsed, sat };

VariantName variant_from_string(const std::string& s);  // throws ConfigError
const char* to_string(VariantName v);
std::vector<VariantName> all_variants();

enum class SelectorKind { bilstm, self_attention };
enum class EncoderKind { lstm_vae, transformer_block, tse, fused };
enum class DecoderKind { lstm, fused };

struct Dims {
    std::size_t input = 1024;       // raw frame feature width M
    std::size_t compressed = 500;   // d after the compression layer
    std::size_t hidden = 500;       // H
};

struct VariantSpec {
    VariantName name = VariantName::aed;
    SelectorKind selector = SelectorKind::self_attention;
    EncoderKind encoder = EncoderKind::lstm_vae;
    DecoderKind decoder = DecoderKind::lstm;
    bool has_vae = true;
    Dims dims;
    std::size_t heads = 4;
    std::uint64_t seed = 0;

    /// Wire selector/encoder/decoder/has_vae from the variant name.
    static VariantSpec make(VariantName name, Dims dims = {}, std::size_t heads = 4,
                            std::uint64_t seed = 0);
};

/// Pre-drawn randomness for one forward pass, so a pass can be replayed
/// deterministically (finite differences, seeded reproduction).
struct Noise {
    std::vector<double> eps;      // [H] reparameterization draw
    std::vector<double> e_prior;  // [H] latent drawn from the prior
    std::vector<double> pseudo;   // [N*d] pseudo-memory for fused variants

    static Noise draw(const VariantSpec& spec, std::size_t n_frames, Rng& rng);
};

struct LatentCode {
    Tensor mu;      // [H]; undefined for fused variants
    Tensor logvar;  // [H]; undefined for fused variants
    Tensor e;       // [H]; undefined for fused variants
    Tensor memory;  // [N x d] encoder memory; fused variants only
};

struct ForwardTrace {
    Tensor compressed;  // [N x d]
    Tensor scores;      // [N], each in [0, 1]
    Tensor weighted;    // [N x d], rows scaled by scores
    LatentCode latent;
    Tensor xhat;        // [N x d]
    Tensor xhat_p;      // [N x d]; defined when prior sampling was requested
    Tensor phi_x, phi_xhat, phi_xhat_p;  // [H]
    Tensor d_x, d_xhat, d_xhat_p;        // probability scalars
};

struct ForwardOptions {
    bool with_prior_sample = true;  // decode a prior draw into xhat_p
    bool with_gan = true;           // classifier probabilities for all three
    bool detach_disc_inputs = false;
    // generator-update trims: the decoder gets a constant latent, and
    // gradients stop at phi(x). Decoder gradients are unchanged; the
    // backward pass just skips branches whose grads would be discarded.
    bool detach_latent = false;
    bool phi_x_constant = false;
};

class SumGanModel {
public:
    explicit SumGanModel(const VariantSpec& spec);

    const VariantSpec& spec() const { return spec_; }

    Tensor compress(const Tensor& X) const;         // [N x M] -> [N x d]
    Tensor select_scores(const Tensor& Xc) const;   // [N x d] -> [N]
    LatentCode encode(const Tensor& weighted, const Noise& noise) const;
    Tensor decode(const LatentCode& latent, std::size_t n) const;
    Tensor sample_prior_reconstruction(std::size_t n, const Noise& noise) const;
    /// Returns {phi, prob_original}: the last hidden state of the classifier
    /// LSTM and the softmax probability of the 'original' class.
    std::pair<Tensor, Tensor> discriminate(const Tensor& seq) const;

    ForwardTrace forward_full(const Tensor& X, const Noise& noise,
                              const ForwardOptions& opts = {}) const;

    /// Evaluation path: compression + selector only, no tape required.
    Tensor scores_for(const Tensor& X) const;

    std::vector<NamedParam> parameters() const;
    std::vector<NamedParam> summarizer_params() const;     // selector+compression+encoder
    std::vector<NamedParam> generator_params() const;      // decoder
    std::vector<NamedParam> discriminator_params() const;  // classifier

    void save_checkpoint(const std::string& path, std::uint64_t epoch) const;
    static SumGanModel load_checkpoint(const std::string& path,
                                       std::uint64_t* epoch_out = nullptr);

    // Components are public: tests and probes poke at weights directly.
    VariantSpec spec_;

    nn::Linear compression_;

    nn::BiLstm sel_bilstm_;
    nn::MultiHeadAttention sel_att_;
    nn::Linear score_head_;

    nn::Lstm enc_lstm_;
    nn::TransformerEncoderBlock enc_block_;
    nn::Tse tse_;
    nn::Linear mu_head_, logvar_head_;

    nn::LstmDecoder dec_lstm_;
    nn::TransformerSeq2Seq fused_;

    nn::Lstm disc_lstm_;
    nn::Linear disc_head_;
};

/// Loss terms for one trace, composed per the variant's loss set. GAN terms
/// are present only when the trace carries classifier probabilities.
losses::LossBundle model_losses(const VariantSpec& spec, const ForwardTrace& trace,
                                double sigma);

/// Sum of every trainable objective term (reconst + prior + sparsity +
/// generator GAN + discriminator loss); the scalar used by gradient checks.
Tensor total_check_loss(const VariantSpec& spec, const ForwardTrace& trace,
                        double sigma);

}  // namespace sumgan::models

#include "sumgan/models.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "sumgan/binio.hpp"

namespace sumgan::models {

using namespace sumgan::ad;
using json = nlohmann::json;

namespace {

constexpr char kCheckpointMagic[8] = {'S', 'G', 'A', 'E', 'D', 'C', 'P', '1'};

// Fixed child-stream tags so each component's initialization is independent
// of which other components a variant instantiates.
enum RngTag : std::uint64_t {
    tag_compression = 1,
    tag_selector = 2,
    tag_score_head = 3,
    tag_encoder = 4,
    tag_vae_heads = 5,
    tag_decoder = 6,
    tag_discriminator = 7,
};

}  // namespace

VariantName variant_from_string(const std::string& s) {
    if (s == "SUM-GAN") return VariantName::sum_gan;
    if (s == "AED") return VariantName::aed;
    if (s == "STD") return VariantName::std_enc;
    if (s == "ST") return VariantName::st;
    if (s == "STSED") return VariantName::stsed;
    if (s == "SAT") return VariantName::sat;
    throw ConfigError("unknown variant '" + s +
                      "' (expected SUM-GAN, AED, STD, ST, STSED or SAT)");
}

const char* to_string(VariantName v) {
    switch (v) {
        case VariantName::sum_gan: return "SUM-GAN";
        case VariantName::aed: return "AED";
        case VariantName::std_enc: return "STD";
        case VariantName::st: return "ST";
        case VariantName::stsed: return "STSED";
        case VariantName::sat: return "SAT";
    }
    return "?";
}

std::vector<VariantName> all_variants() {
    return {VariantName::sum_gan, VariantName::aed, VariantName::std_enc,
            VariantName::st,      VariantName::stsed, VariantName::sat};
}

VariantSpec VariantSpec::make(VariantName name, Dims dims, std::size_t heads,
                              std::uint64_t seed) {
    VariantSpec s;
    s.name = name;
    s.dims = dims;
    s.heads = heads;
    s.seed = seed;
    switch (name) {
        case VariantName::sum_gan:
            s.selector = SelectorKind::bilstm;
            s.encoder = EncoderKind::lstm_vae;
            s.decoder = DecoderKind::lstm;
            s.has_vae = true;
            break;
        case VariantName::aed:
            s.selector = SelectorKind::self_attention;
            s.encoder = EncoderKind::lstm_vae;
            s.decoder = DecoderKind::lstm;
            s.has_vae = true;
            break;
        case VariantName::std_enc:
            s.selector = SelectorKind::bilstm;
            s.encoder = EncoderKind::transformer_block;
            s.decoder = DecoderKind::lstm;
            s.has_vae = true;
            break;
        case VariantName::st:
            s.selector = SelectorKind::bilstm;
            s.encoder = EncoderKind::fused;
            s.decoder = DecoderKind::fused;
            s.has_vae = false;
            break;
        case VariantName::stsed:
            s.selector = SelectorKind::bilstm;
            s.encoder = EncoderKind::tse;
            s.decoder = DecoderKind::lstm;
            s.has_vae = true;
            break;
        case VariantName::sat:
            s.selector = SelectorKind::self_attention;
            s.encoder = EncoderKind::fused;
            s.decoder = DecoderKind::fused;
            s.has_vae = false;
            break;
    }
    return s;
}

Noise Noise::draw(const VariantSpec& spec, std::size_t n_frames, Rng& rng) {
    Noise out;
    if (spec.has_vae) {
        out.eps.resize(spec.dims.hidden);
        for (auto& v : out.eps) v = rng.gaussian();
        out.e_prior.resize(spec.dims.hidden);
        for (auto& v : out.e_prior) v = rng.gaussian();
    } else {
        out.pseudo.resize(n_frames * spec.dims.compressed);
        for (auto& v : out.pseudo) v = rng.gaussian();
    }
    return out;
}

SumGanModel::SumGanModel(const VariantSpec& spec) : spec_(spec) {
    const std::size_t M = spec.dims.input;
    const std::size_t d = spec.dims.compressed;
    const std::size_t H = spec.dims.hidden;
    Rng root(spec.seed);

    {
        Rng r = root.child(tag_compression);
        compression_ = nn::Linear(M, d, r);
    }
    {
        Rng r = root.child(tag_selector);
        Rng rh = root.child(tag_score_head);
        if (spec.selector == SelectorKind::bilstm) {
            sel_bilstm_ = nn::BiLstm(d, H, 2, r);
            score_head_ = nn::Linear(2 * H, 1, rh);
        } else {
            sel_att_ = nn::MultiHeadAttention(d, spec.heads, r);
            score_head_ = nn::Linear(d, 1, rh);
        }
    }
    {
        Rng r = root.child(tag_encoder);
        Rng rv = root.child(tag_vae_heads);
        switch (spec.encoder) {
            case EncoderKind::lstm_vae: {
                enc_lstm_ = nn::Lstm(d, H, 2, r);
                Rng rv2 = rv.child(1);
                mu_head_ = nn::Linear(H, H, rv);
                logvar_head_ = nn::Linear(H, H, rv2);
                break;
            }
            case EncoderKind::transformer_block: {
                enc_block_ = nn::TransformerEncoderBlock(d, spec.heads, r);
                Rng rv2 = rv.child(1);
                mu_head_ = nn::Linear(d, H, rv);
                logvar_head_ = nn::Linear(d, H, rv2);
                break;
            }
            case EncoderKind::tse: {
                tse_ = nn::Tse(d, H, spec.heads, r);
                Rng rv2 = rv.child(1);
                mu_head_ = nn::Linear(H, H, rv);
                logvar_head_ = nn::Linear(H, H, rv2);
                break;
            }
            case EncoderKind::fused:
                fused_ = nn::TransformerSeq2Seq(d, spec.heads, r);
                break;
        }
    }
    if (spec.decoder == DecoderKind::lstm) {
        Rng r = root.child(tag_decoder);
        dec_lstm_ = nn::LstmDecoder(H, d, r);
    }
    {
        Rng r = root.child(tag_discriminator);
        disc_lstm_ = nn::Lstm(d, H, 2, r);
        Rng rh = r.child(1);
        disc_head_ = nn::Linear(H, 2, rh);
    }
}

Tensor SumGanModel::compress(const Tensor& X) const {
    if (X.rank() != 2 || X.cols() != spec_.dims.input) {
        throw ValidationError("feature dim mismatch: model expects " +
                              std::to_string(spec_.dims.input) + "-dim frames");
    }
    return compression_.forward(X);
}

Tensor SumGanModel::select_scores(const Tensor& Xc) const {
    Tensor feats;
    if (spec_.selector == SelectorKind::bilstm) {
        feats = sel_bilstm_.forward(Xc);
    } else {
        Tensor with_pos = add(Xc, nn::positional_encoding(Xc.rows(), Xc.cols()));
        feats = sel_att_.forward(with_pos, with_pos).y;
    }
    Tensor logits = score_head_.forward(feats);  // [N x 1]
    return reshape(sigmoid(logits), {Xc.rows()});
}

LatentCode SumGanModel::encode(const Tensor& weighted, const Noise& noise) const {
    const std::size_t H = spec_.dims.hidden;
    LatentCode code;
    Tensor enc_vec;  // [1 x *] input row for the VAE heads
    switch (spec_.encoder) {
        case EncoderKind::lstm_vae:
            enc_vec = enc_lstm_.forward(weighted).final_h;
            break;
        case EncoderKind::transformer_block: {
            Tensor h = enc_block_.forward(
                add(weighted, nn::positional_encoding(weighted.rows(), weighted.cols())));
            enc_vec = reshape(mean(h, 0), {1, weighted.cols()});
            break;
        }
        case EncoderKind::tse:
            enc_vec = reshape(tse_.forward(weighted), {1, H});
            break;
        case EncoderKind::fused:
            code.memory = fused_.encode(weighted);
            return code;
    }
    code.mu = reshape(mu_head_.forward(enc_vec), {H});
    code.logvar = reshape(logvar_head_.forward(enc_vec), {H});
    if (noise.eps.size() != H) {
        throw ContractError("encode: noise.eps has wrong size");
    }
    Tensor eps = Tensor::from({H}, noise.eps);
    code.e = add(code.mu, mul(exp(mul_const(code.logvar, 0.5)), eps));
    return code;
}

Tensor SumGanModel::decode(const LatentCode& latent, std::size_t n) const {
    if (spec_.decoder == DecoderKind::lstm) {
        return dec_lstm_.forward(reshape(latent.e, {1, spec_.dims.hidden}), n);
    }
    return fused_.decode_from_memory(latent.memory, n);
}

Tensor SumGanModel::sample_prior_reconstruction(std::size_t n, const Noise& noise) const {
    if (spec_.has_vae) {
        if (noise.e_prior.size() != spec_.dims.hidden) {
            throw ContractError("sample_prior_reconstruction: noise.e_prior size");
        }
        LatentCode prior;
        prior.e = Tensor::from({spec_.dims.hidden}, noise.e_prior);
        return decode(prior, n);
    }
    if (noise.pseudo.size() != n * spec_.dims.compressed) {
        throw ContractError("sample_prior_reconstruction: noise.pseudo size");
    }
    Tensor pseudo = Tensor::from({n, spec_.dims.compressed}, noise.pseudo);
    return fused_.decode_from_memory(pseudo, n);
}

std::pair<Tensor, Tensor> SumGanModel::discriminate(const Tensor& seq) const {
    auto out = disc_lstm_.forward(seq);
    Tensor phi = reshape(out.final_h, {spec_.dims.hidden});
    Tensor logits = disc_head_.forward(out.final_h);  // [1 x 2]
    Tensor probs = softmax(logits, 1);
    Tensor prob_original = reshape(narrow(probs, 1, 0, 1), {1});
    return {phi, prob_original};
}

ForwardTrace SumGanModel::forward_full(const Tensor& X, const Noise& noise,
                                       const ForwardOptions& opts) const {
    ForwardTrace t;
    t.compressed = compress(X);
    const std::size_t n = t.compressed.rows();
    t.scores = select_scores(t.compressed);
    t.weighted = row_scale(t.compressed, t.scores);
    t.latent = encode(t.weighted, noise);
    LatentCode dec_latent = t.latent;
    if (opts.detach_latent) {
        if (dec_latent.e.defined()) dec_latent.e = detach(dec_latent.e);
        if (dec_latent.memory.defined()) dec_latent.memory = detach(dec_latent.memory);
    }
    t.xhat = decode(dec_latent, n);

    const bool need_prior = opts.with_prior_sample || opts.with_gan;
    if (need_prior) {
        t.xhat_p = sample_prior_reconstruction(n, noise);
    }

    Tensor d_in_x = opts.detach_disc_inputs ? detach(t.compressed) : t.compressed;
    Tensor d_in_xhat = opts.detach_disc_inputs ? detach(t.xhat) : t.xhat;
    auto [phi_x, dx] = discriminate(d_in_x);
    auto [phi_xhat, dxh] = discriminate(d_in_xhat);
    t.phi_x = opts.phi_x_constant ? detach(phi_x) : phi_x;
    t.phi_xhat = phi_xhat;
    if (opts.with_gan) {
        Tensor d_in_p = opts.detach_disc_inputs ? detach(t.xhat_p) : t.xhat_p;
        auto [phi_p, dxp] = discriminate(d_in_p);
        t.phi_xhat_p = phi_p;
        t.d_x = dx;
        t.d_xhat = dxh;
        t.d_xhat_p = dxp;
    }
    return t;
}

Tensor SumGanModel::scores_for(const Tensor& X) const {
    return select_scores(compress(X));
}

std::vector<NamedParam> SumGanModel::summarizer_params() const {
    std::vector<NamedParam> p;
    compression_.collect("compression", p);
    if (spec_.selector == SelectorKind::bilstm) {
        sel_bilstm_.collect("selector.bilstm", p);
    } else {
        sel_att_.collect("selector.att", p);
    }
    score_head_.collect("selector.score_head", p);
    switch (spec_.encoder) {
        case EncoderKind::lstm_vae: enc_lstm_.collect("encoder.lstm", p); break;
        case EncoderKind::transformer_block: enc_block_.collect("encoder.block", p); break;
        case EncoderKind::tse: tse_.collect("encoder.tse", p); break;
        case EncoderKind::fused: fused_.enc.collect("encoder.fused", p); break;
    }
    if (spec_.has_vae) {
        mu_head_.collect("encoder.mu_head", p);
        logvar_head_.collect("encoder.logvar_head", p);
    }
    return p;
}

std::vector<NamedParam> SumGanModel::generator_params() const {
    std::vector<NamedParam> p;
    if (spec_.decoder == DecoderKind::lstm) {
        dec_lstm_.collect("decoder.lstm", p);
    } else {
        fused_.dec.collect("decoder.fused", p);
    }
    return p;
}

std::vector<NamedParam> SumGanModel::discriminator_params() const {
    std::vector<NamedParam> p;
    disc_lstm_.collect("discriminator.lstm", p);
    disc_head_.collect("discriminator.head", p);
    return p;
}

std::vector<NamedParam> SumGanModel::parameters() const {
    std::vector<NamedParam> p = summarizer_params();
    auto g = generator_params();
    auto d = discriminator_params();
    p.insert(p.end(), g.begin(), g.end());
    p.insert(p.end(), d.begin(), d.end());
    return p;
}

void SumGanModel::save_checkpoint(const std::string& path, std::uint64_t epoch) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ValidationError("cannot open checkpoint for writing: " + path);
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic));

    json manifest = {
        {"variant", to_string(spec_.name)},
        {"input_dim", spec_.dims.input},
        {"compressed_dim", spec_.dims.compressed},
        {"hidden_dim", spec_.dims.hidden},
        {"heads", spec_.heads},
        {"seed", spec_.seed},
        {"epoch", epoch},
    };
    io::write_string(os, manifest.dump());

    const auto params = parameters();
    io::write_u32(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        io::write_string(os, p.name);
        io::write_u32(os, static_cast<std::uint32_t>(p.tensor.rank()));
        for (auto ddim : p.tensor.shape()) {
            io::write_u32(os, static_cast<std::uint32_t>(ddim));
        }
        for (double v : p.tensor.value()) io::write_f64(os, v);
    }
    if (!os) throw ValidationError("failed writing checkpoint: " + path);
}

SumGanModel SumGanModel::load_checkpoint(const std::string& path,
                                         std::uint64_t* epoch_out) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("cannot open checkpoint: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
        throw ValidationError("bad checkpoint magic in " + path);
    }
    json manifest;
    try {
        manifest = json::parse(io::read_string(is, "manifest"));
    } catch (const json::parse_error& e) {
        throw ValidationError("bad checkpoint manifest: " + std::string(e.what()));
    }
    Dims dims;
    dims.input = manifest.at("input_dim").get<std::size_t>();
    dims.compressed = manifest.at("compressed_dim").get<std::size_t>();
    dims.hidden = manifest.at("hidden_dim").get<std::size_t>();
    VariantSpec spec = VariantSpec::make(
        variant_from_string(manifest.at("variant").get<std::string>()), dims,
        manifest.at("heads").get<std::size_t>(), manifest.at("seed").get<std::uint64_t>());
    if (epoch_out != nullptr) *epoch_out = manifest.at("epoch").get<std::uint64_t>();

    SumGanModel model(spec);
    auto params = model.parameters();
    const std::uint32_t n = io::read_u32(is, "param count");
    if (n != params.size()) {
        throw ValidationError("checkpoint parameter count mismatch");
    }
    for (auto& p : params) {
        const std::string name = io::read_string(is, "param name");
        if (name != p.name) {
            throw ValidationError("checkpoint parameter order mismatch: expected '" +
                                  p.name + "', found '" + name + "'");
        }
        const std::uint32_t ndim = io::read_u32(is, "param rank");
        ad::Shape shape(ndim);
        for (auto& dd : shape) dd = io::read_u32(is, "param dim");
        if (shape != p.tensor.shape()) {
            throw ValidationError("checkpoint shape mismatch for " + name);
        }
        for (auto& v : p.tensor.raw_value()) v = io::read_f64(is, "param data");
    }
    return model;
}

losses::LossBundle model_losses(const VariantSpec& spec, const ForwardTrace& trace,
                                double sigma) {
    losses::LossParts parts;
    parts.reconst = losses::reconstruction_loss(trace.phi_x, trace.phi_xhat);
    if (spec.has_vae) {
        parts.prior = losses::prior_loss(trace.latent.mu, trace.latent.logvar);
    }
    parts.sparsity = losses::sparsity_loss(trace.scores, sigma);
    if (trace.d_x.defined()) {
        auto gan = losses::gan_losses(trace.d_x, trace.d_xhat, trace.d_xhat_p);
        parts.gan_d = gan.gan_d;
        parts.gan_g = gan.gan_g;
    }
    parts.sigma_target = sigma;
    return losses::compose(spec.has_vae, parts);
}

Tensor total_check_loss(const VariantSpec& spec, const ForwardTrace& trace,
                        double sigma) {
    auto bundle = model_losses(spec, trace, sigma);
    Tensor total = add(bundle.reconst, bundle.sparsity);
    if (bundle.has_prior()) total = add(total, bundle.prior);
    if (bundle.gan_g.defined()) {
        total = add(total, bundle.gan_g);
        total = add(total, neg(bundle.gan_d));
    }
    return total;
}

}  // namespace sumgan::models

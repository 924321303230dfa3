#include "sumgan/losses.hpp"

namespace sumgan::losses {

using namespace sumgan::ad;

Tensor reconstruction_loss(const Tensor& phi_x, const Tensor& phi_xhat) {
    if (phi_x.shape() != phi_xhat.shape()) {
        throw DimError("reconstruction_loss: feature shapes disagree");
    }
    Tensor d = sub(phi_x, phi_xhat);
    return sum(mul(d, d));
}

Tensor prior_loss(const Tensor& mu, const Tensor& logvar) {
    if (mu.shape() != logvar.shape()) {
        throw DimError("prior_loss: mu/logvar shapes disagree");
    }
    // -1/2 * sum(1 + logvar - mu^2 - exp(logvar))
    Tensor inner = sub(add_const(logvar, 1.0), add(mul(mu, mu), exp(logvar)));
    return mul_const(sum(inner), -0.5);
}

Tensor sparsity_loss(const Tensor& scores, double sigma) {
    if (sigma < 0.0 || sigma > 1.0) {
        throw ContractError("sparsity_loss: sigma must lie in [0, 1]");
    }
    for (double v : scores.value()) {
        if (v < 0.0 || v > 1.0) {
            throw ContractError("sparsity_loss: scores must lie in [0, 1]");
        }
    }
    return abs(add_const(mean(scores), -sigma));
}

namespace {

void check_prob(const Tensor& p, const char* name) {
    if (p.numel() != 1) {
        throw ContractError(std::string("gan_losses: ") + name + " must be scalar");
    }
    const double v = p.item();
    if (!(v >= 0.0 && v <= 1.0)) {
        throw ContractError(std::string("gan_losses: ") + name +
                            " outside [0, 1] before clamping");
    }
}

Tensor one_minus(const Tensor& p) { return sub(Tensor::scalar(1.0), p); }

}  // namespace

GanLosses gan_losses(const Tensor& d_x, const Tensor& d_xhat, const Tensor& d_xhat_p) {
    check_prob(d_x, "d_x");
    check_prob(d_xhat, "d_xhat");
    check_prob(d_xhat_p, "d_xhat_p");
    GanLosses out;
    out.gan_d = add(add(log(d_x), log(one_minus(d_xhat))), log(one_minus(d_xhat_p)));
    out.gan_g = neg(add(log(d_xhat), log(d_xhat_p)));
    return out;
}

LossBundle compose(bool retains_vae, const LossParts& parts) {
    LossBundle b;
    b.reconst = parts.reconst;
    if (retains_vae) {
        if (!parts.prior.defined()) {
            throw ContractError("compose: variant retains the VAE but no prior term given");
        }
        b.prior = parts.prior;
    }
    b.sparsity = parts.sparsity;
    b.gan_d = parts.gan_d;
    b.gan_g = parts.gan_g;
    b.sigma_target = parts.sigma_target;
    return b;
}

}  // namespace sumgan::losses

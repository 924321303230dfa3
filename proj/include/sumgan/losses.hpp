#pragma once

#include "sumgan/tensor.hpp"

namespace sumgan::losses {

using ad::Tensor;

/// Squared Euclidean distance between discriminator feature vectors,
/// ||phi(x) - phi(x_hat)||^2.
Tensor reconstruction_loss(const Tensor& phi_x, const Tensor& phi_xhat);

/// KL divergence of a diagonal Gaussian posterior from N(0, I):
/// -1/2 * sum(1 + logvar - mu^2 - exp(logvar)).
Tensor prior_loss(const Tensor& mu, const Tensor& logvar);

/// | mean(s) - sigma |, the distance of the mean importance score from the
/// target summary rate.
Tensor sparsity_loss(const Tensor& scores, double sigma);

struct GanLosses {
    /// Discriminator objective log d(x) + log(1-d(x_hat)) + log(1-d(x_hat_p)).
    /// The discriminator maximizes this, so its training loss is the negation.
    Tensor gan_d;
    /// Non-saturating generator loss -log d(x_hat) - log d(x_hat_p).
    Tensor gan_g;
};

/// All three arguments are probability scalars in [0, 1]; the log clamp
/// bounds both p and 1-p away from zero at 1e-12.
GanLosses gan_losses(const Tensor& d_x, const Tensor& d_xhat, const Tensor& d_xhat_p);

struct LossParts {
    Tensor reconst;
    Tensor prior;  // may be undefined
    Tensor sparsity;
    Tensor gan_d;  // may be undefined (trace computed without GAN terms)
    Tensor gan_g;
    double sigma_target = 0.0;
};

/// The per-variant loss set: the prior term is kept only by architectures
/// that retain the VAE and dropped otherwise.
struct LossBundle {
    Tensor reconst;
    Tensor prior;  // undefined when the variant has no VAE
    Tensor sparsity;
    Tensor gan_d;
    Tensor gan_g;
    double sigma_target = 0.0;

    bool has_prior() const { return prior.defined(); }
};

LossBundle compose(bool retains_vae, const LossParts& parts);

}  // namespace sumgan::losses

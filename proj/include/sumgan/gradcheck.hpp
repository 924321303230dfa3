#pragma once

#include <functional>
#include <span>
#include <string>

#include "sumgan/tensor.hpp"

namespace sumgan::ad {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

/// Compare reverse-mode gradients against central finite differences.
///
/// `build_loss` must construct the scalar loss from the current parameter
/// values and be deterministic (freeze any sampling before calling). It
/// runs once under a tape for the analytic gradients and twice per
/// parameter element for the numeric probes. The relative error is
/// |a - n| / max(1, |a|, |n|), maximized over all elements.
GradCheckReport grad_check(const std::function<Tensor()>& build_loss,
                           std::span<const NamedParam> params,
                           double eps = 1e-5);

}  // namespace sumgan::ad

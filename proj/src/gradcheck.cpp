#include "sumgan/gradcheck.hpp"

#include <cmath>
#include <vector>

namespace sumgan::ad {

GradCheckReport grad_check(const std::function<Tensor()>& build_loss,
                           std::span<const NamedParam> params, double eps) {
    std::vector<std::vector<double>> analytic(params.size());
    {
        Graph graph;
        Graph::Scope scope(graph);
        for (const auto& p : params) {
            const_cast<Tensor&>(p.tensor).zero_grad();
        }
        Tensor loss = build_loss();
        graph.backward(loss);
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto g = params[i].tensor.grad();
            analytic[i].assign(g.begin(), g.end());
            if (analytic[i].empty()) {
                analytic[i].assign(params[i].tensor.numel(), 0.0);
            }
        }
    }

    GradCheckReport rep;
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& value = const_cast<Tensor&>(params[i].tensor).raw_value();
        for (std::size_t j = 0; j < value.size(); ++j) {
            const double orig = value[j];
            value[j] = orig + eps;
            const double up = build_loss().item();
            value[j] = orig - eps;
            const double down = build_loss().item();
            value[j] = orig;
            const double numeric = (up - down) / (2.0 * eps);
            const double a = analytic[i][j];
            const double denom = std::max({1.0, std::fabs(a), std::fabs(numeric)});
            const double rel = std::fabs(a - numeric) / denom;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_param = params[i].name;
                rep.worst_index = j;
                rep.analytic = a;
                rep.numeric = numeric;
            }
        }
    }
    return rep;
}

}  // namespace sumgan::ad

#include "mltn/optim.hpp"

#include <cmath>
#include <string>

#include "mltn/errors.hpp"

namespace mltn {

double cross_entropy_with_logits(const Tensor& logits,
                                 const std::vector<int>& labels,
                                 Tensor* grad_logits) {
    if (logits.rank() != 2)
        throw ShapeMismatch("cross entropy expects logits of shape [B, m]");
    const std::size_t B = logits.shape()[0];
    const std::size_t m = logits.shape()[1];
    if (labels.size() != B)
        throw CountMismatch("got " + std::to_string(labels.size()) +
                            " labels for " + std::to_string(B) + " rows");
    if (grad_logits) *grad_logits = Tensor({B, m});

    double loss = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        const int y = labels[b];
        if (y < 0 || static_cast<std::size_t>(y) >= m)
            throw LabelOutOfRange("label " + std::to_string(y) +
                                  " outside [0, " + std::to_string(m) + ")");
        const double* row = logits.data() + b * m;
        double mx = row[0];
        for (std::size_t k = 1; k < m; ++k) mx = std::max(mx, row[k]);
        double sum = 0.0;
        for (std::size_t k = 0; k < m; ++k) sum += std::exp(row[k] - mx);
        const double lse = mx + std::log(sum);
        loss += lse - row[static_cast<std::size_t>(y)];
        if (grad_logits) {
            double* grow = grad_logits->data() + b * m;
            for (std::size_t k = 0; k < m; ++k)
                grow[k] = std::exp(row[k] - lse) / static_cast<double>(B);
            grow[static_cast<std::size_t>(y)] -= 1.0 / static_cast<double>(B);
        }
    }
    return loss / static_cast<double>(B);
}

AdamState AdamState::for_params(const std::vector<ParamRef>& params, double lr) {
    AdamState st;
    st.lr = lr;
    st.m.reserve(params.size());
    st.v.reserve(params.size());
    for (const ParamRef& p : params) {
        st.m.emplace_back(p.size, 0.0);
        st.v.emplace_back(p.size, 0.0);
    }
    return st;
}

void adam_step(std::vector<ParamRef>& params, const ParamGrads& grads,
               AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw ShapeMismatch("parameter, gradient and state counts disagree");
    if (state.lr <= 0.0) throw ConfigError("learning rate must be positive");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        ParamRef& p = params[i];
        const Tensor& g = grads[i];
        if (g.size() != p.size || state.m[i].size() != p.size)
            throw ShapeMismatch("gradient shape mismatch for parameter " + p.name);
        double* m = state.m[i].data();
        double* v = state.v[i].data();
        for (std::size_t j = 0; j < p.size; ++j) {
            const double gj = g[j];
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * gj;
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * gj * gj;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p.data[j] -= state.lr * mhat / (std::sqrt(vhat) + state.epsilon);
        }
    }
}

double clip_grad_norm(ParamGrads& grads, double max_norm) {
    if (max_norm <= 0.0) throw ConfigError("max_norm must be positive");
    double sq = 0.0;
    for (const Tensor& g : grads)
        for (std::size_t j = 0; j < g.size(); ++j) sq += g[j] * g[j];
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double s = max_norm / norm;
        for (Tensor& g : grads) g.scale(s);
    }
    return norm;
}

}  // namespace mltn

#include <cmath>
#include <numbers>

#include "mg/nn.hpp"

namespace mg::nn {

AdamState AdamState::zeros(std::size_t n) { return {Tensor({n}), Tensor({n}), 0}; }

AdamResult adam_step(const Tensor& params, const Tensor& grads, const AdamState& state, double lr, double beta1,
                     double beta2, double eps, double weight_decay) {
    const std::size_t n = params.size();
    if (grads.size() != n || state.m.size() != n || state.v.size() != n)
        throw ShapeError("adam_step: params, grads and state sizes differ");
    if (!grads.all_finite()) throw OptimizationError("adam_step: non-finite gradient");
    AdamResult r{Tensor(params.shape()), {Tensor(state.m.shape()), Tensor(state.v.shape()), state.step + 1}};
    const double t = double(r.state.step);
    const double c1 = 1.0 - std::pow(beta1, t);
    const double c2 = 1.0 - std::pow(beta2, t);
    const double decay = 1.0 - lr * weight_decay;
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grads[i];
        const double m = beta1 * state.m[i] + (1 - beta1) * g;
        const double v = beta2 * state.v[i] + (1 - beta2) * g * g;
        r.state.m[i] = static_cast<float>(m);
        r.state.v[i] = static_cast<float>(v);
        const double upd = lr * (m / c1) / (std::sqrt(v / c2) + eps);
        r.params[i] = static_cast<float>(double(params[i]) * decay - upd);
    }
    return r;
}

double cosine_lr(std::size_t t, std::size_t T, double lr_max, double lr_min) {
    if (T == 0) return lr_max;
    const double f = double(std::min(t, T)) / double(T);
    return lr_min + (lr_max - lr_min) * 0.5 * (1 + std::cos(std::numbers::pi * f));
}

template <class T>
GradCheckResult grad_check(const NetworkSpec& net, const Parameters& params, const LossFn<double>& loss,
                           const BasicTensor<double>& x_in, double eps, std::uint64_t seed, double floor, Mode mode) {
    // backward() needs a train-mode tape; in eval mode that is only equivalent
    // when no layer behaves differently between modes.
    if (mode == Mode::Eval)
        for (const auto& l : net.layers())
            if (l.kind == LayerKind::BatchNorm || l.kind == LayerKind::Dropout)
                throw ParameterError("grad_check: eval mode is not supported for BatchNorm/Dropout networks");
    const BasicTensor<T> xt = x_in.template cast<T>();
    const BasicTensor<double> x = xt.template cast<double>();
    auto eval = [&](const Parameters& p, const BasicTensor<double>& in) {
        return loss(forward<double>(net, p, in, mode, seed).y).first;
    };
    const auto fwd = forward<T>(net, params, xt, Mode::Train, seed);
    const auto dy = loss(fwd.y.template cast<double>()).second.template cast<T>();
    const auto an = backward<T>(net, params, fwd.tape, dy);

    GradCheckResult res;
    auto consider = [&](std::size_t idx, double a, double num) {
        const double rel = std::abs(a - num) / std::max({std::abs(a), std::abs(num), floor});
        if (rel > res.max_rel_error || (idx == 0 && res.max_rel_error == 0)) {
            res.max_rel_error = rel;
            res.worst_param = idx;
            res.analytic = a;
            res.numeric = num;
        }
    };

    Parameters p = params;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const float orig = p.flat[i];
        const float hi = static_cast<float>(double(orig) + eps);
        const float lo = static_cast<float>(double(orig) - eps);
        p.flat[i] = hi;
        const double lp = eval(p, x);
        p.flat[i] = lo;
        const double lm = eval(p, x);
        p.flat[i] = orig;
        consider(i, an.dparams[i], (lp - lm) / (double(hi) - double(lo)));
    }
    BasicTensor<double> xi = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = xi[i];
        xi[i] = orig + eps;
        const double lp = eval(params, xi);
        xi[i] = orig - eps;
        const double lm = eval(params, xi);
        xi[i] = orig;
        consider(p.size() + i, double(an.dx[i]), (lp - lm) / (2 * eps));
    }
    return res;
}

template GradCheckResult grad_check<float>(const NetworkSpec&, const Parameters&, const LossFn<double>&,
                                           const BasicTensor<double>&, double, std::uint64_t, double, Mode);
template GradCheckResult grad_check<double>(const NetworkSpec&, const Parameters&, const LossFn<double>&,
                                            const BasicTensor<double>&, double, std::uint64_t, double, Mode);

}  // namespace mg::nn

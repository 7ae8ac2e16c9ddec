#include "dfkd/grad_check.hpp"

#include <cmath>
#include <cstring>

#include "dfkd/error.hpp"

namespace dfkd {

double grad_check(const ScalarFn& f, std::vector<Tensor>& inputs, double eps) {
    auto eval = [&]() {
        Tape tape;
        Tensor out = f(tape, inputs);
        if (!out.defined() || out.numel() != 1)
            throw ContractError("grad_check requires a scalar-valued function");
        return out.item();
    };

    const float probe_a = eval();
    const float probe_b = eval();
    if (std::memcmp(&probe_a, &probe_b, sizeof(float)) != 0)
        throw ContractError("grad_check: function is non-deterministic between probes");

    // analytic pass
    for (auto& t : inputs) t.zero_grad();
    Tape tape;
    Tensor out = f(tape, inputs);
    tape.backward(out);

    std::vector<std::vector<float>> analytic;
    for (auto& t : inputs) {
        std::vector<float> g(static_cast<std::size_t>(t.numel()), 0.0f);
        if (t.has_grad())
            std::memcpy(g.data(), t.grad(), g.size() * sizeof(float));
        analytic.push_back(std::move(g));
    }

    double max_rel_err = 0.0;
    for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
        Tensor& t = inputs[ti];
        if (!t.requires_grad()) continue;
        float* data = t.data();
        for (std::int64_t i = 0; i < t.numel(); ++i) {
            const float orig = data[i];
            data[i] = orig + static_cast<float>(eps);
            const double xp = data[i];
            const double fp = eval();
            data[i] = orig - static_cast<float>(eps);
            const double xm = data[i];
            const double fm = eval();
            data[i] = orig;
            // divide by the realized f32 step, not the nominal 2*eps
            const double fd = (fp - fm) / (xp - xm);
            const double rel =
                std::fabs(analytic[ti][static_cast<std::size_t>(i)] - fd) /
                std::max(1e-6, std::fabs(fd));
            max_rel_err = std::max(max_rel_err, rel);
        }
    }
    return max_rel_err;
}

}  // namespace dfkd

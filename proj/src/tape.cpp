#include "dfkd/tape.hpp"

#include "dfkd/error.hpp"

namespace dfkd {

void Tape::backward(Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw ContractError("backward() requires a scalar loss");
    loss.ensure_grad();
    loss.grad()[0] = 1.0f;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
        if (!it->output.has_grad()) continue;  // no consumer contributed
        it->backward();
    }
}

}  // namespace dfkd

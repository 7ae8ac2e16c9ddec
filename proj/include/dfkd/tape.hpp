#pragma once

#include <functional>
#include <vector>

#include "dfkd/tensor.hpp"

namespace dfkd {

// Define-by-run record of executed ops. Each record holds the op's output and
// a backward rule closing over the inputs. Records are appended in execution
// order, which is a valid topological order; backward() walks them once in
// reverse. A record whose output never received a gradient is skipped (its
// contribution is zero).
//
// A tape is rebuilt per forward pass and is confined to one worker.
class Tape {
public:
    void record(Tensor output, std::function<void()> backward) {
        records_.push_back({std::move(output), std::move(backward)});
    }

    // Seeds d(loss)/d(loss) = 1 and propagates. Loss must be scalar.
    void backward(Tensor& loss);

    std::size_t size() const { return records_.size(); }
    void clear() { records_.clear(); }

private:
    struct Record {
        Tensor output;
        std::function<void()> backward;
    };
    std::vector<Record> records_;
};

}  // namespace dfkd

#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "scrawl/tensor.hpp"

namespace scrawl {

// Records one backward rule per op, in execution order. Ops append while the
// tape is recording and any of their inputs requires grad; backward() replays
// the rules in reverse, accumulating (never overwriting) into grad buffers.
// Single-writer: one tape per forward pass, one thread.
template <typename T>
class TapeT {
public:
    bool recording() const { return recording_; }
    void set_recording(bool r) { recording_ = r; }

    void record(std::function<void()> backward_rule) {
        if (recording_) nodes_.push_back(std::move(backward_rule));
    }

    size_t size() const { return nodes_.size(); }

    // Seeds d(loss)/d(loss) = 1 and runs every recorded rule in reverse
    // topological order. Tensors never touched by a rule keep zero grads.
    void backward(TensorT<T> loss) {
        if (loss.numel() != 1)
            throw std::runtime_error("backward: loss must be scalar, got " + shape_str(loss.shape()));
        loss.grad()[0] += T(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    }

    void clear() { nodes_.clear(); }

private:
    std::vector<std::function<void()>> nodes_;
    bool recording_ = true;
};

using Tape = TapeT<float>;

// RAII guard for inference-mode sections of a tape.
template <typename T>
class NoGradGuard {
public:
    explicit NoGradGuard(TapeT<T>& tape) : tape_(tape), prev_(tape.recording()) { tape_.set_recording(false); }
    ~NoGradGuard() { tape_.set_recording(prev_); }

private:
    TapeT<T>& tape_;
    bool prev_;
};

}  // namespace scrawl

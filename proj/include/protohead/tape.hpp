#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "protohead/tensor.hpp"

namespace protohead {

/// One recorded primitive. `backward` propagates the output's adjoint into
/// the inputs' adjoints; it runs only while Tape::backward is active.
struct TapeEntry {
    const char* op;
    std::vector<std::shared_ptr<TensorNode>> inputs;
    std::shared_ptr<TensorNode> output;
    std::function<void()> backward;
};

/// Ordered record of executed primitives for one thread. Execution order is
/// topological by construction: an entry's inputs are either leaves or
/// outputs of earlier entries.
class Tape {
  public:
    static Tape& active();

    bool recording() const { return grad_enabled_; }
    void record(TapeEntry entry);

    /// Reverse replay from a scalar loss. Each recorded entry runs at most
    /// once per call. Accumulated adjoints are flushed additively into the
    /// persistent grad of every requires_grad node they reached, so repeated
    /// calls without zeroing stack their contributions.
    void backward(const Tensor& loss);

    void clear();
    std::size_t size() const { return entries_.size(); }
    void truncate(std::size_t n);
    const TapeEntry& entry(std::size_t i) const { return entries_.at(i); }

  private:
    friend class NoGradGuard;

    std::vector<TapeEntry> entries_;
    bool grad_enabled_ = true;
};

/// True when ops on this thread should record tape entries.
bool grad_enabled();

/// Disables recording on the current thread for its lifetime.
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

namespace detail {

/// Adjoint buffer of `node`, allocated and registered with the running
/// backward pass on first use. Only valid inside Tape::backward.
std::vector<double>& adjoint_of(TensorNode& node);

}  // namespace detail

}  // namespace protohead

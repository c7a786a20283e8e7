#include "protohead/tape.hpp"

namespace protohead {

namespace {

thread_local std::vector<TensorNode*>* g_pass_touched = nullptr;

}  // namespace

Tape& Tape::active() {
    thread_local Tape tape;
    return tape;
}

void Tape::record(TapeEntry entry) {
    entries_.push_back(std::move(entry));
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ValueError("backward: loss must be a defined scalar tensor");
    }
    if (g_pass_touched != nullptr) {
        throw ValueError("backward: reentrant call");
    }

    std::vector<TensorNode*> touched;
    g_pass_touched = &touched;

    detail::adjoint_of(*loss.node())[0] += 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        if (!it->output->adjoint.empty()) it->backward();
    }

    for (TensorNode* node : touched) {
        if (node->requires_grad) {
            if (node->grad.empty()) node->grad.assign(node->value.size(), 0.0);
            for (std::size_t i = 0; i < node->grad.size(); ++i) node->grad[i] += node->adjoint[i];
        }
        node->adjoint.clear();
    }
    g_pass_touched = nullptr;
}

void Tape::clear() {
    entries_.clear();
}

void Tape::truncate(std::size_t n) {
    if (n < entries_.size()) entries_.resize(n);
}

bool grad_enabled() {
    return Tape::active().recording();
}

NoGradGuard::NoGradGuard() : prev_(Tape::active().grad_enabled_) {
    Tape::active().grad_enabled_ = false;
}

NoGradGuard::~NoGradGuard() {
    Tape::active().grad_enabled_ = prev_;
}

namespace detail {

std::vector<double>& adjoint_of(TensorNode& node) {
    if (node.adjoint.empty()) {
        node.adjoint.assign(node.value.size(), 0.0);
        if (g_pass_touched) g_pass_touched->push_back(&node);
    }
    return node.adjoint;
}

}  // namespace detail

}  // namespace protohead

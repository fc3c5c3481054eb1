#pragma once

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "xct/errors.hpp"
#include "xct/tensor.hpp"

namespace xct {

template <typename T>
class Tape;

// Lightweight handle into a Tape's node record.
template <typename T>
struct Node {
    Tape<T>* tape = nullptr;
    int id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Tensor<T>& value() const { return tape->value(*this); }
};

// Records every operation applied to tracked tensors, in creation order.
// Parents always precede children, so the record is a topological order and
// reverse iteration is a valid reverse-mode sweep. Single-threaded within a
// training step; ops may parallelize internally over independent samples.
template <typename T>
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, int)>;

    Node<T> leaf(Tensor<T> value, bool requires_grad = false, std::string name = {}) {
        Record r;
        r.value = std::move(value);
        r.requires_grad = requires_grad;
        r.op = "leaf";
        r.name = std::move(name);
        recs_.push_back(std::move(r));
        return {this, static_cast<int>(recs_.size()) - 1};
    }

    Node<T> record(const char* op, Tensor<T> value, std::vector<Node<T>> parents,
                   BackwardFn backward) {
        bool rg = false;
        std::vector<int> pids;
        pids.reserve(parents.size());
        for (const Node<T>& p : parents) {
            check(p, op);
            rg = rg || recs_[p.id].requires_grad;
            pids.push_back(p.id);
        }
        Record r;
        r.value = std::move(value);
        r.requires_grad = rg;
        r.op = op;
        r.parents = std::move(pids);
        if (rg) r.backward = std::move(backward);
        recs_.push_back(std::move(r));
        return {this, static_cast<int>(recs_.size()) - 1};
    }

    const Tensor<T>& value(Node<T> n) const {
        check(n, "value");
        return recs_[n.id].value;
    }

    bool requires_grad(Node<T> n) const {
        check(n, "requires_grad");
        return recs_[n.id].requires_grad;
    }

    bool has_grad(Node<T> n) const {
        check(n, "has_grad");
        return recs_[n.id].grad_present;
    }

    const Tensor<T>& grad(Node<T> n) const {
        check(n, "grad");
        if (!recs_[n.id].grad_present)
            throw ContractError("node has no gradient (backward not run or not reached)");
        return recs_[n.id].grad;
    }

    // Reverse-mode sweep from a scalar loss. Gradients of nodes reachable by
    // multiple consumers accumulate by summation. Returns the gradients of
    // named leaves that require grad, keyed by name.
    std::map<std::string, Tensor<T>> backward(Node<T> loss) {
        check(loss, "backward");
        const Record& lr = recs_[loss.id];
        if (!lr.value.is_scalar())
            throw ContractError("backward requires a scalar loss, got shape " +
                                shape_str(lr.value.shape));
        for (Record& r : recs_) {
            r.grad_present = false;
            r.grad = Tensor<T>();
        }
        recs_[loss.id].grad = Tensor<T>::scalar(T(1));
        recs_[loss.id].grad_present = true;
        for (int id = loss.id; id >= 0; --id) {
            Record& r = recs_[id];
            if (r.grad_present && r.requires_grad && r.backward) r.backward(*this, id);
        }
        std::map<std::string, Tensor<T>> named;
        for (const Record& r : recs_) {
            if (!r.name.empty() && r.requires_grad && r.grad_present)
                named.emplace(r.name, r.grad);
        }
        return named;
    }

    void reset() { recs_.clear(); }
    size_t size() const { return recs_.size(); }

    const std::string& op_name(Node<T> n) const {
        check(n, "op_name");
        return recs_[n.id].op;
    }

    const std::vector<int>& parents(Node<T> n) const {
        check(n, "parents");
        return recs_[n.id].parents;
    }

    // --- helpers for op backward implementations ---

    // Zero-initialized gradient buffer; ops accumulate into it directly.
    Tensor<T>& grad_buffer(int id) {
        Record& r = recs_[static_cast<size_t>(id)];
        if (!r.grad_present) {
            r.grad = Tensor<T>::zeros(r.value.shape);
            r.grad_present = true;
        }
        return r.grad;
    }

    bool id_requires_grad(int id) const { return recs_[static_cast<size_t>(id)].requires_grad; }
    const Tensor<T>& id_value(int id) const { return recs_[static_cast<size_t>(id)].value; }
    const Tensor<T>& id_grad(int id) const { return recs_[static_cast<size_t>(id)].grad; }

    void check(Node<T> n, const char* where) const {
        if (n.tape != this)
            throw GraphError(std::string(where) + ": node belongs to a different tape");
        if (n.id < 0 || n.id >= static_cast<int>(recs_.size()))
            throw GraphError(std::string(where) + ": stale node handle (id " +
                             std::to_string(n.id) + " of " + std::to_string(recs_.size()) + ")");
    }

private:
    struct Record {
        Tensor<T> value;
        Tensor<T> grad;
        bool requires_grad = false;
        bool grad_present = false;
        std::string op;
        std::string name;
        std::vector<int> parents;
        BackwardFn backward;
    };

    std::vector<Record> recs_;
};

} // namespace xct

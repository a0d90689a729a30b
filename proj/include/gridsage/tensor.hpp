#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <vector>

namespace gridsage {

class Tape;

// Dense double-precision tensor. Plain tensors (node < 0) are immutable
// values safe to share; tensors returned by ops while a Tape is involved
// additionally reference their tape node so reverse-mode gradients can be
// queried after Tape::backward.
struct Tensor {
    std::vector<int> shape;
    std::shared_ptr<std::vector<double>> data;
    Tape* tape = nullptr;
    int node = -1;

    Tensor() = default;

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double value);
    static Tensor from(std::vector<int> shape, std::vector<double> values);
    static Tensor scalar(double value) { return from({1}, {value}); }

    int numel() const;
    int rows() const;  // 2-D only
    int cols() const;  // 2-D only
    bool is_scalar() const { return numel() == 1; }
    bool requires_grad() const { return node >= 0; }

    const std::vector<double>& vals() const { return *data; }
    double value() const;  // scalar only
    double at(int r, int c) const { return (*data)[static_cast<std::size_t>(r) * cols() + c]; }

    // Deep copy of the payload, detached from any tape.
    Tensor clone() const;
};

// Reverse-mode gradient tape. Append-only, so node order is already
// topological; backward walks it once in reverse, summing contributions
// across fan-out. Single-writer: one forward/backward pass owns the tape.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, int self)>;

    // Registers a leaf whose gradient should be tracked. Shares the payload.
    Tensor watch(const Tensor& t);

    // Seeds d(loss)/d(loss) = 1 and propagates. Gradients of every node
    // (leaves included) are readable via grad() until the next backward or
    // reset. Throws InvalidInputError unless loss is a scalar on this tape.
    void backward(const Tensor& loss);

    // Gradient of a tape tensor from the last backward pass. Detached
    // tensors have no gradient (has_grad returns false).
    bool has_grad(const Tensor& t) const;
    std::vector<double> grad(const Tensor& t) const;

    void reset();
    std::size_t size() const { return nodes_.size(); }

    // Recording interface for op implementations.
    int add_node(int numel, BackwardFn fn);
    std::vector<double>& grad_buf(int node);
    const std::vector<double>& grad_at(int node) const { return grads_[node]; }

private:
    struct Node {
        int numel;
        BackwardFn backward;
    };
    std::vector<Node> nodes_;
    std::vector<std::vector<double>> grads_;
};

// ---- operations ------------------------------------------------------
// All ops compute eagerly and record a backward rule when any operand sits
// on a tape. Mixing tensors from two different tapes is an IntegrityError.

// out[i,j] = sum_k x[i,k] * w[k,j] + b[j]
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

// Mean along an axis of a 2-D tensor (axis 0 -> per-column over rows,
// axis 1 -> per-row over columns); axis 0 of a 1-D tensor gives a scalar.
Tensor mean_axis(const Tensor& x, int axis);

struct MaxResult {
    Tensor values;
    std::vector<std::int32_t> argmax;  // flat index into x per output element
};
// Max along an axis; ties resolve to the first occurrence in row-major
// order. The gradient routes only to the argmax positions.
MaxResult max_axis(const Tensor& x, int axis);

Tensor sum_all(const Tensor& x);
Tensor reshape(const Tensor& x, std::vector<int> shape);
Tensor tile_rows(const Tensor& v, int n);  // [d] -> [n,d]
Tensor tile_cols(const Tensor& v, int d);  // [n] -> [n,d]
Tensor concat_cols(const Tensor& a, const Tensor& b);  // [n],[n] -> [n,2]
Tensor pick(const Tensor& x, int index);   // -> scalar x[index]

// Stable -log softmax(logits)[target]; gradient is softmax - onehot.
Tensor cross_entropy_logits(const Tensor& logits, int target);

// sum |x|; subgradient at 0 is 0, so exact zeros stay inert.
Tensor l1_sum(const Tensor& x);

}  // namespace gridsage

#include "gridsage/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gridsage/errors.hpp"

namespace gridsage {

namespace {

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 1) throw ShapeError("non-positive dimension " + std::to_string(d));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

Tape* common_tape(std::initializer_list<const Tensor*> ts) {
    Tape* tp = nullptr;
    for (const Tensor* t : ts) {
        if (t->tape == nullptr || t->node < 0) continue;
        if (tp != nullptr && tp != t->tape)
            throw IntegrityError("operands recorded on different tapes");
        tp = t->tape;
    }
    return tp;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape != b.shape)
        throw ShapeError(std::string(op) + ": operand shapes differ");
}

#ifdef GRIDSAGE_CHECK_FINITE
void check_finite(const Tensor& t, const char* op) {
    for (double v : *t.data)
        if (!std::isfinite(v))
            throw IntegrityError(std::string("non-finite value produced by ") + op);
}
#define GS_FINITE(t, op) check_finite(t, op)
#else
#define GS_FINITE(t, op) ((void)0)
#endif

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape) {
    const std::size_t n = shape_numel(shape);
    Tensor t;
    t.shape = std::move(shape);
    t.data = std::make_shared<std::vector<double>>(n, 0.0);
    return t;
}

Tensor Tensor::full(std::vector<int> shape, double value) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.data->begin(), t.data->end(), value);
    return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values) {
    if (shape_numel(shape) != values.size())
        throw ShapeError("value count does not match shape");
    Tensor t;
    t.shape = std::move(shape);
    t.data = std::make_shared<std::vector<double>>(std::move(values));
    return t;
}

int Tensor::numel() const {
    return data ? static_cast<int>(data->size()) : 0;
}

int Tensor::rows() const {
    if (shape.size() != 2) throw ShapeError("rows() on non-2D tensor");
    return shape[0];
}

int Tensor::cols() const {
    if (shape.size() != 2) throw ShapeError("cols() on non-2D tensor");
    return shape[1];
}

double Tensor::value() const {
    if (!is_scalar()) throw ShapeError("value() on non-scalar tensor");
    return (*data)[0];
}

Tensor Tensor::clone() const {
    Tensor t;
    t.shape = shape;
    t.data = std::make_shared<std::vector<double>>(*data);
    return t;
}

// ---- Tape ------------------------------------------------------------

Tensor Tape::watch(const Tensor& t) {
    Tensor out = t;
    out.tape = this;
    out.node = add_node(t.numel(), nullptr);
    return out;
}

int Tape::add_node(int numel, BackwardFn fn) {
    nodes_.push_back(Node{numel, std::move(fn)});
    return static_cast<int>(nodes_.size()) - 1;
}

std::vector<double>& Tape::grad_buf(int node) {
    if (grads_[node].empty())
        grads_[node].assign(static_cast<std::size_t>(nodes_[node].numel), 0.0);
    return grads_[node];
}

void Tape::backward(const Tensor& loss) {
    if (loss.tape != this || loss.node < 0)
        throw InvalidInputError("backward: loss is not recorded on this tape");
    if (!loss.is_scalar())
        throw InvalidInputError("backward: loss must be scalar");

    grads_.assign(nodes_.size(), {});
    grad_buf(loss.node)[0] = 1.0;
    for (int i = loss.node; i >= 0; --i) {
        if (grads_[i].empty() || !nodes_[i].backward) continue;
        nodes_[i].backward(*this, i);
    }
}

bool Tape::has_grad(const Tensor& t) const {
    return t.tape == this && t.node >= 0 &&
           static_cast<std::size_t>(t.node) < grads_.size() && !grads_[t.node].empty();
}

std::vector<double> Tape::grad(const Tensor& t) const {
    if (t.tape != this || t.node < 0)
        throw InvalidInputError("grad: tensor is not recorded on this tape");
    if (static_cast<std::size_t>(t.node) >= grads_.size() || grads_[t.node].empty())
        return std::vector<double>(static_cast<std::size_t>(t.numel()), 0.0);
    return grads_[t.node];
}

void Tape::reset() {
    nodes_.clear();
    grads_.clear();
}

// ---- ops -------------------------------------------------------------

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.shape.size() != 2 || w.shape.size() != 2 || b.shape.size() != 1)
        throw ShapeError("affine: expected x[n,d_in], w[d_in,d_out], b[d_out]");
    const int n = x.shape[0], din = x.shape[1], dout = w.shape[1];
    if (w.shape[0] != din || b.shape[0] != dout)
        throw ShapeError("affine: inner dimensions disagree (x " + std::to_string(n) + "x" +
                         std::to_string(din) + ", w " + std::to_string(w.shape[0]) + "x" +
                         std::to_string(dout) + ")");

    Tensor out = Tensor::zeros({n, dout});
    const double* xd = x.data->data();
    const double* wd = w.data->data();
    const double* bd = b.data->data();
    double* od = out.data->data();
    for (int i = 0; i < n; ++i) {
        double* orow = od + static_cast<std::size_t>(i) * dout;
        for (int j = 0; j < dout; ++j) orow[j] = bd[j];
        const double* xrow = xd + static_cast<std::size_t>(i) * din;
        for (int k = 0; k < din; ++k) {
            const double xv = xrow[k];
            if (xv == 0.0) continue;
            const double* wrow = wd + static_cast<std::size_t>(k) * dout;
            for (int j = 0; j < dout; ++j) orow[j] += xv * wrow[j];
        }
    }
    GS_FINITE(out, "affine");

    if (Tape* tp = common_tape({&x, &w, &b})) {
        out.tape = tp;
        const int xn = x.node, wn = w.node, bn = b.node;
        out.node = tp->add_node(out.numel(),
            [xn, wn, bn, n, din, dout, xp = x.data, wp = w.data](Tape& t, int self) {
                const std::vector<double>& go = t.grad_at(self);
                if (xn >= 0) {
                    std::vector<double>& gx = t.grad_buf(xn);
                    const double* wd2 = wp->data();
                    for (int i = 0; i < n; ++i)
                        for (int k = 0; k < din; ++k) {
                            const double* wrow = wd2 + static_cast<std::size_t>(k) * dout;
                            double acc = 0.0;
                            for (int j = 0; j < dout; ++j)
                                acc += go[static_cast<std::size_t>(i) * dout + j] * wrow[j];
                            gx[static_cast<std::size_t>(i) * din + k] += acc;
                        }
                }
                if (wn >= 0) {
                    std::vector<double>& gw = t.grad_buf(wn);
                    const double* xd2 = xp->data();
                    for (int i = 0; i < n; ++i) {
                        const double* xrow = xd2 + static_cast<std::size_t>(i) * din;
                        const double* grow = go.data() + static_cast<std::size_t>(i) * dout;
                        for (int k = 0; k < din; ++k) {
                            const double xv = xrow[k];
                            if (xv == 0.0) continue;
                            double* gwrow = gw.data() + static_cast<std::size_t>(k) * dout;
                            for (int j = 0; j < dout; ++j) gwrow[j] += xv * grow[j];
                        }
                    }
                }
                if (bn >= 0) {
                    std::vector<double>& gb = t.grad_buf(bn);
                    for (int i = 0; i < n; ++i)
                        for (int j = 0; j < dout; ++j)
                            gb[j] += go[static_cast<std::size_t>(i) * dout + j];
                }
            });
    }
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape);
    for (int i = 0; i < x.numel(); ++i) (*out.data)[i] = std::max(0.0, (*x.data)[i]);
    if (Tape* tp = common_tape({&x})) {
        out.tape = tp;
        const int xn = x.node;
        out.node = tp->add_node(out.numel(), [xn, xp = x.data](Tape& t, int self) {
            const std::vector<double>& go = t.grad_at(self);
            std::vector<double>& gx = t.grad_buf(xn);
            for (std::size_t i = 0; i < go.size(); ++i)
                if ((*xp)[i] > 0.0) gx[i] += go[i];
        });
    }
    return out;
}

Tensor sigmoid(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape);
    for (int i = 0; i < x.numel(); ++i) (*out.data)[i] = 1.0 / (1.0 + std::exp(-(*x.data)[i]));
    GS_FINITE(out, "sigmoid");
    if (Tape* tp = common_tape({&x})) {
        out.tape = tp;
        const int xn = x.node;
        out.node = tp->add_node(out.numel(), [xn, op = out.data](Tape& t, int self) {
            const std::vector<double>& go = t.grad_at(self);
            std::vector<double>& gx = t.grad_buf(xn);
            for (std::size_t i = 0; i < go.size(); ++i) {
                const double s = (*op)[i];
                gx[i] += go[i] * s * (1.0 - s);
            }
        });
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out = Tensor::zeros(a.shape);
    for (int i = 0; i < a.numel(); ++i) (*out.data)[i] = (*a.data)[i] + (*b.data)[i];
    GS_FINITE(out, "add");
    if (Tape* tp = common_tape({&a, &b})) {
        out.tape = tp;
        const int an = a.node, bn = b.node;
        out.node = tp->add_node(out.numel(), [an, bn](Tape& t, int self) {
            const std::vector<double>& go = t.grad_at(self);
            if (an >= 0) {
                std::vector<double>& ga = t.grad_buf(an);
                for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
            }
            if (bn >= 0) {
                std::vector<double>& gb = t.grad_buf(bn);
                for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
            }
        });
    }
    return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "hadamard");
    Tensor out = Tensor::zeros(a.shape);
    for (int i = 0; i < a.numel(); ++i) (*out.data)[i] = (*a.data)[i] * (*b.data)[i];
    GS_FINITE(out, "hadamard");
    if (Tape* tp = common_tape({&a, &b})) {
        out.tape = tp;
        const int an = a.node, bn = b.node;
        out.node = tp->add_node(out.numel(), [an, bn, ap = a.data, bp = b.data](Tape& t, int self) {
            const std::vector<double>& go = t.grad_at(self);
            if (an >= 0) {
                std::vector<double>& ga = t.grad_buf(an);
                for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * (*bp)[i];
            }
            if (bn >= 0) {
                std::vector<double>& gb = t.grad_buf(bn);
                for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * (*ap)[i];
            }
        });
    }
    return out;
}

Tensor scale(const Tensor& a, double c) {
    Tensor out = Tensor::zeros(a.shape);
    for (int i = 0; i < a.numel(); ++i) (*out.data)[i] = (*a.data)[i] * c;
    GS_FINITE(out, "scale");
    if (Tape* tp = common_tape({&a})) {
        out.tape = tp;
        const int an = a.node;
        out.node = tp->add_node(out.numel(), [an, c](Tape& t, int self) {
            const std::vector<double>& go = t.grad_at(self);
            std::vector<double>& ga = t.grad_buf(an);
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * c;
        });
    }
    return out;
}

Tensor mean_axis(const Tensor& x, int axis) {
    if (x.shape.size() == 1) {
        if (axis != 0) throw InvalidInputError("mean_axis: axis out of range for 1-D tensor");
        const int n = x.shape[0];
        Tensor out = Tensor::zeros({1});
        double acc = 0.0;
        for (int i = 0; i < n; ++i) acc += (*x.data)[i];
        (*out.data)[0] = acc / n;
        if (Tape* tp = common_tape({&x})) {
            out.tape = tp;
            const int xn = x.node;
            out.node = tp->add_node(1, [xn, n](Tape& t, int self) {
                const double g = t.grad_at(self)[0] / n;
                std::vector<double>& gx = t.grad_buf(xn);
                for (int i = 0; i < n; ++i) gx[i] += g;
            });
        }
        return out;
    }
    if (x.shape.size() != 2 || (axis != 0 && axis != 1))
        throw InvalidInputError("mean_axis: expected 2-D tensor with axis 0 or 1");
    const int n = x.shape[0], d = x.shape[1];
    const bool over_rows = (axis == 0);
    const int out_len = over_rows ? d : n;
    const int count = over_rows ? n : d;
    Tensor out = Tensor::zeros({out_len});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
            (*out.data)[over_rows ? j : i] += (*x.data)[static_cast<std::size_t>(i) * d + j];
    for (int k = 0; k < out_len; ++k) (*out.data)[k] /= count;

    if (Tape* tp = common_tape({&x})) {
        out.tape = tp;
        const int xn = x.node;
        out.node = tp->add_node(out_len, [xn, n, d, over_rows, count](Tape& t, int self) {
            const std::vector<double>& go = t.grad_at(self);
            std::vector<double>& gx = t.grad_buf(xn);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < d; ++j)
                    gx[static_cast<std::size_t>(i) * d + j] += go[over_rows ? j : i] / count;
        });
    }
    return out;
}

MaxResult max_axis(const Tensor& x, int axis) {
    int n, d;
    bool over_rows;
    if (x.shape.size() == 1) {
        if (axis != 0) throw InvalidInputError("max_axis: axis out of range for 1-D tensor");
        n = x.shape[0];
        d = 1;
        over_rows = true;
    } else if (x.shape.size() == 2 && (axis == 0 || axis == 1)) {
        n = x.shape[0];
        d = x.shape[1];
        over_rows = (axis == 0);
    } else {
        throw InvalidInputError("max_axis: expected 1-D or 2-D tensor with a valid axis");
    }
    const int out_len = over_rows ? d : n;

    MaxResult res;
    res.values = Tensor::zeros({out_len});
    res.argmax.assign(static_cast<std::size_t>(out_len), -1);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) {
            const std::size_t flat = static_cast<std::size_t>(i) * d + j;
            const int slot = over_rows ? j : i;
            const double v = (*x.data)[flat];
            if (res.argmax[slot] < 0 || v > (*res.values.data)[slot]) {
                (*res.values.data)[slot] = v;
                res.argmax[slot] = static_cast<std::int32_t>(flat);
            }
        }
    }

    if (Tape* tp = common_tape({&x})) {
        res.values.tape = tp;
        const int xn = x.node;
        res.values.node = tp->add_node(out_len, [xn, idx = res.argmax](Tape& t, int self) {
            const std::vector<double>& go = t.grad_at(self);
            std::vector<double>& gx = t.grad_buf(xn);
            for (std::size_t k = 0; k < go.size(); ++k) gx[idx[k]] += go[k];
        });
    }
    return res;
}

Tensor sum_all(const Tensor& x) {
    Tensor out = Tensor::zeros({1});
    double acc = 0.0;
    for (double v : *x.data) acc += v;
    (*out.data)[0] = acc;
    GS_FINITE(out, "sum_all");
    if (Tape* tp = common_tape({&x})) {
        out.tape = tp;
        const int xn = x.node, n = x.numel();
        out.node = tp->add_node(1, [xn, n](Tape& t, int self) {
            const double g = t.grad_at(self)[0];
            std::vector<double>& gx = t.grad_buf(xn);
            for (int i = 0; i < n; ++i) gx[i] += g;
        });
    }
    return out;
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
    if (shape_numel(shape) != static_cast<std::size_t>(x.numel()))
        throw ShapeError("reshape: element count mismatch");
    Tensor out;
    out.shape = std::move(shape);
    out.data = x.data;  // tensors are immutable; sharing is safe
    if (Tape* tp = common_tape({&x})) {
        out.tape = tp;
        const int xn = x.node;
        out.node = tp->add_node(x.numel(), [xn](Tape& t, int self) {
            const std::vector<double>& go = t.grad_at(self);
            std::vector<double>& gx = t.grad_buf(xn);
            for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
        });
    }
    return out;
}

Tensor tile_rows(const Tensor& v, int n) {
    if (v.shape.size() != 1) throw ShapeError("tile_rows: expected 1-D tensor");
    const int d = v.shape[0];
    Tensor out = Tensor::zeros({n, d});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
            (*out.data)[static_cast<std::size_t>(i) * d + j] = (*v.data)[j];
    if (Tape* tp = common_tape({&v})) {
        out.tape = tp;
        const int vn = v.node;
        out.node = tp->add_node(out.numel(), [vn, n, d](Tape& t, int self) {
            const std::vector<double>& go = t.grad_at(self);
            std::vector<double>& gv = t.grad_buf(vn);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < d; ++j) gv[j] += go[static_cast<std::size_t>(i) * d + j];
        });
    }
    return out;
}

Tensor tile_cols(const Tensor& v, int d) {
    if (v.shape.size() != 1) throw ShapeError("tile_cols: expected 1-D tensor");
    const int n = v.shape[0];
    Tensor out = Tensor::zeros({n, d});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
            (*out.data)[static_cast<std::size_t>(i) * d + j] = (*v.data)[i];
    if (Tape* tp = common_tape({&v})) {
        out.tape = tp;
        const int vn = v.node;
        out.node = tp->add_node(out.numel(), [vn, n, d](Tape& t, int self) {
            const std::vector<double>& go = t.grad_at(self);
            std::vector<double>& gv = t.grad_buf(vn);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < d; ++j) gv[i] += go[static_cast<std::size_t>(i) * d + j];
        });
    }
    return out;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.shape.size() != 1 || b.shape.size() != 1 || a.shape[0] != b.shape[0])
        throw ShapeError("concat_cols: expected two equal-length 1-D tensors");
    const int n = a.shape[0];
    Tensor out = Tensor::zeros({n, 2});
    for (int i = 0; i < n; ++i) {
        (*out.data)[static_cast<std::size_t>(i) * 2] = (*a.data)[i];
        (*out.data)[static_cast<std::size_t>(i) * 2 + 1] = (*b.data)[i];
    }
    if (Tape* tp = common_tape({&a, &b})) {
        out.tape = tp;
        const int an = a.node, bn = b.node;
        out.node = tp->add_node(out.numel(), [an, bn, n](Tape& t, int self) {
            const std::vector<double>& go = t.grad_at(self);
            if (an >= 0) {
                std::vector<double>& ga = t.grad_buf(an);
                for (int i = 0; i < n; ++i) ga[i] += go[static_cast<std::size_t>(i) * 2];
            }
            if (bn >= 0) {
                std::vector<double>& gb = t.grad_buf(bn);
                for (int i = 0; i < n; ++i) gb[i] += go[static_cast<std::size_t>(i) * 2 + 1];
            }
        });
    }
    return out;
}

Tensor pick(const Tensor& x, int index) {
    if (index < 0 || index >= x.numel())
        throw InvalidInputError("pick: index " + std::to_string(index) + " out of range");
    Tensor out = Tensor::from({1}, {(*x.data)[index]});
    if (Tape* tp = common_tape({&x})) {
        out.tape = tp;
        const int xn = x.node;
        out.node = tp->add_node(1, [xn, index](Tape& t, int self) {
            t.grad_buf(xn)[index] += t.grad_at(self)[0];
        });
    }
    return out;
}

Tensor cross_entropy_logits(const Tensor& logits, int target) {
    if (logits.shape.size() != 1 && !(logits.shape.size() == 2 && logits.shape[0] == 1))
        throw ShapeError("cross_entropy_logits: expected a logit vector");
    const int c = logits.numel();
    if (target < 0 || target >= c)
        throw InvalidInputError("cross_entropy_logits: class index " + std::to_string(target) +
                                " out of range [0, " + std::to_string(c) + ")");
    const std::vector<double>& l = *logits.data;
    double m = l[0];
    for (double v : l) {
        if (!std::isfinite(v)) throw IntegrityError("cross_entropy_logits: non-finite logit");
        m = std::max(m, v);
    }
    double sum = 0.0;
    for (double v : l) sum += std::exp(v - m);
    const double lse = m + std::log(sum);
    Tensor out = Tensor::from({1}, {lse - l[target]});

    if (Tape* tp = common_tape({&logits})) {
        out.tape = tp;
        const int ln = logits.node;
        std::vector<double> probs(l.size());
        for (std::size_t i = 0; i < l.size(); ++i) probs[i] = std::exp(l[i] - m) / sum;
        out.node = tp->add_node(1, [ln, target, probs = std::move(probs)](Tape& t, int self) {
            const double g = t.grad_at(self)[0];
            std::vector<double>& gl = t.grad_buf(ln);
            for (std::size_t i = 0; i < probs.size(); ++i)
                gl[i] += g * (probs[i] - (static_cast<int>(i) == target ? 1.0 : 0.0));
        });
    }
    return out;
}

Tensor l1_sum(const Tensor& x) {
    Tensor out = Tensor::zeros({1});
    double acc = 0.0;
    for (double v : *x.data) acc += std::abs(v);
    (*out.data)[0] = acc;
    if (Tape* tp = common_tape({&x})) {
        out.tape = tp;
        const int xn = x.node;
        out.node = tp->add_node(1, [xn, xp = x.data](Tape& t, int self) {
            const double g = t.grad_at(self)[0];
            std::vector<double>& gx = t.grad_buf(xn);
            for (std::size_t i = 0; i < xp->size(); ++i) {
                const double v = (*xp)[i];
                if (v > 0.0)
                    gx[i] += g;
                else if (v < 0.0)
                    gx[i] -= g;
            }
        });
    }
    return out;
}

}  // namespace gridsage

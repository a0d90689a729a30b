#include <doctest.h>

#include <cmath>
#include <functional>

#include "gridsage/errors.hpp"
#include "gridsage/rng.hpp"
#include "gridsage/tensor.hpp"
#include "oracles.hpp"

using namespace gridsage;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : *t.data) v = rng.uniform(lo, hi);
    return t;
}

// Central finite differences of a scalar function of one tensor's entries.
std::vector<double> fd_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                            double h = 1e-5) {
    std::vector<double> g(static_cast<std::size_t>(x.numel()), 0.0);
    for (int i = 0; i < x.numel(); ++i) {
        Tensor hi = x.clone(), lo = x.clone();
        (*hi.data)[i] += h;
        (*lo.data)[i] -= h;
        g[i] = (f(hi) - f(lo)) / (2.0 * h);
    }
    return g;
}

}  // namespace

TEST_CASE("affine") {
    Rng rng(5);
    SUBCASE("identity weights and zero bias pass the input through") {
        const Tensor x = random_tensor({3, 4}, rng);
        Tensor w = Tensor::zeros({4, 4});
        for (int i = 0; i < 4; ++i) (*w.data)[i * 4 + i] = 1.0;
        const Tensor out = affine(x, w, Tensor::zeros({4}));
        for (int i = 0; i < x.numel(); ++i) CHECK((*out.data)[i] == doctest::Approx((*x.data)[i]));
    }
    SUBCASE("zero input rows all equal the bias") {
        const Tensor b = Tensor::from({3}, {0.5, -1.0, 2.0});
        const Tensor out = affine(Tensor::zeros({2, 4}), random_tensor({4, 3}, rng), b);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 3; ++j) CHECK(out.at(i, j) == doctest::Approx((*b.data)[j]));
    }
    SUBCASE("random 3x2 * 2x4 matches the naive triple-loop product") {
        const Tensor x = random_tensor({3, 2}, rng);
        const Tensor w = random_tensor({2, 4}, rng);
        const Tensor b = random_tensor({4}, rng);
        const Tensor out = affine(x, w, b);
        const auto expect = oracle::affine(*x.data, 3, 2, *w.data, 4, *b.data);
        for (int i = 0; i < out.numel(); ++i)
            CHECK((*out.data)[i] == doctest::Approx(expect[i]).epsilon(1e-12));
    }
    SUBCASE("shape mismatch rejected") {
        CHECK_THROWS_AS(affine(Tensor::zeros({2, 3}), Tensor::zeros({4, 2}), Tensor::zeros({2})),
                        ShapeError);
        CHECK_THROWS_AS(affine(Tensor::zeros({2, 3}), Tensor::zeros({3, 2}), Tensor::zeros({3})),
                        ShapeError);
    }
}

TEST_CASE("elementwise semantics") {
    SUBCASE("relu clamps negatives") {
        const Tensor out = relu(Tensor::from({3}, {-1.0, 0.0, 2.0}));
        CHECK((*out.data) == std::vector<double>{0.0, 0.0, 2.0});
    }
    SUBCASE("sigmoid(0) = 0.5") {
        CHECK(sigmoid(Tensor::scalar(0.0)).value() == doctest::Approx(0.5));
    }
    SUBCASE("hadamard and add and scale") {
        const Tensor a = Tensor::from({2}, {2.0, -3.0});
        const Tensor b = Tensor::from({2}, {4.0, 5.0});
        CHECK((*hadamard(a, b).data) == std::vector<double>{8.0, -15.0});
        CHECK((*add(a, b).data) == std::vector<double>{6.0, 2.0});
        CHECK((*scale(a, -2.0).data) == std::vector<double>{-4.0, 6.0});
    }
    SUBCASE("binary shape mismatch rejected") {
        CHECK_THROWS_AS(add(Tensor::zeros({2}), Tensor::zeros({3})), ShapeError);
        CHECK_THROWS_AS(hadamard(Tensor::zeros({2, 2}), Tensor::zeros({4})), ShapeError);
    }
    SUBCASE("hadamard gradient matches finite differences") {
        Rng rng(7);
        const Tensor a0 = random_tensor({2, 3}, rng);
        const Tensor b0 = random_tensor({2, 3}, rng);
        Tape tape;
        const Tensor a = tape.watch(a0);
        const Tensor b = tape.watch(b0);
        tape.backward(sum_all(hadamard(a, b)));
        const auto ga = tape.grad(a);
        const auto fd = fd_grad([&](const Tensor& t) { return sum_all(hadamard(t, b0)).value(); },
                                a0);
        for (int i = 0; i < a0.numel(); ++i) CHECK(oracle::rel_err(ga[i], fd[i]) < 1e-6);
    }
}

TEST_CASE("reduce") {
    SUBCASE("mean of a constant tensor is the constant") {
        CHECK(mean_axis(Tensor::full({5}, 3.25), 0).value() == doctest::Approx(3.25));
        const Tensor m = mean_axis(Tensor::full({4, 3}, -1.5), 0);
        for (double v : *m.data) CHECK(v == doctest::Approx(-1.5));
    }
    SUBCASE("max of (3,1,3) is 3 with the first occurrence as argmax") {
        const MaxResult r = max_axis(Tensor::from({3}, {3.0, 1.0, 3.0}), 0);
        CHECK(r.values.value() == 3.0);
        CHECK(r.argmax == std::vector<std::int32_t>{0});
    }
    SUBCASE("2-D max over rows and columns") {
        const Tensor x = Tensor::from({2, 3}, {1.0, 5.0, 2.0, 4.0, 5.0, 0.0});
        const MaxResult rows = max_axis(x, 0);
        CHECK(*rows.values.data == std::vector<double>{4.0, 5.0, 2.0});
        CHECK(rows.argmax == std::vector<std::int32_t>{3, 1, 2});
        const MaxResult cols = max_axis(x, 1);
        CHECK(*cols.values.data == std::vector<double>{5.0, 5.0});
    }
    SUBCASE("mean gradient is 1/n per element") {
        Rng rng(9);
        const Tensor x0 = random_tensor({6}, rng);
        Tape tape;
        const Tensor x = tape.watch(x0);
        tape.backward(mean_axis(x, 0));
        const auto g = tape.grad(x);
        const auto fd = fd_grad([](const Tensor& t) { return mean_axis(t, 0).value(); }, x0);
        for (int i = 0; i < 6; ++i) {
            CHECK(g[i] == doctest::Approx(1.0 / 6.0));
            CHECK(oracle::rel_err(g[i], fd[i]) < 1e-6);
        }
    }
    SUBCASE("max gradient routes only to the argmax") {
        Tape tape;
        const Tensor x = tape.watch(Tensor::from({3}, {3.0, 1.0, 3.0}));
        tape.backward(max_axis(x, 0).values);
        CHECK(tape.grad(x) == std::vector<double>{1.0, 0.0, 0.0});
    }
    SUBCASE("invalid axis rejected") {
        CHECK_THROWS_AS(mean_axis(Tensor::zeros({3}), 1), InvalidInputError);
        CHECK_THROWS_AS(max_axis(Tensor::zeros({2, 2}), 2), InvalidInputError);
    }
}

TEST_CASE("backward basics") {
    Rng rng(13);
    SUBCASE("loss = sum(x) gives an all-ones gradient") {
        const Tensor x0 = random_tensor({3, 2}, rng);
        Tape tape;
        const Tensor x = tape.watch(x0);
        tape.backward(sum_all(x));
        for (double g : tape.grad(x)) CHECK(g == 1.0);
    }
    SUBCASE("loss = sum(x o x) gives 2x") {
        const Tensor x0 = random_tensor({4}, rng);
        Tape tape;
        const Tensor x = tape.watch(x0);
        tape.backward(sum_all(hadamard(x, x)));
        const auto g = tape.grad(x);
        for (int i = 0; i < 4; ++i) CHECK(g[i] == doctest::Approx(2.0 * (*x0.data)[i]));
    }
    SUBCASE("two-layer composite matches finite differences on every parameter") {
        const Tensor x = random_tensor({3, 4}, rng, 0.1, 1.0);
        const Tensor w1_0 = random_tensor({4, 5}, rng);
        const Tensor b1_0 = random_tensor({5}, rng);
        const Tensor w2_0 = random_tensor({5, 2}, rng);
        const Tensor b2_0 = random_tensor({2}, rng);

        const auto loss_of = [&x](const Tensor& w1, const Tensor& b1, const Tensor& w2,
                                  const Tensor& b2) {
            const Tensor h1 = relu(affine(x, w1, b1));
            const Tensor y = sigmoid(affine(h1, w2, b2));
            return sum_all(hadamard(y, y));
        };

        Tape tape;
        const Tensor w1 = tape.watch(w1_0), b1 = tape.watch(b1_0);
        const Tensor w2 = tape.watch(w2_0), b2 = tape.watch(b2_0);
        tape.backward(loss_of(w1, b1, w2, b2));

        const Tensor* watched[] = {&w1, &b1, &w2, &b2};
        const Tensor* plain[] = {&w1_0, &b1_0, &w2_0, &b2_0};
        for (int p = 0; p < 4; ++p) {
            const auto g = tape.grad(*watched[p]);
            const auto fd = fd_grad(
                [&](const Tensor& t) {
                    const Tensor* args[] = {&w1_0, &b1_0, &w2_0, &b2_0};
                    args[p] = &t;
                    return loss_of(*args[0], *args[1], *args[2], *args[3]).value();
                },
                *plain[p]);
            for (std::size_t i = 0; i < g.size(); ++i)
                CHECK(oracle::rel_err(g[i], fd[i]) < 1e-4);
        }
    }
    SUBCASE("non-scalar loss rejected") {
        Tape tape;
        const Tensor x = tape.watch(Tensor::zeros({3}));
        CHECK_THROWS_AS(tape.backward(x), InvalidInputError);
    }
    SUBCASE("detached tensors get no gradient") {
        const Tensor c = Tensor::from({2}, {1.0, 2.0});
        Tape tape;
        const Tensor x = tape.watch(Tensor::from({2}, {3.0, 4.0}));
        tape.backward(sum_all(hadamard(x, c)));
        CHECK(!tape.has_grad(c));
        CHECK(tape.grad(x) == std::vector<double>{1.0, 2.0});
    }
    SUBCASE("gradients sum across fan-out") {
        Tape tape;
        const Tensor x = tape.watch(Tensor::from({2}, {1.0, 2.0}));
        tape.backward(sum_all(add(x, x)));
        CHECK(tape.grad(x) == std::vector<double>{2.0, 2.0});
    }
    SUBCASE("mixing tapes is an integrity error") {
        Tape t1, t2;
        const Tensor a = t1.watch(Tensor::zeros({2}));
        const Tensor b = t2.watch(Tensor::zeros({2}));
        CHECK_THROWS_AS(add(a, b), IntegrityError);
    }
}

TEST_CASE("gradient check on randomly composed graphs up to depth 6") {
    // Random expression trees over two [n,d] leaves followed by an affine
    // head; the structure depends only on the rng stream, never on values.
    for (std::uint64_t seed : {101, 202, 303, 404, 505, 606, 707, 808}) {
        Rng shape_rng(seed);
        const int n = 2 + static_cast<int>(shape_rng.uniform_index(6));
        const int d = 2 + static_cast<int>(shape_rng.uniform_index(6));
        const int m = 1 + static_cast<int>(shape_rng.uniform_index(8));
        Rng value_rng = shape_rng.fork(1);
        const Tensor x1_0 = random_tensor({n, d}, value_rng, 0.2, 1.2);
        const Tensor x2_0 = random_tensor({n, d}, value_rng, 0.2, 1.2);
        const Tensor w_0 = random_tensor({d, m}, value_rng);
        const Tensor b_0 = random_tensor({m}, value_rng);

        std::function<Tensor(Rng&, const Tensor&, const Tensor&, int)> expr =
            [&expr](Rng& r, const Tensor& a, const Tensor& b, int depth) -> Tensor {
            if (depth <= 0) return r.uniform_index(2) == 0 ? a : b;
            switch (r.uniform_index(6)) {
                case 0: return relu(expr(r, a, b, depth - 1));
                case 1: return sigmoid(expr(r, a, b, depth - 1));
                case 2: return scale(expr(r, a, b, depth - 1), 0.7);
                case 3: return add(expr(r, a, b, depth - 1), expr(r, a, b, depth - 1));
                case 4: return hadamard(expr(r, a, b, depth - 1), expr(r, a, b, depth - 1));
                default: return r.uniform_index(2) == 0 ? a : b;
            }
        };

        const int depth = 1 + static_cast<int>(shape_rng.uniform_index(6));
        const auto loss_of = [&](const Tensor& a, const Tensor& c, const Tensor& w,
                                 const Tensor& bias) {
            Rng r(seed + 99);
            const Tensor body = expr(r, a, c, depth);
            const Tensor y = affine(body, w, bias);
            return sum_all(hadamard(y, y));
        };

        Tape tape;
        const Tensor x1 = tape.watch(x1_0), x2 = tape.watch(x2_0);
        const Tensor w = tape.watch(w_0), b = tape.watch(b_0);
        tape.backward(loss_of(x1, x2, w, b));

        const Tensor* watched[] = {&x1, &x2, &w, &b};
        const Tensor* plain[] = {&x1_0, &x2_0, &w_0, &b_0};
        for (int p = 0; p < 4; ++p) {
            const auto g = tape.grad(*watched[p]);
            const auto fd = fd_grad(
                [&](const Tensor& t) {
                    const Tensor* args[] = {&x1_0, &x2_0, &w_0, &b_0};
                    args[p] = &t;
                    return loss_of(*args[0], *args[1], *args[2], *args[3]).value();
                },
                *plain[p]);
            for (std::size_t i = 0; i < g.size(); ++i)
                CHECK(oracle::rel_err(g[i], fd[i]) < 1e-4);
        }
    }
}

TEST_CASE("backward is linear in the loss") {
    Rng rng(17);
    const Tensor x0 = random_tensor({3, 3}, rng, 0.1, 1.0);
    const double a = 2.75, b = -0.6;

    const auto run = [&x0](const std::function<Tensor(const Tensor&)>& lf) {
        Tape tape;
        const Tensor x = tape.watch(x0);
        tape.backward(lf(x));
        return tape.grad(x);
    };
    const auto l1 = [](const Tensor& x) { return sum_all(hadamard(x, x)); };
    const auto l2 = [](const Tensor& x) { return sum_all(sigmoid(x)); };

    const auto g1 = run(l1);
    const auto g2 = run(l2);
    const auto gc = run([&](const Tensor& x) { return add(scale(l1(x), a), scale(l2(x), b)); });
    for (std::size_t i = 0; i < gc.size(); ++i)
        CHECK(std::abs(gc[i] - (a * g1[i] + b * g2[i])) < 1e-10);
}

TEST_CASE("forward evaluation is bit-deterministic") {
    const auto run = [] {
        Rng rng(99);
        Tensor x = Tensor::zeros({4, 4});
        for (double& v : *x.data) v = rng.uniform(-1.0, 1.0);
        Tensor w = Tensor::zeros({4, 3});
        for (double& v : *w.data) v = rng.uniform(-1.0, 1.0);
        Tensor b = Tensor::zeros({3});
        for (double& v : *b.data) v = rng.uniform(-1.0, 1.0);
        return *sigmoid(affine(relu(x), w, b)).data;
    };
    CHECK(run() == run());
}

TEST_CASE("tensor shape invariants") {
    CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
    CHECK_THROWS_AS(Tensor::zeros({0, 3}), ShapeError);
    CHECK_THROWS_AS(reshape(Tensor::zeros({4}), {5}), ShapeError);
    const Tensor r = reshape(Tensor::from({4}, {1, 2, 3, 4}), {2, 2});
    CHECK(r.at(1, 0) == 3.0);
}

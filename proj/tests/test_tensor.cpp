#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "rcdet/nn.hpp"
#include "rcdet/ops.hpp"
#include "rcdet/rng.hpp"

using namespace rcdet;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -2.0, double hi = 2.0,
                     const std::vector<double>& kinks = {}) {
    std::vector<double> vals(static_cast<std::size_t>(shape_numel(shape)));
    for (double& v : vals) {
        bool ok = false;
        while (!ok) {
            v = rng.uniform(lo, hi);
            ok = true;
            for (double kink : kinks) {
                if (std::abs(v - kink) < 0.05) ok = false;
            }
        }
    }
    return Tensor::from_data(std::move(shape), std::move(vals));
}

}  // namespace

TEST_CASE("matmul identity cases") {
    Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    Tensor r = matmul(a, eye);
    CHECK(r.data() == std::vector<double>{1, 2, 3, 4});

    Tensor col = Tensor::from_data({2, 1}, {5, 7});
    Tensor r2 = matmul(eye, col);
    CHECK(r2.data() == std::vector<double>{5, 7});
}

TEST_CASE("matmul gradient of sum equals b row sums") {
    Rng rng(7);
    Tensor a = random_tensor(rng, {3, 4});
    Tensor b = random_tensor(rng, {4, 2});
    const double err = grad_check([&](const Tensor& x) { return sum(matmul(x, b)); }, a, 1e-6);
    CHECK(err < 1e-6);
    // analytic form: grad(a)[i,k] = sum_j b[k,j], identical for every row i
    Tensor probe = a.detached(true);
    backward(sum(matmul(probe, b)));
    for (long i = 0; i < 3; ++i) {
        for (long k = 0; k < 4; ++k) {
            double row_sum = 0.0;
            for (long j = 0; j < 2; ++j) row_sum += b.at({k, j});
            CHECK(probe.grad()[static_cast<std::size_t>(i * 4 + k)] == doctest::Approx(row_sum));
        }
    }
}

TEST_CASE("shape violations raise dimension errors") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({2, 3});
    CHECK_THROWS_AS(matmul(a, b), DimError);
    CHECK_THROWS_AS(softmax(a, 2), DimError);
    CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), DimError);
    CHECK_THROWS_AS(slice(a, 1, 2, 5), DimError);
    CHECK_THROWS_AS(reshape(a, {4, 2}), DimError);
}

TEST_CASE("matmul rows are independent of the batch size") {
    Rng rng(11);
    Tensor a = random_tensor(rng, {5, 7});
    Tensor b = random_tensor(rng, {7, 3});
    Tensor full = matmul(a, b);
    for (long i = 0; i < 5; ++i) {
        std::vector<double> row(a.data().begin() + i * 7, a.data().begin() + (i + 1) * 7);
        Tensor single = matmul(Tensor::from_data({1, 7}, std::move(row)), b);
        for (long j = 0; j < 3; ++j) {
            CHECK(full.at({i, j}) == single.at({0, j}));  // bitwise
        }
    }
}

TEST_CASE("softmax symmetry and row normalization") {
    Tensor x = Tensor::from_data({1, 2}, {0, 0});
    Tensor y = softmax(x, 1);
    CHECK(y.at({0, 0}) == doctest::Approx(0.5));
    CHECK(y.at({0, 1}) == doctest::Approx(0.5));

    Rng rng(3);
    Tensor r = random_tensor(rng, {6, 9}, -30.0, 30.0);
    Tensor s = softmax(r, 1);
    for (long i = 0; i < 6; ++i) {
        double row = 0.0;
        for (long j = 0; j < 9; ++j) row += s.at({i, j});
        CHECK(std::abs(row - 1.0) < 1e-12);
    }
}

TEST_CASE("sigmoid at zero") {
    CHECK(sigmoid(Tensor::scalar(0.0)).value() == doctest::Approx(0.5));
}

TEST_CASE("strided conv with zero kernel gives zeros at the strided size") {
    Tensor x = Tensor::full({1, 8, 8}, 1.25);
    Tensor w = Tensor::zeros({1, 1, 3, 3});
    Tensor b = Tensor::zeros({1});
    Tensor y = strided_conv2d(x, w, b, 2, 1);
    CHECK(y.shape() == Shape{1, 4, 4});
    for (double v : y.data()) CHECK(v == 0.0);
}

TEST_CASE("layer norm output statistics") {
    Rng rng(5);
    Tensor x = random_tensor(rng, {7, 16});
    Tensor gamma = Tensor::full({16}, 1.0);
    Tensor beta = Tensor::zeros({16});
    Tensor y = layer_norm(x, gamma, beta);
    for (long r = 0; r < 7; ++r) {
        double mu = 0.0;
        for (long c = 0; c < 16; ++c) mu += y.at({r, c});
        mu /= 16.0;
        CHECK(std::abs(mu) < 1e-9);
        double var = 0.0;
        for (long c = 0; c < 16; ++c) var += (y.at({r, c}) - mu) * (y.at({r, c}) - mu);
        var /= 16.0;
        CHECK(std::abs(var - 1.0) < 1e-6);
    }
}

TEST_CASE("backward: square, disconnected tensor, contract errors") {
    Tensor x = Tensor::scalar(3.0, true);
    Tensor disconnected = Tensor::scalar(1.0, true);
    Tensor loss = mul(x, x);
    backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(6.0));
    CHECK(disconnected.grad()[0] == 0.0);

    Tensor vec = Tensor::from_data({3}, {1, 2, 3}, true);
    CHECK_THROWS_AS(backward(vec), ContractError);
    CHECK_THROWS_AS(backward(Tensor::scalar(1.0, false)), ContractError);
}

TEST_CASE("grad_check reference behaviors") {
    Rng rng(9);
    Tensor x = random_tensor(rng, {4, 3});
    CHECK(grad_check([](const Tensor& t) { return sum(t); }, x, 1e-5) == doctest::Approx(0.0));
    // softmax rows sum to one, so this function is constant: the analytic
    // gradient vanishes and the reported error is pure difference noise over
    // the 1e-8 denominator floor
    const double err = grad_check([](const Tensor& t) { return sum(softmax(t, 1)); }, x, 1e-5);
    CHECK(err < 1e-2);
    Tensor probe = x.detached(true);
    backward(sum(softmax(probe, 1)));
    for (double g : probe.grad()) CHECK(std::abs(g) < 1e-12);
}

TEST_CASE("gradient suite over every differentiable op, 100+ randomized runs") {
    struct Case {
        const char* name;
        std::function<Tensor(const Tensor&, Rng&)> fn;
        Shape shape;
        double lo, hi;
        std::vector<double> kinks;
    };
    const std::vector<Case> cases = {
        {"add", [](const Tensor& x, Rng& r) { return add(x, random_tensor(r, x.shape())); },
         {3, 4}, -2, 2, {}},
        {"add_broadcast", [](const Tensor& x, Rng& r) { return add(x, random_tensor(r, {4})); },
         {3, 4}, -2, 2, {}},
        {"mul", [](const Tensor& x, Rng& r) { return mul(x, random_tensor(r, x.shape())); },
         {3, 4}, -2, 2, {}},
        {"mul_broadcast", [](const Tensor& x, Rng& r) { return mul(random_tensor(r, {2, 3, 4}), x); },
         {4}, -2, 2, {}},
        {"sub_neg", [](const Tensor& x, Rng& r) { return sub(random_tensor(r, x.shape()), x); },
         {2, 5}, -2, 2, {}},
        {"relu", [](const Tensor& x, Rng&) { return relu(x); }, {4, 4}, -2, 2, {0.0}},
        {"sigmoid", [](const Tensor& x, Rng&) { return sigmoid(x); }, {4, 4}, -4, 4, {}},
        {"exp", [](const Tensor& x, Rng&) { return exp_t(x); }, {3, 3}, -2, 2, {}},
        {"log", [](const Tensor& x, Rng&) { return log_t(x); }, {3, 3}, 0.2, 3, {}},
        {"softplus", [](const Tensor& x, Rng&) { return softplus(x); }, {4, 4}, -4, 4, {}},
        {"abs", [](const Tensor& x, Rng&) { return abs_t(x); }, {4, 4}, -2, 2, {0.0}},
        {"pow2.7", [](const Tensor& x, Rng&) { return pow_scalar(x, 2.7); }, {3, 3}, 0.2, 2, {}},
        {"clamp", [](const Tensor& x, Rng&) { return clamp(x, -1.0, 1.0); }, {4, 4}, -2, 2, {-1.0, 1.0}},
        {"softmax0", [](const Tensor& x, Rng&) { return softmax(x, 0); }, {4, 5}, -3, 3, {}},
        {"softmax1", [](const Tensor& x, Rng&) { return softmax(x, 1); }, {4, 5}, -3, 3, {}},
        {"layer_norm",
         [](const Tensor& x, Rng& r) {
             return layer_norm(x, random_tensor(r, {6}), random_tensor(r, {6}));
         },
         {5, 6}, -2, 2, {}},
        {"matmul",
         [](const Tensor& x, Rng& r) { return matmul(x, random_tensor(r, {4, 3})); },
         {3, 4}, -2, 2, {}},
        {"linear",
         [](const Tensor& x, Rng& r) {
             return linear(x, random_tensor(r, {4, 6}), random_tensor(r, {6}));
         },
         {3, 4}, -2, 2, {}},
        {"reshape_permute",
         [](const Tensor& x, Rng&) { return permute(reshape(x, {2, 2, 3}), {2, 0, 1}); },
         {4, 3}, -2, 2, {}},
        {"slice_concat",
         [](const Tensor& x, Rng&) { return concat({slice(x, 1, 2, 2), slice(x, 1, 0, 2)}, 1); },
         {3, 4}, -2, 2, {}},
        {"conv2d",
         [](const Tensor& x, Rng& r) {
             return strided_conv2d(x, random_tensor(r, {3, 2, 3, 3}), random_tensor(r, {3}), 2, 1);
         },
         {2, 6, 6}, -2, 2, {}},
        {"upsample2x", [](const Tensor& x, Rng&) { return upsample2x(x); }, {2, 3, 3}, -2, 2, {}},
        {"sincos", [](const Tensor& x, Rng&) { return sincos(x, 4); }, {5, 2}, 0, 1, {}},
        {"gather_rows", [](const Tensor& x, Rng&) { return gather_rows(x, {2, 0, 2}); },
         {4, 3}, -2, 2, {}},
        {"pillar_scatter_max",
         [](const Tensor& x, Rng&) { return pillar_scatter_max(x, {1, 3, 1, 0, 3}, 5); },
         {5, 3}, -2, 2, {}},
    };
    long runs = 0;
    for (const Case& c : cases) {
        for (int seed = 0; seed < 5; ++seed) {
            Rng xseed(static_cast<std::uint64_t>(seed) * 1000 + 17);
            Tensor x = random_tensor(xseed, c.shape, c.lo, c.hi, c.kinks);
            Rng shape_probe(static_cast<std::uint64_t>(seed) * 977 + 5);
            const Shape out_shape = c.fn(x, shape_probe).shape();
            Rng wseed(static_cast<std::uint64_t>(seed) + 1234);
            std::vector<double> w(static_cast<std::size_t>(shape_numel(out_shape)));
            for (double& v : w) v = wseed.uniform(-1.0, 1.0);
            auto f = [&](const Tensor& t) {
                Rng local(static_cast<std::uint64_t>(seed) * 977 + 5);
                Tensor y = c.fn(t, local);
                return sum(mul(y, Tensor::from_data(y.shape(), w)));
            };
            const double err = grad_check(f, x, 1e-5);
            INFO(c.name << " seed " << seed);
            CHECK(err < 1e-4);
            ++runs;
        }
    }
    CHECK(runs >= 100);
}

TEST_CASE("multi-head attention contracts") {
    ParamStore store;
    Rng rng(21);
    MultiHeadAttention mha = MultiHeadAttention::create(store, "mha", 8, 2, rng);

    SUBCASE("single key row makes the output independent of q") {
        Tensor k = random_tensor(rng, {1, 8});
        Tensor v = random_tensor(rng, {1, 8});
        Tensor q1 = random_tensor(rng, {3, 8});
        Tensor q2 = random_tensor(rng, {3, 8});
        Tensor o1 = mha.forward(q1, k, v);
        Tensor o2 = mha.forward(q2, k, v);
        for (long i = 0; i < o1.numel(); ++i) {
            CHECK(o1.data()[static_cast<std::size_t>(i)] ==
                  doctest::Approx(o2.data()[static_cast<std::size_t>(i)]).epsilon(1e-12));
        }
        for (long j = 0; j < 8; ++j) {
            CHECK(o1.at({0, j}) == doctest::Approx(o1.at({2, j})).epsilon(1e-12));
        }
    }

    SUBCASE("zero output projection gives zero output") {
        ParamStore zstore;
        Rng zrng(22);
        MultiHeadAttention zmha = MultiHeadAttention::create(zstore, "z", 8, 2, zrng);
        std::fill(zmha.wo.w.raw_data().begin(), zmha.wo.w.raw_data().end(), 0.0);
        Tensor q = random_tensor(zrng, {4, 8});
        Tensor kv = random_tensor(zrng, {5, 8});
        Tensor out = zmha.forward(q, kv, kv);
        for (double vv : out.data()) CHECK(vv == 0.0);
    }

    SUBCASE("gradient vs central finite differences") {
        Tensor q = random_tensor(rng, {4, 8});
        Tensor k = random_tensor(rng, {4, 8});
        Tensor v = random_tensor(rng, {4, 8});
        Rng wrng(77);
        std::vector<double> w(32);
        for (double& x : w) x = wrng.uniform(-1.0, 1.0);
        auto scalarize = [&](const Tensor& out) {
            return sum(mul(out, Tensor::from_data({4, 8}, w)));
        };
        const double eq =
            grad_check([&](const Tensor& t) { return scalarize(mha.forward(t, k, v)); }, q, 1e-5);
        const double ev =
            grad_check([&](const Tensor& t) { return scalarize(mha.forward(q, k, t)); }, v, 1e-5);
        const double ew = grad_check(
            [&](const Tensor& t) {
                MultiHeadAttention m2 = mha;
                m2.wq.w = t;
                return scalarize(m2.forward(q, k, v));
            },
            mha.wq.w, 1e-5);
        CHECK(eq < 1e-5);
        CHECK(ev < 1e-5);
        CHECK(ew < 1e-5);
    }

    SUBCASE("heads must divide the embedding dim") {
        ParamStore s2;
        Rng r2(1);
        CHECK_THROWS_AS(MultiHeadAttention::create(s2, "bad", 8, 3, r2), ConfigError);
    }
}

TEST_CASE("forward results are bitwise deterministic") {
    auto pipeline = [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor x = random_tensor(rng, {6, 8});
        Tensor w = random_tensor(rng, {8, 8});
        Tensor y = softmax(linear(relu(matmul(x, w)), w, Tensor()), 1);
        return y.data();
    };
    CHECK(pipeline(42) == pipeline(42));
}

TEST_CASE("finite forward outputs on finite inputs") {
    Rng rng(33);
    Tensor x = random_tensor(rng, {4, 6}, -50.0, 50.0);
    Tensor y = softmax(x, 1);
    Tensor z = layer_norm(exp_t(mul_scalar(x, 0.01)), Tensor::full({6}, 1.0), Tensor::zeros({6}));
    for (double v : y.data()) CHECK(std::isfinite(v));
    for (double v : z.data()) CHECK(std::isfinite(v));
}

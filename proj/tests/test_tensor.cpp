#include <cmath>
#include <limits>

#include "doctest.h"
#include "oracles.hpp"
#include "th2/errors.hpp"
#include "th2/tensor.hpp"

using namespace th2;

namespace {

Tensor m(Shape s, std::vector<double> v, bool g = false) { return Tensor(std::move(s), std::move(v), g); }

}  // namespace

TEST_CASE("matmul by identity returns the other operand") {
    Rng rng(1);
    Tensor b = oracle::random_tensor({3, 5}, rng);
    Tensor eye = m({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    auto out = matmul(eye, b);
    CHECK(out.shape() == Shape{3, 5});
    for (std::size_t i = 0; i < 15; ++i) CHECK(out.data()[i] == b.data()[i]);
}

TEST_CASE("matmul hand arithmetic") {
    auto out = matmul(m({2, 2}, {1, 2, 3, 4}), m({2, 1}, {0, 1}));
    CHECK(out.shape() == Shape{2, 1});
    CHECK(out.data()[0] == 2.0);
    CHECK(out.data()[1] == 4.0);
}

TEST_CASE("matmul wide and narrow kernels agree with a direct sum") {
    Rng rng(2);
    for (std::size_t n : {1, 3, 15, 16, 40}) {
        Tensor a = oracle::random_tensor({7, 9}, rng), b = oracle::random_tensor({9, n}, rng);
        auto out = matmul(a, b);
        for (std::size_t i = 0; i < 7; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0;
                for (std::size_t p = 0; p < 9; ++p) acc += a.data()[i * 9 + p] * b.data()[p * n + j];
                CHECK(out.data()[i * n + j] == doctest::Approx(acc).epsilon(1e-14));
            }
    }
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
    CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
    CHECK_THROWS_AS(matmul(Tensor::zeros({3}), Tensor::zeros({3, 1})), DimensionError);
}

TEST_CASE("softmax rows") {
    SUBCASE("equal values are uniform") {
        auto out = softmax_rows(Tensor::full({2, 4}, 3.7));
        for (double v : out.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
    }
    SUBCASE("closed form") {
        auto out = softmax_rows(m({1, 2}, {0.0, std::log(3.0)}));
        CHECK(out.data()[0] == doctest::Approx(0.25).epsilon(1e-15));
        CHECK(out.data()[1] == doctest::Approx(0.75).epsilon(1e-15));
    }
    SUBCASE("large entries do not overflow") {
        auto out = softmax_rows(m({2, 3}, {1e4, 0.0, -1e4, 1e4, 1e4 - 1.0, -3.0}));
        for (std::size_t r = 0; r < 2; ++r) {
            const double s = out.data()[3 * r] + out.data()[3 * r + 1] + out.data()[3 * r + 2];
            CHECK(std::fabs(s - 1.0) <= 1e-12);
        }
    }
    SUBCASE("random rows sum to one") {
        Rng rng(3);
        auto out = softmax_rows(oracle::random_tensor({50, 17}, rng, -1e4, 1e4));
        for (std::size_t r = 0; r < 50; ++r) {
            double s = 0;
            for (std::size_t j = 0; j < 17; ++j) s += out.data()[r * 17 + j];
            CHECK(std::fabs(s - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("layer norm") {
    Tensor one = Tensor::full({2}, 1.0), zero = Tensor::zeros({2});
    SUBCASE("constant vector maps to zero") {
        auto out = layer_norm(Tensor::full({3, 5}, 2.5), Tensor::full({5}, 1.0), Tensor::zeros({5}));
        for (double v : out.data()) CHECK(v == 0.0);
    }
    SUBCASE("two-point closed form") {
        auto out = layer_norm(m({2}, {1, 3}), one, zero, 1e-12);
        CHECK(out.data()[0] == doctest::Approx(-1.0).epsilon(1e-6));
        CHECK(out.data()[1] == doctest::Approx(1.0).epsilon(1e-6));
    }
    SUBCASE("gain and bias shape checked") {
        CHECK_THROWS_AS(layer_norm(Tensor::zeros({2, 3}), one, zero), DimensionError);
    }
}

TEST_CASE("max pool 2x2") {
    SUBCASE("16x16 grid becomes 8x8") {
        Rng rng(4);
        auto out = max_pool_2x2(oracle::random_tensor({16, 16, 3}, rng));
        CHECK(out.shape() == Shape{8, 8, 3});
    }
    SUBCASE("constant input stays constant") {
        auto out = max_pool_2x2(Tensor::full({4, 6, 2}, -1.5));
        for (double v : out.data()) CHECK(v == -1.5);
    }
    SUBCASE("hand window") {
        auto out = max_pool_2x2(m({2, 2, 1}, {1, 5, 3, 2}));
        CHECK(out.item() == 5.0);
    }
    SUBCASE("every output is one of the inputs in its window") {
        Rng rng(5);
        Tensor x = oracle::random_tensor({6, 4, 3}, rng);
        auto out = max_pool_2x2(x);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 2; ++j)
                for (std::size_t c = 0; c < 3; ++c) {
                    bool found = false;
                    for (std::size_t dy = 0; dy < 2; ++dy)
                        for (std::size_t dx = 0; dx < 2; ++dx)
                            found |= x.data()[((2 * i + dy) * 4 + 2 * j + dx) * 3 + c] == out.data()[(i * 2 + j) * 3 + c];
                    CHECK(found);
                }
    }
    SUBCASE("odd extent rejected") {
        CHECK_THROWS_AS(max_pool_2x2(Tensor::zeros({3, 4, 1})), DimensionError);
    }
}

TEST_CASE("backward on simple losses") {
    SUBCASE("sum gives ones") {
        Tensor x = m({2, 3}, {1, -2, 3, 4, 5, -6}, true);
        backward(sum(x));
        for (double g : x.grad()) CHECK(g == 1.0);
    }
    SUBCASE("half squared norm gives x") {
        Tensor x = m({4}, {0.5, -1.5, 2.0, 3.25}, true);
        backward(scale(sum(mul(x, x)), 0.5));
        for (std::size_t i = 0; i < 4; ++i) CHECK(x.grad()[i] == x.data()[i]);
    }
    SUBCASE("non-scalar loss is a contract violation") {
        Tensor x = m({2}, {1, 2}, true);
        CHECK_THROWS_AS(backward(x), ContractError);
    }
    SUBCASE("leaf gradients accumulate across passes") {
        Tensor x = m({2}, {1, 2}, true);
        backward(sum(x));
        backward(sum(x));
        CHECK(x.grad()[0] == 2.0);
        x.zero_grad();
        CHECK(x.grad()[0] == 0.0);
    }
    SUBCASE("shared subexpression counts every use") {
        Tensor x = m({1}, {3.0}, true);
        Tensor y = mul(x, x);
        backward(sum(add(y, y)));  // 2 x^2
        CHECK(x.grad()[0] == 12.0);
    }
}

TEST_CASE("tape is recorded in topological order") {
    Rng rng(6);
    Tensor a = oracle::random_tensor({3, 3}, rng, -1, 1, true);
    Tensor b = oracle::random_tensor({3, 3}, rng, -1, 1, true);
    Tensor h = gelu(matmul(a, b));
    Tensor loss = sum(mul(softmax_rows(h), add(h, a)));
    const Tape tape = Tape::record(loss);
    CHECK(tape.topologically_ordered());
    CHECK(tape.size() >= 8);
}

TEST_CASE("non-finite values are rejected") {
    CHECK_THROWS_AS(m({1}, {std::numeric_limits<double>::quiet_NaN()}), InputError);
    CHECK_THROWS_AS(m({2}, {1.0, std::numeric_limits<double>::infinity()}), InputError);
    CHECK_THROWS_AS(scale(m({1}, {1e300}), 1e300), InputError);
}

TEST_CASE("shape errors") {
    CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), DimensionError);
    CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), DimensionError);
    CHECK_THROWS_AS(reshape(Tensor::zeros({2, 3}), {4, 2}), DimensionError);
    CHECK_THROWS_AS(slice(Tensor::zeros({2, 3}), 1, 2, 4), DimensionError);
    std::vector<std::size_t> bad{0, 5};
    CHECK_THROWS_AS(gather_rows(Tensor::zeros({2, 3}), bad), DimensionError);
}

TEST_CASE("gradients of every op match finite differences") {
    Rng rng(7);
    auto rnd = [&](Shape s) { return oracle::random_tensor(std::move(s), rng); };
    auto check = [](const char* name, const std::function<Tensor()>& loss, std::vector<Tensor> params) {
        const auto g = oracle::check_gradients(loss, std::move(params), 1e-4);
        INFO(name << ": " << g.worst);
        CHECK(g.passed);
    };
    Tensor a = rnd({3, 4}), b = rnd({3, 4}), w = rnd({3, 4}), v = rnd({4});
    check("matmul", [&] { return sum(matmul(a, transpose(b))); }, {a, b});
    check("add", [&] { return sum(mul(add(a, v), w)); }, {a, v});
    check("sub", [&] { return sum(mul(sub(a, v), w)); }, {a, v});
    check("gelu", [&] { return sum(mul(gelu(scale(a, 4.0)), w)); }, {a});
    check("softmax", [&] { return sum(mul(softmax_rows(a), w)); }, {a});
    check("mean", [&] { return mean(mul(a, b)); }, {a, b});
    Tensor g = rnd({4}), bias = rnd({4});
    check("layer_norm", [&] { return sum(mul(layer_norm(a, g, bias), w)); }, {a, g, bias});
}

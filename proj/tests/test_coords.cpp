#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "th2/coords.hpp"
#include "th2/errors.hpp"

using namespace th2;

TEST_CASE("unit box encodes to the corner bins") {
    const CoordVocab v;
    const auto t = encode_box({0, 0, 1, 1}, v);
    const std::vector<TokenId> want{v.open(), v.coord(0), v.coord(0), v.comma(), v.coord(999), v.coord(999), v.close()};
    CHECK(t == want);
    CHECK(t.size() == kBoxTokens);
    // layout of the vocabulary slice
    CHECK(v.open() == 0);
    CHECK(v.close() == 1);
    CHECK(v.comma() == 2);
    CHECK(v.coord(999) == 1002);
    CHECK(v.size() == 1003);
}

TEST_CASE("vocabulary offset shifts every id") {
    const CoordVocab v{1000, 50000};
    const auto t = encode_box({0.25, 0.5, 0.75, 1.0}, v);
    CHECK(t.front() == 50000);
    CHECK(t[3] == 50002);
    CHECK(t[1] == 50003 + 250);  // round(0.25 * 999) = 249.75 -> 250
    CHECK(decode_box(t, v).x1 == doctest::Approx(250.0 / 999.0));
}

TEST_CASE("degenerate box has equal corners") {
    const auto t = encode_box({0.4, 0.7, 0.4, 0.7});
    CHECK(t[1] == t[4]);
    CHECK(t[2] == t[5]);
}

TEST_CASE("quantization") {
    CHECK(quantize_coord(0.0, 1000) == 0);
    CHECK(quantize_coord(1.0, 1000) == 999);
    CHECK(quantize_coord(0.5, 1000) == 500);  // 499.5 rounds away from zero
    CHECK(dequantize_coord(999, 1000) == 1.0);
    CHECK_THROWS_AS(quantize_coord(1.0001, 1000), InputError);
    CHECK_THROWS_AS(quantize_coord(-0.1, 1000), InputError);
    Rng rng(1);
    for (int i = 0; i < 5000; ++i) {
        const double x = rng.uniform();
        CHECK(std::fabs(dequantize_coord(quantize_coord(x, 1000), 1000) - x) <= 0.5 / 999.0 + 1e-15);
    }
}

TEST_CASE("decoding every extreme corner combination") {
    const CoordVocab v;
    for (int mask = 0; mask < 16; ++mask) {
        const std::size_t q[4] = {mask & 1 ? 999u : 0u, mask & 2 ? 999u : 0u, mask & 4 ? 999u : 0u,
                                  mask & 8 ? 999u : 0u};
        const std::vector<TokenId> seq{v.open(), v.coord(q[0]), v.coord(q[1]), v.comma(), v.coord(q[2]), v.coord(q[3]),
                                       v.close()};
        const bool ordered = q[0] <= q[2] && q[1] <= q[3];
        if (ordered) {
            const BBox b = decode_box(seq, v);
            CHECK(encode_box(b, v) == seq);
        } else {
            CHECK_THROWS_AS(decode_box(seq, v), ValidationError);
        }
    }
}

TEST_CASE("grammar errors carry the offending index") {
    const CoordVocab v;
    auto position = [&](const std::vector<TokenId>& seq) -> long {
        try {
            decode_box(seq, v);
        } catch (const ParseError& e) {
            return static_cast<long>(e.position);
        }
        return -1;
    };
    const TokenId c = v.coord(10);
    CHECK(position({v.open(), c, c, c, c, c, v.close()}) == 3);  // missing comma
    CHECK(position({c, c, c, v.comma(), c, c, v.close()}) == 0);
    CHECK(position({v.open(), c, v.comma(), v.comma(), c, c, v.close()}) == 2);
    CHECK(position({v.open(), c, c, v.comma(), c, c, v.comma()}) == 6);
    CHECK(position({v.open(), c, c, v.comma(), c}) == 5);
    CHECK(position({v.open(), c, c, v.comma(), c, c, v.close(), v.close()}) == 7);
    CHECK(position({v.open(), v.coord(999) + 1, c, v.comma(), c, c, v.close()}) == 1);
}

TEST_CASE("random well-formed sequences round-trip") {
    const CoordVocab v;
    Rng rng(2);
    for (int i = 0; i < 2000; ++i) {
        std::size_t a = rng.below(1000), b = rng.below(1000), c = rng.below(1000), d = rng.below(1000);
        if (a > c) std::swap(a, c);
        if (b > d) std::swap(b, d);
        const std::vector<TokenId> seq{v.open(), v.coord(a), v.coord(b), v.comma(), v.coord(c), v.coord(d), v.close()};
        CHECK(encode_box(decode_box(seq, v), v) == seq);
    }
}

TEST_CASE("invalid boxes are refused") {
    CHECK_THROWS_AS(encode_box({0.6, 0.1, 0.5, 0.2}), ValidationError);
    CHECK_THROWS_AS(encode_box({0.1, 0.1, 1.2, 0.2}), ValidationError);
    CHECK_THROWS_AS(encode_box_digits({0.1, 0.3, 0.2, 0.2}), ValidationError);
    CHECK_THROWS_AS(encode_box({0, 0, 1, 1}, CoordVocab{1, 0}), ConfigError);
}

TEST_CASE("digit baseline") {
    const auto t = encode_box_digits({0, 0, 1, 1});
    REQUIRE(t.size() == kDigitBoxTokens);
    const std::vector<std::string> want{"<box>", "0", ".", "0", "0", "0", ",", "0", ".", "0", "0", "0", ",",
                                        "0",     ".", "9", "9", "9", ",", "0", ".", "9", "9", "9", "</box>"};
    CHECK(t == want);
    CHECK(format_coord_digits(0.5) == "0.501");  // bin 500 -> 500/999 = 0.5005
    CHECK(format_coord_digits(0.123) == "0.123");
    CHECK(format_coord_digits(0.9995) == "0.999");
    CHECK(double(kDigitBoxTokens) / double(kBoxTokens) == doctest::Approx(25.0 / 7.0));
}

TEST_CASE("detection head") {
    Rng rng(3);
    const DetectionHead head = DetectionHead::init(12, 20, rng);
    const Tensor hidden = oracle::random_tensor({3, 12}, rng);
    const Tensor pred = head.predict(hidden);
    CHECK(pred.shape() == Shape{3, 4});
    CHECK(detection_head_loss(hidden, pred.detach(), head).item() == 0.0);
    std::vector<double> shifted(pred.data().begin(), pred.data().end());
    for (double& x : shifted) x -= 0.125;
    CHECK(detection_head_loss(hidden, Tensor({3, 4}, shifted), head).item() == doctest::Approx(0.125).epsilon(1e-14));
    CHECK_THROWS_AS(detection_head_loss(Tensor::zeros({0, 12}), Tensor::zeros({0, 4}), head), ContractError);
    CHECK_THROWS_AS(detection_head_loss(hidden, Tensor::zeros({2, 4}), head), DimensionError);

    std::vector<Tensor> params;
    head.collect(params);
    const Tensor target = oracle::random_tensor({3, 4}, rng);
    const auto g = oracle::check_gradients([&] { return detection_head_loss(hidden, target, head); }, params, 1e-5,
                                           1e-9, 1e-6);
    INFO(g.worst);
    CHECK(g.passed);
}

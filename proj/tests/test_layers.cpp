#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "maxmin/layers.hpp"
#include "maxmin/train.hpp"
#include "support.hpp"

using namespace maxmin;
using maxmin::test::random_tensor;

namespace {

Tensor<double> direct_conv(const Tensor<double>& x, const Tensor<double>& w,
                           const Tensor<double>& b, std::size_t stride, std::size_t pad) {
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::size_t f = w.dim(0), k = w.dim(2);
    const std::size_t oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
    Tensor<double> out({n, f, oh, ow});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t o = 0; o < f; ++o)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t xx = 0; xx < ow; ++xx) {
                    double s = b[o];
                    for (std::size_t ch = 0; ch < c; ++ch)
                        for (std::size_t p = 0; p < k; ++p)
                            for (std::size_t q = 0; q < k; ++q) {
                                const long iy = long(y * stride + p) - long(pad);
                                const long ix = long(xx * stride + q) - long(pad);
                                if (iy < 0 || ix < 0 || iy >= long(h) || ix >= long(wd)) continue;
                                s += x.at(i, ch, iy, ix) * w.at(o, ch, p, q);
                            }
                    out.at(i, o, y, xx) = s;
                }
    return out;
}

// Pooling oracle with the clamped last window.
Tensor<double> direct_pool(const Tensor<double>& x, std::size_t k, std::size_t s) {
    const std::size_t h = x.dim(2), w = x.dim(3);
    const std::size_t oh = (h - k + s - 1) / s + 1, ow = (w - k + s - 1) / s + 1;
    Tensor<double> out({x.dim(0), x.dim(1), oh, ow});
    for (std::size_t n = 0; n < x.dim(0); ++n)
        for (std::size_t c = 0; c < x.dim(1); ++c)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t xx = 0; xx < ow; ++xx) {
                    double m = -std::numeric_limits<double>::infinity();
                    for (std::size_t p = y * s; p < std::min(y * s + k, h); ++p)
                        for (std::size_t q = xx * s; q < std::min(xx * s + k, w); ++q)
                            m = std::max(m, x.at(n, c, p, q));
                    out.at(n, c, y, xx) = m;
                }
    return out;
}

double max_rel(const Tensor<double>& a, const Tensor<double>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double scale = std::max({std::abs(a[i]), std::abs(b[i]), 1e-300});
        worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
    }
    return worst;
}

GradCheckOptions tight(double tol) {
    GradCheckOptions o;
    o.tolerance = tol;
    return o;
}

}  // namespace

TEST_CASE("conv forward") {
    SUBCASE("1x1 identity filter") {
        Conv2d<double> conv(1, 1, 1);
        conv.weight().value[0] = 1.0;
        const auto x = random_tensor({2, 1, 4, 4}, 1);
        CHECK(conv.forward(x, Mode::eval) == x);
    }
    SUBCASE("window sum") {
        Conv2d<double> conv(1, 1, 2);
        conv.weight().value.fill(1.0);
        const Tensor<double> x({1, 1, 2, 2}, {1, 2, 3, 4});
        CHECK(conv.forward(x, Mode::eval) == Tensor<double>({1, 1, 1, 1}, {10}));
    }
    SUBCASE("direct oracle") {
        for (auto [stride, pad] : {std::pair{1, 0}, {1, 2}, {2, 1}}) {
            Conv2d<double> conv(3, 4, 5, stride, pad);
            conv.weight().value = random_tensor({4, 3, 5, 5}, 2);
            conv.bias().value = random_tensor({4}, 3);
            const std::size_t side = stride == 2 ? 9 : 8;
            const auto x = random_tensor({2, 3, side, side}, 4);
            const auto out = conv.forward(x, Mode::eval);
            const auto expect = direct_conv(x, conv.weight().value, conv.bias().value, stride, pad);
            REQUIRE(out.shape() == expect.shape());
            CHECK(max_rel(out, expect) <= 1e-12);
        }
    }
    SUBCASE("errors") {
        Conv2d<double> conv(3, 4, 5);
        CHECK_THROWS_AS(conv.forward(Tensor<double>({1, 2, 8, 8}), Mode::eval), ShapeError);
        CHECK_THROWS_AS(conv.forward(Tensor<double>({1, 3, 4, 4}), Mode::eval), ConfigError);
        CHECK_THROWS_AS(conv.backward(Tensor<double>({1, 4, 4, 4})), UsageError);
        Conv2d<double> strided(1, 1, 2, 2);
        CHECK_THROWS_AS(strided.forward(Tensor<double>({1, 1, 5, 5}), Mode::eval), ConfigError);
    }
}

TEST_CASE("conv backward") {
    SUBCASE("zero upstream gradient") {
        Conv2d<double> conv(2, 3, 3, 1, 1);
        conv.weight().value = random_tensor({3, 2, 3, 3}, 5);
        const auto x = random_tensor({2, 2, 5, 5}, 6);
        const auto y = conv.forward(x, Mode::train);
        conv.zero_grad();
        const auto gx = conv.backward(Tensor<double>(y.shape()));
        CHECK(gx == Tensor<double>(x.shape()));
        CHECK(conv.weight().grad == Tensor<double>(conv.weight().value.shape()));
        CHECK(conv.bias().grad == Tensor<double>({3}));
    }
    SUBCASE("single pixel through identity kernel") {
        Conv2d<double> conv(1, 1, 1);
        conv.weight().value[0] = 1.0;
        conv.forward(random_tensor({1, 1, 3, 3}, 7), Mode::train);
        Tensor<double> g({1, 1, 3, 3});
        g.at(0, 0, 1, 2) = 1.0;
        CHECK(conv.backward(g) == g);
    }
    SUBCASE("finite differences") {
        for (auto [stride, pad] : {std::pair{1, 0}, {1, 2}, {2, 1}}) {
            Conv2d<double> conv(3, 4, 5, stride, pad);
            conv.weight().value = random_tensor({4, 3, 5, 5}, 8, -0.3, 0.3);
            conv.bias().value = random_tensor({4}, 9);
            const std::size_t side = stride == 2 ? 9 : 8;
            const auto report =
                grad_check_layer(conv, random_tensor({2, 3, side, side}, 10), tight(1e-4));
            INFO(report.summary());
            CHECK(report.passed);
            CHECK(report.max_rel_error <= 1e-4);
        }
    }
}

TEST_CASE("filter negation is exact") {
    Conv2d<double> conv(3, 5, 5, 1, 2);
    conv.weight().value = random_tensor({5, 3, 5, 5}, 11);
    conv.bias().value = random_tensor({5}, 12);
    const auto x = random_tensor({2, 3, 9, 9}, 13);
    const auto y = conv.forward(x, Mode::eval);
    conv.weight().value = negate(conv.weight().value);
    conv.bias().value = negate(conv.bias().value);
    CHECK(conv.forward(x, Mode::eval) == negate(y));
}

TEST_CASE("maxmin forward") {
    const Tensor<double> x({1, 3, 1, 1}, {1, -2, 3});
    MaxMin<double> mm;
    CHECK(mm.forward(x, Mode::eval) == Tensor<double>({1, 6, 1, 1}, {1, -2, 3, -1, 2, -3}));
    CHECK(maxmin::maxmin(Tensor<double>({2, 2, 3, 3})) == Tensor<double>({2, 4, 3, 3}));
    const auto r = random_tensor({2, 3, 4, 4}, 14);
    const auto out = maxmin::maxmin(r);
    CHECK(slice_channels(out, 0, 3) == r);
    CHECK(slice_channels(out, 3, 3) == negate(r));
}

TEST_CASE("maxmin backward") {
    MaxMin<double> mm;
    CHECK_THROWS_AS(mm.backward(Tensor<double>({1, 4, 2, 2})), UsageError);
    CHECK_THROWS_AS(mm.backward(Tensor<double>({1, 3, 2, 2})), ShapeError);
    const auto x = random_tensor({2, 3, 2, 2}, 15);
    mm.forward(x, Mode::train);
    const auto g = random_tensor({2, 3, 2, 2}, 16);
    CHECK(mm.backward(concat_channels(g, g)) == Tensor<double>(x.shape()));
    CHECK(mm.backward(concat_channels(g, Tensor<double>(g.shape()))) == g);
    const auto report = grad_check_layer(mm, x, tight(1e-6));
    INFO(report.summary());
    CHECK(report.passed);
}

TEST_CASE("relu") {
    CHECK(relu(Tensor<double>({3}, {-1, 2, 0})) == Tensor<double>({3}, {0, 2, 0}));
    const auto pos = random_tensor({2, 2, 3, 3}, 17, 0.0, 1.0);
    CHECK(relu(pos) == pos);

    Relu<double> layer;
    layer.forward(Tensor<double>({1, 1, 1, 3}, {-1, 0, 2}), Mode::train);
    CHECK(layer.backward(Tensor<double>({1, 1, 1, 3}, 1.0)) ==
          Tensor<double>({1, 1, 1, 3}, {0, 0, 1}));

    // keep inputs at least 1e-2 away from the kink
    auto x = random_tensor({2, 3, 4, 4}, 18);
    for (auto& v : x.data()) v += v >= 0 ? 1e-2 : -1e-2;
    Relu<double> r;
    const auto report = grad_check_layer(r, x, tight(1e-6));
    INFO(report.summary());
    CHECK(report.passed);
    CHECK(report.kinks == 0);
}

TEST_CASE("max pooling") {
    const PoolGeometry g{3, 2};
    CHECK(g.out_size(32) == 16);
    CHECK(g.out_size(16) == 8);
    CHECK(g.out_size(8) == 4);
    CHECK(g.out_size(3) == 1);
    CHECK_THROWS_AS(g.out_size(2), ConfigError);
    CHECK_THROWS_AS((PoolGeometry{2, 3}.out_size(8)), ConfigError);

    SUBCASE("single window") {
        const Tensor<double> x({1, 1, 2, 2}, {3, -5, 1, 0});
        CHECK(maxpool_forward(x, {2, 2}) == Tensor<double>({1, 1, 1, 1}, {3}));
    }
    SUBCASE("constant input routes gradient to the first element") {
        MaxPool<double> pool(3, 2);
        const Tensor<double> x({1, 1, 5, 5}, 0.5);
        const auto y = pool.forward(x, Mode::train);
        CHECK(y == Tensor<double>({1, 1, 2, 2}, 0.5));
        const auto gx = pool.backward(Tensor<double>(y.shape(), 1.0));
        Tensor<double> expect(x.shape());
        expect.at(0, 0, 0, 0) = 1;
        expect.at(0, 0, 0, 2) = 1;
        expect.at(0, 0, 2, 0) = 1;
        expect.at(0, 0, 2, 2) = 1;
        CHECK(gx == expect);
    }
    SUBCASE("direct oracle") {
        for (std::size_t side : {5, 8, 9, 16, 32}) {
            const auto x = random_tensor({2, 3, side, side}, 19 + side);
            CHECK(maxpool_forward(x, g) == direct_pool(x, 3, 2));
        }
    }
    SUBCASE("finite differences") {
        MaxPool<double> pool(3, 2);
        const auto report = grad_check_layer(pool, random_tensor({2, 3, 8, 8}, 20), tight(1e-6));
        INFO(report.summary());
        CHECK(report.passed);
    }
}

TEST_CASE("lrn") {
    SUBCASE("alpha zero divides by k^beta") {
        const auto x = random_tensor({1, 4, 3, 3}, 21);
        Lrn<double> unit({2, 1.0, 0.0, 0.75, 1});
        CHECK(unit.forward(x, Mode::eval) == x);
        Lrn<double> scaled({2, 2.0, 0.0, 0.75, 1});
        const auto y = scaled.forward(x, Mode::eval);
        for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(x[i] / std::pow(2.0, 0.75)).epsilon(1e-15));
    }
    SUBCASE("hand example") {
        Lrn<double> lrn({0, 1.0, 1.0, 0.5, 1});
        const auto y = lrn.forward(Tensor<double>({1, 1, 1, 1}, {3}), Mode::eval);
        CHECK(y[0] == doctest::Approx(3.0 / std::sqrt(10.0)).epsilon(1e-15));
        CHECK(y[0] == doctest::Approx(0.9486832980505138).epsilon(1e-15));
    }
    SUBCASE("channel window clipped at the border") {
        Lrn<double> lrn({1, 1.0, 1.0, 1.0, 1});
        const auto y = lrn.forward(Tensor<double>({1, 3, 1, 1}, {1, 2, 3}), Mode::eval);
        CHECK(y[0] == doctest::Approx(1.0 / (1 + 1 + 4)));
        CHECK(y[1] == doctest::Approx(2.0 / (1 + 1 + 4 + 9)));
        CHECK(y[2] == doctest::Approx(3.0 / (1 + 4 + 9)));
    }
    SUBCASE("groups keep halves apart") {
        Lrn<double> lrn({2, 1.0, 1.0, 1.0, 2});
        const auto y = lrn.forward(Tensor<double>({1, 4, 1, 1}, {1, 2, 3, 4}), Mode::eval);
        CHECK(y[1] == doctest::Approx(2.0 / (1 + 1 + 4)));
        CHECK(y[2] == doctest::Approx(3.0 / (1 + 9 + 16)));
        CHECK_THROWS_AS(lrn.forward(Tensor<double>({1, 3, 1, 1}), Mode::eval), ShapeError);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(Lrn<double>({2, 0.0, 1e-4, 0.75, 1}), ConfigError);
        CHECK_THROWS_AS(Lrn<double>({2, -1.0, 1e-4, 0.75, 1}), ConfigError);
    }
    SUBCASE("finite differences") {
        for (const LrnParams& p : {LrnParams{}, LrnParams{2, 1.0, 0.5, 0.75, 1},
                                   LrnParams{1, 2.0, 0.3, 0.6, 2}}) {
            Lrn<double> lrn(p);
            const auto report = grad_check_layer(lrn, random_tensor({2, 6, 3, 3}, 22, -2, 2), tight(1e-4));
            INFO(report.summary());
            CHECK(report.passed);
        }
    }
}

TEST_CASE("fully connected") {
    SUBCASE("identity weights") {
        Linear<double> fc(4, 4);
        for (std::size_t i = 0; i < 4; ++i) fc.weight().value[i * 5] = 1.0;
        const auto x = random_tensor({3, 4}, 23);
        CHECK(fc.forward(x, Mode::eval) == x);
    }
    SUBCASE("zero weights give the bias") {
        Linear<double> fc(6, 2);
        fc.bias().value = Tensor<double>({2}, {0.25, -3});
        const auto y = fc.forward(random_tensor({2, 1, 2, 3}, 24), Mode::eval);
        CHECK(y == Tensor<double>({2, 2}, {0.25, -3, 0.25, -3}));
    }
    SUBCASE("input gradient keeps the input shape") {
        Linear<double> fc(12, 3);
        fc.forward(random_tensor({2, 3, 2, 2}, 25), Mode::train);
        CHECK(fc.backward(Tensor<double>({2, 3})).shape() == Shape{2, 3, 2, 2});
        CHECK_THROWS_AS(fc.forward(Tensor<double>({2, 5}), Mode::eval), ShapeError);
    }
    SUBCASE("finite differences") {
        Linear<double> fc(48, 7);
        fc.weight().value = random_tensor({7, 48}, 26);
        fc.bias().value = random_tensor({7}, 27);
        GradCheckOptions o = tight(1e-8);
        o.samples = 1000;
        const auto report = grad_check_layer(fc, random_tensor({3, 3, 4, 4}, 28), o);
        INFO(report.summary());
        CHECK(report.passed);
        CHECK(report.max_rel_error <= 1e-8);
    }
}

TEST_CASE("dropout") {
    const auto x = random_tensor({2, 3, 4, 4}, 29);
    SUBCASE("p = 0 is the identity") {
        Dropout<double> d(0.0, 1);
        CHECK(d.forward(x, Mode::train) == x);
        CHECK(d.forward(x, Mode::eval) == x);
    }
    SUBCASE("eval is the identity") {
        Dropout<double> d(0.7, 1);
        CHECK(d.forward(x, Mode::eval) == x);
        CHECK(d.backward(x) == x);
    }
    SUBCASE("zero fraction and scaling") {
        const double p = 0.3;
        Dropout<float> d(p, 42);
        const Tensor<float> ones({1000, 1000}, 1.0f);
        const auto y = d.forward(ones, Mode::train);
        std::size_t zeros = 0;
        for (float v : y.data()) {
            if (v == 0.0f) ++zeros;
            else REQUIRE(v == static_cast<float>(1.0 / (1.0 - p)));
        }
        CHECK(std::abs(double(zeros) / 1e6 - p) <= 0.005);
        CHECK(d.backward(ones) == y);
    }
    SUBCASE("range") {
        CHECK_THROWS_AS(Dropout<double>(1.0, 1), ConfigError);
        CHECK_THROWS_AS(Dropout<double>(-0.1, 1), ConfigError);
    }
    SUBCASE("finite differences with a fixed mask") {
        Dropout<double> d(0.5, 9);
        const auto report = grad_check_layer(d, x, tight(1e-6), Mode::train, [&] { d.reseed(9); });
        INFO(report.summary());
        CHECK(report.passed);
    }
}

TEST_CASE("softmax cross-entropy") {
    SoftmaxCrossEntropy<double> xent;
    SUBCASE("uniform logits") {
        const std::vector<int> labels{3, 7};
        CHECK(xent.forward(Tensor<double>({2, 10}, 0.3), labels) ==
              doctest::Approx(std::log(10.0)).epsilon(1e-15));
    }
    SUBCASE("saturation") {
        const std::vector<int> labels{0};
        CHECK(xent.forward(Tensor<double>({1, 2}, {100, 0}), labels) < 1e-40);
        CHECK(std::isfinite(xent.forward(Tensor<double>({1, 2}, {1e4, -1e4}), labels)));
    }
    SUBCASE("labels out of range") {
        const std::vector<int> bad{10};
        CHECK_THROWS_AS(xent.forward(Tensor<double>({1, 10}), bad), ConfigError);
        const std::vector<int> negative{-1};
        CHECK_THROWS_AS(xent.forward(Tensor<double>({1, 10}), negative), ConfigError);
    }
    SUBCASE("finite differences and normalised rows") {
        auto logits = random_tensor({4, 10}, 30, -3, 3);
        const std::vector<int> labels{1, 9, 0, 4};
        xent.forward(logits, labels);
        for (std::size_t r = 0; r < 4; ++r) {
            double s = 0;
            for (std::size_t c = 0; c < 10; ++c) s += xent.probabilities()[r * 10 + c];
            CHECK(std::abs(s - 1.0) <= 1e-12);
        }
        const auto grad = xent.backward();
        double worst = 0;
        for (std::size_t i = 0; i < logits.size(); ++i) {
            const double keep = logits[i];
            logits[i] = keep + 1e-5;
            const double up = xent.forward(logits, labels);
            logits[i] = keep - 1e-5;
            const double down = xent.forward(logits, labels);
            logits[i] = keep;
            const double numeric = (up - down) / 2e-5;
            worst = std::max(worst, std::abs(numeric - grad[i]) /
                                        std::max({std::abs(numeric), std::abs(grad[i]), 1e-7}));
        }
        CHECK(worst <= 1e-6);
    }
}

TEST_CASE("maxmin algebra") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        const auto x = random_tensor({2, 3, 7, 7}, rng());
        const auto y = relu(maxmin::maxmin(x));
        const auto a = slice_channels(y, 0, 3), b = slice_channels(y, 3, 3);
        for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] * b[i] == 0.0);
        REQUIRE(maxpool_forward(relu(x), {3, 2}) == relu(maxpool_forward(x, {3, 2})));
    }
}

TEST_CASE("backward before forward") {
    Relu<double> r;
    CHECK_THROWS_AS(r.backward(Tensor<double>({1})), UsageError);
    MaxPool<double> p;
    CHECK_THROWS_AS(p.backward(Tensor<double>({1, 1, 1, 1})), UsageError);
    Lrn<double> l;
    CHECK_THROWS_AS(l.backward(Tensor<double>({1, 1, 1, 1})), UsageError);
    Linear<double> f(2, 2);
    CHECK_THROWS_AS(f.backward(Tensor<double>({1, 2})), UsageError);
    Dropout<double> d(0.5, 1);
    CHECK_THROWS_AS(d.backward(Tensor<double>({1, 2})), UsageError);
}

TEST_CASE("corrupted backward is caught") {
    // A layer whose backward flips the sign of a correct gradient.
    struct Flipped final : Layer<double> {
        Relu<double> inner;
        std::string kind() const override { return "flipped"; }
        Shape output_shape(const Shape& s) const override { return s; }
        Tensor<double> forward(const Tensor<double>& x, Mode m) override { return inner.forward(x, m); }
        Tensor<double> backward(const Tensor<double>& g) override { return negate(inner.backward(g)); }
    } bad;
    const auto report = grad_check_layer(bad, random_tensor({1, 2, 4, 4}, 32));
    CHECK_FALSE(report.passed);
    CHECK_FALSE(report.failures.empty());
    CHECK(report.summary().find("FAILED") != std::string::npos);
}

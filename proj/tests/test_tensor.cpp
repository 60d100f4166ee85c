#include <doctest.h>

#include "maxmin/tensor.hpp"
#include "support.hpp"

using namespace maxmin;
using maxmin::test::random_tensor;

TEST_CASE("tensor construction checks the element count") {
    Tensor<double> t({2, 3}, 1.5);
    CHECK(t.size() == 6);
    CHECK(t[5] == 1.5);
    CHECK_THROWS_AS(Tensor<double>({2, 3}, std::vector<double>(5)), ShapeError);
    CHECK(shape_size({2, 3, 4}) == 24);
    CHECK(to_string({1, 2, 3}) == "[1x2x3]");
}

TEST_CASE("concat_channels stacks channels") {
    Tensor<double> a({1, 1, 1, 2}, {1, 2});
    Tensor<double> b({1, 1, 1, 2}, {3, 4});
    const auto c = concat_channels(a, b);
    CHECK(c.shape() == Shape{1, 2, 1, 2});
    CHECK(c == Tensor<double>({1, 2, 1, 2}, {1, 2, 3, 4}));

    SUBCASE("empty second operand") {
        const auto x = random_tensor({2, 3, 2, 2}, 1);
        CHECK(concat_channels(x, Tensor<double>({2, 0, 2, 2})) == x);
    }
    SUBCASE("index oracle") {
        const auto x = random_tensor({2, 3, 4, 4}, 2);
        const auto y = random_tensor({2, 5, 4, 4}, 3);
        const auto z = concat_channels(x, y);
        REQUIRE(z.shape() == Shape{2, 8, 4, 4});
        for (std::size_t n = 0; n < 2; ++n)
            for (std::size_t c = 0; c < 8; ++c)
                for (std::size_t h = 0; h < 4; ++h)
                    for (std::size_t w = 0; w < 4; ++w) {
                        const double expect = c < 3 ? x.at(n, c, h, w) : y.at(n, c - 3, h, w);
                        REQUIRE(z.at(n, c, h, w) == expect);
                    }
        CHECK(slice_channels(z, 0, 3) == x);
        CHECK(slice_channels(z, 3, 5) == y);
    }
    SUBCASE("mismatch names both shapes") {
        try {
            concat_channels(Tensor<double>({1, 1, 2, 2}), Tensor<double>({1, 1, 3, 2}));
            FAIL("expected ShapeError");
        } catch (const ShapeError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("[1x1x2x2]") != std::string::npos);
            CHECK(msg.find("[1x1x3x2]") != std::string::npos);
        }
    }
}

TEST_CASE("negate") {
    const Tensor<double> x({3}, {1, -2, 0});
    CHECK(negate(x) == Tensor<double>({3}, {-1, 2, 0}));
    const auto r = random_tensor({2, 3, 4, 5}, 4);
    CHECK(negate(negate(r)) == r);
    CHECK(negate(Tensor<double>({2, 2})) == Tensor<double>({2, 2}));
}

namespace {

Tensor<double> naive_matmul(const Tensor<double>& a, const Tensor<double>& b) {
    const std::size_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
    Tensor<double> c({m, p});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < p; ++j) {
            double s = 0.0;
            for (std::size_t q = 0; q < k; ++q) s += a[i * k + q] * b[q * p + j];
            c[i * p + j] = s;
        }
    return c;
}

}  // namespace

TEST_CASE("matmul") {
    Tensor<double> eye({3, 3});
    for (std::size_t i = 0; i < 3; ++i) eye[i * 4] = 1.0;
    const auto b = random_tensor({3, 4}, 5);
    CHECK(matmul(eye, b) == b);

    const Tensor<double> a2({2, 2}, {1, 2, 3, 4});
    const Tensor<double> b2({2, 1}, {5, 6});
    CHECK(matmul(a2, b2) == Tensor<double>({2, 1}, {17, 39}));

    const auto x = random_tensor({4, 5}, 6);
    const auto y = random_tensor({5, 3}, 7);
    CHECK(matmul(x, y) == naive_matmul(x, y));
    CHECK(matmul(x, y) == matmul(x, y));

    // sizes straddling the register blocking
    for (auto [m, k, n] : {std::tuple{1, 1, 1}, {5, 7, 33}, {9, 64, 65}, {37, 19, 100}}) {
        const auto p = random_tensor({std::size_t(m), std::size_t(k)}, 10 + m);
        const auto q = random_tensor({std::size_t(k), std::size_t(n)}, 20 + n);
        CHECK(matmul(p, q) == naive_matmul(p, q));
        const auto pf = p.cast<float>(), qf = q.cast<float>();
        Tensor<float> expect({std::size_t(m), std::size_t(n)});
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
                float s = 0.0f;
                for (int t = 0; t < k; ++t) s += pf[i * k + t] * qf[t * n + j];
                expect[i * n + j] = s;
            }
        CHECK(matmul(pf, qf) == expect);
    }
    CHECK_THROWS_AS(matmul(Tensor<double>({2, 3}), Tensor<double>({2, 3})), ShapeError);
}

TEST_CASE("gemm accumulate adds the product") {
    const auto a = random_tensor({3, 4}, 30);
    const auto b = random_tensor({4, 5}, 31);
    Tensor<double> c({3, 5}, 1.0);
    gemm<double>(a.data(), b.data(), c.data(), 3, 4, 5, true);
    const auto ab = naive_matmul(a, b);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == ab[i] + 1.0);
}

TEST_CASE("transpose") {
    const auto a = random_tensor({3, 7}, 32);
    Tensor<double> t({7, 3});
    transpose<double>(a.data(), t.data(), 3, 7);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 7; ++j) CHECK(t[j * 3 + i] == a[i * 7 + j]);
}

TEST_CASE("im2col") {
    SUBCASE("1x1 kernel gathers the image") {
        const Tensor<double> x({1, 1, 2, 2}, {1, 2, 3, 4});
        const auto cols = im2col(x, {1, 1, 1, 0});
        CHECK(cols == Tensor<double>({1, 4}, {1, 2, 3, 4}));
    }
    SUBCASE("3x3 pad 1 corner column") {
        const Tensor<double> x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
        const auto cols = im2col(x, {3, 3, 1, 1});
        REQUIRE(cols.shape() == Shape{9, 9});
        int zeros = 0;
        for (std::size_t r = 0; r < 9; ++r) zeros += cols[r * 9 + 0] == 0.0;
        CHECK(zeros == 5);  // 5 padded taps, none of the pixels is zero
        // the top-left column reads pixels 1,2,4,5 at kernel taps (1,1),(1,2),(2,1),(2,2)
        CHECK(cols[4 * 9] == 1);
        CHECK(cols[5 * 9] == 2);
        CHECK(cols[7 * 9] == 4);
        CHECK(cols[8 * 9] == 5);
    }
    SUBCASE("adjoint identity") {
        const ConvGeometry g{3, 3, 2, 1};
        const auto x = random_tensor({2, 3, 7, 7}, 40);
        const auto cols = im2col(x, g);
        const auto y = random_tensor(cols.shape(), 41);
        const auto back = col2im(y, x.shape(), g);
        double lhs = 0.0, rhs = 0.0;
        for (std::size_t i = 0; i < cols.size(); ++i) lhs += cols[i] * y[i];
        for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * back[i];
        CHECK(std::abs(lhs - rhs) <= 1e-12 * std::abs(lhs));
    }
    SUBCASE("col2im of ones counts patch multiplicity") {
        const ConvGeometry g{2, 2, 1, 0};
        const Shape s{1, 1, 3, 3};
        const Tensor<double> ones({4, 4}, 1.0);
        const auto counts = col2im(ones, s, g);
        CHECK(counts == Tensor<double>(s, {1, 2, 1, 2, 4, 2, 1, 2, 1}));
    }
    SUBCASE("non-integral output size") {
        const ConvGeometry g{3, 3, 2, 0};
        CHECK_THROWS_AS(g.out_h(6), ConfigError);
        CHECK(g.out_h(7) == 3);
        CHECK_THROWS_AS((ConvGeometry{5, 5, 1, 0}.out_w(4)), ConfigError);
    }
}

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sspe/grad_check.hpp"
#include "sspe/kernels.hpp"
#include "sspe/matrix.hpp"
#include "sspe/rng.hpp"
#include "sspe/tape.hpp"

using namespace sspe;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double sd = 1.0) {
    Matrix m(r, c);
    for (double& v : m.data) v = rng.gauss(0.0, sd);
    return m;
}

}  // namespace

TEST_CASE("softmax_rows matches frozen oracle values") {
    SECTION("symmetry") {
        const Matrix out = softmax_rows(Matrix::row({0.0, 0.0}));
        CHECK(out(0, 0) == Catch::Approx(0.5).margin(1e-15));
        CHECK(out(0, 1) == Catch::Approx(0.5).margin(1e-15));
    }
    SECTION("stabilized against overflow") {
        const Matrix out = softmax_rows(Matrix::row({1000.0, 1000.0}));
        REQUIRE(out.all_finite());
        CHECK(out(0, 0) == Catch::Approx(0.5).margin(1e-15));
    }
    SECTION("three-way") {
        const Matrix out = softmax_rows(Matrix::row({1.0, 2.0, 3.0}));
        CHECK(out(0, 0) == Catch::Approx(0.0900).margin(1e-4));
        CHECK(out(0, 1) == Catch::Approx(0.2447).margin(1e-4));
        CHECK(out(0, 2) == Catch::Approx(0.6652).margin(1e-4));
    }
    SECTION("empty input rejected") {
        CHECK_THROWS_WITH(softmax_rows(Matrix()), Catch::Matchers::ContainsSubstring("empty input"));
    }
}

TEST_CASE("softmax_rows rows sum to 1 within 1e-12 for wide input range") {
    Rng rng(42);
    for (int trial = 0; trial < 50; ++trial) {
        Matrix m(4, 7);
        for (double& v : m.data) v = rng.uniform(-1e3, 1e3);
        const Matrix p = softmax_rows(m);
        for (std::size_t r = 0; r < p.rows; ++r) {
            double sum = 0.0;
            for (std::size_t c = 0; c < p.cols; ++c) {
                sum += p(r, c);
                CHECK(p(r, c) >= 0.0);
                CHECK(p(r, c) <= 1.0);
            }
            CHECK(sum == Catch::Approx(1.0).margin(1e-12));
        }
    }
    // entries stay strictly positive wherever exp cannot underflow
    for (int trial = 0; trial < 50; ++trial) {
        Matrix m(4, 7);
        const double base = rng.uniform(-700.0, 100.0);
        for (double& v : m.data) v = base + rng.uniform(0.0, 600.0);
        const Matrix p = softmax_rows(m);
        for (double v : p.data) {
            CHECK(v > 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("layer_norm matches closed forms") {
    const Matrix gain1 = Matrix::row({1.0, 1.0});
    const Matrix bias0 = Matrix::row({0.0, 0.0});
    SECTION("zero-variance row handled by eps") {
        const Matrix out = layer_norm(Matrix::row({1.0, 1.0, 1.0}), Matrix(1, 3, 1.0), Matrix(1, 3), 1e-5);
        for (double v : out.data) CHECK(v == Catch::Approx(0.0).margin(1e-12));
    }
    SECTION("unit-variance row") {
        const Matrix out = layer_norm(Matrix::row({1.0, -1.0}), gain1, bias0, 1e-12);
        CHECK(out(0, 0) == Catch::Approx(1.0).margin(1e-5));
        CHECK(out(0, 1) == Catch::Approx(-1.0).margin(1e-5));
    }
    SECTION("affine of normalized row") {
        const Matrix out =
            layer_norm(Matrix::row({0.0, 2.0}), Matrix::row({2.0, 2.0}), Matrix::row({1.0, 1.0}), 1e-12);
        CHECK(out(0, 0) == Catch::Approx(-1.0).margin(1e-5));
        CHECK(out(0, 1) == Catch::Approx(3.0).margin(1e-5));
    }
    SECTION("per-row moments of the normalized output") {
        Rng rng(7);
        const Matrix x = random_matrix(5, 16, rng, 3.0);
        const Matrix out = layer_norm(x, Matrix(1, 16, 1.0), Matrix(1, 16), 1e-12);
        for (std::size_t r = 0; r < out.rows; ++r) {
            double mean = 0.0, var = 0.0;
            for (std::size_t c = 0; c < out.cols; ++c) mean += out(r, c);
            mean /= 16.0;
            for (std::size_t c = 0; c < out.cols; ++c) var += (out(r, c) - mean) * (out(r, c) - mean);
            var /= 16.0;
            CHECK(mean == Catch::Approx(0.0).margin(1e-10));
            CHECK(var == Catch::Approx(1.0).margin(1e-8));
        }
    }
    SECTION("length mismatch rejected") {
        CHECK_THROWS(layer_norm(Matrix::row({1.0, 2.0}), Matrix(1, 3, 1.0), Matrix(1, 3), 1e-5));
    }
}

TEST_CASE("gelu uses the exact Gaussian-CDF form") {
    CHECK(gelu_scalar(0.0) == 0.0);
    CHECK(gelu_scalar(1.0) == Catch::Approx(0.8413).margin(1e-3));
    CHECK(gelu_scalar(20.0) == Catch::Approx(20.0).margin(1e-6));
    // monotone nondecreasing on the grid right of the stationary point at
    // x ~ -0.7518 (x * Phi(x) dips below zero left of it)
    double prev = gelu_scalar(-0.75);
    for (double x = -0.70; x <= 8.0; x += 0.05) {
        const double cur = gelu_scalar(x);
        CHECK(cur >= prev - 1e-12);
        prev = cur;
    }
}

TEST_CASE("grad_check on simple analytic functions") {
    SECTION("sum of squares has near-exact central differences") {
        ScalarFunction f;
        f.value = [](const Matrix& x) {
            double s = 0.0;
            for (double v : x.data) s += v * v;
            return s;
        };
        f.gradient = [](const Matrix& x) { return scale(x, 2.0); };
        CHECK(grad_check(f, Matrix::row({1.0, 2.0}), 1e-5) < 1e-8);
    }
    SECTION("step outside [1e-7, 1e-3] rejected") {
        ScalarFunction f;
        f.value = [](const Matrix&) { return 0.0; };
        f.gradient = [](const Matrix& x) { return Matrix(x.rows, x.cols); };
        CHECK_THROWS(grad_check(f, Matrix::row({1.0}), 1e-2));
        CHECK_THROWS(grad_check(f, Matrix::row({1.0}), 1e-8));
    }
    SECTION("non-finite intermediate rejected") {
        ScalarFunction f;
        f.value = [](const Matrix& x) { return std::log(x.data[0]); };
        f.gradient = [](const Matrix& x) {
            Matrix g(1, 1);
            g.data[0] = 1.0 / x.data[0];
            return g;
        };
        Matrix at_zero(1, 1);  // log(-step) is NaN
        CHECK_THROWS(grad_check(f, at_zero, 1e-5));
    }
}

TEST_CASE("two-class CE logit head passes grad_check") {
    // f(z) = -log softmax(z)[true], analytic grad = p - y.
    Rng rng(123);
    for (int trial = 0; trial < 5; ++trial) {
        const int true_class = trial % 2;
        ScalarFunction f;
        f.value = [true_class](const Matrix& z) {
            const Matrix p = softmax_rows(z);
            return -std::log(p.data[true_class]);
        };
        f.gradient = [true_class](const Matrix& z) {
            Matrix g = softmax_rows(z);
            g.data[true_class] -= 1.0;
            return g;
        };
        CHECK(grad_check(f, random_matrix(1, 2, rng), 1e-5) < 1e-5);
    }
}

namespace {

// f(x) = sum(W .* op(x)) evaluated via the tape, with gradient from a seeded
// backward sweep. W is a fixed random weighting so every output contributes.
ScalarFunction tape_scalar(std::function<Tape::Id(Tape&, Tape::Id)> build, Matrix w) {
    ScalarFunction f;
    auto run = [build, w](const Matrix& x, Matrix* grad_out) {
        Tape t;
        const Tape::Id xi = t.leaf(x);
        const Tape::Id out = build(t, xi);
        const Matrix& v = t.value(out);
        double acc = 0.0;
        for (std::size_t i = 0; i < v.data.size(); ++i) acc += w.data[i] * v.data[i];
        if (grad_out) {
            t.backward_seeded(out, w);
            *grad_out = t.grad(xi);
        }
        return acc;
    };
    f.value = [run](const Matrix& x) { return run(x, nullptr); };
    f.gradient = [run](const Matrix& x) {
        Matrix g;
        run(x, &g);
        return g;
    };
    return f;
}

}  // namespace

TEST_CASE("every differentiable tape kernel passes grad_check at 20 random points") {
    Rng rng(2024);
    struct Case {
        const char* name;
        std::size_t rows, cols;
        std::function<Tape::Id(Tape&, Tape::Id)> build;
    };
    const Matrix mm = random_matrix(4, 3, rng);
    const Matrix gain = random_matrix(1, 4, rng, 0.3);
    const Matrix bias = random_matrix(1, 4, rng, 0.3);
    std::vector<Case> cases;
    cases.push_back({"gelu", 3, 4, [](Tape& t, Tape::Id x) { return t.gelu(x); }});
    cases.push_back({"row_softmax", 3, 4, [](Tape& t, Tape::Id x) { return t.row_softmax(x); }});
    cases.push_back({"matmul_lhs", 3, 4, [mm](Tape& t, Tape::Id x) { return t.matmul(x, t.leaf(mm)); }});
    cases.push_back({"matmul_rhs", 4, 3, [mm](Tape& t, Tape::Id x) {
                         return t.matmul(t.leaf(transpose(mm)), x);
                     }});
    cases.push_back({"matmul_nt", 3, 4, [mm](Tape& t, Tape::Id x) {
                         return t.matmul_nt(x, t.leaf(transpose(mm)));
                     }});
    cases.push_back({"layer_norm_x", 3, 4, [gain, bias](Tape& t, Tape::Id x) {
                         return t.layer_norm(x, t.leaf(gain), t.leaf(bias), 1e-5);
                     }});
    cases.push_back({"scale_add", 3, 4, [](Tape& t, Tape::Id x) {
                         return t.add(t.scale(x, 1.7), x);
                     }});
    cases.push_back({"slice_concat", 3, 4, [](Tape& t, Tape::Id x) {
                         return t.concat_cols({t.slice_cols(x, 2, 2), t.slice_cols(x, 0, 2)});
                     }});
    cases.push_back({"select_row", 3, 4, [](Tape& t, Tape::Id x) { return t.select_row(x, 1); }});
    cases.push_back({"gather_rows", 5, 4, [](Tape& t, Tape::Id x) {
                         return t.gather_rows(x, {2, 0, -1, 4, 2});
                     }});

    for (const Case& c : cases) {
        INFO(c.name);
        double worst = 0.0;
        for (int pt = 0; pt < 20; ++pt) {
            Matrix w;
            {
                Tape probe;
                const Tape::Id out = c.build(probe, probe.leaf(random_matrix(c.rows, c.cols, rng)));
                w = random_matrix(probe.value(out).rows, probe.value(out).cols, rng);
            }
            const ScalarFunction f = tape_scalar(c.build, w);
            worst = std::max(worst, grad_check(f, random_matrix(c.rows, c.cols, rng), 1e-5));
        }
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("layer_norm gain and bias gradients pass grad_check") {
    Rng rng(99);
    const Matrix x = random_matrix(3, 4, rng);
    const Matrix w = random_matrix(3, 4, rng);
    auto build_gain = [x](Tape& t, Tape::Id g) {
        return t.layer_norm(t.leaf(x), g, t.leaf(Matrix(1, 4)), 1e-5);
    };
    auto build_bias = [x](Tape& t, Tape::Id b) {
        return t.layer_norm(t.leaf(x), t.leaf(Matrix(1, 4, 1.0)), b, 1e-5);
    };
    for (auto& build : {std::function<Tape::Id(Tape&, Tape::Id)>(build_gain),
                        std::function<Tape::Id(Tape&, Tape::Id)>(build_bias)}) {
        double worst = 0.0;
        for (int pt = 0; pt < 20; ++pt)
            worst = std::max(worst, grad_check(tape_scalar(build, w), random_matrix(1, 4, rng, 0.5), 1e-5));
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("kernels are deterministic") {
    Rng rng(5);
    const Matrix x = random_matrix(6, 8, rng, 10.0);
    const Matrix a = softmax_rows(x);
    const Matrix b = softmax_rows(x);
    REQUIRE(a.data == b.data);
    const Matrix g1 = gelu(x), g2 = gelu(x);
    REQUIRE(g1.data == g2.data);
}

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sspe/grad_check.hpp"
#include "sspe/loss.hpp"
#include "sspe/rng.hpp"

using namespace sspe;

namespace {

Matrix random_probs(Rng& rng) {
    const double p = rng.uniform(0.02, 0.98);
    return Matrix::row({p, 1.0 - p});
}

}  // namespace

TEST_CASE("smooth_labels implements y_hot(1-eps) + eps/2") {
    SECTION("[1,0] at eps 0.2") {
        const SmoothedTarget t = smooth_labels(Matrix::row({1.0, 0.0}), 0.2);
        CHECK(t.weights(0, 0) == Catch::Approx(0.9).margin(1e-15));
        CHECK(t.weights(0, 1) == Catch::Approx(0.1).margin(1e-15));
    }
    SECTION("[0,1] at eps 0.05") {
        const SmoothedTarget t = smooth_labels(Matrix::row({0.0, 1.0}), 0.05);
        CHECK(t.weights(0, 0) == Catch::Approx(0.025).margin(1e-15));
        CHECK(t.weights(0, 1) == Catch::Approx(0.975).margin(1e-15));
    }
    SECTION("eps to 0 recovers the one-hot") {
        const SmoothedTarget t = smooth_labels(Matrix::row({1.0, 0.0}), 1e-12);
        CHECK(t.weights(0, 0) == Catch::Approx(1.0).margin(1e-11));
        CHECK(t.weights(0, 1) == Catch::Approx(0.0).margin(1e-11));
    }
    SECTION("weights always sum to 1") {
        for (double eps : {0.05, 0.1, 0.2, 0.3, 0.9}) {
            const SmoothedTarget t = smooth_labels(Matrix::row({0.0, 1.0}), eps);
            CHECK(t.weights(0, 0) + t.weights(0, 1) == Catch::Approx(1.0).margin(1e-12));
        }
    }
    SECTION("invalid inputs rejected") {
        CHECK_THROWS(smooth_labels(Matrix::row({1.0, 0.0}), 0.0));
        CHECK_THROWS(smooth_labels(Matrix::row({1.0, 0.0}), 1.0));
        CHECK_THROWS(smooth_labels(Matrix::row({0.5, 0.5}), 0.2));
    }
}

TEST_CASE("ce_loss matches hand-evaluated values") {
    CHECK(ce_loss(Matrix::row({1.0 - 1e-12, 1e-12}), Matrix::row({1.0, 0.0})) ==
          Catch::Approx(0.0).margin(1e-9));
    CHECK(ce_loss(Matrix::row({0.5, 0.5}), Matrix::row({1.0, 0.0})) ==
          Catch::Approx(0.6931).margin(1e-4));
    CHECK(ce_loss(Matrix::row({0.9, 0.1}), Matrix::row({0.0, 1.0})) ==
          Catch::Approx(2.3026).margin(1e-4));
    SECTION("zero probability on the true class clamps and counts a warning") {
        log_clamp_count().store(0);
        const double loss = ce_loss(Matrix::row({1.0, 0.0}), Matrix::row({0.0, 1.0}));
        CHECK(loss == Catch::Approx(-std::log(1e-12)).margin(1e-9));
        CHECK(log_clamp_count().load() == 1);
    }
    SECTION("malformed probabilities rejected") {
        CHECK_THROWS(ce_loss(Matrix::row({0.7, 0.7}), Matrix::row({1.0, 0.0})));
        CHECK_THROWS(ce_loss(Matrix::row({-0.1, 1.1}), Matrix::row({1.0, 0.0})));
    }
}

TEST_CASE("lsce_loss matches hand-evaluated values") {
    SECTION("worked example at eps 0.2") {
        const SmoothedTarget t = smooth_labels(Matrix::row({1.0, 0.0}), 0.2);
        CHECK(lsce_loss(Matrix::row({0.9, 0.1}), t) == Catch::Approx(0.3251).margin(1e-4));
    }
    SECTION("eps -> 0 equals ce on 1000 random pairs to 1e-12") {
        Rng rng(404);
        for (int i = 0; i < 1000; ++i) {
            const Matrix probs = random_probs(rng);
            const Matrix hot = one_hot(rng.uniform() < 0.5 ? Grade::kl0 : Grade::kl2);
            SmoothedTarget nearly;
            nearly.epsilon = 0.0;
            nearly.weights = hot;
            CHECK(std::abs(lsce_loss(probs, nearly) - ce_loss(probs, hot)) < 1e-12);
        }
    }
    SECTION("minimizer over the simplex sits at the smoothed target") {
        // descend J(p) = -sum y_ls log p over p = (q, 1-q)
        const SmoothedTarget t = smooth_labels(Matrix::row({1.0, 0.0}), 0.2);
        double q = 0.3;
        for (int it = 0; it < 20000; ++it) {
            const double g = -t.weights(0, 0) / q + t.weights(0, 1) / (1.0 - q);
            q -= 1e-3 * g;
            q = std::min(0.999, std::max(0.001, q));
        }
        CHECK(q == Catch::Approx(0.9).margin(1e-4));
        // and the loss is bounded below by the smoothed target's entropy
        const double entropy = -(0.9 * std::log(0.9) + 0.1 * std::log(0.1));
        CHECK(lsce_loss(Matrix::row({q, 1.0 - q}), t) >= entropy - 1e-9);
    }
}

TEST_CASE("hybrid_loss composes LSCE over mixed and CE over full members") {
    SECTION("all-full batch reduces to beta times mean CE") {
        std::vector<LossItem> batch;
        batch.push_back({Matrix::row({0.8, 0.2}), Grade::kl0, SetTag::full_kl});
        batch.push_back({Matrix::row({0.6, 0.4}), Grade::kl0, SetTag::full_kl});
        HybridLossConfig cfg;
        cfg.epsilon = 0.2;
        cfg.alpha = 0.3;
        cfg.beta = 0.7;
        const double expect = 0.7 * 0.5 * (-std::log(0.8) - std::log(0.6));
        CHECK(hybrid_loss(batch, cfg) == Catch::Approx(expect).margin(1e-12));
    }
    SECTION("alpha 0 beta 1 is the CE-only objective") {
        std::vector<LossItem> batch;
        batch.push_back({Matrix::row({0.8, 0.2}), Grade::kl0, SetTag::mixed_kl});
        batch.push_back({Matrix::row({0.7, 0.3}), Grade::kl0, SetTag::full_kl});
        HybridLossConfig cfg;
        cfg.alpha = 0.0;
        cfg.beta = 1.0;
        CHECK(hybrid_loss(batch, cfg) == Catch::Approx(-std::log(0.7)).margin(1e-12));
    }
    SECTION("worked two-member example") {
        std::vector<LossItem> batch;
        batch.push_back({Matrix::row({0.6, 0.4}), Grade::kl2, SetTag::mixed_kl});
        batch.push_back({Matrix::row({0.8, 0.2}), Grade::kl0, SetTag::full_kl});
        HybridLossConfig cfg;
        cfg.epsilon = 0.2;
        cfg.alpha = 0.3;
        cfg.beta = 0.7;
        CHECK(hybrid_loss(batch, cfg) == Catch::Approx(0.4189).margin(1e-3));
    }
    SECTION("linear in alpha: midpoint equals mean of endpoints") {
        Rng rng(7);
        std::vector<LossItem> batch;
        for (int i = 0; i < 8; ++i)
            batch.push_back({random_probs(rng), rng.uniform() < 0.5 ? Grade::kl0 : Grade::kl2,
                             rng.uniform() < 0.5 ? SetTag::full_kl : SetTag::mixed_kl});
        auto at = [&](double alpha) {
            HybridLossConfig cfg;
            cfg.epsilon = 0.2;
            cfg.alpha = alpha;
            cfg.beta = 1.0 - alpha;
            return hybrid_loss(batch, cfg);
        };
        CHECK(at(0.5) == Catch::Approx(0.5 * (at(0.0) + at(1.0))).margin(1e-10));
    }
    SECTION("sum reduction preserves the literal Eq. form") {
        std::vector<LossItem> batch;
        batch.push_back({Matrix::row({0.8, 0.2}), Grade::kl0, SetTag::full_kl});
        batch.push_back({Matrix::row({0.6, 0.4}), Grade::kl0, SetTag::full_kl});
        HybridLossConfig cfg;
        cfg.alpha = 0.0;
        cfg.beta = 1.0;
        cfg.reduction = Reduction::sum;
        CHECK(hybrid_loss(batch, cfg) ==
              Catch::Approx(-std::log(0.8) - std::log(0.6)).margin(1e-12));
    }
    SECTION("alpha + beta must equal 1") {
        HybridLossConfig cfg;
        cfg.alpha = 0.5;
        cfg.beta = 0.6;
        CHECK_THROWS(hybrid_loss({}, cfg));
    }
}

TEST_CASE("loss gradients w.r.t. logits pass grad_check at 1e-5") {
    Rng rng(909);
    for (const double eps : {0.0, 0.2}) {
        for (int trial = 0; trial < 10; ++trial) {
            const Grade label = trial % 2 ? Grade::kl2 : Grade::kl0;
            const Matrix weights = eps == 0.0 ? one_hot(label) : smooth_labels(one_hot(label), eps).weights;
            ScalarFunction f;
            f.value = [weights](const Matrix& z) {
                Tape t;
                return t.value(t.nll_from_logits(t.leaf(z), weights)).data[0];
            };
            f.gradient = [weights](const Matrix& z) {
                Tape t;
                const Tape::Id zi = t.leaf(z);
                t.backward(t.nll_from_logits(zi, weights));
                return t.grad(zi);
            };
            Matrix z(1, 2);
            z.data[0] = rng.gauss(0, 2.0);
            z.data[1] = rng.gauss(0, 2.0);
            CHECK(grad_check(f, z, 1e-5) < 1e-5);
        }
    }
}

TEST_CASE("tape loss agrees with the probability-level loss functions") {
    Rng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        Matrix z(1, 2);
        z.data[0] = rng.gauss(0, 3.0);
        z.data[1] = rng.gauss(0, 3.0);
        const Grade label = trial % 2 ? Grade::kl2 : Grade::kl0;
        const Matrix probs = softmax_rows(z);
        Tape t;
        const double ce_tape =
            t.value(sequence_loss_on_tape(t, t.leaf(z), label, SetTag::full_kl, 0.2)).data[0];
        CHECK(ce_tape == Catch::Approx(ce_loss(probs, one_hot(label))).margin(1e-10));
        const double ls_tape =
            t.value(sequence_loss_on_tape(t, t.leaf(z), label, SetTag::mixed_kl, 0.2)).data[0];
        CHECK(ls_tape ==
              Catch::Approx(lsce_loss(probs, smooth_labels(one_hot(label), 0.2))).margin(1e-10));
    }
}

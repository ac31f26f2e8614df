#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "camo/gradcheck.hpp"
#include "camo/metrics.hpp"
#include "camo/optim.hpp"
#include "camo/tensor.hpp"

using namespace camo;

TEST_CASE("tensor construction and value semantics") {
    Tensor z = Tensor::zeros({2, 3});
    CHECK(z.size() == 6);
    CHECK(z.shape() == Shape{2, 3});
    for (double v : z.data()) CHECK(v == 0.0);

    Tensor s = Tensor::scalar(4.5);
    CHECK(s.item() == 4.5);

    Tensor a = Tensor::from_data({2}, {1.0, 2.0});
    Tensor c = a.clone();
    c.mutable_data()[0] = 9.0;
    CHECK(a.at(0) == 1.0);

    Tensor d = a.detach();
    CHECK_FALSE(d.requires_grad());
    CHECK(d.at(1) == 2.0);
}

TEST_CASE("elementwise op values") {
    CHECK(sigmoid(Tensor::scalar(1.0)).item() == doctest::Approx(0.7310585786300049).epsilon(1e-14));
    CHECK(sigmoid(Tensor::scalar(0.0)).item() == 0.5);
    CHECK(relu(Tensor::scalar(-1.0)).item() == 0.0);
    CHECK(relu(Tensor::scalar(2.0)).item() == 2.0);
    CHECK(gelu(Tensor::scalar(0.0)).item() == 0.0);
    // gelu is odd around 0 up to the linear term and close to x for large x
    CHECK(gelu(Tensor::scalar(10.0)).item() == doctest::Approx(10.0).epsilon(1e-9));

    Tensor a = Tensor::from_data({2}, {1.0, -2.0});
    Tensor b = Tensor::from_data({2}, {3.0, 5.0});
    CHECK(add(a, b).at(1) == 3.0);
    CHECK(sub(a, b).at(0) == -2.0);
    CHECK(mul(a, b).at(1) == -10.0);
    CHECK(scale(a, -2.0).at(0) == -2.0);
    CHECK(neg(a).at(1) == 2.0);
    CHECK(add_scalar(a, 0.5).at(0) == 1.5);
}

TEST_CASE("softmax family: normalization and causality") {
    Rng rng(3);
    Tensor x = Tensor::randn({5, 7}, rng);
    Tensor sm = softmax(x, 1);
    for (int i = 0; i < 5; ++i) {
        double row = 0.0;
        for (int j = 0; j < 7; ++j) row += sm.at(i * 7 + j);
        CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
    }

    Tensor sq = Tensor::randn({4, 4}, rng);
    Tensor cm = causal_masked_softmax(sq);
    for (int i = 0; i < 4; ++i) {
        double row = 0.0;
        for (int j = 0; j < 4; ++j) {
            if (j > i) CHECK(cm.at(i * 4 + j) == 0.0);
            row += cm.at(i * 4 + j);
        }
        CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
    }

    Tensor v = Tensor::from_data({4}, {1.0, 2.0, 3.0, 4.0});
    Tensor ms = masked_softmax(v, {1, 0, 1, 0});
    CHECK(ms.at(1) == 0.0);
    CHECK(ms.at(3) == 0.0);
    CHECK(ms.at(0) + ms.at(2) == doctest::Approx(1.0).epsilon(1e-12));
    // restricted softmax of {1,3}: e^1/(e^1+e^3)
    CHECK(ms.at(0) == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + std::exp(3.0))).epsilon(1e-12));
}

TEST_CASE("loss values against closed forms") {
    // uniform logits: CE = ln(vocab)
    Tensor logits = Tensor::zeros({3, 4});
    CHECK(cross_entropy_lm(logits, {0, 1, 2}).item() ==
          doctest::Approx(std::log(4.0)).epsilon(1e-14));

    // masked: only the masked position counts
    Tensor lg = Tensor::from_data({2, 2}, {5.0, 0.0, 0.0, 5.0});
    double unmasked_row0 = -std::log(std::exp(5.0) / (std::exp(5.0) + 1.0));
    CHECK(cross_entropy_lm(lg, {0, 0}, {1, 0}).item() ==
          doctest::Approx(unmasked_row0).epsilon(1e-12));

    CHECK(mse(Tensor::from_data({2}, {1.0, 2.0}), Tensor::from_data({2}, {0.0, 0.0})).item() ==
          doctest::Approx(2.5).epsilon(1e-14));

    CHECK(bce(Tensor::from_data({2}, {0.5, 0.5}), {1.0, 0.0}).item() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-14));

    // KL(p || p) = 0
    Rng rng(11);
    Tensor ml = Tensor::randn({3, 5}, rng);
    Tensor ref_logp = Tensor::zeros({3, 5});
    Tensor sm = softmax(ml, 1);
    for (int i = 0; i < 15; ++i) ref_logp.mutable_data()[i] = std::log(sm.at(i));
    CHECK(kl_from_ref(ml, ref_logp, {1, 1, 1}).item() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(kl_to_ref_reverse(ml, ref_logp, {1, 1, 1}).item() ==
          doctest::Approx(0.0).epsilon(1e-12));

    // KL is positive when the distributions differ
    Tensor other = Tensor::randn({3, 5}, rng);
    CHECK(kl_from_ref(other, ref_logp, {1, 1, 1}).item() > 0.0);
}

TEST_CASE("masked reductions") {
    Tensor x = Tensor::from_data({4}, {1.0, 2.0, 3.0, 4.0});
    CHECK(masked_mean(x, {0, 1, 1, 0}).item() == 2.5);
    CHECK(sum_all(x).item() == 10.0);
    CHECK(mean_all(x).item() == 2.5);
}

TEST_CASE("backward accumulates and zero_grad clears") {
    Tensor w = Tensor::from_data({2}, {3.0, -1.0}, true);
    Tensor loss = dot(w, w);  // d/dw = 2w
    loss.backward();
    CHECK(w.grad()[0] == doctest::Approx(6.0));
    CHECK(w.grad()[1] == doctest::Approx(-2.0));

    // second backward on a fresh tape accumulates
    dot(w, w).backward();
    CHECK(w.grad()[0] == doctest::Approx(12.0));

    w.zero_grad();
    CHECK_FALSE(w.has_grad());
}

TEST_CASE("NoGradGuard suppresses taping") {
    Tensor w = Tensor::from_data({2}, {1.0, 2.0}, true);
    {
        NoGradGuard g;
        CHECK_FALSE(grad_enabled());
        Tensor y = dot(w, w);
        CHECK_FALSE(y.requires_grad());
    }
    CHECK(grad_enabled());
}

TEST_CASE("gradcheck: every op and the full model loss") {
    GradcheckReport rep = run_gradcheck_suite();
    CAPTURE(rep.worst);
    CHECK(rep.pass(1e-4));
    CHECK(rep.seconds < 60.0);
    CHECK(rep.entries.size() >= 20);
    for (const auto& e : rep.entries) {
        CAPTURE(e.name);
        CHECK(e.max_rel_err < 1e-4);
    }
}

TEST_CASE("adamw first step and decoupled decay") {
    // single parameter, constant gradient 0.5: first update is
    // lr * m_hat / (sqrt(v_hat) + eps) with m_hat = g, v_hat = g^2
    Tensor p = Tensor::from_data({1}, {1.0}, true);
    AdamW opt({p}, {/*lr=*/0.1, 0.9, 0.999, 1e-8, /*weight_decay=*/0.0});
    mul(p, Tensor::scalar(0.5)).backward();
    opt.step();
    CHECK(p.at(0) == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));

    // zero gradient leaves only the decoupled decay: p -= lr * wd * p
    Tensor q = Tensor::from_data({1}, {1.0}, true);
    AdamW opt2({q}, {0.1, 0.9, 0.999, 1e-8, 0.5});
    mul(q, Tensor::scalar(0.0)).backward();
    opt2.step();
    CHECK(q.at(0) == doctest::Approx(0.95).epsilon(1e-12));

    // lr = 0 is the identity even with weight decay
    Tensor r = Tensor::from_data({1}, {2.0}, true);
    AdamW opt3({r}, {0.0, 0.9, 0.999, 1e-8, 0.5});
    mul(r, Tensor::scalar(1.0)).backward();
    opt3.step();
    CHECK(r.at(0) == 2.0);
}

TEST_CASE("warmup schedule") {
    CHECK(warmup_constant_lr(1.0, 1, 100) == doctest::Approx(0.01));
    CHECK(warmup_constant_lr(1.0, 50, 100) == doctest::Approx(0.5));
    CHECK(warmup_constant_lr(1.0, 100, 100) == doctest::Approx(1.0));
    CHECK(warmup_constant_lr(1.0, 5000, 100) == 1.0);
    CHECK(warmup_constant_lr(1.0, 1, 0) == 1.0);
}

TEST_CASE("rng: derive is pure and streams are independent") {
    Rng r(42);
    Rng a1 = r.derive("a");
    Rng a2 = r.derive("a");
    Rng b = r.derive("b");
    CHECK(a1.next_u64() == a2.next_u64());
    CHECK(a1.next_u64() == a2.next_u64());
    // deriving did not advance the parent: same child again
    Rng a3 = r.derive("a");
    Rng a4 = r.derive("a");
    CHECK(a3.next_u64() == a4.next_u64());
    // sibling stream differs
    Rng a5 = r.derive("a");
    CHECK(a5.next_u64() != b.next_u64());

    for (int i = 0; i < 1000; ++i) {
        double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(r.next_below(7) < 7);
    }
}

TEST_CASE("auroc: frozen example and midrank ties") {
    using dv = std::vector<double>;
    CHECK(auroc(dv{0.9, 0.3}, dv{0.1, 0.5}) == 0.75);
    // all scores equal: every pair ties -> 0.5
    CHECK(auroc(dv{1.0, 1.0}, dv{1.0, 1.0, 1.0}) == 0.5);
    // perfect separation
    CHECK(auroc(dv{2.0, 3.0}, dv{0.0, 1.0}) == 1.0);
    CHECK(auroc(dv{0.0}, dv{1.0}) == 0.0);

    // label-vector form agrees
    CHECK(auroc({0.9, 0.3, 0.1, 0.5}, std::vector<int>{1, 1, 0, 0}) == 0.75);
}

TEST_CASE("auroc: exact match with the pairwise count on random tied sets") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> pos(4 + rng.next_below(30)), neg(4 + rng.next_below(30));
        for (double& v : pos) v = std::floor(rng.uniform() * 8.0);
        for (double& v : neg) v = std::floor(rng.uniform() * 8.0);
        double wins = 0.0;
        for (double p : pos)
            for (double n : neg) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
        CHECK(auroc(pos, neg) == wins / static_cast<double>(pos.size() * neg.size()));
    }
}

TEST_CASE("auroc invariant under strictly increasing transforms") {
    Rng rng(13);
    std::vector<double> pos(40), neg(60);
    for (double& v : pos) v = std::floor(rng.uniform() * 10.0) / 2.0;
    for (double& v : neg) v = std::floor(rng.uniform() * 10.0) / 2.0 - 0.5;
    double base = auroc(pos, neg);
    auto warp = [](std::vector<double> v) {
        for (double& x : v) x = std::tanh(2.0 * x + 1.0);
        return v;
    };
    CHECK(auroc(warp(pos), warp(neg)) == base);
}

TEST_CASE("calibrate_threshold: budget met with minimal slack") {
    std::vector<double> neg(100);
    for (int i = 0; i < 100; ++i) neg[i] = (i + 1) / 100.0;
    double tau = calibrate_threshold(neg, 0.01);
    int above = 0;
    for (double v : neg)
        if (v > tau) ++above;
    CHECK(above == 1);  // exactly the 1% budget on this grid
    CHECK(tau == doctest::Approx(0.99));

    // tau never exceeds the max score (a max-score negative is never flagged)
    double tau_all = calibrate_threshold({0.2, 0.2, 0.2}, 0.5);
    CHECK(tau_all >= 0.2);

    // too few negatives for the budget
    CHECK_THROWS_AS((void)calibrate_threshold({0.1, 0.2}, 0.01), InputError);

    CHECK(classify(0.995, 0.99));
    CHECK_FALSE(classify(0.99, 0.99));
}

TEST_CASE("bootstrap ci: degenerate and coverage sanity") {
    Rng rng(5);
    CiResult c = bootstrap_mean_ci(std::vector<double>(50, 3.25), 200, 0.95, rng);
    CHECK(c.estimate == 3.25);
    CHECK(c.lo == 3.25);
    CHECK(c.hi == 3.25);

    std::vector<double> v(200);
    for (double& x : v) x = rng.normal(10.0, 1.0);
    CiResult ci = bootstrap_mean_ci(v, 500, 0.95, rng);
    CHECK(ci.lo <= ci.estimate);
    CHECK(ci.estimate <= ci.hi);
    CHECK(ci.lo > 9.0);
    CHECK(ci.hi < 11.0);
}

TEST_CASE("pearson against reference values") {
    PearsonResult a = pearson({1, 2, 3, 4, 5, 6}, {2, 1, 4, 3, 7, 5});
    CHECK(a.r == doctest::Approx(0.7917946548886297).epsilon(1e-12));
    CHECK(a.p_value == doctest::Approx(0.06051140336275659).epsilon(1e-9));

    PearsonResult b = pearson({1, 2, 3, 4, 5, 6}, {9, 7.5, 6, 5.5, 3, 1});
    CHECK(b.r == doctest::Approx(-0.9861745789497716).epsilon(1e-12));
    CHECK(b.p_value == doctest::Approx(0.00028539208966177045).epsilon(1e-9));

    PearsonResult line = pearson({0, 1, 2, 3}, {5, 4, 3, 2});
    CHECK(line.r == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(line.p_value < 1e-9);
}

TEST_CASE("incomplete beta against closed forms") {
    CHECK(incomplete_beta(1.0, 1.0, 0.3) == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(incomplete_beta(2.0, 2.0, 0.5) == doctest::Approx(0.5).epsilon(1e-12));
    // I_x(1, b) = 1 - (1-x)^b
    CHECK(incomplete_beta(1.0, 3.0, 0.2) ==
          doctest::Approx(1.0 - std::pow(0.8, 3)).epsilon(1e-12));
    CHECK(incomplete_beta(1.5, 0.5, 0.36) == doctest::Approx(0.1040880386618278).epsilon(1e-9));
}

TEST_CASE("format_double round-trips") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-17, 1e300, 0.0, 123456.789}) {
        CHECK(std::stod(format_double(v)) == v);
    }
    CHECK(format_double(1.0) == "1");
}

TEST_CASE("shape errors are typed") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({3, 3});
    CHECK_THROWS_AS((void)add(a, b), ShapeError);
    CHECK_THROWS_AS((void)matmul(a, a), ShapeError);
    CHECK_THROWS_AS((void)Tensor::zeros({2}).item(), Error);
}

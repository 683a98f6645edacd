#include <cmath>
#include <vector>

#include "doctest.h"

#include "avp/errors.hpp"
#include "avp/grad_check.hpp"
#include "avp/optim.hpp"
#include "avp/rng.hpp"
#include "avp/tape.hpp"
#include "support/oracles.hpp"

using namespace avp;
using oracle::naive_bce_mean;
using oracle::naive_conv1d;
using oracle::naive_conv2d;
using oracle::random_tensor;

TEST_CASE("sigmoid forward and derivative at zero") {
    Variable x(Tensor({1, 1}, {0.0}));
    Tape tape;
    NodeId out = tape.sigmoid(tape.param(x));
    CHECK(tape.value(out)[0] == doctest::Approx(0.5));
    tape.backward(tape.sum(out));
    CHECK(x.grad[0] == doctest::Approx(0.25));
}

TEST_CASE("conv1d matches the naive quadruple loop on random instances") {
    Rng rng(41);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t batch = 1 + rng.below(3), len = 5 + rng.below(6);
        const std::size_t cin = 1 + rng.below(4), width = 1 + rng.below(4);
        const std::size_t cout = 1 + rng.below(5);
        Tensor x = random_tensor({batch, len, cin}, rng);
        Tensor w = random_tensor({width, cin, cout}, rng);
        Tape tape;
        const Tensor& got = tape.value(tape.conv1d_valid(tape.input(x), tape.input(w)));
        const Tensor want = naive_conv1d(x, w);
        REQUIRE(got.shape() == want.shape());
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv1d output length and first element") {
    // length 5, width 3 -> output length 3; position 0 is the direct dot product
    Rng rng(7);
    Tensor x = random_tensor({1, 5, 2}, rng);
    Tensor w = random_tensor({3, 2, 1}, rng);
    Tape tape;
    const Tensor& out = tape.value(tape.conv1d_valid(tape.input(x), tape.input(w)));
    CHECK(out.shape() == Shape{1, 3, 1});
    double direct = 0.0;
    for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t ci = 0; ci < 2; ++ci) direct += x.at(0, k, ci) * w.at(k, ci, 0);
    CHECK(out[0] == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("conv2d matches the naive loop on random instances") {
    Rng rng(43);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t batch = 1 + rng.below(2), h = 6 + rng.below(5);
        const std::size_t w = 4 + rng.below(4);
        const std::size_t kh = 1 + rng.below(3), kw = 1 + rng.below(3);
        const std::size_t filters = 1 + rng.below(5);
        Tensor x = random_tensor({batch, h, w}, rng);
        Tensor k = random_tensor({kh, kw, filters}, rng);
        Tape tape;
        const Tensor& got = tape.value(tape.conv2d_valid(tape.input(x), tape.input(k)));
        const Tensor want = naive_conv2d(x, k);
        REQUIRE(got.shape() == want.shape());
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("lstm_cell with zero weights is a fixed point at zero state") {
    Rng rng(11);
    Variable wx(Tensor({3, 8}));
    Variable wh(Tensor({2, 8}));
    Variable b(Tensor({8}));
    Tape tape;
    NodeId x = tape.input(random_tensor({2, 3}, rng));
    NodeId h0 = tape.input(Tensor({2, 2}));
    NodeId c0 = tape.input(Tensor({2, 2}));
    auto out = tape.lstm_cell(x, h0, c0, tape.param(wx), tape.param(wh), tape.param(b));
    for (std::size_t i = 0; i < tape.value(out.h).size(); ++i) {
        CHECK(tape.value(out.h)[i] == 0.0);
        CHECK(tape.value(out.c)[i] == 0.0);
    }
}

TEST_CASE("bce_with_logits matches analytic values") {
    const std::vector<double> unit{1.0};
    SUBCASE("saturated correct prediction has near-zero loss") {
        Tape tape;
        NodeId z = tape.input(Tensor({1, 1}, {50.0}));
        NodeId loss = tape.bce_with_logits_weighted(z, Tensor({1, 1}, {1.0}), unit, unit);
        CHECK(tape.value(loss)[0] == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("logit zero against a positive target is ln 2") {
        Tape tape;
        NodeId z = tape.input(Tensor({1, 1}, {0.0}));
        NodeId loss = tape.bce_with_logits_weighted(z, Tensor({1, 1}, {1.0}), unit, unit);
        CHECK(tape.value(loss)[0] == doctest::Approx(std::log(2.0)));
    }
    SUBCASE("non-binary targets are rejected") {
        Tape tape;
        NodeId z = tape.input(Tensor({1, 1}, {0.0}));
        CHECK_THROWS_AS(tape.bce_with_logits_weighted(z, Tensor({1, 1}, {0.5}), unit, unit),
                        Error);
    }
}

TEST_CASE("bce_with_logits matches the naive formula away from saturation") {
    Rng rng(17);
    Tensor logits = random_tensor({3, 4}, rng, -3.0, 3.0);
    Tensor targets({3, 4});
    for (std::size_t i = 0; i < targets.size(); ++i) targets[i] = rng.below(2) ? 1.0 : 0.0;
    std::vector<double> wp{1.3, 0.6, 2.0, 1.0}, wn{0.8, 1.0, 0.4, 1.7};

    Tape tape;
    NodeId loss = tape.bce_with_logits_weighted(tape.input(logits), targets, wp, wn);
    const long double want = naive_bce_mean(logits, targets, wp, wn);
    CHECK(std::abs(tape.value(loss)[0] - static_cast<double>(want)) < 1e-10);
}

TEST_CASE("loss scales exactly with power-of-two weight scaling") {
    Rng rng(19);
    Tensor logits = random_tensor({4, 5}, rng, -2.0, 2.0);
    Tensor targets({4, 5});
    for (std::size_t i = 0; i < targets.size(); ++i) targets[i] = rng.below(2) ? 1.0 : 0.0;
    std::vector<double> wp(5), wn(5);
    for (std::size_t d = 0; d < 5; ++d) {
        wp[d] = rng.uniform(0.2, 2.0);
        wn[d] = rng.uniform(0.2, 2.0);
    }
    auto loss_with = [&](double scale) {
        std::vector<double> sp = wp, sn = wn;
        for (double& v : sp) v *= scale;
        for (double& v : sn) v *= scale;
        Tape tape;
        return tape.value(tape.bce_with_logits_weighted(tape.input(logits), targets, sp, sn))[0];
    };
    const double base = loss_with(1.0);
    // power-of-two scaling is exact in binary floating point
    CHECK(loss_with(2.0) == 2.0 * base);
    CHECK(loss_with(0.25) == 0.25 * base);
    CHECK(loss_with(3.7) == doctest::Approx(3.7 * base).epsilon(1e-12));
}

TEST_CASE("loss is batch permutation equivariant") {
    Rng rng(23);
    Tensor logits = random_tensor({5, 3}, rng, -2.0, 2.0);
    Tensor targets({5, 3});
    for (std::size_t i = 0; i < targets.size(); ++i) targets[i] = rng.below(2) ? 1.0 : 0.0;
    const std::vector<double> unit(3, 1.0);

    Tensor perm_logits({5, 3}), perm_targets({5, 3});
    const std::size_t perm[5] = {3, 0, 4, 1, 2};
    for (std::size_t b = 0; b < 5; ++b)
        for (std::size_t d = 0; d < 3; ++d) {
            perm_logits.at(b, d) = logits.at(perm[b], d);
            perm_targets.at(b, d) = targets.at(perm[b], d);
        }
    Tape t1, t2;
    const double a = t1.value(t1.bce_with_logits_weighted(t1.input(logits), targets, unit, unit))[0];
    const double b = t2.value(
        t2.bce_with_logits_weighted(t2.input(perm_logits), perm_targets, unit, unit))[0];
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("backward of sum gives all-ones gradient") {
    Variable x(Tensor({2, 2}, {1.0, -2.0, 3.0, 0.5}));
    Tape tape;
    tape.backward(tape.sum(tape.param(x)));
    for (std::size_t i = 0; i < 4; ++i) CHECK(x.grad[i] == 1.0);
}

TEST_CASE("parameter not reaching the loss keeps a zero gradient") {
    Variable used(Tensor({2, 2}, {1.0, 2.0, 3.0, 4.0}));
    Variable unused(Tensor({2, 2}, {1.0, 1.0, 1.0, 1.0}));
    Tape tape;
    NodeId a = tape.param(used);
    tape.param(unused);
    tape.backward(tape.sum(a));
    for (std::size_t i = 0; i < 4; ++i) CHECK(unused.grad[i] == 0.0);
}

TEST_CASE("second backward on the same tape is an error") {
    Variable x(Tensor({2, 2}));
    Tape tape;
    NodeId loss = tape.sum(tape.param(x));
    tape.backward(loss);
    CHECK_THROWS_WITH_AS(tape.backward(loss), doctest::Contains("stale-tape"), Error);
}

TEST_CASE("shape mismatches name the primitive and shapes") {
    Tape tape;
    NodeId a = tape.input(Tensor({2, 3}));
    NodeId b = tape.input(Tensor({2, 3}));
    try {
        tape.matmul(a, b);
        FAIL("expected a shape error");
    } catch (const Error& e) {
        CHECK(e.class_id() == "shape-mismatch");
        CHECK(std::string(e.message()).find("matmul") != std::string::npos);
        CHECK(std::string(e.message()).find("[2x3]") != std::string::npos);
    }
}

TEST_CASE("every primitive passes central finite differences") {
    GradCheckReport report = primitive_grad_checks(1234);
    REQUIRE(!report.items.empty());
    for (const auto& item : report.items) {
        INFO(item.name << " rel err " << item.max_rel_err);
        CHECK(item.max_rel_err < 1e-4);
    }
    // smooth primitives resolve much tighter than the global gate
    for (const auto& item : report.items)
        if (item.name == "sigmoid") CHECK(item.max_rel_err < 1e-6);
}

TEST_CASE("bidirectional forward half equals a unidirectional scan") {
    Rng rng(29);
    Tensor seq = random_tensor({2, 6, 3}, rng);
    Variable wx(random_tensor({3, 12}, rng));
    Variable wh(random_tensor({3, 12}, rng));
    Variable b(random_tensor({12}, rng));
    Variable wx_b(random_tensor({3, 12}, rng));
    Variable wh_b(random_tensor({3, 12}, rng));
    Variable b_b(random_tensor({12}, rng));

    Tape t1;
    NodeId bi = t1.bidirectional_scan(t1.input(seq), t1.param(wx), t1.param(wh), t1.param(b),
                                      t1.param(wx_b), t1.param(wh_b), t1.param(b_b));
    Tape t2;
    NodeId uni = t2.lstm_scan(t2.input(seq), t2.param(wx), t2.param(wh), t2.param(b));

    const Tensor& full = t1.value(bi);
    const Tensor& half = t2.value(uni);
    const std::size_t hidden = 3;
    for (std::size_t b2 = 0; b2 < 2; ++b2)
        for (std::size_t t = 0; t < 6; ++t)
            for (std::size_t j = 0; j < hidden; ++j)
                CHECK(full.at(b2, t, j) == half.at(b2, t, j));
}

TEST_CASE("reversing the input swaps the roles of the two scan halves") {
    Rng rng(31);
    Tensor seq = random_tensor({1, 5, 2}, rng);
    Tensor reversed({1, 5, 2});
    for (std::size_t t = 0; t < 5; ++t)
        for (std::size_t c = 0; c < 2; ++c) reversed.at(0, t, c) = seq.at(0, 4 - t, c);

    Variable wx(random_tensor({2, 8}, rng)), wh(random_tensor({2, 8}, rng));
    Variable b(random_tensor({8}, rng));

    // same weights in both directions so the comparison is purely structural
    Tape t1;
    const Tensor fwd = t1.value(t1.bidirectional_scan(t1.input(seq), t1.param(wx), t1.param(wh),
                                                      t1.param(b), t1.param(wx), t1.param(wh),
                                                      t1.param(b)));
    Tape t2;
    const Tensor rev = t2.value(t2.bidirectional_scan(t2.input(reversed), t2.param(wx),
                                                      t2.param(wh), t2.param(b), t2.param(wx),
                                                      t2.param(wh), t2.param(b)));
    const std::size_t hidden = 2;
    for (std::size_t t = 0; t < 5; ++t)
        for (std::size_t j = 0; j < hidden; ++j) {
            CHECK(fwd.at(0, t, j) == rev.at(0, 4 - t, hidden + j));
            CHECK(fwd.at(0, t, hidden + j) == rev.at(0, 4 - t, j));
        }
}

TEST_CASE("forward and backward are bit-deterministic") {
    auto run = [] {
        Rng rng(77);
        Variable w(Tensor({3, 4}));
        for (std::size_t i = 0; i < w.value.size(); ++i) w.value[i] = rng.uniform(-1.0, 1.0);
        Tensor x({2, 3});
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
        Tape tape;
        NodeId out = tape.sigmoid(tape.matmul(tape.input(x), tape.param(w)));
        NodeId loss = tape.sum(out);
        const double v = tape.value(loss)[0];
        tape.backward(loss);
        return std::make_pair(v, w.grad.values());
    };
    const auto [v1, g1] = run();
    const auto [v2, g2] = run();
    CHECK(v1 == v2);
    CHECK(g1 == g2);
}

TEST_CASE("adam first step moves each coordinate by about lr against the gradient sign") {
    Variable p(Tensor({4}, {1.0, -2.0, 3.0, 0.0}));
    p.grad = Tensor({4}, {0.3, -0.7, 2.0, 0.0});
    const Tensor before = p.value;
    Adam opt({&p}, 0.01);
    opt.step();
    for (std::size_t i = 0; i < 4; ++i) {
        if (p.grad[i] == 0.0) {
            CHECK(p.value[i] == before[i]);
        } else {
            const double delta = p.value[i] - before[i];
            // first bias-corrected step is -lr * g/(|g| + eps')
            CHECK(delta == doctest::Approx(-0.01 * (p.grad[i] > 0 ? 1.0 : -1.0)).epsilon(1e-3));
        }
    }
    CHECK(opt.steps() == 1);
}

TEST_CASE("adam matches a scalar recurrence oracle over two steps") {
    const double g = 0.37, lr = 0.05;
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    // hand-rolled recurrence in extended precision
    long double m = 0.0L, v = 0.0L, theta = 1.0L;
    for (int t = 1; t <= 2; ++t) {
        m = beta1 * m + (1.0L - beta1) * g;
        v = beta2 * v + (1.0L - beta2) * g * g;
        const long double mhat = m / (1.0L - std::pow((long double)beta1, t));
        const long double vhat = v / (1.0L - std::pow((long double)beta2, t));
        theta -= lr * mhat / (std::sqrt(vhat) + eps);
    }

    Variable p(Tensor({1}, {1.0}));
    Adam opt({&p}, lr);
    for (int t = 0; t < 2; ++t) {
        p.grad = Tensor({1}, {g});
        opt.step();
    }
    CHECK(p.value[0] == doctest::Approx(static_cast<double>(theta)).epsilon(1e-12));
}

TEST_CASE("dropout is the identity in eval mode and rescales in train mode") {
    Rng rng(3);
    Tensor x({2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
    Tape t1;
    const Tensor& eval_out = t1.value(t1.dropout(t1.input(x), 0.5, rng, false));
    CHECK(eval_out.values() == x.values());

    Tape t2;
    const Tensor& train_out = t2.value(t2.dropout(t2.input(x), 0.5, rng, true));
    for (std::size_t i = 0; i < train_out.size(); ++i) {
        const bool kept = train_out[i] != 0.0;
        if (kept) CHECK(train_out[i] == doctest::Approx(2.0 * x[i]));
    }
}

TEST_CASE("finite check flag raises on non-finite outputs") {
    Tape tape;
    tape.set_check_finite(true);
    NodeId z = tape.input(Tensor({1, 1}, {1e308}));
    CHECK_THROWS_WITH_AS(tape.matmul(z, tape.input(Tensor({1, 1}, {1e308}))),
                         doctest::Contains("non-finite"), Error);
}

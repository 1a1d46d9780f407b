#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "testutil.hpp"

#include <cmath>

using namespace pblab;
using testutil::fd_check;
namespace ref = testutil::ref;
using testutil::random_tensor;

namespace {
Tensor rank1(std::initializer_list<float> vals, bool rg = false) {
    Tensor t = Tensor::from(std::vector<float>(vals));
    if (rg) t.set_requires_grad(true);
    return t;
}
}  // namespace

TEST_CASE("matmul identity and selector") {
    Tape t;
    Tensor eye = Tensor::from(2, 2, {1, 0, 0, 1});
    Tensor m = Tensor::from(2, 2, {1, 2, 3, 4});
    Tensor r = t.matmul(eye, m);
    for (std::size_t i = 0; i < 4; ++i) CHECK(r.data()[i] == m.data()[i]);

    Tensor sel = Tensor::from(1, 2, {1, 0});
    Tensor col = Tensor::from(2, 1, {2, 5});
    CHECK(t.matmul(sel, col).item() == doctest::Approx(2.0));
}

TEST_CASE("matmul shape error names both shapes") {
    Tape t;
    Tensor a(2, 3), b(4, 2);
    CHECK_THROWS_WITH_AS(t.matmul(a, b), doctest::Contains("[2x3]"), std::invalid_argument);
}

TEST_CASE("matmul gradient vs central finite differences") {
    CounterRng rng(41);
    Tensor a = random_tensor(3, 4, rng);
    Tensor b = random_tensor(4, 2, rng);
    fd_check({a, b}, [&](Tape& t) { return t.mean(t.gelu(t.matmul(a, b))); },
             [&]() { return ref::mean(ref::gelu(ref::matmul(ref::from(a), ref::from(b), 3, 4, 2))); },
             rng.derive(9), /*points=*/0);
}

TEST_CASE("matmul_nt matches matmul against explicit transpose") {
    CounterRng rng(17);
    Tensor a = random_tensor(3, 4, rng);
    Tensor b = random_tensor(5, 4, rng);
    {
        Tape t;
        Tensor r1 = t.matmul_nt(a, b);
        Tensor r2 = t.matmul(a, nt::transpose(b));
        for (std::size_t i = 0; i < r1.size(); ++i)
            CHECK(r1.data()[i] == doctest::Approx(r2.data()[i]).epsilon(1e-6));
    }
    fd_check({a, b}, [&](Tape& t) { return t.mean(t.gelu(t.matmul_nt(a, b))); },
             [&]() {
                 return ref::mean(ref::gelu(ref::matmul_nt(ref::from(a), ref::from(b), 3, 4, 5)));
             },
             rng.derive(1), 0);
}

TEST_CASE("softmax symmetry, saturation, direct values") {
    Tape t;
    Tensor s1 = t.softmax(rank1({0, 0}));
    CHECK(s1.at(0) == doctest::Approx(0.5));
    CHECK(s1.at(1) == doctest::Approx(0.5));

    Tensor s2 = t.softmax(rank1({1000, 0}));
    CHECK(s2.at(0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::fabs(s2.at(1)) < 1e-12);

    Tensor s3 = t.softmax(rank1({1, 2, 3}));
    CHECK(std::fabs(s3.at(0) - 0.09003f) < 1e-4);
    CHECK(std::fabs(s3.at(1) - 0.24473f) < 1e-4);
    CHECK(std::fabs(s3.at(2) - 0.66524f) < 1e-4);
}

TEST_CASE("softmax rows sum to one for rough inputs") {
    CounterRng rng(7);
    for (int rep = 0; rep < 20; ++rep) {
        Tensor x = random_tensor(4, 16, rng, false, 30.0f);
        Tape t;
        Tensor y = t.softmax(x);
        for (std::size_t i = 0; i < y.rows(); ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < y.cols(); ++j) {
                sum += y.at(i, j);
                CHECK(y.at(i, j) >= 0.0f);
            }
            CHECK(std::fabs(sum - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("softmax rejects NaN input") {
    Tape t;
    CHECK_THROWS_AS(t.softmax(rank1({0.0f, std::nanf("")})), std::domain_error);
}

TEST_CASE("softmax gradient") {
    CounterRng rng(13);
    Tensor x = random_tensor(2, 5, rng);
    Tensor w = random_tensor(2, 5, rng, false);
    fd_check({x}, [&](Tape& t) { return t.mean(t.mul(t.softmax(x), w)); },
             [&]() {
                 return ref::mean(ref::mul(ref::softmax_rows(ref::from(x), 2, 5), ref::from(w)));
             },
             rng.derive(3), 0);
}

TEST_CASE("log_softmax computed directly, no underflow") {
    Tape t;
    Tensor ls = t.log_softmax(rank1({-500.0f, 0.0f}));
    CHECK(ls.at(0) == doctest::Approx(-500.0));  // log(softmax(x)) would be -inf here
    CHECK(ls.at(1) == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("cross_entropy uniform and saturated cases") {
    Tape t;
    Tensor l1 = Tensor::from(1, 2, {0, 0});
    CHECK(t.cross_entropy(l1, {0}).item() == doctest::Approx(std::log(2.0)).epsilon(1e-6));

    Tensor l2 = Tensor::from(1, 2, {10, -10});
    const double expected = std::log(1.0 + std::exp(-20.0));  // ≈ 2.06e-9
    CHECK(static_cast<double>(t.cross_entropy(l2, {0}).item()) ==
          doctest::Approx(expected).epsilon(0.05));

    CHECK_THROWS_AS(t.cross_entropy(l1, {2}), std::out_of_range);
    CHECK_THROWS_AS(t.cross_entropy(l1, {-1}), std::out_of_range);
}

TEST_CASE("cross_entropy gradient equals softmax minus onehot") {
    CounterRng rng(5);
    Tensor logits = random_tensor(3, 4, rng);
    std::vector<int> labels = {1, 0, 3};
    {
        Tape t;
        t.backward(t.cross_entropy(logits, labels));
    }
    Tape t2;
    Tensor sm = t2.softmax(logits);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            const float onehot = labels[i] == static_cast<int>(j) ? 1.0f : 0.0f;
            const float expected = (sm.at(i, j) - onehot) / 3.0f;
            CHECK(logits.grad()[i * 4 + j] == doctest::Approx(expected).epsilon(1e-4));
        }
    fd_check({logits}, [&](Tape& t) { return t.cross_entropy(logits, labels); },
             [&]() { return ref::cross_entropy(ref::from(logits), 3, 4, labels); }, rng.derive(2),
             0);
}

TEST_CASE("gelu values and gradient") {
    Tape t;
    CHECK(t.gelu(rank1({0.0f})).item() == doctest::Approx(0.0));
    CHECK(t.gelu(rank1({10.0f})).item() == doctest::Approx(10.0).epsilon(1e-4));
    CHECK(std::fabs(t.gelu(rank1({1.0f})).item() - 0.8412) < 1e-3);

    CounterRng rng(23);
    Tensor x = random_tensor(2, 6, rng);
    fd_check({x}, [&](Tape& tp) { return tp.mean(tp.gelu(x)); },
             [&]() { return ref::mean(ref::gelu(ref::from(x))); }, rng.derive(1), 0);
}

TEST_CASE("backward simple graphs") {
    Tensor x = rank1({3.0f}, true);
    {
        Tape t;
        t.backward(t.mul(x, x));
    }
    CHECK(x.grad()[0] == doctest::Approx(6.0));

    Tensor a = rank1({2.0f}, true), b = rank1({5.0f}, true);
    {
        Tape t;
        t.backward(t.mul(a, b));
    }
    CHECK(a.grad()[0] == doctest::Approx(5.0));
    CHECK(b.grad()[0] == doctest::Approx(2.0));
}

TEST_CASE("backward requires scalar root") {
    CounterRng rng(1);
    Tensor x = random_tensor(2, 2, rng);
    Tape t;
    Tensor y = t.gelu(x);
    CHECK_THROWS_AS(t.backward(y), std::invalid_argument);
}

TEST_CASE("repeated backward accumulates") {
    Tensor x = rank1({3.0f}, true);
    Tape t;
    Tensor y = t.mul(x, x);
    t.backward(y);
    t.backward(y);
    CHECK(x.grad()[0] == doctest::Approx(12.0));
}

TEST_CASE("backward linearity over independent graphs") {
    CounterRng rng(31);
    Tensor x = random_tensor(2, 3, rng);
    Tensor y = random_tensor(3, 2, rng);

    {
        Tape t;
        Tensor combined = t.add(t.mean(t.gelu(x)), t.mean(t.softmax(y)));
        t.backward(combined);
    }
    std::vector<float> gx(x.grad(), x.grad() + x.size());
    std::vector<float> gy(y.grad(), y.grad() + y.size());

    x.zero_grad();
    y.zero_grad();
    {
        Tape t;
        Tensor l1 = t.mean(t.gelu(x));
        Tensor l2 = t.mean(t.softmax(y));
        t.backward(l1);
        t.backward(l2);
    }
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(x.grad()[i] == doctest::Approx(gx[i]).epsilon(1e-5));
    for (std::size_t i = 0; i < y.size(); ++i)
        CHECK(y.grad()[i] == doctest::Approx(gy[i]).epsilon(1e-5));
}

TEST_CASE("two-layer MLP gradients vs finite differences") {
    CounterRng rng(57);
    Tensor w1 = random_tensor(8, 4, rng, true, 0.5f);
    Tensor w2 = random_tensor(3, 8, rng, true, 0.5f);
    Tensor b1 = Tensor::vec(8, true);
    Tensor b2 = Tensor::vec(3, true);
    for (int i = 0; i < 8; ++i) b1.data()[i] = 0.05f * i;
    Tensor x = random_tensor(5, 4, rng, false);
    std::vector<int> labels = {0, 1, 2, 1, 0};

    fd_check({w1, b1, w2, b2},
             [&](Tape& t) {
                 Tensor h = t.gelu(t.add(t.matmul_nt(x, w1), b1));
                 Tensor logits = t.add(t.matmul_nt(h, w2), b2);
                 return t.cross_entropy(logits, labels);
             },
             [&]() {
                 auto h = ref::gelu(ref::add_bias(
                     ref::matmul_nt(ref::from(x), ref::from(w1), 5, 4, 8), ref::from(b1), 5, 8));
                 auto logits = ref::add_bias(ref::matmul_nt(h, ref::from(w2), 5, 8, 3),
                                             ref::from(b2), 5, 3);
                 return ref::cross_entropy(logits, 5, 3, labels);
             },
             rng.derive(4), 0);
}

TEST_CASE("layer_norm gradient") {
    CounterRng rng(71);
    Tensor x = random_tensor(3, 8, rng);
    Tensor g = Tensor::vec(8, true);
    Tensor b = Tensor::vec(8, true);
    for (int i = 0; i < 8; ++i) {
        g.data()[i] = 1.0f + 0.05f * i;
        b.data()[i] = 0.02f * i;
    }
    fd_check({x, g, b}, [&](Tape& t) { return t.mean(t.gelu(t.layer_norm(x, g, b))); },
             [&]() {
                 return ref::mean(
                     ref::gelu(ref::layer_norm(ref::from(x), ref::from(g), ref::from(b), 3, 8)));
             },
             rng.derive(5), 0);
}

TEST_CASE("gather, slice, concat gradients") {
    CounterRng rng(73);
    Tensor table = random_tensor(6, 4, rng);
    std::vector<int> ids = {0, 3, 5, 3};
    fd_check({table},
             [&](Tape& t) {
                 Tensor rows = t.gather_rows(table, ids);
                 Tensor left = t.slice_cols(rows, 0, 2);
                 Tensor right = t.slice_cols(rows, 2, 4);
                 Tensor swapped = t.concat_cols({right, left});
                 return t.mean(t.gelu(t.slice_rows(swapped, 1, 4)));
             },
             [&]() {
                 auto tb = ref::from(table);
                 ref::vec picked(3 * 4);  // rows 1..3 of the swapped gather
                 for (std::size_t i = 1; i < 4; ++i)
                     for (std::size_t j = 0; j < 4; ++j)
                         picked[(i - 1) * 4 + j] =
                             tb[static_cast<std::size_t>(ids[i]) * 4 + (j + 2) % 4];
                 return ref::mean(ref::gelu(picked));
             },
             rng.derive(6), 0);

    Tape t;
    CHECK_THROWS_AS(t.gather_rows(table, {7}), std::out_of_range);
}

TEST_CASE("colwise_scale gradient") {
    CounterRng rng(77);
    Tensor x = random_tensor(4, 6, rng);
    Tensor s = Tensor::vec(6, true);
    for (int i = 0; i < 6; ++i) s.data()[i] = 0.5f + 0.1f * i;
    fd_check({x, s}, [&](Tape& t) { return t.mean(t.gelu(t.colwise_scale(x, s))); },
             [&]() {
                 return ref::mean(
                     ref::gelu(ref::colwise_scale(ref::from(x), ref::from(s), 4, 6)));
             },
             rng.derive(7), 0);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "lfa/checkpoint.hpp"
#include "lfa/rng.hpp"
#include "lfa/tensor.hpp"
#include "test_util.hpp"

using namespace lfa;
using test_util::random_tensor;

TEST_CASE("tensor invariants") {
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.size() == 6);
    CHECK(t.dim(0) == 2);
    CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), DimensionError);
    t.zero_grad();
    CHECK(t.grad().size() == 6);
}

TEST_CASE("conv3d identity kernel passes value through") {
    Tensor input({1, 1, 1, 1}, std::vector<double>{3.25});
    Tensor kernel({1, 1, 1, 1, 1}, std::vector<double>{1.0});
    Tensor out = conv3d(input, kernel, {1, 1, 1}, {0, 0, 0});
    CHECK(out.shape() == std::vector<int64_t>{1, 1, 1, 1});
    CHECK(out.data()[0] == doctest::Approx(3.25));
}

TEST_CASE("conv3d output shape from the size formula") {
    Tensor input({4, 6, 6, 1});
    Tensor kernel({2, 3, 3, 1, 8});
    Tensor out = conv3d(input, kernel, {2, 1, 1}, {0, 0, 0});
    CHECK(out.shape() == std::vector<int64_t>{2, 4, 4, 8});
}

TEST_CASE("conv3d shape formula property sweep") {
    Rng rng(7);
    for (int64_t st : {1, 2, 3}) {
        for (int64_t pt : {0, 1, 2}) {
            for (int64_t kt : {1, 2, 3}) {
                const int64_t T = 6, H = 5, W = 4;
                if (kt > T + 2 * pt) continue;
                Tensor input = random_tensor({T, H, W, 2}, rng);
                Tensor kernel = random_tensor({kt, 3, 3, 2, 3}, rng);
                Tensor out = conv3d(input, kernel, {st, 1, 1}, {pt, 1, 1});
                CHECK(out.dim(0) == (T + 2 * pt - kt) / st + 1);
                CHECK(out.dim(1) == H);
                CHECK(out.dim(2) == W);
                CHECK(out.dim(3) == 3);
                CHECK(out.all_finite());
            }
        }
    }
}

TEST_CASE("conv3d rejects mismatched channel axis") {
    Tensor input({2, 2, 2, 3});
    Tensor kernel({1, 1, 1, 4, 2});
    CHECK_THROWS_AS(conv3d(input, kernel, {1, 1, 1}, {0, 0, 0}), DimensionError);
    CHECK_THROWS_WITH_AS(conv3d(input, Tensor({5, 1, 1, 3, 2}), {1, 1, 1}, {0, 0, 0}),
                         doctest::Contains("axis T"), DimensionError);
}

TEST_CASE("temporal subsampling by 8 keeps one slice of an 8-frame clip") {
    Rng rng(3);
    Tensor input = random_tensor({8, 18, 30, 3}, rng);
    Tensor sub = temporal_stride(input, 8);
    CHECK(sub.dim(0) == 1);
    Tensor kernel = random_tensor({1, 3, 3, 3, 2}, rng);
    Tensor out = conv3d(sub, kernel, {1, 1, 1}, {0, 1, 1});
    CHECK(out.dim(0) == 1);
}

TEST_CASE("relu basics") {
    Tensor x({3}, {-1.0, 0.0, 2.0});
    Tensor y = relu(x);
    CHECK(y.data()[0] == 0.0);
    CHECK(y.data()[1] == 0.0);
    CHECK(y.data()[2] == 2.0);

    Tensor pos({3}, {0.5, 1.0, 7.0});
    Tensor same = relu(pos);
    for (int i = 0; i < 3; ++i) CHECK(same.data()[i] == pos.data()[i]);
}

TEST_CASE("relu gradient is the positive-side indicator") {
    Tensor x({2}, {-1.0, 2.0});
    x.set_requires_grad(true);
    Tape tape;
    Tensor y = relu(x, &tape);
    sum(y, &tape);
    tape.backward(Tensor::scalar(1.0));
    CHECK(x.grad()[0] == 0.0);
    CHECK(x.grad()[1] == 1.0);
}

TEST_CASE("channel_affine trivial cases and scale gradient") {
    Tensor x({1, 1, 1, 1}, std::vector<double>{3.0});
    Tensor s({1}, std::vector<double>{2.0});
    Tensor b({1}, std::vector<double>{1.0});
    CHECK(channel_affine(x, s, b).data()[0] == doctest::Approx(7.0));

    Tensor ones({2}, {1.0, 1.0});
    Tensor zeros({2}, {0.0, 0.0});
    Tensor x2({1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
    Tensor y = channel_affine(x2, ones, zeros);
    for (int i = 0; i < 4; ++i) CHECK(y.data()[i] == x2.data()[i]);

    // d(sum)/d(scale[c]) equals the sum of x over the non-channel axes.
    Tensor sc({2}, {1.5, -0.5});
    sc.set_requires_grad(true);
    Tape tape;
    Tensor out = sum(channel_affine(x2, sc, zeros, &tape), &tape);
    tape.backward(Tensor::scalar(1.0));
    CHECK(sc.grad()[0] == doctest::Approx(1.0 + 3.0));
    CHECK(sc.grad()[1] == doctest::Approx(2.0 + 4.0));

    CHECK_THROWS_AS(channel_affine(x2, Tensor({3}), Tensor({3})), DimensionError);
}

TEST_CASE("global_avg_pool matches an independent mean") {
    Tensor c = Tensor::full({2, 2, 2, 3}, 4.5);
    Tensor pooled = global_avg_pool(c);
    for (int i = 0; i < 3; ++i) CHECK(pooled.data()[i] == doctest::Approx(4.5));

    Tensor two({2, 1, 1, 1}, {2.0, 4.0});
    CHECK(global_avg_pool(two).data()[0] == doctest::Approx(3.0));

    Rng rng(11);
    Tensor x = random_tensor({3, 4, 5, 2}, rng);
    Tensor p = global_avg_pool(x);
    for (int c2 = 0; c2 < 2; ++c2) {
        double acc = 0.0;
        int64_t n = 0;
        for (int64_t i = c2; i < x.size(); i += 2) {
            acc += x.data()[i];
            ++n;
        }
        CHECK(p.data()[c2] == doctest::Approx(acc / n).epsilon(1e-12));
    }
}

TEST_CASE("linear basics") {
    Tensor x({2}, {1.0, 2.0});
    Tensor w_id({2, 2}, {1.0, 0.0, 0.0, 1.0});
    Tensor b0({2}, {0.0, 0.0});
    Tensor y = linear(x, w_id, b0);
    CHECK(y.data()[0] == doctest::Approx(1.0));
    CHECK(y.data()[1] == doctest::Approx(2.0));

    Tensor b1({2}, {1.0, 1.0});
    Tensor y2 = linear(x, w_id, b1);
    CHECK(y2.data()[0] == doctest::Approx(2.0));
    CHECK(y2.data()[1] == doctest::Approx(3.0));

    CHECK_THROWS_AS(linear(x, Tensor({3, 2}), b0), DimensionError);
}

TEST_CASE("backward of a single linear op matches the analytic form") {
    Rng rng(5);
    Tensor x = random_tensor({3}, rng);
    Tensor w = random_tensor({3, 2}, rng);
    Tensor b = random_tensor({2}, rng);
    w.set_requires_grad(true);
    b.set_requires_grad(true);
    x.set_requires_grad(true);

    Tape tape;
    Tensor y = linear(x, w, b, &tape);
    Tensor seed({2}, {0.7, -0.3});
    tape.backward(seed);

    for (int64_t i = 0; i < 3; ++i) {
        for (int64_t j = 0; j < 2; ++j) {
            CHECK(w.grad()[i * 2 + j] ==
                  doctest::Approx(x.data()[i] * seed.data()[j]).epsilon(1e-12));
        }
        double gx = 0.0;
        for (int64_t j = 0; j < 2; ++j) gx += w.data()[i * 2 + j] * seed.data()[j];
        CHECK(x.grad()[i] == doctest::Approx(gx).epsilon(1e-12));
    }
    CHECK(b.grad()[0] == doctest::Approx(0.7));
    CHECK(b.grad()[1] == doctest::Approx(-0.3));
}

TEST_CASE("backward: empty tape, zero seed, seed linearity") {
    Tape empty;
    CHECK_THROWS_AS(empty.backward(Tensor::scalar(1.0)), UsageError);

    Rng rng(17);
    Tensor x = random_tensor({4}, rng);
    Tensor w = random_tensor({4, 3}, rng);
    Tensor b = random_tensor({3}, rng);
    w.set_requires_grad(true);

    {
        Tape tape;
        Tensor y = relu(linear(x, w, b, &tape), &tape);
        tape.backward(Tensor({3}, {0.0, 0.0, 0.0}));
        for (double g : w.grad()) CHECK(g == 0.0);
        w.clear_grad();
    }

    // backward(a*s) == a * backward(s), elementwise.
    Tensor seed({3}, {0.3, -1.1, 0.6});
    std::vector<double> g1;
    {
        Tape tape;
        linear(x, w, b, &tape);
        tape.backward(seed);
        g1.assign(w.grad().begin(), w.grad().end());
        w.clear_grad();
    }
    {
        Tape tape;
        linear(x, w, b, &tape);
        Tensor seed2({3}, {2.0 * 0.3, 2.0 * -1.1, 2.0 * 0.6});
        tape.backward(seed2);
        for (size_t i = 0; i < g1.size(); ++i) {
            CHECK(w.grad()[i] == doctest::Approx(2.0 * g1[i]).epsilon(1e-6));
        }
        w.clear_grad();
    }
}

TEST_CASE("grad_check on the quadratic is exact and catches corruption") {
    const DiffFn f = [](const std::vector<Tensor>& in, Tape* tape) {
        return sum(mul(in[0], in[0], tape), tape);
    };
    Tensor x({2}, {1.0, 2.0});
    auto report = grad_check(f, {x}, 1e-4, 1e-6);
    CHECK(report.pass);
    CHECK(report.max_rel_err < 1e-8);

    // Negative control: a 10% corrupted gradient must fail.
    const DiffFn corrupted = [](const std::vector<Tensor>& in, Tape* tape) {
        Tensor y = sum(mul(in[0], in[0], tape), tape);
        if (tape) {
            // Injects an extra 10% of x into the grad path by scaling the output.
            return scale(y, 1.1, tape);
        }
        return y;
    };
    auto bad = grad_check(corrupted, {x}, 1e-4, 1e-4);
    CHECK_FALSE(bad.pass);
}

TEST_CASE("grad_check rejects non-scalar f") {
    const DiffFn f = [](const std::vector<Tensor>& in, Tape* tape) {
        return relu(in[0], tape);
    };
    CHECK_THROWS_AS(grad_check(f, {Tensor({3}, {1.0, 2.0, 3.0})}, 1e-4, 1e-4), UsageError);
}

TEST_CASE("finite-difference gradients for every op, 10 seeds each") {
    for (uint64_t seed = 1; seed <= 10; ++seed) {
        Rng rng(seed);
        {
            Tensor input = random_tensor({3, 4, 4, 2}, rng);
            Tensor kernel = random_tensor({2, 3, 3, 2, 3}, rng, -0.5, 0.5);
            const DiffFn f = [](const std::vector<Tensor>& in, Tape* tape) {
                return sum(conv3d(in[0], in[1], {1, 1, 1}, {0, 1, 1}, tape), tape);
            };
            auto r = grad_check(f, {input, kernel}, 1e-5, 1e-6);
            CHECK_MESSAGE(r.pass, "conv3d seed ", seed, " rel err ", r.max_rel_err);
        }
        {
            // Offset keeps values away from the relu kink where the
            // subgradient makes finite differences disagree.
            Tensor x = random_tensor({12}, rng, 0.2, 1.2);
            const DiffFn f = [](const std::vector<Tensor>& in, Tape* tape) {
                return sum(relu(in[0], tape), tape);
            };
            auto r = grad_check(f, {x}, 1e-5, 1e-6);
            CHECK_MESSAGE(r.pass, "relu seed ", seed);
        }
        {
            Tensor x = random_tensor({2, 2, 3, 2}, rng);
            Tensor s = random_tensor({2}, rng, 0.5, 1.5);
            Tensor b = random_tensor({2}, rng);
            const DiffFn f = [](const std::vector<Tensor>& in, Tape* tape) {
                return sum(channel_affine(in[0], in[1], in[2], tape), tape);
            };
            auto r = grad_check(f, {x, s, b}, 1e-5, 1e-6);
            CHECK_MESSAGE(r.pass, "channel_affine seed ", seed);
        }
        {
            Tensor x = random_tensor({2, 3, 2, 2}, rng);
            const DiffFn f = [](const std::vector<Tensor>& in, Tape* tape) {
                Tensor p = global_avg_pool(in[0], tape);
                return sum(mul(p, p, tape), tape);
            };
            auto r = grad_check(f, {x}, 1e-5, 1e-6);
            CHECK_MESSAGE(r.pass, "global_avg_pool seed ", seed);
        }
        {
            Tensor x = random_tensor({4}, rng);
            Tensor w = random_tensor({4, 3}, rng);
            Tensor b = random_tensor({3}, rng);
            const DiffFn f = [](const std::vector<Tensor>& in, Tape* tape) {
                Tensor y = linear(in[0], in[1], in[2], tape);
                return sum(mul(y, y, tape), tape);
            };
            auto r = grad_check(f, {x, w, b}, 1e-5, 1e-4);
            CHECK_MESSAGE(r.pass, "linear seed ", seed);
        }
        {
            Tensor a = random_tensor({6}, rng, 0.3, 1.0);
            Tensor b = random_tensor({6}, rng, 0.3, 1.0);
            const DiffFn f = [](const std::vector<Tensor>& in, Tape* tape) {
                return cosine_distance(in[0], in[1], tape);
            };
            auto r = grad_check(f, {a, b}, 1e-5, 1e-6);
            CHECK_MESSAGE(r.pass, "cosine_distance seed ", seed);
        }
        {
            Tensor x = random_tensor({5}, rng, 0.2, 1.0);
            const DiffFn f = [](const std::vector<Tensor>& in, Tape* tape) {
                Tensor y = l2_normalize(in[0], tape);
                Tensor t = add_scalar(scale(y, 0.5, tape), 0.1, tape);
                return sum(mul(t, y, tape), tape);
            };
            auto r = grad_check(f, {x}, 1e-5, 1e-6);
            CHECK_MESSAGE(r.pass, "l2_normalize seed ", seed);
        }
        {
            Tensor a = random_tensor({2, 2, 2, 1}, rng);
            Tensor b = random_tensor({2, 2, 2, 2}, rng);
            const DiffFn f = [](const std::vector<Tensor>& in, Tape* tape) {
                Tensor y = concat_last(in[0], in[1], tape);
                return sum(mul(y, y, tape), tape);
            };
            auto r = grad_check(f, {a, b}, 1e-5, 1e-6);
            CHECK_MESSAGE(r.pass, "concat_last seed ", seed);
        }
        {
            Tensor x = random_tensor({4, 2, 2, 1}, rng);
            const DiffFn f = [](const std::vector<Tensor>& in, Tape* tape) {
                Tensor y = temporal_stride(in[0], 2, tape);
                return sum(mul(y, y, tape), tape);
            };
            auto r = grad_check(f, {x}, 1e-5, 1e-6);
            CHECK_MESSAGE(r.pass, "temporal_stride seed ", seed);
        }
    }
}

TEST_CASE("ops stay finite on inputs within 1e3") {
    Rng rng(23);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor x = random_tensor({3, 3, 3, 2}, rng, -1e3, 1e3);
        Tensor k = random_tensor({3, 3, 3, 2, 2}, rng, -1e3, 1e3);
        CHECK(conv3d(x, k, {1, 1, 1}, {1, 1, 1}).all_finite());
        CHECK(relu(x).all_finite());
        CHECK(global_avg_pool(x).all_finite());
        CHECK(l2_normalize(x).all_finite());
    }
}

TEST_CASE("optimizer: sgd step, zero grad, adam first step") {
    {
        std::vector<Parameter> params{{"p", Tensor({1}, {1.0}, true)}};
        params[0].tensor.zero_grad();
        params[0].tensor.mutable_grad()[0] = 1.0;
        Optimizer opt({OptimizerConfig::Kind::Sgd, 0.1, 0.9, 0.999, 1e-8});
        opt.step(params);
        CHECK(params[0].tensor.data()[0] == doctest::Approx(0.9).epsilon(1e-12));
    }
    {
        std::vector<Parameter> params{{"p", Tensor({1}, {1.0}, true)}};
        params[0].tensor.zero_grad();
        Optimizer opt({OptimizerConfig::Kind::Sgd, 0.1, 0.9, 0.999, 1e-8});
        opt.step(params);
        CHECK(params[0].tensor.data()[0] == doctest::Approx(1.0));
    }
    {
        // Hand-computed first bias-corrected adam step with g = 0.5:
        // mhat = g, vhat = g^2, update = lr * g / (|g| + eps).
        std::vector<Parameter> params{{"p", Tensor({1}, {1.0}, true)}};
        params[0].tensor.zero_grad();
        params[0].tensor.mutable_grad()[0] = 0.5;
        Optimizer opt({OptimizerConfig::Kind::Adam, 0.1, 0.9, 0.999, 1e-8});
        opt.step(params);
        const double expected = 1.0 - 0.1 * 0.5 / (0.5 + 1e-8);
        CHECK(params[0].tensor.data()[0] == doctest::Approx(expected).epsilon(1e-12));
    }
    {
        std::vector<Parameter> params{{"p", Tensor({1}, {1.0}, true)}};
        Optimizer opt({OptimizerConfig::Kind::Adam, 0.1, 0.9, 0.999, 1e-8});
        CHECK_THROWS_AS(opt.step(params), UsageError);
    }
}

TEST_CASE("checkpoint round-trip is byte-identical") {
    Rng rng(31);
    std::vector<Parameter> params;
    params.push_back({"fast.stage1.conv.weight", random_tensor({2, 3, 3, 1, 4}, rng)});
    params.push_back({"head.linear.bias", random_tensor({8}, rng)});

    const auto bytes1 = serialize_params(params);
    auto loaded = deserialize_params(bytes1);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].name == "fast.stage1.conv.weight");
    CHECK(loaded[0].tensor.shape() == params[0].tensor.shape());
    const auto bytes2 = serialize_params(loaded);
    CHECK(bytes1 == bytes2);

    test_util::TempDir dir("ckpt");
    save_checkpoint(dir.path() / "m.ckpt", loaded);
    auto again = load_checkpoint(dir.path() / "m.ckpt");
    CHECK(serialize_params(again) == bytes2);

    // Corrupt magic.
    auto bad = bytes1;
    bad[0] = 'X';
    CHECK_THROWS_AS(deserialize_params(bad), FormatError);
    bad = bytes1;
    bad.resize(bad.size() - 3);
    CHECK_THROWS_AS(deserialize_params(bad), FormatError);
}

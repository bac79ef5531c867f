#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "flowrl/errors.hpp"
#include "flowrl/flow.hpp"
#include "flowrl/oracles.hpp"
#include "support/oracles.hpp"

using namespace flowrl;

namespace {

// Field with a hand-built single linear layer over [t, cond, x].
VectorFieldNet stub_field(std::size_t cond_dim, std::size_t point_dim, Tensor w, Tensor b) {
    VectorFieldNet f;
    f.cond_dim = cond_dim;
    f.point_dim = point_dim;
    f.net = testsupport::linear_net(std::move(w), std::move(b));
    f.validate();
    return f;
}

VectorFieldNet zero_field(std::size_t cond_dim, std::size_t point_dim) {
    return stub_field(cond_dim, point_dim,
                      Tensor::zeros({point_dim, 1 + cond_dim + point_dim}),
                      Tensor::zeros({point_dim}));
}

VectorFieldNet constant_field(std::size_t cond_dim, std::size_t point_dim,
                              std::vector<double> c) {
    return stub_field(cond_dim, point_dim,
                      Tensor::zeros({point_dim, 1 + cond_dim + point_dim}),
                      Tensor({point_dim}, std::move(c)));
}

// v(t, cond, x) = x: weight selects the point block.
VectorFieldNet identity_field(std::size_t cond_dim, std::size_t point_dim) {
    Tensor w = Tensor::zeros({point_dim, 1 + cond_dim + point_dim});
    for (std::size_t i = 0; i < point_dim; ++i) w.at(i, 1 + cond_dim + i) = 1.0;
    return stub_field(cond_dim, point_dim, std::move(w), Tensor::zeros({point_dim}));
}

}  // namespace

TEST_CASE("interpolate endpoints and midpoint arithmetic") {
    const std::vector<double> x0 = {0.0}, x1 = {2.0};
    CHECK(interpolate(x0, x1, 0.0)[0] == 0.0);
    CHECK(interpolate(x0, x1, 1.0)[0] == 2.0);
    CHECK(interpolate(x0, x1, 0.25)[0] == doctest::Approx(0.5));
    CHECK_THROWS_AS(interpolate(x0, x1, 1.5), ContractError);
    const std::vector<double> wrong = {1.0, 2.0};
    CHECK_THROWS_AS(interpolate(x0, wrong, 0.5), ShapeError);
}

TEST_CASE("fm_loss is zero for a field that outputs exactly x1 - x0") {
    VectorFieldNet f = constant_field(1, 2, {3.0, -1.0});
    const std::vector<double> cond = {0.4}, x0 = {1.0, 1.0}, x1 = {4.0, 0.0};
    CHECK(fm_loss(f, cond, x0, x1, 0.3) == doctest::Approx(0.0));
}

TEST_CASE("fm_loss of the zero field equals the squared displacement") {
    VectorFieldNet f = zero_field(1, 1);
    const std::vector<double> cond = {0.0}, x0 = {0.0}, x1 = {3.0};
    for (double t : {0.0, 0.33, 1.0}) CHECK(fm_loss(f, cond, x0, x1, t) == doctest::Approx(9.0));
}

TEST_CASE("training a linear field on one fixed pair recovers the constant velocity") {
    Rng rng(2);
    VectorFieldNet f = VectorFieldNet::init(1, 1, {}, rng);  // single linear layer
    AdamState opt = AdamState::init(f.net, 1e-2);
    const Tensor cond({1, 1}, {0.5});
    const Tensor x0({1, 1}, {-1.0});
    const Tensor x1({1, 1}, {2.0});
    Rng trng(3);
    for (int step = 0; step < 4000; ++step) {
        Tensor t({1, 1}, {trng.uniform()});
        Tape tape;
        f.net.zero_grad();
        tape.backward(fm_loss_node(tape, f, cond, x0, x1, t));
        adam_step(opt, f.net);
    }
    // Velocity should be x1 - x0 = 3 along the whole path.
    const std::vector<double> lo = {-1.0}, hi = {2.0};
    for (double t : {0.1, 0.5, 0.9}) {
        const std::vector<double> xt = interpolate(lo, hi, t);
        Tensor in({1, 3}, {t, 0.5, xt[0]});
        CHECK(mlp_forward(f.net, in).data[0] == doctest::Approx(3.0).epsilon(1e-3));
    }
}

TEST_CASE("euler with a constant field is exact for any step count") {
    VectorFieldNet f = constant_field(2, 2, {0.5, -0.25});
    const std::vector<double> cond = {0.0, 0.0}, x0 = {1.0, 2.0};
    for (int n : {1, 3, 10}) {
        const std::vector<double> x = euler_sample(f, cond, x0, n);
        CHECK(x[0] == doctest::Approx(1.5));
        CHECK(x[1] == doctest::Approx(1.75));
    }
}

TEST_CASE("euler with the zero field is the identity") {
    VectorFieldNet f = zero_field(1, 3);
    const std::vector<double> cond = {0.0}, x0 = {0.3, -0.7, 2.0};
    const std::vector<double> x = euler_sample(f, cond, x0, 10);
    for (std::size_t i = 0; i < 3; ++i) CHECK(x[i] == x0[i]);
    CHECK_THROWS_AS(euler_sample(f, cond, x0, 0), ContractError);
}

TEST_CASE("euler on the linear-growth field matches the compound-growth recurrence") {
    VectorFieldNet f = identity_field(0, 1);
    const std::vector<double> x = euler_sample(f, std::vector<double>{}, std::vector<double>{1.0}, 10);
    CHECK(x[0] == doctest::Approx(std::pow(1.1, 10)).epsilon(1e-12));
}

TEST_CASE("halving the step size roughly halves the endpoint error on e^1") {
    VectorFieldNet f = identity_field(0, 1);
    const double exact = std::exp(1.0);
    auto err = [&](int n) {
        return std::abs(euler_sample(f, std::vector<double>{}, std::vector<double>{1.0}, n)[0] -
                        exact);
    };
    const double e10 = err(10), e20 = err(20), e40 = err(40);
    CHECK(e10 / e20 > 2.0 / 1.5);
    CHECK(e10 / e20 < 2.0 * 1.5);
    CHECK(e20 / e40 > 2.0 / 1.5);
    CHECK(e20 / e40 < 2.0 * 1.5);
}

TEST_CASE("gradients through the on-tape euler chain match finite differences") {
    Rng rng(4);
    VectorFieldNet f = VectorFieldNet::init(2, 1, {8}, rng);
    Tensor cond({1, 2}, {0.3, -0.2});
    Tensor x0({1, 1}, {0.5});

    auto loss_value = [&]() {
        Tape tape;
        const Tape::Id c = tape.constant(cond);
        const Tape::Id x = tape.constant(x0);
        const Tape::Id xT = euler_sample_node(tape, f, c, x, 10, true);
        return tape.scalar(tape.squared_error_rows(xT, Tensor({1, 1}, {2.0})));
    };
    f.net.zero_grad();
    {
        Tape tape;
        const Tape::Id c = tape.constant(cond);
        const Tape::Id x = tape.constant(x0);
        const Tape::Id xT = euler_sample_node(tape, f, c, x, 10, true);
        tape.backward(tape.squared_error_rows(xT, Tensor({1, 1}, {2.0})));
    }
    const auto st = testsupport::finite_diff_check(f.net, loss_value);
    CHECK(st.fraction_ok() >= 0.99);
    CHECK(st.max_rel_err <= 1e-3);
}

TEST_CASE("a trained 1-D flow reproduces a bimodal law's central quantiles") {
    // Compact version of the full acceptance check: fewer steps, wider bars.
    Rng rng(6);
    VectorFieldNet f = VectorFieldNet::init(1, 1, {32, 32}, rng);
    AdamState opt = AdamState::init(f.net, 1e-3);
    Rng trng(7);
    const std::size_t batch = 64;
    auto draw_target = [&](Rng& r) {
        return (r.uniform() < 0.5 ? -2.0 : 2.0) + 0.5 * r.normal();
    };
    for (int step = 0; step < 6000; ++step) {
        Tensor cond = Tensor::zeros({batch, 1});
        Tensor x0 = Tensor::zeros({batch, 1});
        Tensor x1 = Tensor::zeros({batch, 1});
        Tensor t = Tensor::zeros({batch, 1});
        for (std::size_t i = 0; i < batch; ++i) {
            x0.data[i] = trng.normal();
            x1.data[i] = draw_target(trng);
            t.data[i] = trng.uniform();
        }
        Tape tape;
        f.net.zero_grad();
        tape.backward(fm_loss_node(tape, f, cond, x0, x1, t));
        adam_step(opt, f.net);
    }
    const std::size_t n = 4000;
    Tensor cond = Tensor::zeros({n, 1});
    Tensor x0 = Tensor::zeros({n, 1});
    Rng srng(8);
    for (double& v : x0.data) v = srng.normal();
    const Tensor xs = euler_sample(f, cond, x0, 10);
    std::vector<double> target(n);
    Rng vrng(9);
    for (double& v : target) v = draw_target(vrng);

    const auto gen = EmpiricalDistribution::from(xs.data);
    const auto ref = EmpiricalDistribution::from(std::move(target));
    CHECK(w1_distance(gen, ref) <= 0.2);
    // The 0.5 level sits in the density gap between the modes, where finite
    // samples cannot pin the quantile; probe the mode bodies instead.
    const std::vector<double> levels = {0.1, 0.3, 0.7, 0.9};
    const auto qg = empirical_quantiles(gen, levels);
    const auto qr = empirical_quantiles(ref, levels);
    for (std::size_t i = 0; i < levels.size(); ++i)
        CHECK(std::abs(qg[i] - qr[i]) <= 0.25);
}

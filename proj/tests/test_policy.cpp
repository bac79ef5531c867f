#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "flowrl/errors.hpp"
#include "flowrl/policy.hpp"
#include "support/oracles.hpp"

using namespace flowrl;

namespace {

BcFlowPolicy stub_bc(std::size_t sd, std::size_t ad, MlpParams net, int steps = 10) {
    BcFlowPolicy p;
    p.field.cond_dim = sd;
    p.field.point_dim = ad;
    p.field.net = std::move(net);
    p.field.validate();
    p.n_steps = steps;
    return p;
}

OneStepPolicy stub_onestep(std::size_t sd, std::size_t ad, MlpParams net) {
    OneStepPolicy p;
    p.state_dim = sd;
    p.action_dim = ad;
    p.net = std::move(net);
    return p;
}

}  // namespace

TEST_CASE("bc sampling: zero field returns the clipped noise") {
    BcFlowPolicy p = stub_bc(1, 2, testsupport::constant_net(4, {0.0, 0.0}));
    const std::vector<double> s = {0.0};
    const std::vector<double> eps = {0.4, 1.8};
    const std::vector<double> a = bc_flow_sample(p, s, eps);
    CHECK(a[0] == doctest::Approx(0.4));
    CHECK(a[1] == doctest::Approx(1.0));  // clipped
}

TEST_CASE("bc sampling: constant field from zero noise lands on clip(c)") {
    BcFlowPolicy p = stub_bc(1, 2, testsupport::constant_net(4, {0.5, -1.4}));
    const std::vector<double> s = {0.0};
    const std::vector<double> eps = {0.0, 0.0};
    const std::vector<double> a = bc_flow_sample(p, s, eps);
    CHECK(a[0] == doctest::Approx(0.5));
    CHECK(a[1] == doctest::Approx(-1.0));  // clipped
}

TEST_CASE("bc sampling is deterministic in (state, epsilon)") {
    Rng rng(3);
    BcFlowPolicy p = BcFlowPolicy::init(2, 2, {16}, 10, rng);
    const std::vector<double> s = {0.2, -0.1};
    const std::vector<double> eps = {0.7, -0.3};
    const std::vector<double> a1 = bc_flow_sample(p, s, eps);
    const std::vector<double> a2 = bc_flow_sample(p, s, eps);
    CHECK(a1 == a2);
}

TEST_CASE("bc flow trained on one constant action concentrates there") {
    Rng rng(11);
    BcFlowPolicy p = BcFlowPolicy::init(1, 1, {32, 32}, 10, rng);
    AdamState opt = AdamState::init(p.field.net, 1e-3);
    const double mode = 0.6;
    const std::size_t batch = 64;
    Rng trng(12);
    Tensor states = Tensor::zeros({batch, 1});
    Tensor actions = Tensor::zeros({batch, 1});
    for (double& v : actions.data) v = mode;
    for (int step = 0; step < 6000; ++step) {
        Tape tape;
        p.field.net.zero_grad();
        tape.backward(bc_flow_loss_node(tape, p, states, actions, trng));
        adam_step(opt, p.field.net);
    }
    Rng srng(13);
    double acc = 0.0;
    for (int i = 0; i < 200; ++i) {
        const std::vector<double> s = {0.0};
        const std::vector<double> eps = {srng.normal()};
        acc += std::abs(bc_flow_sample(p, s, eps)[0] - mode);
    }
    CHECK(acc / 200.0 <= 0.05);
}

TEST_CASE("bc flow trained on two action modes keeps both") {
    Rng rng(21);
    BcFlowPolicy p = BcFlowPolicy::init(1, 1, {32, 32}, 10, rng);
    AdamState opt = AdamState::init(p.field.net, 1e-3);
    const double mode = 0.6;
    const std::size_t batch = 64;
    Rng trng(22);
    Tensor states = Tensor::zeros({batch, 1});
    for (int step = 0; step < 4000; ++step) {
        Tensor actions = Tensor::zeros({batch, 1});
        for (double& v : actions.data) v = trng.uniform() < 0.5 ? -mode : mode;
        Tape tape;
        p.field.net.zero_grad();
        tape.backward(bc_flow_loss_node(tape, p, states, actions, trng));
        adam_step(opt, p.field.net);
    }
    Rng srng(23);
    std::vector<std::vector<double>> samples;
    for (int i = 0; i < 1000; ++i) {
        const std::vector<double> s = {0.0};
        const std::vector<double> eps = {srng.normal()};
        samples.push_back(bc_flow_sample(p, s, eps));
    }
    const auto cl = testsupport::two_means(samples, {-mode}, {mode});
    CHECK(cl.count_a >= 300);
    CHECK(cl.count_b >= 300);
    CHECK(std::abs(cl.center_a[0] + mode) <= 0.1);
    CHECK(std::abs(cl.center_b[0] - mode) <= 0.1);
}

TEST_CASE("distill regularizer squared-norm cases") {
    const std::vector<double> s = {0.0};
    const std::vector<double> eps0 = {0.0, 0.0};
    {
        OneStepPolicy pi = stub_onestep(1, 2, testsupport::constant_net(3, {0.0, 0.0}));
        BcFlowPolicy mu = stub_bc(1, 2, testsupport::constant_net(4, {0.0, 0.0}));
        CHECK(distill_reg(pi, mu, s, eps0) == doctest::Approx(0.0));
    }
    {
        OneStepPolicy pi = stub_onestep(1, 2, testsupport::constant_net(3, {1.0, 0.0}));
        BcFlowPolicy mu = stub_bc(1, 2, testsupport::constant_net(4, {0.0, 0.0}));
        CHECK(distill_reg(pi, mu, s, eps0) == doctest::Approx(1.0));
    }
    {
        OneStepPolicy pi = stub_onestep(1, 2, testsupport::constant_net(3, {2.5, 3.5}));
        BcFlowPolicy mu = stub_bc(1, 2, testsupport::constant_net(4, {-0.5, -0.5}));
        // outputs differ by (3, 4): squared norm 25
        CHECK(distill_reg(pi, mu, s, eps0) == doctest::Approx(25.0));
    }
}

TEST_CASE("actor with a dominating regularizer converges onto the bc policy") {
    Rng rng(31);
    BcFlowPolicy mu = stub_bc(1, 1, testsupport::constant_net(3, {0.35}), 10);
    OneStepPolicy pi = OneStepPolicy::init(1, 1, {32, 32}, rng);
    AdamState opt = AdamState::init(pi.net, 2e-3);
    Rng trng(32);
    const std::size_t batch = 32;
    Tensor states = Tensor::zeros({batch, 1});
    for (int step = 0; step < 8000; ++step) {
        Tensor eps = Tensor::zeros({batch, 1});
        for (double& v : eps.data) v = trng.normal();
        const Tensor targets = bc_flow_sample_batch(mu, states, eps);
        Tape tape;
        pi.net.zero_grad();
        // Constant critic: the Q term cannot move omega, alpha dominates.
        QMeanFn qfn = [](Tape& t, Tape::Id) {
            return t.constant_owned(Tensor({1, 1}, {1.0}));
        };
        const ActorLoss al = actor_loss_node(tape, pi, states, eps, targets, 1e4, qfn);
        tape.backward(al.total);
        adam_step(opt, pi.net);
    }
    // Mean squared distillation gap over fresh noise.
    Rng erng(33);
    double acc = 0.0;
    for (int i = 0; i < 200; ++i) {
        const std::vector<double> s = {0.0};
        const std::vector<double> eps = {erng.normal()};
        acc += distill_reg(pi, mu, s, eps);
    }
    CHECK(acc / 200.0 <= 1e-3);
}

TEST_CASE("with a constant critic the Q term contributes no actor gradient") {
    Rng rng(41);
    OneStepPolicy pi = OneStepPolicy::init(1, 1, {8}, rng);
    Tensor states = Tensor::zeros({4, 1});
    Tensor eps = Tensor::zeros({4, 1});
    Rng nrng(42);
    for (double& v : eps.data) v = nrng.normal();
    Tensor targets = Tensor::zeros({4, 1});

    auto grads_with = [&](QMeanFn qfn) {
        Tape tape;
        pi.net.zero_grad();
        const ActorLoss al = actor_loss_node(tape, pi, states, eps, targets, 2.0, qfn);
        tape.backward(al.total);
        std::vector<double> g;
        for (const auto& l : pi.net.layers) {
            g.insert(g.end(), l.w.grad.begin(), l.w.grad.end());
            g.insert(g.end(), l.b.grad.begin(), l.b.grad.end());
        }
        return g;
    };
    QMeanFn const_q = [](Tape& t, Tape::Id) { return t.constant_owned(Tensor({1, 1}, {5.0})); };
    const auto g1 = grads_with(const_q);
    const auto g2 = grads_with(nullptr);  // pure distillation loss (times alpha)
    REQUIRE(g1.size() == g2.size());
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == doctest::Approx(g2[i]));
}

TEST_CASE("with alpha=0 and critic q(a) = -(a - a*)^2 the actor output reaches a*") {
    Rng rng(51);
    OneStepPolicy pi = OneStepPolicy::init(1, 1, {16, 16}, rng);
    AdamState opt = AdamState::init(pi.net, 1e-3);
    const double target = 0.45;
    Rng trng(52);
    const std::size_t batch = 16;
    Tensor states = Tensor::zeros({batch, 1});
    Tensor goal = Tensor::zeros({batch, 1});
    for (double& v : goal.data) v = target;
    for (int step = 0; step < 3000; ++step) {
        Tensor eps = Tensor::zeros({batch, 1});
        for (double& v : eps.data) v = trng.normal();
        Tensor targets = Tensor::zeros({batch, 1});
        Tape tape;
        pi.net.zero_grad();
        QMeanFn qfn = [&](Tape& t, Tape::Id raw) {
            return t.scale(t.squared_error_rows(raw, goal), -1.0);
        };
        const ActorLoss al = actor_loss_node(tape, pi, states, eps, targets, 0.0, qfn);
        tape.backward(al.total);
        adam_step(opt, pi.net);
    }
    Rng erng(53);
    for (int i = 0; i < 50; ++i) {
        const std::vector<double> s = {0.0};
        const std::vector<double> eps = {erng.normal()};
        CHECK(std::abs(onestep_action(pi, s, eps)[0] - target) <= 0.05);
    }
}

TEST_CASE("actor loss with a quadratic penalty shrinks the action norm") {
    Rng rng(61);
    OneStepPolicy pi = OneStepPolicy::init(1, 2, {16}, rng);
    AdamState opt = AdamState::init(pi.net, 1e-3);
    Rng trng(62);
    const std::size_t batch = 8;
    Tensor states = Tensor::zeros({batch, 1});
    Tensor zero_target = Tensor::zeros({batch, 2});
    auto norm_now = [&]() {
        Rng erng(63);
        double acc = 0.0;
        for (int i = 0; i < 100; ++i) {
            const std::vector<double> s = {0.0};
            const std::vector<double> eps = {erng.normal(), erng.normal()};
            const auto a = onestep_action(pi, s, eps);
            acc += std::sqrt(a[0] * a[0] + a[1] * a[1]);
        }
        return acc / 100.0;
    };
    const double before = norm_now();
    for (int step = 0; step < 100; ++step) {
        Tensor eps = Tensor::zeros({batch, 2});
        for (double& v : eps.data) v = trng.normal();
        Tape tape;
        pi.net.zero_grad();
        QMeanFn qfn = [&](Tape& t, Tape::Id raw) {
            return t.scale(t.squared_error_rows(raw, zero_target), -1.0);
        };
        tape.backward(actor_loss_node(tape, pi, states, eps, zero_target, 0.0, qfn).total);
        adam_step(opt, pi.net);
    }
    CHECK(norm_now() < before);
}

TEST_CASE("exploration noise: delta=0 reduces to the plain policy sample") {
    Rng rng(71);
    OneStepPolicy pi = OneStepPolicy::init(2, 2, {16}, rng);
    const std::vector<double> s = {0.1, -0.2};
    Rng r1(5), r2(5);
    const auto a_explore = explore_action(pi, s, 0.0, r1);
    std::vector<double> eps(2);
    for (double& v : eps) v = r2.normal();
    const auto a_plain = onestep_action(pi, s, eps);
    // delta=0 still draws eta, but adds zero times it.
    for (std::size_t i = 0; i < 2; ++i) CHECK(a_explore[i] == doctest::Approx(a_plain[i]));
}

TEST_CASE("exploration noise scale matches delta on a zero policy") {
    OneStepPolicy pi = stub_onestep(1, 2, testsupport::constant_net(3, {0.0, 0.0}));
    Rng rng(81);
    const std::vector<double> s = {0.0};
    double m = 0.0, m2 = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const auto a = explore_action(pi, s, 0.3, rng);
        CHECK(std::abs(a[0]) <= 1.0);
        CHECK(std::abs(a[1]) <= 1.0);
        m += a[0];
        m2 += a[0] * a[0];
    }
    m /= n;
    const double stddev = std::sqrt(m2 / n - m * m);
    CHECK(stddev == doctest::Approx(0.3).epsilon(0.1));
    CHECK_THROWS_AS(explore_action(pi, s, -0.1, rng), ContractError);
}

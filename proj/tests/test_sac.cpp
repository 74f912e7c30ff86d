#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "hypersac/sac.hpp"
#include "testutil.hpp"

using namespace hypersac;
using testutil::random_vector;

namespace {

EncoderConfig tiny_cfg(std::int64_t in_dim, std::int64_t d_h = 8) {
    EncoderConfig c;
    c.in_dim = in_dim;
    c.d_h = d_h;
    c.n_blocks = 1;
    return c;
}

SacAgent make_agent(std::uint64_t seed, SacConfig sc = {}, std::int64_t n_atom = 11, std::int64_t obs = 3,
                    std::int64_t act = 1, double g_min = -1.0, double g_max = 1.0) {
    Rng rng(seed);
    if (sc.target_entropy == 0.0) sc.target_entropy = -0.5;
    return SacAgent(tiny_cfg(obs), tiny_cfg(obs + act), act, make_atoms(g_min, g_max, n_atom), sc, rng);
}

NormalizedBatch make_batch(std::int64_t size, std::int64_t obs, std::int64_t act, Rng& rng) {
    NormalizedBatch b;
    b.size = size;
    b.obs_dim = obs;
    b.act_dim = act;
    b.obs = random_vector(static_cast<std::size_t>(size * obs), rng);
    b.action = random_vector(static_cast<std::size_t>(size * act), rng);
    b.reward = random_vector(static_cast<std::size_t>(size), rng, -0.5, 0.5);
    b.next_obs = random_vector(static_cast<std::size_t>(size * obs), rng);
    b.terminated.assign(static_cast<std::size_t>(size), 0.0);
    return b;
}

double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace

TEST_CASE("ema update") {
    Tensor target = Tensor::from({2, 2}, {0, 0, 0, 0});
    Tensor online = Tensor::from({2, 2}, {1, 2, 3, 4});

    CHECK_THROWS_AS(ema_update(target, online, 0.0), UsageError);
    CHECK_THROWS_AS(ema_update(target, online, 1.5), UsageError);

    ema_update(target, online, 1.0);  // hard copy
    CHECK(target.value() == online.value());

    Tensor t2 = Tensor::zeros({2, 2});
    for (int i = 0; i < 200; ++i) ema_update(t2, online, 0.25);
    for (int j = 0; j < 4; ++j) CHECK(t2.value()[j] == doctest::Approx(online.value()[j]).epsilon(1e-12));
}

TEST_CASE("terminated transitions project a point mass at the scaled reward") {
    SacAgent agent = make_agent(1);
    Rng rng(2);
    NormalizedBatch b = make_batch(1, 3, 1, rng);
    b.reward = {0.0};
    b.terminated = {1.0};
    auto target = agent.critic_target_dist(b, rng);
    // atoms are {-1, -0.8, ..., 1}: zero sits exactly on atom 5
    for (int j = 0; j < 11; ++j) CHECK(target[j] == doctest::Approx(j == 5 ? 1.0 : 0.0).epsilon(1e-12));
}

TEST_CASE("zero discount makes the target depend on the reward only") {
    SacConfig sc;
    sc.gamma = 0.0;
    sc.target_entropy = -0.5;
    SacAgent agent = make_agent(3, sc);
    Rng rng(4);
    NormalizedBatch b = make_batch(1, 3, 1, rng);
    b.reward = {0.3};  // between atoms 6 (0.2) and 7 (0.4): split 50/50
    auto target = agent.critic_target_dist(b, rng);
    CHECK(target[6] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(target[7] == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("two-atom target matches the hand projection") {
    SacConfig sc;
    sc.gamma = 0.5;
    sc.target_entropy = -0.5;
    Rng init_rng(5);
    SacAgent agent(tiny_cfg(3), tiny_cfg(4), 1, make_atoms(0.0, 1.0, 2), sc, init_rng);
    agent.log_alpha().mutable_value() = {-60.0};  // alpha ~ 0 removes the entropy shift

    Rng rng_data(6);
    NormalizedBatch b = make_batch(1, 3, 1, rng_data);
    b.reward = {0.2};
    b.terminated = {0.0};

    // replicate the internal draw and the target-critic evaluation
    Rng rng_a(77), rng_b(77);
    auto target = agent.critic_target_dist(b, rng_a);

    Tensor next_obs = Tensor::from({1, 3}, b.next_obs);
    GaussianParams g = agent.actor().forward(next_obs);
    std::vector<double> noise = {rng_b.normal()};
    PolicySample s = sample_squashed(g, Tensor::from({1, 1}, noise));
    CriticOutput t1 = agent.target_critic1().forward(concat_lastaxis(next_obs, s.action));
    const double p0 = t1.probs.value()[0], p1 = t1.probs.value()[1];

    // atom values map to 0.2 and 0.7; split each mass linearly
    const double expected0 = p0 * 0.8 + p1 * 0.3;
    const double expected1 = p0 * 0.2 + p1 * 0.7;
    CHECK(target[0] == doctest::Approx(expected0).epsilon(1e-12));
    CHECK(target[1] == doctest::Approx(expected1).epsilon(1e-12));
}

TEST_CASE("clipped double q picks the lower-valued target distribution per sample") {
    SacConfig sc;
    sc.clipped_double_q = true;
    sc.target_entropy = -0.5;
    SacAgent agent = make_agent(7, sc);
    agent.log_alpha().mutable_value() = {-60.0};
    Rng rng_data(8);
    NormalizedBatch b = make_batch(4, 3, 1, rng_data);

    Rng rng_a(9), rng_b(9);
    auto target = agent.critic_target_dist(b, rng_a);

    Tensor next_obs = Tensor::from({4, 3}, b.next_obs);
    GaussianParams g = agent.actor().forward(next_obs);
    std::vector<double> noise(4);
    for (auto& v : noise) v = rng_b.normal();
    PolicySample s = sample_squashed(g, Tensor::from({4, 1}, noise));
    Tensor in = concat_lastaxis(next_obs, s.action);
    CriticOutput t1 = agent.target_critic1().forward(in);
    CriticOutput t2 = agent.target_critic2().forward(in);

    const auto& sup = agent.support();
    for (int i = 0; i < 4; ++i) {
        const bool use2 = t2.q.value()[i] < t1.q.value()[i];
        const double* src = (use2 ? t2.probs : t1.probs).value().data() + i * sup.n_atom;
        std::vector<double> values(sup.atoms.size());
        for (std::size_t j = 0; j < values.size(); ++j)
            values[j] = b.reward[i] + agent.config().gamma * sup.atoms[j];
        auto expected = categorical_project(sup, values, std::vector<double>(src, src + sup.n_atom));
        for (std::int64_t j = 0; j < sup.n_atom; ++j)
            CHECK(target[i * sup.n_atom + j] == doctest::Approx(expected[j]).epsilon(1e-9));
    }
}

TEST_CASE("actor loss with zero alpha and constant critics has zero actor gradient") {
    SacAgent agent = make_agent(10);
    agent.log_alpha().mutable_value() = {-60.0};
    // zero the critic output weights: logits vanish for every action
    std::fill(agent.critic1().head().out_weight().mutable_value().begin(),
              agent.critic1().head().out_weight().mutable_value().end(), 0.0);
    std::fill(agent.critic2().head().out_weight().mutable_value().begin(),
              agent.critic2().head().out_weight().mutable_value().end(), 0.0);
    Rng rng(11);
    NormalizedBatch b = make_batch(8, 3, 1, rng);
    Tensor obs = agent.make_obs_tensor(b);
    SacAgent::zero_grads(agent.actor_params());
    Rng noise_rng(12);
    auto parts = agent.actor_loss_parts(obs, noise_rng);
    // uniform probabilities on a symmetric support: Q == 0, so loss == 0
    CHECK(parts.loss.item() == doctest::Approx(0.0).epsilon(1e-9));
    parts.loss.backward();
    for (auto& p : agent.actor_params())
        if (p.tensor.has_grad()) CHECK(max_abs(p.tensor.grad()) < 1e-12);
}

TEST_CASE("actor loss gradient agrees with finite differences") {
    SacAgent agent = make_agent(13);
    Rng rng(14);
    NormalizedBatch b = make_batch(3, 3, 1, rng);
    Tensor obs = agent.make_obs_tensor(b);
    std::vector<Tensor> params;
    for (auto& p : agent.actor_params()) params.push_back(p.tensor);
    const double err = testutil::max_grad_rel_error(params, [&] {
        Rng noise_rng(15);
        return agent.actor_loss_parts(obs, noise_rng).loss;
    });
    CHECK(err < 1e-4);
}

TEST_CASE("raising alpha raises the entropy weight linearly") {
    SacAgent agent = make_agent(16);
    Rng rng(17);
    NormalizedBatch b = make_batch(6, 3, 1, rng);
    Tensor obs = agent.make_obs_tensor(b);

    agent.log_alpha().mutable_value() = {std::log(0.1)};
    Rng n1(18);
    auto parts1 = agent.actor_loss_parts(obs, n1);
    agent.log_alpha().mutable_value() = {std::log(0.2)};
    Rng n2(18);
    auto parts2 = agent.actor_loss_parts(obs, n2);

    double mean_logp = 0.0;
    for (double v : parts1.log_prob.value()) mean_logp += v;
    mean_logp /= static_cast<double>(parts1.log_prob.numel());
    CHECK(parts2.loss.item() - parts1.loss.item() == doctest::Approx(0.1 * mean_logp).epsilon(1e-9));
}

TEST_CASE("temperature loss") {
    SacConfig sc;
    sc.target_entropy = -0.7;
    SacAgent agent = make_agent(19, sc);

    // log pi exactly at -target_entropy: zero gradient
    Tensor at_target = Tensor::from({4, 1}, std::vector<double>(4, 0.7));
    agent.log_alpha().zero_grad();
    Tensor loss = agent.temperature_loss(at_target);
    CHECK(loss.item() == doctest::Approx(0.0).epsilon(1e-12));
    loss.backward();
    CHECK(max_abs(agent.log_alpha().grad()) < 1e-12);

    // entropy below target (log pi high): gradient pushes log_alpha up
    Tensor low_entropy = Tensor::from({4, 1}, std::vector<double>(4, 1.7));
    agent.log_alpha().zero_grad();
    Tensor loss2 = agent.temperature_loss(low_entropy);
    loss2.backward();
    CHECK(agent.log_alpha().grad()[0] < 0.0);  // descent increases log_alpha

    // finite differences on log_alpha
    const double err = testutil::max_grad_rel_error({agent.log_alpha()},
                                                    [&] { return agent.temperature_loss(low_entropy); });
    CHECK(err < 1e-6);
}

TEST_CASE("behavioral-cloning loss") {
    SacAgent agent = make_agent(20);
    Rng rng(21);
    NormalizedBatch b = make_batch(5, 3, 1, rng);
    Tensor obs = agent.make_obs_tensor(b);

    Rng n1(22), n2(22), n3(22), n4(22);
    auto plain = agent.actor_loss_parts(obs, n1);

    // lambda = 0 reduces to the actor loss
    Tensor data_actions = Tensor::from({5, 1}, random_vector(5, rng, -0.9, 0.9));
    CHECK(agent.bc_actor_loss(obs, data_actions, 0.0, n2).item() ==
          doctest::Approx(plain.loss.item()).epsilon(1e-12));

    // dataset actions equal to the policy's own draws: the penalty vanishes
    Tensor own = plain.sample.action.detach();
    CHECK(agent.bc_actor_loss(obs, own, 0.5, n3).item() == doctest::Approx(plain.loss.item()).epsilon(1e-12));

    // hand arithmetic for the weighted penalty
    const double lambda = 0.3;
    Tensor bc = agent.bc_actor_loss(obs, data_actions, lambda, n4);
    double msq = 0.0;
    for (int i = 0; i < 5; ++i) {
        const double d = plain.sample.action.value()[i] - data_actions.value()[i];
        msq += d * d;
    }
    msq /= 5.0;
    CHECK(bc.item() ==
          doctest::Approx(plain.loss.item() + lambda * std::abs(plain.mean_q) * msq).epsilon(1e-10));
}

TEST_CASE("bc loss gradient agrees with finite differences") {
    // The Q-magnitude weight is detached, so the finite-difference oracle
    // freezes it at its unperturbed value; the analytic gradient of the full
    // loss must match the gradient of that frozen-weight surrogate.
    SacAgent agent = make_agent(23);
    Rng rng(24);
    NormalizedBatch b = make_batch(3, 3, 1, rng);
    Tensor obs = agent.make_obs_tensor(b);
    Tensor data_actions = Tensor::from({3, 1}, random_vector(3, rng, -0.9, 0.9));
    const double lambda = 0.1;

    Rng n0(25);
    const double frozen_weight = lambda * std::abs(agent.actor_loss_parts(obs, n0).mean_q);

    auto surrogate = [&] {
        Rng noise_rng(25);
        auto parts = agent.actor_loss_parts(obs, noise_rng);
        Tensor diff = sub(parts.sample.action, data_actions);
        return add(parts.loss, scale(mean_all(mul(diff, diff)), frozen_weight));
    };

    std::vector<Tensor> params;
    for (auto& p : agent.actor_params()) params.push_back(p.tensor);
    const double err = testutil::max_grad_rel_error(params, surrogate);
    CHECK(err < 1e-4);

    // analytic gradients of the implemented loss equal the surrogate's
    SacAgent::zero_grads(agent.actor_params());
    Rng n1(25);
    agent.bc_actor_loss(obs, data_actions, lambda, n1).backward();
    std::vector<std::vector<double>> bc_grads;
    for (auto& p : agent.actor_params()) bc_grads.push_back(p.tensor.grad());
    SacAgent::zero_grads(agent.actor_params());
    surrogate().backward();
    std::size_t k = 0;
    for (auto& p : agent.actor_params()) {
        CHECK(testutil::rel_error(bc_grads[k], p.tensor.grad()) < 1e-10);
        ++k;
    }
}

TEST_CASE("zero learning rate leaves parameters unchanged and rows unit") {
    SacAgent agent = make_agent(26);
    Rng rng(27);
    NormalizedBatch b = make_batch(4, 3, 1, rng);
    std::vector<std::vector<double>> before;
    for (auto& p : agent.critic_params()) before.push_back(p.tensor.value());
    agent.update(b, 0.0, rng);
    std::size_t i = 0;
    for (auto& p : agent.critic_params()) {
        for (std::size_t j = 0; j < before[i].size(); ++j)
            CHECK(p.tensor.value()[j] == doctest::Approx(before[i][j]).epsilon(1e-12));
        ++i;
    }
}

TEST_CASE("after an update all constrained rows have unit norm") {
    SacAgent agent = make_agent(28);
    Rng rng(29);
    NormalizedBatch b = make_batch(16, 3, 1, rng);
    for (int step = 0; step < 5; ++step) agent.update(b, 1e-3, rng);
    auto check_rows = [](std::vector<ParamRef>& params) {
        for (auto& p : params) {
            if (!p.constrained) continue;
            const std::int64_t rows = p.tensor.rows(), cols = p.tensor.cols();
            for (std::int64_t r = 0; r < rows; ++r) {
                double ss = 0.0;
                for (std::int64_t c = 0; c < cols; ++c)
                    ss += p.tensor.value()[r * cols + c] * p.tensor.value()[r * cols + c];
                CHECK(std::abs(std::sqrt(ss) - 1.0) < 1e-9);
            }
        }
    };
    check_rows(agent.actor_params());
    check_rows(agent.critic_params());
    check_rows(agent.target_params());
}

TEST_CASE("single-transition overfit: critic loss decreases") {
    SacAgent agent = make_agent(30);
    Rng rng(31);
    NormalizedBatch b = make_batch(1, 3, 1, rng);
    b.terminated = {1.0};  // stationary target: a point mass at the reward
    b.reward = {0.4};
    int violations = 0;
    double prev = 1e100;
    for (int step = 0; step < 100; ++step) {
        UpdateDiag diag;
        agent.update(b, 1e-3, rng, &diag);
        if (diag.critic_loss > prev) ++violations;
        prev = diag.critic_loss;
    }
    CHECK(violations <= 5);
}

TEST_CASE("q estimates never leave the support during updates") {
    SacAgent agent = make_agent(32);
    Rng rng(33);
    for (int step = 0; step < 30; ++step) {
        NormalizedBatch b = make_batch(8, 3, 1, rng);
        UpdateDiag diag;
        agent.update(b, 1e-3, rng, &diag);
        CHECK(diag.q_min >= agent.support().g_min);
        CHECK(diag.q_max <= agent.support().g_max);
    }
}

TEST_CASE("mse critic mode reduces to the squared bellman residual") {
    SacConfig sc;
    sc.mse_critic = true;
    sc.target_entropy = -0.5;
    SacAgent agent = make_agent(34, sc);
    Rng rng(35);
    NormalizedBatch b = make_batch(1, 3, 1, rng);
    b.terminated = {1.0};
    b.reward = {0.3};

    Tensor obs = Tensor::from({1, 3}, b.obs);
    Tensor act = Tensor::from({1, 1}, b.action);
    Tensor in = concat_lastaxis(obs, act);
    const double q1 = agent.critic1().forward(in).q.value()[0];
    const double q2 = agent.critic2().forward(in).q.value()[0];
    const double expected = (q1 - 0.3) * (q1 - 0.3) + (q2 - 0.3) * (q2 - 0.3);

    UpdateDiag diag;
    agent.update(b, 0.0, rng, &diag);  // lr 0: parameters frozen, loss readable
    CHECK(diag.critic_loss == doctest::Approx(expected).epsilon(1e-10));

    // and the loss decreases under training
    double first = diag.critic_loss, last = first;
    for (int i = 0; i < 50; ++i) {
        agent.update(b, 1e-3, rng, &diag);
        last = diag.critic_loss;
    }
    CHECK(last < first);
}

TEST_CASE("non-finite rewards abort the update with a numeric error") {
    SacAgent agent = make_agent(36);
    Rng rng(37);
    NormalizedBatch b = make_batch(2, 3, 1, rng);
    b.reward[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(agent.update(b, 1e-3, rng), NumericError);
}

TEST_CASE("hard target mode copies on the interval") {
    SacConfig sc;
    sc.hard_target = true;
    sc.hard_target_interval = 3;
    sc.target_entropy = -0.5;
    SacAgent agent = make_agent(38, sc);
    Rng rng(39);
    NormalizedBatch b = make_batch(4, 3, 1, rng);

    auto targets_equal_online = [&] {
        for (std::size_t i = 0; i < agent.target_params().size(); ++i) {
            const auto& t = agent.target_params()[i].tensor.value();
            const auto& o = agent.critic_params()[i].tensor.value();
            for (std::size_t j = 0; j < t.size(); ++j)
                if (std::abs(t[j] - o[j]) > 1e-12) return false;
        }
        return true;
    };

    agent.update(b, 1e-3, rng);
    CHECK_FALSE(targets_equal_online());  // update 1: no copy yet
    agent.update(b, 1e-3, rng);
    agent.update(b, 1e-3, rng);  // update 3: copy
    CHECK(targets_equal_online());
}

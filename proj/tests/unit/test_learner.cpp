#include "haven/learner.hpp"

#include "test_support.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <limits>

using namespace haven;

namespace {

TrainConfig one_step_config() {
  TrainConfig c;
  c.k = 1;
  c.n_macro_actions = 2;
  c.mixer = MixerKind::kVdn;
  return c;
}

}  // namespace

TEST_CASE("bootstrap target arithmetic", "[learner]") {
  CHECK(bootstrap_target(1.0, 2.0, false, 0.99) == Catch::Approx(2.98).epsilon(1e-15));
  CHECK(bootstrap_target(1.0, 2.0, true, 0.99) == 1.0);
}

TEST_CASE("value loss: R=1, max Q=2, V=3 gives 0.0004", "[learner]") {
  HierarchicalPolicy p(testing::tiny_dims(), 1);
  testing::force_output(p.value_parameters(), "value", {3.0});
  testing::force_output(p.macro_parameters(), "macro", {2.0, -1.0});
  Learner learner(one_step_config(), p);
  const auto batch = testing::batch_of({testing::single_step(1.0, false)});
  CHECK(std::abs(learner.value_loss(batch).item() - 0.0004) < 1e-9);
}

TEST_CASE("value loss: terminal step targets R alone", "[learner]") {
  HierarchicalPolicy p(testing::tiny_dims(), 1);
  testing::force_output(p.value_parameters(), "value", {1.0});
  testing::force_output(p.macro_parameters(), "macro", {50.0, 50.0});
  Learner learner(one_step_config(), p);
  CHECK(learner.value_loss(testing::batch_of({testing::single_step(1.0, true)})).item() == 0.0);
}

TEST_CASE("on-policy value loss bootstraps from V itself", "[learner]") {
  HierarchicalPolicy p(testing::tiny_dims(), 1);
  // V = 100 everywhere: 1 + 0.99 * 100 - 100 = 0.
  testing::force_output(p.value_parameters(), "value", {100.0});
  testing::force_output(p.macro_parameters(), "macro", {2.0, -1.0});
  Learner learner(one_step_config(), p);
  const auto batch = testing::batch_of({testing::single_step(1.0, false)});
  CHECK(std::abs(learner.value_loss_onpolicy(batch).item()) < 1e-9);
  // The off-policy target uses max Q = 2 instead: (1 + 1.98 - 100)^2.
  CHECK(std::abs(learner.value_loss(batch).item() - 97.02 * 97.02) < 1e-7);
  CHECK(learner.value_loss_onpolicy(testing::batch_of({testing::single_step(1.0, true)})).item() ==
        Catch::Approx(99.0 * 99.0).epsilon(1e-14));
}

TEST_CASE("macro Q loss with zeroed nets and unit segment rewards is 1", "[learner]") {
  HierarchicalPolicy p(testing::tiny_dims(), 1);
  testing::force_output(p.macro_parameters(), "macro", {0.0, 0.0});
  p.refresh_targets();
  Learner learner(one_step_config(), p);
  CHECK(learner.macro_q_loss(testing::batch_of({testing::single_step(1.0, false)})).item() == 1.0);
  CHECK(learner.macro_q_loss(testing::batch_of({testing::single_step(1.0, true)})).item() == 1.0);
  // Target equals prediction: Q = 100, R = 1 bootstraps to 1 + 99 = 100.
  testing::force_output(p.macro_parameters(), "macro", {100.0, 100.0});
  p.refresh_targets();
  CHECK(std::abs(learner.macro_q_loss(testing::batch_of({testing::single_step(1.0, false)})).item()) < 1e-9);
}

TEST_CASE("zero advantage: HAVEN reward equals HAVEN-E reward, HAVEN-I reward is 0", "[learner]") {
  HierarchicalPolicy p(testing::tiny_dims(), 1);
  testing::force_output(p.value_parameters(), "value", {100.0});
  const auto batch = testing::batch_of({testing::single_step(1.0, false)});
  for (auto [variant, expected] : {std::pair{Variant::kHaven, 1.0}, std::pair{Variant::kHavenE, 1.0},
                                   std::pair{Variant::kHavenI, 0.0}}) {
    TrainConfig c = one_step_config();
    c.variant = variant;
    Learner learner(c, p);
    INFO(to_string(variant));
    CHECK(std::abs(learner.low_level_rewards(batch)[0][0] - expected) < 1e-9);
  }
}

TEST_CASE("low-level loss matches hand-built targets under every variant", "[learner]") {
  const PolicyDims d = testing::tiny_dims();
  HierarchicalPolicy p(d, 4);
  testing::force_output(p.low_parameters(), "low", {0.5, 2.0});  // Q(., 0) = 0.5, Q(., 1) = 2
  p.refresh_targets();
  testing::force_output(p.low_parameters(), "low", {0.25, 1.0});  // online differs from target
  Rng rng(8);
  auto ep = testing::random_episode(d, 5, 3, true, rng);
  const auto batch = testing::batch_of({ep});
  for (Variant v : {Variant::kHaven, Variant::kHavenI, Variant::kHavenE}) {
    TrainConfig c;
    c.mixer = MixerKind::kVdn;
    c.variant = v;
    Learner learner(c, p);
    const auto ri = learner.intrinsic_rewards(batch)[0];
    double total = 0.0;
    for (std::size_t t = 0; t < 5; ++t) {
      double r = 0.0;
      if (v != Variant::kHavenI) r += ep.rewards[t];
      if (v != Variant::kHavenE) r += ri[t];
      const double target = t == 4 ? r : r + 0.99 * 2.0;
      const double q = ep.actions[t][0] == 0 ? 0.25 : 1.0;
      total += (target - q) * (target - q);
    }
    INFO(to_string(v));
    CHECK(std::abs(learner.low_q_loss(batch).item() - total / 5.0) < 1e-9);
  }
}

TEST_CASE("truncation on a segment boundary masks the last low-level step", "[learner]") {
  const PolicyDims d = testing::small_dims();
  HierarchicalPolicy p(d, 5);
  TrainConfig c;
  c.variant = Variant::kHavenE;
  Learner learner(c, p);
  Rng rng(9);
  auto ep = testing::random_episode(d, 6, 3, false, rng);
  const double base = learner.low_q_loss(testing::batch_of({ep})).item();
  ep.rewards[5] += 10.0;
  CHECK(learner.low_q_loss(testing::batch_of({ep})).item() == base);
  ep.rewards[4] += 10.0;
  CHECK(learner.low_q_loss(testing::batch_of({ep})).item() != base);
}

TEST_CASE("each loss reaches only its own parameters", "[learner]") {
  const PolicyDims d = testing::small_dims();
  HierarchicalPolicy p(d, 6);
  TrainConfig c;
  Learner learner(c, p);
  Rng rng(10);
  const auto batch = testing::batch_of({testing::random_episode(d, 7, 3, false, rng),
                                        testing::random_episode(d, 5, 3, true, rng)});
  auto grad_norm = [](const std::vector<NamedTensor>& params) {
    double s = 0.0;
    for (const auto& t : params)
      for (double g : t.tensor.grad()) s += g * g;
    return s;
  };
  auto clear = [&] {
    for (auto& t : p.all_parameters()) t.tensor.zero_grad();
  };
  struct Case {
    const char* name;
    std::function<Tensor()> loss;
    int owner;  // 0 value, 1 macro, 2 low
  };
  const std::vector<Case> cases{
      {"value", [&] { return learner.value_loss(batch); }, 0},
      {"value on-policy", [&] { return learner.value_loss_onpolicy(batch); }, 0},
      {"macro", [&] { return learner.macro_q_loss(batch); }, 1},
      {"low", [&] { return learner.low_q_loss(batch); }, 2},
  };
  for (const auto& cs : cases) {
    clear();
    cs.loss().backward();
    INFO(cs.name);
    CHECK((grad_norm(p.value_parameters()) > 0) == (cs.owner == 0));
    CHECK((grad_norm(p.macro_parameters()) > 0) == (cs.owner == 1));
    CHECK((grad_norm(p.low_parameters()) > 0) == (cs.owner == 2));
    CHECK(grad_norm(p.macro_target_parameters()) == 0);
    CHECK(grad_norm(p.low_target_parameters()) == 0);
  }
  clear();
}

TEST_CASE("update moves online nets and leaves targets until refresh", "[learner]") {
  const PolicyDims d = testing::small_dims();
  HierarchicalPolicy p(d, 7);
  TrainConfig c;
  Learner learner(c, p);
  Rng rng(11);
  const auto batch = testing::batch_of({testing::random_episode(d, 6, 3, false, rng)});
  const auto value0 = testing::snapshot(p.value_parameters());
  const auto macro0 = testing::snapshot(p.macro_parameters());
  const auto low0 = testing::snapshot(p.low_parameters());
  const auto tmacro = testing::snapshot(p.macro_target_parameters());
  const auto tlow = testing::snapshot(p.low_target_parameters());

  const auto high_only = learner.update_on(batch, std::nullopt);
  CHECK(high_only.value);
  CHECK(high_only.macro);
  CHECK_FALSE(high_only.low);
  CHECK(testing::snapshot(p.value_parameters()) != value0);
  CHECK(testing::snapshot(p.macro_parameters()) != macro0);
  CHECK(testing::snapshot(p.low_parameters()) == low0);

  learner.update_on(std::nullopt, batch);
  CHECK(testing::snapshot(p.low_parameters()) != low0);
  CHECK(testing::snapshot(p.macro_target_parameters()) == tmacro);
  CHECK(testing::snapshot(p.low_target_parameters()) == tlow);
  learner.refresh_targets();
  CHECK(testing::snapshot(p.macro_target_parameters()) == testing::snapshot(p.macro_parameters()));
  CHECK(testing::snapshot(p.low_target_parameters()) == testing::snapshot(p.low_parameters()));
}

TEST_CASE("a value update changes the recomputed intrinsic rewards", "[learner]") {
  const PolicyDims d = testing::small_dims();
  HierarchicalPolicy p(d, 12);
  TrainConfig c;
  Learner learner(c, p);
  Rng rng(12);
  ReplayMemory memory(4);
  memory.push(testing::random_episode(d, 9, 3, false, rng));
  const EpisodeBatch batch{{memory.high().at(0)}};
  const auto stored = memory.high().at(0)->rewards;
  const auto before = learner.intrinsic_rewards(batch);
  learner.update_on(batch, std::nullopt);
  const auto after = learner.intrinsic_rewards(EpisodeBatch{{memory.low().at(0)}});
  CHECK(before != after);
  CHECK(memory.low().at(0)->rewards == stored);
}

TEST_CASE("padding leaves every loss unchanged", "[learner]") {
  const PolicyDims d = testing::small_dims();
  HierarchicalPolicy p(d, 13);
  TrainConfig c;
  Learner learner(c, p);
  Rng rng(14);
  const auto a = testing::random_episode(d, 8, 3, false, rng);
  const auto b = testing::random_episode(d, 4, 3, true, rng);
  const auto ab = testing::batch_of({a, b});
  const auto only_a = testing::batch_of({a});
  const auto only_b = testing::batch_of({b});
  // Mean over unmasked steps: combine per-episode means by their step counts.
  auto combined = [](double la, double na, double lb, double nb) {
    return (la * na + lb * nb) / (na + nb);
  };
  CHECK(learner.value_loss(ab).item() ==
        Catch::Approx(combined(learner.value_loss(only_a).item(), 3, learner.value_loss(only_b).item(), 2))
            .epsilon(1e-12));
  CHECK(learner.macro_q_loss(ab).item() ==
        Catch::Approx(combined(learner.macro_q_loss(only_a).item(), 3,
                               learner.macro_q_loss(only_b).item(), 2))
            .epsilon(1e-12));
  CHECK(learner.low_q_loss(ab).item() ==
        Catch::Approx(combined(learner.low_q_loss(only_a).item(), 8,
                               learner.low_q_loss(only_b).item(), 4))
            .epsilon(1e-12));
}

TEST_CASE("value target uses online macro nets, macro target uses the copy", "[learner]") {
  const PolicyDims d = testing::small_dims();
  HierarchicalPolicy p(d, 15);
  TrainConfig c;
  Rng rng(16);
  const auto batch = testing::batch_of({testing::random_episode(d, 6, 3, false, rng)});
  Learner learner(c, p);
  const double v0 = learner.value_loss(batch).item();
  const double q0 = learner.macro_q_loss(batch).item();

  for (auto t : p.macro_target_parameters())
    for (double& x : t.tensor.mutable_values()) x *= 1.5;
  CHECK(learner.value_loss(batch).item() == v0);
  CHECK(learner.macro_q_loss(batch).item() != q0);

  c.value_target_uses_target_net = true;
  Learner flagged(c, p);
  CHECK(flagged.value_loss(batch).item() != v0);

  p.refresh_targets();
  for (auto t : p.macro_parameters())
    for (double& x : t.tensor.mutable_values()) x *= 1.5;
  CHECK(learner.value_loss(batch).item() != v0);
}

TEST_CASE("full losses pass a finite-difference check", "[learner]") {
  const PolicyDims d = testing::small_dims();
  HierarchicalPolicy p(d, 17);
  TrainConfig c;
  Learner learner(c, p);
  Rng rng(18);
  const auto batch = testing::batch_of({testing::random_episode(d, 5, 3, false, rng),
                                        testing::random_episode(d, 4, 3, true, rng)});
  const auto check = [&](const std::function<Tensor()>& loss, const std::vector<NamedTensor>& params) {
    return testing::check_gradients(loss, tensors_of(params), 60, rng).worst;
  };
  CHECK(check([&] { return learner.value_loss(batch); }, p.value_parameters()) < 1e-4);
  CHECK(check([&] { return learner.macro_q_loss(batch); }, p.macro_parameters()) < 1e-4);
  CHECK(check([&] { return learner.low_q_loss(batch); }, p.low_parameters()) < 1e-4);
}

TEST_CASE("epsilon schedule", "[learner]") {
  const TrainConfig c;
  CHECK(epsilon(0, c) == 1.0);
  CHECK(epsilon(25000, c) == Catch::Approx(0.525).epsilon(1e-15));
  CHECK(epsilon(10000, c) == Catch::Approx(0.81).epsilon(1e-15));
  CHECK(epsilon(50000, c) == Catch::Approx(0.05).epsilon(1e-15));
  CHECK(epsilon(1000000, c) == Catch::Approx(0.05).epsilon(1e-15));
}

TEST_CASE("flat variant never touches the high level", "[learner]") {
  TrainConfig c;
  c.variant = Variant::kFlat;
  c.env_id = "climb-po";
  c.total_env_steps = 300;
  c.batch_size = 4;
  c.eval_interval = 1000;
  c.eval_episodes = 2;
  c.hidden_dim = 8;
  c.mixer_embed_dim = 4;
  c.hypernet_hidden_dim = 4;
  Trainer trainer(c);
  std::vector<MetricRow> rows;
  trainer.run([&](const MetricRow& r) { rows.push_back(r); });
  CHECK_FALSE(trainer.policy().hierarchical());
  CHECK(trainer.memory().high().size() == 0);
  CHECK(trainer.memory().low().size() > 0);
  REQUIRE(rows.size() == 2);
  CHECK(std::isnan(rows.back().loss_v));
  CHECK(std::isnan(rows.back().loss_qh));
  CHECK(std::isfinite(rows.back().loss_ql));
}

TEST_CASE("non-finite parameters abort the update", "[learner]") {
  const PolicyDims d = testing::small_dims();
  HierarchicalPolicy p(d, 19);
  TrainConfig c;
  Learner learner(c, p);
  Rng rng(20);
  const auto batch = testing::batch_of({testing::random_episode(d, 4, 3, false, rng)});
  p.low_parameters().back().tensor.mutable_values()[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(learner.update_on(std::nullopt, batch), DivergenceError);
}

TEST_CASE("training is reproducible from the seed", "[learner]") {
  TrainConfig c;
  c.env_id = "climb-po";
  c.total_env_steps = 200;
  c.batch_size = 4;
  c.eval_interval = 100;
  c.eval_episodes = 2;
  c.hidden_dim = 8;
  c.mixer_embed_dim = 4;
  c.hypernet_hidden_dim = 4;
  auto run = [&] {
    Trainer t(c);
    std::vector<double> out;
    t.run([&](const MetricRow& r) {
      for (double x : {double(r.env_step), r.loss_v, r.loss_qh, r.loss_ql, r.train_return,
                       r.eval_return_mean})
        out.push_back(x);
    });
    const auto params = testing::snapshot(t.policy().all_parameters());
    out.insert(out.end(), params.begin(), params.end());
    return out;
  };
  const auto a = run();
  const auto b = run();
  // Byte-level equality; NaN losses compare by representation.
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
  CHECK(a.size() == b.size());
}

#include <doctest.h>

#include <cmath>
#include <vector>

#include "eafo/model.hpp"
#include "eafo/synthetic.hpp"

using namespace eafo;

namespace {

Dataset small_data(int n, int classes, int dim, std::uint64_t seed, double spread = 1.0) {
  SyntheticSpec spec;
  spec.num_examples = n;
  spec.num_classes = classes;
  spec.feature_dim = dim;
  spec.cluster_spread = spread;
  return generate_synthetic(spec, seed);
}

// Central finite differences of the batch loss, the reference for the
// analytic gradient.
ParamVector fd_gradient(const Model& model, const Dataset& data,
                        std::span<const std::size_t> batch, double h) {
  ParamVector fd(model.params.size());
  Model pert = model;
  for (std::size_t i = 0; i < fd.size(); ++i) {
    pert.params[i] = model.params[i] + h;
    const double up = loss_and_gradient(pert, data, batch).first;
    pert.params[i] = model.params[i] - h;
    const double dn = loss_and_gradient(pert, data, batch).first;
    pert.params[i] = model.params[i];
    fd[i] = (up - dn) / (2.0 * h);
  }
  return fd;
}

double rel_inf_error(const ParamVector& a, const ParamVector& b) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  }
  return diff / std::max(scale, 1e-12);
}

}  // namespace

TEST_CASE("zero-weight softmax gives uniform loss ln(C)") {
  for (int classes : {2, 4, 10}) {
    const auto data = small_data(40, classes, 6, 5);
    auto rng = make_stream(1, StreamPurpose::ModelInit);
    Model m = make_model({ModelSpec::Arch::LogisticRegression, {}}, 6, classes, rng);
    std::vector<std::size_t> batch{0, 1, 2, 3, 4};
    const auto [loss, grad] = loss_and_gradient(m, data, batch);
    CHECK(loss == doctest::Approx(std::log(static_cast<double>(classes))).epsilon(1e-12));
    CHECK(grad.size() == m.params.size());
  }
}

TEST_CASE("duplicated batch has the same mean loss and gradient") {
  const auto data = small_data(20, 3, 5, 9);
  auto rng = make_stream(2, StreamPurpose::ModelInit);
  Model m = make_model({ModelSpec::Arch::Mlp, {7}}, 5, 3, rng);
  std::vector<std::size_t> single{4};
  std::vector<std::size_t> doubled{4, 4};
  const auto a = loss_and_gradient(m, data, single);
  const auto b = loss_and_gradient(m, data, doubled);
  CHECK(a.first == doctest::Approx(b.first).epsilon(1e-14));
  for (std::size_t i = 0; i < a.second.size(); ++i)
    CHECK(a.second[i] == doctest::Approx(b.second[i]).epsilon(1e-12));
}

TEST_CASE("analytic gradient matches central finite differences") {
  // 20 random (architecture, params, batch) cases, all with <= 50 parameters.
  auto meta = make_stream(77, StreamPurpose::DataGen, 9);
  for (int trial = 0; trial < 20; ++trial) {
    const int classes = 2 + static_cast<int>(meta.below(3));
    const int dim = 2 + static_cast<int>(meta.below(4));
    const auto data = small_data(30, classes, dim, 100 + trial);
    ModelSpec spec;
    if (trial % 2 == 0) {
      spec.arch = ModelSpec::Arch::Mlp;
      spec.hidden = {2 + static_cast<int>(meta.below(3))};
    }
    auto init = make_stream(500 + trial, StreamPurpose::ModelInit);
    Model m = make_model(spec, dim, classes, init);
    REQUIRE(m.params.size() <= 50);
    for (auto& w : m.params) w += 0.4 * init.gaussian();
    std::vector<std::size_t> batch;
    for (int i = 0; i < 6; ++i) batch.push_back(meta.below(data.size()));
    const auto grad = loss_and_gradient(m, data, batch).second;
    const auto fd = fd_gradient(m, data, batch, 1e-5);
    CHECK(rel_inf_error(grad, fd) < 1e-5);
  }
}

TEST_CASE("local update: one step equals the plain gradient") {
  const auto data = small_data(60, 3, 4, 21);
  auto init = make_stream(3, StreamPurpose::ModelInit);
  Model m = make_model({ModelSpec::Arch::LogisticRegression, {}}, 4, 3, init);
  ClientShard shard{0, {}, 1.0};
  for (std::size_t i = 0; i < data.size(); ++i) shard.indices.push_back(i);

  auto rng = make_stream(4, StreamPurpose::Batch, 0, 0);
  const auto res = local_update_run(m, m.params, data, shard, 1, 0.1, 8, rng);

  auto rng2 = make_stream(4, StreamPurpose::Batch, 0, 0);
  std::vector<std::size_t> batch(8);
  for (auto& b : batch) b = shard.indices[rng2.below(shard.indices.size())];
  const auto [loss, grad] = loss_and_gradient(m, data, batch);
  CHECK(res.final_loss == loss);
  for (std::size_t i = 0; i < grad.size(); ++i) CHECK(res.aggregated_update[i] == grad[i]);
}

TEST_CASE("local update with zero learning rate sums the anchored gradient") {
  const auto data = small_data(50, 4, 5, 33);
  auto init = make_stream(5, StreamPurpose::ModelInit);
  Model m = make_model({ModelSpec::Arch::LogisticRegression, {}}, 5, 4, init);
  for (auto& w : m.params) w += 0.2 * init.gaussian();
  ClientShard shard{0, {}, 1.0};
  for (std::size_t i = 0; i < data.size(); ++i) shard.indices.push_back(i);

  // eta = 0 freezes the weights, so each per-step gradient is taken at
  // w_start; replaying the batch draws gives the exact expected sum.
  auto rng = make_stream(6, StreamPurpose::Batch, 0, 0);
  const auto res = local_update_run(m, m.params, data, shard, 3, 0.0, 4, rng);

  auto rng2 = make_stream(6, StreamPurpose::Batch, 0, 0);
  ParamVector expect(m.params.size(), 0.0);
  for (int step = 0; step < 3; ++step) {
    std::vector<std::size_t> batch(4);
    for (auto& b : batch) b = shard.indices[rng2.below(shard.indices.size())];
    const auto grad = loss_and_gradient(m, data, batch).second;
    for (std::size_t i = 0; i < expect.size(); ++i) expect[i] += grad[i];
  }
  for (std::size_t i = 0; i < expect.size(); ++i)
    CHECK(res.aggregated_update[i] == doctest::Approx(expect[i]).epsilon(1e-14));

  // with a one-example shard every batch is identical, so the frozen-weight
  // aggregate is exactly three times one gradient
  ClientShard one{0, {0}, 1.0};
  auto rng3 = make_stream(7, StreamPurpose::Batch, 0, 0);
  const auto res_one = local_update_run(m, m.params, data, one, 3, 0.0, 2, rng3);
  std::vector<std::size_t> batch{0, 0};
  const auto g = loss_and_gradient(m, data, batch).second;
  for (std::size_t i = 0; i < g.size(); ++i)
    CHECK(res_one.aggregated_update[i] == doctest::Approx(3.0 * g[i]).epsilon(1e-14));
}

TEST_CASE("two local steps replay as a manual chain on the same stream") {
  const auto data = small_data(40, 3, 6, 55);
  auto init = make_stream(8, StreamPurpose::ModelInit);
  Model m = make_model({ModelSpec::Arch::Mlp, {5}}, 6, 3, init);
  ClientShard shard{0, {}, 1.0};
  for (std::size_t i = 0; i < data.size(); ++i) shard.indices.push_back(i);
  const double eta = 0.05;

  auto rng = make_stream(9, StreamPurpose::Batch, 0, 0);
  const auto res = local_update_run(m, m.params, data, shard, 2, eta, 4, rng);

  auto rng2 = make_stream(9, StreamPurpose::Batch, 0, 0);
  Model cur = m;
  ParamVector agg(m.params.size(), 0.0);
  double last = 0.0;
  for (int step = 0; step < 2; ++step) {
    std::vector<std::size_t> batch(4);
    for (auto& b : batch) b = shard.indices[rng2.below(shard.indices.size())];
    const auto [loss, grad] = loss_and_gradient(cur, data, batch);
    last = loss;
    for (std::size_t i = 0; i < agg.size(); ++i) {
      agg[i] += grad[i];
      cur.params[i] -= eta * grad[i];
    }
  }
  CHECK(res.final_loss == last);
  for (std::size_t i = 0; i < agg.size(); ++i) CHECK(res.aggregated_update[i] == agg[i]);
}

TEST_CASE("I steps equal I chained single-step runs sharing one stream") {
  const auto data = small_data(64, 4, 5, 71);
  auto init = make_stream(10, StreamPurpose::ModelInit);
  Model m = make_model({ModelSpec::Arch::LogisticRegression, {}}, 5, 4, init);
  ClientShard shard{0, {}, 1.0};
  for (std::size_t i = 0; i < data.size(); ++i) shard.indices.push_back(i);
  const double eta = 0.02;
  const int I = 5;

  auto rng = make_stream(11, StreamPurpose::Batch, 0, 0);
  const auto whole = local_update_run(m, m.params, data, shard, I, eta, 8, rng);

  auto rng2 = make_stream(11, StreamPurpose::Batch, 0, 0);
  ParamVector w = m.params;
  ParamVector agg(m.params.size(), 0.0);
  double last = 0.0;
  for (int step = 0; step < I; ++step) {
    const auto one = local_update_run(m, w, data, shard, 1, eta, 8, rng2);
    last = one.final_loss;
    for (std::size_t i = 0; i < agg.size(); ++i) {
      agg[i] += one.aggregated_update[i];
      w[i] -= eta * one.aggregated_update[i];
    }
  }
  CHECK(whole.final_loss == last);
  for (std::size_t i = 0; i < agg.size(); ++i)
    CHECK(whole.aggregated_update[i] == doctest::Approx(agg[i]).epsilon(1e-13));
}

TEST_CASE("trajectories are bit-identical for identical seeds") {
  const auto data = small_data(48, 3, 4, 88);
  ClientShard shard{0, {}, 1.0};
  for (std::size_t i = 0; i < data.size(); ++i) shard.indices.push_back(i);
  ParamVector first;
  for (int run = 0; run < 2; ++run) {
    auto init = make_stream(12, StreamPurpose::ModelInit);
    Model m = make_model({ModelSpec::Arch::Mlp, {6}}, 4, 3, init);
    auto rng = make_stream(13, StreamPurpose::Batch, 0, 0);
    auto res = local_update_run(m, m.params, data, shard, 7, 0.03, 8, rng);
    if (run == 0)
      first = res.aggregated_update;
    else
      CHECK(first == res.aggregated_update);
  }
}

TEST_CASE("model-core error paths") {
  const auto data = small_data(20, 3, 4, 91);
  auto init = make_stream(14, StreamPurpose::ModelInit);
  Model m = make_model({ModelSpec::Arch::LogisticRegression, {}}, 4, 3, init);

  std::vector<std::size_t> empty;
  CHECK_THROWS_AS((void)loss_and_gradient(m, data, empty), config_error);

  Dataset wrong = data;
  wrong.feature_dim = 5;
  wrong.features.resize(wrong.size() * 5);
  std::vector<std::size_t> batch{0};
  CHECK_THROWS_AS((void)loss_and_gradient(m, wrong, batch), config_error);

  ClientShard hollow{0, {}, 1.0};
  auto rng = make_stream(15, StreamPurpose::Batch, 0, 0);
  CHECK_THROWS_AS((void)local_update_run(m, m.params, data, hollow, 1, 0.1, 4, rng),
                  config_error);
  ClientShard shard{0, {0, 1}, 1.0};
  CHECK_THROWS_AS((void)local_update_run(m, m.params, data, shard, 0, 0.1, 4, rng),
                  config_error);
}

TEST_CASE("apply_global_step arithmetic") {
  const ParamVector w{1.0, -2.0, 3.0};
  SUBCASE("zero update leaves weights unchanged") {
    const ParamVector zero(3, 0.0);
    CHECK(apply_global_step(w, zero, 0.7) == w);
  }
  SUBCASE("unit learning rate from zero weights negates the update") {
    const ParamVector zero(3, 0.0);
    const ParamVector agg{0.5, -1.5, 2.0};
    const auto out = apply_global_step(zero, agg, 1.0);
    for (std::size_t i = 0; i < 3; ++i) CHECK(out[i] == -agg[i]);
  }
  SUBCASE("entrywise scalar arithmetic") {
    auto rng = make_stream(16, StreamPurpose::DataGen);
    for (int trial = 0; trial < 50; ++trial) {
      ParamVector a(5), b(5);
      for (auto& x : a) x = rng.uniform(-3, 3);
      for (auto& x : b) x = rng.uniform(-3, 3);
      const double eta = rng.uniform(0, 2);
      const auto out = apply_global_step(a, b, eta);
      for (std::size_t i = 0; i < 5; ++i) CHECK(out[i] == a[i] - eta * b[i]);
    }
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS((void)apply_global_step(w, ParamVector{1.0}, 0.1), config_error);
  }
}

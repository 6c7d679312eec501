#include <doctest.h>

#include <cmath>

#include "dic/attention_control.hpp"
#include "dic/error.hpp"
#include "dic/rng.hpp"
#include "dic/schedule.hpp"

using namespace dic;

namespace {

TinyAttentionModel tiny(std::size_t layers = 4) {
  TinyModelConfig c;
  c.layers = layers;
  c.seed = 21;
  return TinyAttentionModel(c);
}

Tensor random_map(SeededRng& rng, std::size_t rows, std::size_t cols) {
  return softmax_rows(normal(rng, {rows, cols}));
}

}  // namespace

TEST_CASE("refine oracles") {
  SeededRng rng(1);
  const Tensor m = random_map(rng, 5, 3);
  const Alignment identity{{0, 1, 2}};
  CHECK(max_abs_diff(refine(m, m, identity), m) < 1e-15);

  const Tensor src = random_map(rng, 5, 4);
  const Alignment none{{std::nullopt, std::nullopt, std::nullopt}};
  CHECK(max_abs_diff(refine(src, m, none), m) < 1e-15);

  const Tensor hand = refine(Tensor::matrix({{0.7, 0.3}}), Tensor::matrix({{0.2, 0.8}}), Alignment{{0, std::nullopt}});
  CHECK(std::abs(hand.at(0, 0) - 0.7 / 1.5) < 1e-12);
  CHECK(std::abs(hand.at(0, 1) - 0.8 / 1.5) < 1e-12);
  CHECK(std::abs(hand.at(0, 0) - 0.4667) < 1e-4);
  CHECK(std::abs(hand.at(0, 1) - 0.5333) < 1e-4);

  CHECK_THROWS_AS(refine(src, m, Alignment{{0, 1}}), AlignmentError);
  CHECK_THROWS_AS(refine(src, m, Alignment{{0, 1, 7}}), AlignmentError);
}

TEST_CASE("refine rows stay stochastic") {
  SeededRng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor src = random_map(rng, 8, 5);
    const Tensor tgt = random_map(rng, 8, 4);
    const Tensor r = refine(src, tgt, Alignment{{4, std::nullopt, 0, 2}});
    for (std::size_t i = 0; i < r.rows(); ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < r.cols(); ++j) sum += r.at(i, j);
      CHECK(std::abs(sum - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("threshold_mask oracles") {
  const std::vector<std::size_t> col0{0};
  CHECK(threshold_mask(Tensor::matrix({{0.2}, {0.6}}), col0, 0.3) == std::vector<double>{0, 1});
  CHECK(threshold_mask(Tensor::matrix({{0.0}, {0.6}}), col0, 0.0) == std::vector<double>{1, 1});
  const std::vector<std::size_t> both{0, 1};
  CHECK(threshold_mask(Tensor::matrix({{0.1, 0.3}, {0.5, 0.1}}), both, 0.25) == std::vector<double>{0, 1});
  CHECK_THROWS_AS(threshold_mask(Tensor::matrix({{0.1}}), std::vector<std::size_t>{}, 0.3), ConfigError);
  CHECK_THROWS_AS(threshold_mask(Tensor::matrix({{0.1}}), std::vector<std::size_t>{3}, 0.3), DimensionError);

  SeededRng rng(3);
  const auto mask = threshold_mask(random_map(rng, 30, 4), std::vector<std::size_t>{1, 3}, 0.2);
  for (double v : mask) CHECK((v == 0.0 || v == 1.0));
}

TEST_CASE("local_edit boundary identities") {
  SeededRng rng(4);
  const Tensor zs = normal(rng, {1, 2, 4});
  const Tensor zt = normal(rng, {1, 2, 4});
  const std::vector<double> m{1, 0, 1, 1};
  CHECK(local_edit(zs, zt, m, m) == zs);
  const std::vector<double> zeros(4, 0.0), ones(4, 1.0);
  CHECK(local_edit(zs, zt, zeros, ones) == zt);

  const std::vector<double> first{1, 0, 0, 0};
  const Tensor out = local_edit(zs, zt, zeros, first);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == (i % 4 == 0 ? zt[i] : zs[i]));

  // Identical inputs give identical outputs; with m_src <= m_tgt a second
  // application changes nothing.
  const std::vector<double> ms{0, 0, 1, 0}, mt{1, 0, 1, 1};
  const Tensor once = local_edit(zs, zt, ms, mt);
  CHECK(local_edit(zs, zt, ms, mt) == once);
  CHECK(local_edit(zs, once, ms, mt) == once);

  CHECK_THROWS_AS(local_edit(zs, zt, std::vector<double>{1, 0}, m), DimensionError);
  CHECK_THROWS_AS(local_edit(zs, Tensor({1, 2, 5}), m, m), DimensionError);
}

TEST_CASE("local_edit through attention maps and blend words") {
  const auto src = encode_prompt("acoustic guitar music", 0);
  const auto tgt = encode_prompt("acoustic violin music", 0);
  const ResolvedBlend blend = resolve_blend({{"guitar"}, {"violin"}, 0.3, 0.3}, src, tgt);
  CHECK(blend.source_indices == std::vector<std::size_t>{1});
  CHECK(blend.target_indices == std::vector<std::size_t>{1});

  const Tensor m_src = Tensor::matrix({{0.1, 0.1, 0.8}, {0.1, 0.1, 0.8}});
  const Tensor m_tgt = Tensor::matrix({{0.1, 0.8, 0.1}, {0.1, 0.1, 0.8}});
  const Tensor zs({1, 1, 2}, std::vector<double>{1.0, 2.0});
  const Tensor zt({1, 1, 2}, std::vector<double>{10.0, 20.0});
  const Tensor out = local_edit(zs, zt, m_src, m_tgt, blend);
  CHECK(out[0] == 10.0);
  CHECK(out[1] == 2.0);

  try {
    resolve_blend({{"piano"}, {"violin"}, 0.3, 0.3}, src, tgt);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("piano") != std::string::npos);
  }
  CHECK_THROWS_AS(resolve_blend({{"guitar"}, {"violin"}, 0.0, 0.3}, src, tgt), ConfigError);
  CHECK_THROWS_AS(resolve_blend({{"guitar"}, {"violin"}, 0.3, 1.0}, src, tgt), ConfigError);
}

TEST_CASE("control schedule defaults and validation") {
  const auto s = ControlSchedule::defaults(200, 4);
  CHECK(s.tau_c == 120);
  CHECK(s.self_start == 40);
  CHECK(s.self_layer == 2);
  CHECK_NOTHROW(s.validate(200, 4));

  ControlSchedule bad = s;
  bad.tau_c = 202;
  CHECK_THROWS_AS(bad.validate(200, 4), ConfigError);
  bad = s;
  bad.self_layer = 5;
  CHECK_THROWS_AS(bad.validate(200, 4), ConfigError);

  const auto off = ControlSchedule::disabled(200);
  for (int t = 1; t <= 200; ++t) CHECK_FALSE(off.any_active(t, 200, 4));
}

TEST_CASE("cross_edit schedule boundaries") {
  SeededRng rng(5);
  const Tensor har = random_map(rng, 4, 3);
  const Tensor tgt = random_map(rng, 4, 3);
  const Alignment a{{0, std::nullopt, 2}};
  const Tensor refined = refine(har, tgt, a);

  ControlSchedule s;
  s.tau_c = 0;
  for (int t = 1; t <= 10; ++t) CHECK(cross_edit(har, tgt, t, a, s) == refined);
  s.tau_c = 11;
  for (int t = 1; t <= 10; ++t) CHECK(cross_edit(har, tgt, t, a, s) == tgt);
  s.tau_c = 6;
  CHECK(cross_edit(har, tgt, 6, a, s) == refined);
  CHECK(cross_edit(har, tgt, 5, a, s) == tgt);
  CHECK_THROWS_AS(cross_edit(har, tgt, 0, a, s), StepError);
}

TEST_CASE("self_edit selection") {
  SeededRng rng(6);
  const QkvTriple src{normal(rng, {4, 3}), normal(rng, {4, 3}), normal(rng, {4, 3})};
  const QkvTriple tgt{normal(rng, {4, 3}), normal(rng, {4, 3}), normal(rng, {4, 3})};
  ControlSchedule s;
  s.self_start = 3;
  s.self_layer = 2;
  const int T = 10;

  // Inactive: elapsed steps T - t = 2 < 3.
  auto sel = self_edit(src, tgt, 8, T, 3, s);
  CHECK(sel.q == &tgt.q);
  CHECK(sel.k == &tgt.k);
  CHECK(sel.v == &tgt.v);
  // Inactive: layer below threshold.
  sel = self_edit(src, tgt, 1, T, 1, s);
  CHECK(sel.k == &tgt.k);
  // Boundary: elapsed = S and l = L is active.
  sel = self_edit(src, tgt, 7, T, 2, s);
  CHECK(sel.q == &tgt.q);
  CHECK(sel.k == &src.k);
  CHECK(sel.v == &src.v);

  s.literal_self_edit = true;
  sel = self_edit(src, tgt, 7, T, 2, s);
  CHECK(sel.q == &src.q);
  CHECK(sel.k == &src.k);
  sel = self_edit(src, tgt, 9, T, 2, s);
  CHECK(sel.q == &tgt.q);
  CHECK(sel.k == &src.k);
  CHECK(sel.v == &src.v);

  s.self_enabled = false;
  sel = self_edit(src, tgt, 7, T, 2, s);
  CHECK(sel.k == &tgt.k);

  const QkvTriple wrong{normal(rng, {4, 2}), normal(rng, {4, 2}), normal(rng, {4, 2})};
  CHECK_THROWS_AS(self_edit(src, wrong, 7, T, 2, s), InjectionError);
}

TEST_CASE("hac_step needs an attention model") {
  const AnalyticGaussianModel analytic(make_schedule(10, 0.01, 0.02), {});
  const auto p = encode_prompt("a b", 0);
  const Tensor z(analytic.config().geometry.shape(), 0.0);
  try {
    hac_step(analytic, z, z, z, 5, 10, p, p, align(p, p), ControlSchedule::defaults(10, 4));
    FAIL("expected CapabilityError");
  } catch (const CapabilityError& e) {
    CHECK(std::string(e.what()) == "attention control requires an attention model");
  }
}

TEST_CASE("hac_step with every control off equals independent plain predictions") {
  const auto m = tiny();
  const auto src = encode_prompt("acoustic guitar music", 0);
  const auto tgt = encode_prompt("acoustic violin music", 0);
  SeededRng rng(7);
  const Shape shape = m.config().geometry.shape();
  const Tensor zs = normal(rng, shape), zt = normal(rng, shape), zh = normal(rng, shape);
  const auto off = ControlSchedule::disabled(50);
  for (bool harmonic : {true, false}) {
    ControlSchedule s = off;
    s.harmonic = harmonic;
    const auto r = hac_step(m, zs, zt, zh, 30, 50, src, tgt, align(src, tgt), s);
    CHECK(max_abs_diff(r.eps_src, m.predict(zs, 30, src)) <= 1e-9);
    CHECK(max_abs_diff(r.eps_tgt, m.predict(zt, 30, tgt)) <= 1e-9);
    CHECK(r.eps_tgt == m.predict(zt, 30, tgt));
    if (harmonic) {
      REQUIRE(r.eps_har.has_value());
      CHECK(*r.eps_har == m.predict(zh, 30, src));
    } else {
      CHECK_FALSE(r.eps_har.has_value());
    }
  }
}

TEST_CASE("hac_step symmetric degenerate case is bitwise identical across branches") {
  const auto m = tiny();
  const auto p = encode_prompt("soft piano melody", 0);
  SeededRng rng(8);
  const Tensor z = normal(rng, m.config().geometry.shape());
  const auto r = hac_step(m, z, z, z, 12, 20, p, p, align(p, p), ControlSchedule::disabled(20));
  CHECK(r.eps_src == r.eps_tgt);
  CHECK(r.eps_src == *r.eps_har);
}

TEST_CASE("hac_step matches a hand-stepped oracle over two steps") {
  const auto m = tiny();
  const auto src = encode_prompt("acoustic guitar music", 0);
  const auto tgt = encode_prompt("acoustic violin music", 0);
  const Alignment a = align(src, tgt);
  const NoiseSchedule sched = make_schedule(2, 0.1, 0.2);
  ControlSchedule s;
  s.tau_c = 2;  // cross control at t = 2 only
  s.self_start = 0;
  s.self_layer = 2;
  const std::size_t L = m.layers();

  SeededRng rng(9);
  const Tensor z0 = normal(rng, m.config().geometry.shape());
  Tensor hs = z0, ht = z0, hh = z0;  // hac_step path
  Tensor os = z0, ot = z0, oh = z0;  // oracle path
  for (int t = 2; t >= 1; --t) {
    const auto r = hac_step(m, hs, ht, hh, t, 2, src, tgt, a, s);

    const auto ps = m.predict_attention(os, t, src, {});
    const auto pt = m.predict_attention(ot, t, tgt, {});
    InjectionPlan har_plan = InjectionPlan::none(L);
    for (std::size_t l = 2; l < L; ++l) {
      har_plan.self_triples[l] =
          QkvTriple{pt.record.layers[l].self.q, ps.record.layers[l].self.k, ps.record.layers[l].self.v};
    }
    const auto ph = m.predict_attention(oh, t, src, har_plan);
    AttentionPrediction pt_hat = pt;
    if (t >= 2) {
      InjectionPlan tgt_plan = InjectionPlan::none(L);
      for (std::size_t l = 0; l < L; ++l) {
        tgt_plan.cross_maps[l] = refine(ph.record.layers[l].cross_map, pt.record.layers[l].cross_map, a);
      }
      pt_hat = m.predict_attention(ot, t, tgt, tgt_plan);
    }

    CHECK(r.eps_src == ps.eps);
    CHECK(*r.eps_har == ph.eps);
    CHECK(r.eps_tgt == pt_hat.eps);
    CHECK(r.map_tgt_hat == pt_hat.record.mean_cross_map());
    if (t == 2) CHECK_FALSE(r.eps_tgt == pt.eps);

    hs = ddim_forward_step(hs, r.eps_src, t, sched);
    ht = ddim_forward_step(ht, r.eps_tgt, t, sched);
    hh = ddim_forward_step(hh, *r.eps_har, t, sched);
    os = ddim_forward_step(os, ps.eps, t, sched);
    ot = ddim_forward_step(ot, pt_hat.eps, t, sched);
    oh = ddim_forward_step(oh, ph.eps, t, sched);
  }
  CHECK(hs == os);
  CHECK(ht == ot);
  CHECK(hh == oh);
}

TEST_CASE("hac_step without the harmonic branch injects source products directly") {
  const auto m = tiny();
  const auto src = encode_prompt("acoustic guitar music", 0);
  const auto tgt = encode_prompt("acoustic violin music", 0);
  const Alignment a = align(src, tgt);
  ControlSchedule s = ControlSchedule::defaults(10, m.layers());
  s.harmonic = false;
  s.tau_c = 5;
  s.self_start = 0;
  SeededRng rng(10);
  const Tensor zs = normal(rng, m.config().geometry.shape());
  const Tensor zt = normal(rng, m.config().geometry.shape());
  const auto r = hac_step(m, zs, zt, zs, 7, 10, src, tgt, a, s);

  const auto ps = m.predict_attention(zs, 7, src, {});
  const auto pt = m.predict_attention(zt, 7, tgt, {});
  InjectionPlan plan = InjectionPlan::none(m.layers());
  for (std::size_t l = 0; l < m.layers(); ++l) {
    if (l >= s.self_layer) {
      plan.self_triples[l] =
          QkvTriple{pt.record.layers[l].self.q, ps.record.layers[l].self.k, ps.record.layers[l].self.v};
    }
    plan.cross_maps[l] = refine(ps.record.layers[l].cross_map, pt.record.layers[l].cross_map, a);
  }
  CHECK(r.eps_tgt == m.predict_attention(zt, 7, tgt, plan).eps);
  CHECK_FALSE(r.eps_har.has_value());
}

TEST_CASE("identical prompts make cross control a map-level no-op") {
  SeededRng rng(11);
  const Tensor m = random_map(rng, 6, 4);
  const auto p = encode_prompt("a b c d", 0);
  CHECK(max_abs_diff(refine(m, m, align(p, p)), m) < 1e-15);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "dualtkg/decode.hpp"
#include "dualtkg/encoders.hpp"
#include "dualtkg/graphs.hpp"
#include "dualtkg/model.hpp"
#include "dualtkg/st_init.hpp"
#include "testutil.hpp"

using namespace dualtkg;
using testutil::check_gradients;

namespace {

double rrelu_s(double x) { return x >= 0 ? x : kRReluEvalSlope * x; }

std::vector<double> row_of(const Tensor& t, i64 i) {
  const i64 d = t.dim(1);
  return {t.data() + i * d, t.data() + (i + 1) * d};
}

std::vector<double> vecmat(const std::vector<double>& v, const Tensor& m) {
  const i64 in = m.dim(0), out = m.dim(1);
  REQUIRE(static_cast<i64>(v.size()) == in);
  std::vector<double> r(static_cast<std::size_t>(out), 0.0);
  for (i64 i = 0; i < in; ++i)
    for (i64 j = 0; j < out; ++j) r[static_cast<std::size_t>(j)] += v[static_cast<std::size_t>(i)] * m.at({i, j});
  return r;
}

std::vector<double> vadd(std::vector<double> a, const std::vector<double>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

void set_param(ParamRegistry& reg, const std::string& name, double value) {
  Tensor t = reg.find(name);
  for (i64 i = 0; i < t.numel(); ++i) t.mutable_data()[i] = value;
}

ViewSubgraph graph_of(std::vector<ViewEdge> edges, i64 nodes, i64 t_q) {
  ViewSubgraph g;
  g.timestamp = t_q;
  g.node_count = nodes;
  g.edges = std::move(edges);
  g.canonicalize();
  return g;
}

// ConvTransE-style composition replicated with scalar loops.
std::vector<double> dense_compose(const SpatioTemporalInit& st, const ParamRegistry& reg,
                                  const std::vector<double>& subj, const std::vector<double>& rel) {
  (void)st;
  const Tensor k = reg.find("st.compose.kernels");
  const Tensor bias = reg.find("st.compose.bias");
  const Tensor proj = reg.find("st.compose.proj");
  const i64 d = static_cast<i64>(subj.size());
  std::vector<double> fmap(static_cast<std::size_t>(2 * d), 0.0);
  const std::vector<const std::vector<double>*> chans{&subj, &rel};
  for (i64 o = 0; o < 2; ++o)
    for (i64 w = 0; w < d; ++w) {
      double s = bias.at({o});
      for (i64 c = 0; c < 2; ++c)
        for (i64 j = 0; j < 3; ++j) {
          const i64 src = w + j - 1;
          if (src >= 0 && src < d) s += (*chans[static_cast<std::size_t>(c)])[static_cast<std::size_t>(src)] * k.at({o, c, j});
        }
      fmap[static_cast<std::size_t>(o * d + w)] = s;
    }
  return vecmat(fmap, proj);
}

}  // namespace

TEST_CASE("temporal tag") {
  ParamRegistry reg;
  Rng rng(1);
  SpatioTemporalInit st(StInitConfig{4, 2, 3}, 3, 4, reg, rng);
  Tensor ents = Tensor::uniform({3, 4}, -1, 1, rng);

  // zero frequency and phase: the tag block is all ones
  set_param(reg, "st.time_freq", 0.0);
  set_param(reg, "st.time_phase", 0.0);
  Tensor tagged = st.temporal_tag(ents, 9, 2);
  Tensor expect = matmul(concat({ents, Tensor::full({3, 4}, 1.0)}, 1), reg.find("st.time_proj"));
  for (i64 i = 0; i < tagged.numel(); ++i) CHECK(tagged.data()[i] == expect.data()[i]);

  // offset zero leaves cos(phase)
  set_param(reg, "st.time_phase", 0.7);
  Tensor tag0 = st.temporal_tag(ents, 5, 5);
  Tensor expect0 =
      matmul(concat({ents, Tensor::full({3, 4}, std::cos(0.7))}, 1), reg.find("st.time_proj"));
  for (i64 i = 0; i < tag0.numel(); ++i) CHECK(testutil::approx(tag0.data()[i], expect0.data()[i], 1e-12));

  CHECK_THROWS_AS(st.temporal_tag(ents, 3, 5), ConfigError);

  // gradient w.r.t. the time-encoding scalars
  Tensor freq = reg.find("st.time_freq");
  Tensor phase = reg.find("st.time_phase");
  freq.mutable_data()[0] = 0.3;
  auto gc = check_gradients({freq, phase}, [&] { return sum_all(st.temporal_tag(ents, 9, 2)); });
  CHECK(gc.max_err < 1e-6);
  CHECK(gc.all_nonzero);
}

TEST_CASE("snapshot GCN") {
  ParamRegistry reg;
  Rng rng(2);
  const i64 d = 5;
  SpatioTemporalInit st(StInitConfig{d, 2, 3}, 4, 6, reg, rng);
  Tensor ents = Tensor::uniform({4, d}, -1, 1, rng);
  Tensor rels = Tensor::uniform({6, d}, -1, 1, rng);

  // empty snapshot: per-layer self transform only
  Snapshot empty{3, {}};
  Tensor out_empty = st.snapshot_gcn(empty, ents, rels);
  Tensor manual = ents;
  manual = rrelu_eval(matmul(manual, reg.find("st.gcn0.self")));
  manual = rrelu_eval(matmul(manual, reg.find("st.gcn1.self")));
  for (i64 i = 0; i < manual.numel(); ++i) CHECK(out_empty.data()[i] == manual.data()[i]);

  // dense reference on a 4-node toy
  Snapshot toy{3, {{0, 1, 2, 3}, {1, 0, 2, 3}, {3, 2, 1, 3}, {2, 4, 0, 3}}};
  Tensor got = st.snapshot_gcn(toy, ents, rels);

  std::vector<std::vector<double>> e(4), r(6);
  for (i64 i = 0; i < 4; ++i) e[static_cast<std::size_t>(i)] = row_of(ents, i);
  for (i64 i = 0; i < 6; ++i) r[static_cast<std::size_t>(i)] = row_of(rels, i);
  for (int layer = 0; layer < 2; ++layer) {
    const Tensor msg_w = reg.find("st.gcn" + std::to_string(layer) + ".msg");
    const Tensor self_w = reg.find("st.gcn" + std::to_string(layer) + ".self");
    std::vector<std::vector<double>> agg(4, std::vector<double>(d, 0.0));
    std::vector<int> indeg(4, 0);
    for (const auto& f : toy.facts) {
      auto m = vecmat(dense_compose(st, reg, e[static_cast<std::size_t>(f.subject)],
                                    r[static_cast<std::size_t>(f.relation)]),
                      msg_w);
      agg[static_cast<std::size_t>(f.object)] = vadd(agg[static_cast<std::size_t>(f.object)], m);
      ++indeg[static_cast<std::size_t>(f.object)];
    }
    std::vector<std::vector<double>> next(4);
    for (i64 o = 0; o < 4; ++o) {
      auto self = vecmat(e[static_cast<std::size_t>(o)], self_w);
      std::vector<double> total(d);
      for (i64 j = 0; j < d; ++j) {
        const double mean = indeg[static_cast<std::size_t>(o)]
                                ? agg[static_cast<std::size_t>(o)][static_cast<std::size_t>(j)] /
                                      indeg[static_cast<std::size_t>(o)]
                                : 0.0;
        total[static_cast<std::size_t>(j)] = rrelu_s(mean + self[static_cast<std::size_t>(j)]);
      }
      next[static_cast<std::size_t>(o)] = total;
    }
    e = next;
    if (layer == 0) {
      const Tensor upd = reg.find("st.gcn0.rel_update");
      for (auto& row : r) {
        auto nr = vecmat(row, upd);
        for (auto& v : nr) v = rrelu_s(v);
        row = nr;
      }
    }
  }
  // object 0 has in-degree 1 in the toy, so its update had no averaging
  for (i64 o = 0; o < 4; ++o)
    for (i64 j = 0; j < d; ++j)
      CHECK(testutil::approx(got.at({o, j}), e[static_cast<std::size_t>(o)][static_cast<std::size_t>(j)], 1e-9));
}

TEST_CASE("snapshot GCN is invariant to fact order") {
  ParamRegistry reg;
  Rng rng(3);
  SpatioTemporalInit st(StInitConfig{6, 2, 3}, 5, 4, reg, rng);
  Tensor ents = Tensor::uniform({5, 6}, -1, 1, rng);
  Tensor rels = Tensor::uniform({4, 6}, -1, 1, rng);
  Snapshot snap{2, {{0, 1, 2, 2}, {1, 0, 2, 2}, {3, 2, 2, 2}, {2, 3, 0, 2}, {4, 1, 3, 2}}};
  Tensor a = st.snapshot_gcn(snap, ents, rels);
  std::mt19937 shuffler(99);
  for (int trial = 0; trial < 5; ++trial) {
    Snapshot perm = snap;
    std::shuffle(perm.facts.begin(), perm.facts.end(), shuffler);
    Tensor b = st.snapshot_gcn(perm, ents, rels);
    for (i64 i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == b.data()[i]);
  }
}

TEST_CASE("evolve") {
  ParamRegistry reg;
  Rng rng(4);
  SpatioTemporalInit st(StInitConfig{5, 2, 3}, 5, 6, reg, rng);

  // no history: evolved state is the base tables
  auto base = st.evolve({}, 7);
  CHECK(base.entities.impl() == st.base_entities().impl());
  CHECK(base.relations.impl() == st.base_relations().impl());

  Snapshot s1{1, {{0, 0, 1, 1}, {2, 1, 3, 1}}};
  Snapshot s2{2, {{1, 3, 2, 2}, {0, 2, 4, 2}, {4, 0, 0, 2}}};
  std::vector<const Snapshot*> window{&s1, &s2};

  // deterministic bit-for-bit
  auto e1 = st.evolve(window, 4);
  auto e2 = st.evolve(window, 4);
  for (i64 i = 0; i < e1.entities.numel(); ++i)
    CHECK(e1.entities.data()[i] == e2.entities.data()[i]);
  CHECK(e1.entities.shape() == Shape{5, 5});
  CHECK(e1.relations.shape() == Shape{6, 5});

  CHECK_THROWS_AS(st.evolve({&s1, &s2}, 2), DataError);  // window not strictly before t_q

  // full parameter gradient flow through two evolution steps
  std::vector<Tensor> params;
  for (const auto& [name, t] : reg.entries()) params.push_back(t);
  Tensor weights = Tensor::uniform({5, 5}, -1, 1, rng);
  auto gc = check_gradients(
      params,
      [&] {
        auto ev = st.evolve(window, 4);
        return add(sum_all(mul(ev.entities, weights)), sum_all(ev.relations));
      },
      1e-5);
  CHECK(gc.max_err < 1e-4);
  CHECK(gc.all_nonzero);
}

TEST_CASE("relation decomposition") {
  ParamRegistry reg;
  Rng rng(5);
  EncoderConfig cfg;
  cfg.dim = 6;
  cfg.invariance_layers = 1;
  cfg.dynamics_layers = 1;
  cfg.dropout = 0.0;
  DualViewEncoders enc(cfg, reg, rng);
  Rng drop(0);

  Tensor rels = Tensor::uniform({4, 6}, -1, 1, rng, true);
  // zeroed modulation network collapses to the identity
  for (const char* name : {"decomp.inv.value_proj", "decomp.inv.gate_proj", "decomp.inv.out_proj"})
    set_param(reg, name, 0.0);
  auto [r_inv, r_dyn] = enc.decompose_relations(rels, false, drop);
  for (i64 i = 0; i < rels.numel(); ++i) CHECK(r_inv.data()[i] == rels.data()[i]);

  // zero relations stay zero under any modulation
  Tensor zero = Tensor::zeros({4, 6});
  auto [z_inv, z_dyn] = enc.decompose_relations(zero, false, drop);
  for (i64 i = 0; i < zero.numel(); ++i) {
    CHECK(z_inv.data()[i] == 0.0);
    CHECK(z_dyn.data()[i] == 0.0);
  }

  // gradients through the LN -> GEGLU -> Drop(eval) -> proj path
  std::vector<Tensor> params{reg.find("decomp.dyn.value_proj"), reg.find("decomp.dyn.gate_proj"),
                             reg.find("decomp.dyn.out_proj"), reg.find("decomp.dyn.ln_gain"),
                             reg.find("decomp.dyn.ln_bias"), rels};
  Tensor w = Tensor::uniform({4, 6}, -1, 1, rng);
  auto gc = check_gradients(params, [&] {
    auto [ri, rd] = enc.decompose_relations(rels, false, drop);
    return sum_all(mul(rd, w));
  });
  CHECK(gc.max_err < 1e-4);

  // view isolation: perturbing the dynamics gate leaves the invariance view bit-identical
  auto [before_inv, before_dyn] = enc.decompose_relations(rels, false, drop);
  Tensor gate = reg.find("decomp.dyn.out_proj");
  gate.mutable_data()[0] += 0.25;
  auto [after_inv, after_dyn] = enc.decompose_relations(rels, false, drop);
  for (i64 i = 0; i < rels.numel(); ++i) CHECK(before_inv.data()[i] == after_inv.data()[i]);
  bool changed = false;
  for (i64 i = 0; i < rels.numel(); ++i) changed |= before_dyn.data()[i] != after_dyn.data()[i];
  CHECK(changed);
}

TEST_CASE("interval encoding") {
  ParamRegistry reg;
  Rng rng(6);
  EncoderConfig cfg;
  cfg.dim = 8;
  cfg.invariance_layers = 1;
  cfg.dynamics_layers = 1;
  DualViewEncoders enc(cfg, reg, rng);

  set_param(reg, "edge.interval_freq", 0.0);
  set_param(reg, "edge.interval_phase", 0.0);
  Tensor flat = enc.encode_intervals({3, 7});
  const double expect = std::sqrt(1.0 / 8.0);
  for (i64 i = 0; i < flat.numel(); ++i) CHECK(testutil::approx(flat.data()[i], expect, 1e-12));

  Tensor freq = reg.find("edge.interval_freq");
  Tensor phase = reg.find("edge.interval_phase");
  Rng r2(7);
  for (i64 i = 0; i < 8; ++i) {
    freq.mutable_data()[i] = r2.uniform(0.1, 1.0);
    phase.mutable_data()[i] = r2.uniform(0, 3);
  }
  for (i64 dt : {1, 5, 40}) {
    Tensor e = enc.encode_intervals({dt});
    double norm = 0;
    for (i64 i = 0; i < 8; ++i) norm += e.data()[i] * e.data()[i];
    CHECK(std::sqrt(norm) <= 1.0 + 1e-12);
  }
  CHECK_THROWS_AS(enc.encode_intervals({0}), DataError);

  Tensor w = Tensor::uniform({3, 8}, -1, 1, r2);
  auto gc = check_gradients({freq, phase},
                            [&] { return sum_all(mul(enc.encode_intervals({2, 5, 9}), w)); });
  CHECK(gc.max_err < 1e-6);
  CHECK(gc.all_nonzero);
}

TEST_CASE("attention layers: dense reference, normalization, time sensitivity") {
  ParamRegistry reg;
  Rng rng(8);
  const i64 d = 5;
  EncoderConfig cfg;
  cfg.dim = d;
  cfg.invariance_layers = 1;
  cfg.dynamics_layers = 1;
  cfg.dropout = 0.0;
  DualViewEncoders enc(cfg, reg, rng);
  Tensor ents = Tensor::uniform({5, d}, -1, 1, rng);
  Tensor rels = Tensor::uniform({4, d}, -1, 1, rng);

  // single in-neighbor -> attention exactly 1
  auto single = graph_of({{1, 0, 3, 0}}, 5, 9);
  std::vector<double> attn;
  enc.layer(single, ents, rels, Tensor(), false, 0, &attn);
  REQUIRE(attn.size() == 1);
  CHECK(attn[0] == 1.0);

  // equal-scoring distinct edges split the mass evenly
  Tensor twins = ents.detach();
  for (i64 j = 0; j < d; ++j) twins.mutable_data()[2 * d + j] = twins.data()[1 * d + j];
  auto pair_graph = graph_of({{1, 0, 3, 0}, {2, 0, 3, 0}}, 5, 9);
  enc.layer(pair_graph, twins, rels, Tensor(), false, 0, &attn);
  REQUIRE(attn.size() == 2);
  CHECK(testutil::approx(attn[0], 0.5, 1e-12));
  CHECK(testutil::approx(attn[1], 0.5, 1e-12));

  // five-node toy vs. scalar-loop recomputation (invariance view)
  auto toy = graph_of({{0, 1, 2, 0}, {1, 0, 2, 0}, {3, 2, 2, 0}, {2, 3, 0, 0}, {4, 1, 0, 0}, {0, 2, 4, 0}},
                      5, 9);
  Tensor got = enc.layer(toy, ents, rels, Tensor(), false, 0, &attn);
  {
    const Tensor hid_w = reg.find("hige0.attn_hidden");
    const Tensor score_w = reg.find("hige0.attn_score");
    const Tensor msg_w = reg.find("hige0.msg_proj");
    const Tensor self_w = reg.find("hige0.self_proj");
    std::vector<double> logits;
    for (const auto& edge : toy.edges) {
      std::vector<double> cat = row_of(ents, edge.subject);
      auto rrow = row_of(rels, edge.relation);
      auto orow = row_of(ents, edge.object);
      cat.insert(cat.end(), rrow.begin(), rrow.end());
      cat.insert(cat.end(), orow.begin(), orow.end());
      auto hid = vecmat(cat, hid_w);
      for (auto& v : hid) v = rrelu_s(v);
      double logit = 0;
      for (i64 j = 0; j < d; ++j) logit += hid[static_cast<std::size_t>(j)] * score_w.at({j, 0});
      logits.push_back(std::clamp(logit, -50.0, 50.0));
    }
    std::vector<std::vector<double>> agg(5, std::vector<double>(d, 0.0));
    std::vector<double> theta(toy.edges.size(), 0.0);
    for (i64 node = 0; node < 5; ++node) {
      std::vector<std::size_t> mine;
      for (std::size_t eidx = 0; eidx < toy.edges.size(); ++eidx)
        if (toy.edges[eidx].object == node) mine.push_back(eidx);
      if (mine.empty()) continue;
      double mx = -1e300, denom = 0;
      for (auto eidx : mine) mx = std::max(mx, logits[eidx]);
      for (auto eidx : mine) denom += std::exp(logits[eidx] - mx);
      for (auto eidx : mine) theta[eidx] = std::exp(logits[eidx] - mx) / denom;
    }
    double theta_sum_check = 0;
    for (std::size_t eidx = 0; eidx < toy.edges.size(); ++eidx) {
      CHECK(testutil::approx(attn[eidx], theta[eidx], 1e-12));
      theta_sum_check += theta[eidx];
      const auto& edge = toy.edges[eidx];
      auto srow = row_of(ents, edge.subject);
      auto rrow = row_of(rels, edge.relation);
      std::vector<double> summed(static_cast<std::size_t>(d));
      for (i64 j = 0; j < d; ++j)
        summed[static_cast<std::size_t>(j)] =
            std::tanh(srow[static_cast<std::size_t>(j)] + rrow[static_cast<std::size_t>(j)]);
      auto msg = vecmat(summed, msg_w);
      for (i64 j = 0; j < d; ++j)
        agg[static_cast<std::size_t>(edge.object)][static_cast<std::size_t>(j)] +=
            theta[eidx] * msg[static_cast<std::size_t>(j)];
    }
    for (i64 node = 0; node < 5; ++node) {
      auto self = vecmat(row_of(ents, node), self_w);
      for (i64 j = 0; j < d; ++j) {
        const double expect = rrelu_s(agg[static_cast<std::size_t>(node)][static_cast<std::size_t>(j)] +
                                      self[static_cast<std::size_t>(j)]);
        CHECK(testutil::approx(got.at({node, j}), expect, 1e-9));
      }
    }
  }

  // attention over each node's in-edges sums to one
  std::vector<double> per_node(5, 0.0);
  for (std::size_t eidx = 0; eidx < toy.edges.size(); ++eidx)
    per_node[static_cast<std::size_t>(toy.edges[eidx].object)] += attn[eidx];
  for (i64 node = 0; node < 5; ++node)
    if (per_node[static_cast<std::size_t>(node)] != 0.0)
      CHECK(std::abs(per_node[static_cast<std::size_t>(node)] - 1.0) < 1e-9);

  // dynamics attention with intervals: dense reference and dt sensitivity
  auto dyn = graph_of({{1, 0, 3, 2}, {1, 0, 4, 2}, {2, 1, 3, 6}}, 5, 9);
  std::vector<i64> deltas;
  for (const auto& e : dyn.edges) deltas.push_back(e.delta_t);
  Tensor intervals = enc.encode_intervals(deltas);
  std::vector<double> dyn_attn;
  Tensor dgot = enc.layer(dyn, ents, rels, intervals, true, 0, &dyn_attn);
  {
    const Tensor hid_w = reg.find("edge0.attn_hidden");
    const Tensor score_w = reg.find("edge0.attn_score");
    std::vector<double> logits;
    for (std::size_t eidx = 0; eidx < dyn.edges.size(); ++eidx) {
      const auto& edge = dyn.edges[eidx];
      std::vector<double> cat = row_of(ents, edge.subject);
      auto rrow = row_of(rels, edge.relation);
      auto orow = row_of(ents, edge.object);
      auto trow = row_of(intervals, static_cast<i64>(eidx));
      cat.insert(cat.end(), rrow.begin(), rrow.end());
      cat.insert(cat.end(), orow.begin(), orow.end());
      cat.insert(cat.end(), trow.begin(), trow.end());
      auto hid = vecmat(cat, hid_w);
      for (auto& v : hid) v = rrelu_s(v);
      double logit = 0;
      for (i64 j = 0; j < d; ++j) logit += hid[static_cast<std::size_t>(j)] * score_w.at({j, 0});
      logits.push_back(std::clamp(logit, -50.0, 50.0));
    }
    // object 3 receives edges 0 and 2 in canonical order; recompute softly
    (void)dgot;
    std::vector<std::size_t> into3;
    for (std::size_t eidx = 0; eidx < dyn.edges.size(); ++eidx)
      if (dyn.edges[eidx].object == 3) into3.push_back(eidx);
    REQUIRE(into3.size() == 2);
    double mx = std::max(logits[into3[0]], logits[into3[1]]);
    const double denom = std::exp(logits[into3[0]] - mx) + std::exp(logits[into3[1]] - mx);
    CHECK(testutil::approx(dyn_attn[into3[0]], std::exp(logits[into3[0]] - mx) / denom, 1e-12));
  }

  // two edges identical except dt score differently when frequencies are nonzero
  auto same_pair = graph_of({{1, 0, 3, 2}, {1, 0, 3, 7}}, 5, 9);
  std::vector<i64> dts{same_pair.edges[0].delta_t, same_pair.edges[1].delta_t};
  std::vector<double> attn2;
  enc.layer(same_pair, ents, rels, enc.encode_intervals(dts), true, 0, &attn2);
  REQUIRE(attn2.size() == 2);
  CHECK(attn2[0] != attn2[1]);
}

TEST_CASE("encode_views composition and emptiness") {
  ParamRegistry reg;
  Rng rng(9);
  const i64 d = 6;
  EncoderConfig cfg;
  cfg.dim = d;
  cfg.invariance_layers = 2;
  cfg.dynamics_layers = 1;
  cfg.dropout = 0.0;
  DualViewEncoders enc(cfg, reg, rng);
  Tensor ents = Tensor::uniform({6, d}, -1, 1, rng);
  Tensor rels = Tensor::uniform({4, d}, -1, 1, rng);
  ViewSubgraph empty_inv = graph_of({}, 6, 5);
  ViewSubgraph empty_dyn = graph_of({}, 6, 5);
  Rng drop(0);

  // both graphs empty: per-layer self-transform stacks
  auto out = enc.encode(empty_inv, empty_dyn, ents, rels, false, drop, true, true);
  auto [ri, rd] = enc.decompose_relations(rels, false, drop);
  Tensor manual = ents;
  manual = rrelu_eval(matmul(manual, reg.find("hige0.self_proj")));
  manual = rrelu_eval(matmul(manual, reg.find("hige1.self_proj")));
  for (i64 i = 0; i < manual.numel(); ++i) CHECK(out.entities_inv.data()[i] == manual.data()[i]);

  // one-layer stack equals a direct layer call
  auto dyn = graph_of({{0, 1, 2, 3}, {1, 0, 2, 1}}, 6, 5);
  auto out2 = enc.encode(empty_inv, dyn, ents, rels, false, drop, false, true);
  std::vector<i64> deltas{dyn.edges[0].delta_t, dyn.edges[1].delta_t};
  Tensor direct = enc.layer(dyn, ents, rd, enc.encode_intervals(deltas), true, 0);
  for (i64 i = 0; i < direct.numel(); ++i) CHECK(out2.entities_dyn.data()[i] == direct.data()[i]);

  // gradient check through a 2-layer stack on the toy
  auto inv = graph_of({{0, 1, 2, 0}, {3, 0, 2, 0}, {2, 2, 4, 0}}, 6, 5);
  std::vector<Tensor> params;
  for (const auto& [name, t] : reg.entries()) params.push_back(t);
  Tensor w = Tensor::uniform({6, d}, -1, 1, rng);
  auto gc = check_gradients(params, [&] {
    Rng r(0);
    auto o = enc.encode(inv, dyn, ents, rels, false, r, true, true);
    return add(sum_all(mul(o.entities_inv, w)), sum_all(mul(o.entities_dyn, w)));
  });
  CHECK(gc.max_err < 1e-4);
}

TEST_CASE("edge-order invariance of encoders") {
  ParamRegistry reg;
  Rng rng(10);
  EncoderConfig cfg;
  cfg.dim = 5;
  cfg.invariance_layers = 1;
  cfg.dynamics_layers = 1;
  DualViewEncoders enc(cfg, reg, rng);
  Tensor ents = Tensor::uniform({7, 5}, -1, 1, rng);
  Tensor rels = Tensor::uniform({4, 5}, -1, 1, rng);

  std::vector<ViewEdge> edges{{0, 1, 2, 0}, {3, 0, 2, 0}, {5, 2, 2, 0}, {2, 3, 6, 0}, {1, 1, 6, 0}};
  auto a = enc.layer(graph_of(edges, 7, 9), ents, rels, Tensor(), false, 0);
  std::mt19937 shuffler(7);
  for (int trial = 0; trial < 4; ++trial) {
    auto perm = edges;
    std::shuffle(perm.begin(), perm.end(), shuffler);
    auto b = enc.layer(graph_of(perm, 7, 9), ents, rels, Tensor(), false, 0);
    for (i64 i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == b.data()[i]);
  }
}

TEST_CASE("query representations and contrastive alignment") {
  ParamRegistry reg;
  Rng rng(11);
  const i64 d = 6;
  Decoders dec(DecodeConfig{d, 3, 3, 0.0}, reg, rng);
  Rng drop(0);

  // identical networks + identical inputs give identical representations
  for (const char* suffix : {"ln_gain", "ln_bias", "value_proj", "gate_proj", "out_proj"}) {
    Tensor src = reg.find(std::string("query.inv.") + suffix);
    Tensor dst = reg.find(std::string("query.dyn.") + suffix);
    for (i64 i = 0; i < src.numel(); ++i) dst.mutable_data()[i] = src.data()[i];
  }
  Tensor subj = Tensor::uniform({3, d}, -1, 1, rng);
  Tensor rel = Tensor::uniform({3, d}, -1, 1, rng);
  auto [z_dyn, z_inv] = dec.query_representations(subj, rel, subj, rel, false, drop);
  CHECK(z_dyn.shape() == Shape{3, d});
  for (i64 i = 0; i < z_dyn.numel(); ++i) CHECK(z_dyn.data()[i] == z_inv.data()[i]);

  // single query: both directional losses vanish
  Tensor micro = Tensor::uniform({1, d}, -1, 1, rng);
  CHECK(contrastive_alignment(micro, Tensor::uniform({1, d}, -1, 1, rng), 0.5).item() == 0.0);

  // orthonormal matched pairs with orthogonal cross terms, temperature 1:
  // each direction is -log(e / (e + 1))
  Tensor zd = Tensor::from({2, 3}, {1, 0, 0, 0, 1, 0});
  Tensor zi = Tensor::from({2, 3}, {1, 0, 0, 0, 1, 0});
  const double expect = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
  CHECK(testutil::approx(contrastive_alignment(zd, zi, 1.0).item(), 2 * expect, 1e-9));
  CHECK(testutil::approx(expect, 0.3133, 5e-5));

  // symmetry under swapping the views
  Rng r2(12);
  Tensor a = Tensor::uniform({4, 8}, -1, 1, r2, true);
  Tensor b = Tensor::uniform({4, 8}, -1, 1, r2, true);
  CHECK(testutil::approx(contrastive_alignment(a, b, 0.4).item(),
                         contrastive_alignment(b, a, 0.4).item(), 1e-12));
  CHECK(contrastive_alignment(a, b, 0.4).item() >= 0.0);

  auto gc = check_gradients({a, b}, [&] { return contrastive_alignment(a, b, 0.4); });
  CHECK(gc.max_err < 1e-5);

  CHECK_THROWS_AS(contrastive_alignment(a, b, 0.0), ConfigError);
}

TEST_CASE("entity scoring and fusion") {
  ParamRegistry reg;
  Rng rng(13);
  const i64 d = 4;
  Decoders dec(DecodeConfig{d, 2, 3, 0.0}, reg, rng);
  Rng drop(0);
  Tensor table = Tensor::uniform({5, d}, -1, 1, rng);
  Tensor subj = Tensor::uniform({2, d}, -1, 1, rng);
  Tensor rel = Tensor::uniform({2, d}, -1, 1, rng);

  Tensor logits = dec.score_entities(subj, rel, table, false, false, drop);
  CHECK(logits.shape() == Shape{2, 5});

  // zero kernels and zero projection bias flatten every logit to the same value
  set_param(reg, "dec.entity_inv.kernels", 0.0);
  set_param(reg, "dec.entity_inv.conv_bias", 0.0);
  set_param(reg, "dec.entity_inv.proj_bias", 0.0);
  Tensor flat = dec.score_entities(subj, rel, table, false, false, drop);
  for (i64 q = 0; q < 2; ++q)
    for (i64 e = 1; e < 5; ++e) CHECK(flat.at({q, e}) == flat.at({q, 0}));

  // dense reference for the dynamics-view scorer
  {
    const Tensor k = reg.find("dec.entity_dyn.kernels");
    const Tensor cb = reg.find("dec.entity_dyn.conv_bias");
    const Tensor pj = reg.find("dec.entity_dyn.proj");
    const Tensor pb = reg.find("dec.entity_dyn.proj_bias");
    Tensor got = dec.score_entities(subj, rel, table, true, false, drop);
    for (i64 q = 0; q < 2; ++q) {
      auto srow = row_of(subj, q);
      auto rrow = row_of(rel, q);
      const std::vector<const std::vector<double>*> chans{&srow, &rrow};
      std::vector<double> fmap(static_cast<std::size_t>(2 * d));
      for (i64 o = 0; o < 2; ++o)
        for (i64 w = 0; w < d; ++w) {
          double s = cb.at({o});
          for (i64 c = 0; c < 2; ++c)
            for (i64 j = 0; j < 3; ++j) {
              const i64 src = w + j - 1;
              if (src >= 0 && src < d)
                s += (*chans[static_cast<std::size_t>(c)])[static_cast<std::size_t>(src)] * k.at({o, c, j});
            }
          fmap[static_cast<std::size_t>(o * d + w)] = std::max(0.0, s);
        }
      auto feats = vecmat(fmap, pj);
      for (i64 j = 0; j < d; ++j)
        feats[static_cast<std::size_t>(j)] = std::max(0.0, feats[static_cast<std::size_t>(j)] + pb.at({j}));
      for (i64 e = 0; e < 5; ++e) {
        double s = 0;
        for (i64 j = 0; j < d; ++j) s += feats[static_cast<std::size_t>(j)] * table.at({e, j});
        CHECK(testutil::approx(got.at({q, e}), s, 1e-9));
      }
    }
  }

  // fusion identities
  Tensor fd = Tensor::uniform({1, 5}, -1, 1, rng);
  Tensor zero = Tensor::zeros({1, 5});
  Tensor fused = fuse_scores(zero, fd);
  for (i64 i = 0; i < 5; ++i) CHECK(fused.data()[i] == fd.data()[i]);
  Tensor fi = Tensor::uniform({1, 5}, -1, 1, rng);
  Tensor ab = fuse_scores(fd, fi);
  Tensor ba = fuse_scores(fi, fd);
  for (i64 i = 0; i < 5; ++i) CHECK(ab.data()[i] == ba.data()[i]);
  CHECK_THROWS_AS(fuse_scores(fd, Tensor::zeros({1, 6})), ShapeError);

  // fusion can promote an entity neither view ranks first: the gold sits
  // third and fourth in the single views yet tops the fused scores
  Tensor view_dyn = Tensor::from({1, 9}, {5.1521, 5.1514, 5.1435, 4.4350, 4.3371, 4.0, 4.0, 4.0, 4.0});
  Tensor view_inv = Tensor::from({1, 9}, {4.0, 4.0, 4.3710, 4.0, 4.0, 4.6465, 4.4339, 4.4003, 4.2844});
  const i64 gold = 2;
  auto argmax = [](const Tensor& t) {
    i64 best = 0;
    for (i64 i = 1; i < t.numel(); ++i)
      if (t.data()[i] > t.data()[best]) best = i;
    return best;
  };
  CHECK(argmax(view_dyn) != gold);
  CHECK(argmax(view_inv) != gold);
  Tensor combined = fuse_scores(view_dyn, view_inv);
  CHECK(argmax(combined) == gold);
  CHECK(testutil::approx(combined.at({0, gold}), 9.5145, 1e-9));

  // scaling both views by one positive constant preserves the fused argmax
  Tensor scaled = fuse_scores(mul(view_dyn, 3.7), mul(view_inv, 3.7));
  CHECK(argmax(scaled) == gold);
}

TEST_CASE("joint loss") {
  Tensor e = Tensor::scalar(1.25);
  Tensor r = Tensor::scalar(0.5);
  Tensor c = Tensor::scalar(0.8);

  auto full = joint_loss(e, r, c, 0.7, 0.2);
  CHECK(testutil::approx(full.total.item(), 0.7 * 1.25 + 0.3 * 0.5 + 0.2 * 0.8, 1e-12));
  CHECK(testutil::approx(full.task, 0.7 * 1.25 + 0.3 * 0.5, 1e-12));

  auto entity_only = joint_loss(e, r, c, 1.0, 0.2);
  CHECK(testutil::approx(entity_only.total.item(), 1.25 + 0.2 * 0.8, 1e-12));

  auto no_coa = joint_loss(e, r, c, 0.7, 0.0);
  CHECK(testutil::approx(no_coa.total.item(), 0.7 * 1.25 + 0.3 * 0.5, 1e-12));

  CHECK_THROWS_AS(joint_loss(e, r, c, 1.5, 0.2), ConfigError);
  CHECK_THROWS_AS(joint_loss(e, r, c, 0.5, -0.1), ConfigError);
}

TEST_CASE("variant tags") {
  CHECK(VariantFlags::from_tag("full") == VariantFlags{});
  auto nd = VariantFlags::from_tag("no-dyn");
  CHECK(!nd.use_dynamics);
  CHECK(!nd.use_contrastive);
  auto compound = VariantFlags::from_tag("no-inv+simple-dyn");
  CHECK(!compound.use_invariance);
  CHECK(compound.simple_dynamics);
  auto cos = VariantFlags::from_tag("cos-te");
  CHECK(cos.cosine_time);
  CHECK(!cos.time_encoding);
  CHECK_THROWS_AS(VariantFlags::from_tag("no-everything"), ConfigError);
  CHECK_THROWS_AS(VariantFlags::from_tag("no-dyn+no-inv"), ConfigError);
}

namespace {

// 5 entities, 3 base relations (6 augmented), 6 timestamps.
struct ToyWorld {
  SnapshotSequence train;
  QuerySet queries;
  ViewSubgraph inv, dyn;
  Timeline timeline;
  std::vector<const Snapshot*> window;
  RuleIndex rules;

  explicit ToyWorld(i64 t_q = 5) {
    // repeated (s, r) patterns so both views produce nodes with several
    // in-edges (single-edge softmax has a constant-zero gradient)
    std::vector<Quadruple> raw{{0, 0, 1, 0}, {2, 1, 3, 0}, {1, 2, 4, 0}, {0, 0, 2, 1},
                               {2, 1, 4, 1}, {3, 0, 1, 1}, {0, 0, 3, 2}, {2, 1, 1, 2},
                               {1, 2, 3, 2}, {0, 0, 4, 3}, {3, 0, 2, 3}, {2, 1, 3, 3},
                               {0, 0, 1, 4}, {1, 2, 2, 4}, {3, 0, 4, 4}, {0, 0, 2, 5},
                               {2, 1, 4, 5}, {1, 2, 1, 5}, {3, 0, 3, 5}};
    train = group_into_snapshots(add_inverse(raw, 3));
    Rng mine_rng(5);
    SnapshotSequence before;
    for (const auto& s : train)
      if (s.timestamp < t_q) before.push_back(s);
    rules = mine_rules(before, MiningConfig{.min_body_support = 1}, mine_rng);
    queries = queries_at(train, t_q);
    HistoryIndex history;
    for (const auto& s : before) history.add_snapshot(s);
    inv = build_invariance(queries, history, 5);
    dyn = build_dynamics(queries, history, rules, 4, 5);
    timeline = Timeline::merge({&before});
    window = timeline.window_before(t_q, 3);
  }
};

ModelConfig toy_config() {
  ModelConfig cfg;
  cfg.dim = 6;
  cfg.gcn_layers = 2;
  cfg.history_window = 3;
  cfg.invariance_layers = 1;
  cfg.dynamics_layers = 1;
  cfg.decoder_channels = 2;
  cfg.decoder_kernel = 3;
  cfg.dropout = 0.0;
  cfg.alpha = 0.7;
  cfg.mu = 0.2;
  cfg.temperature = 0.5;
  return cfg;
}

}  // namespace

TEST_CASE("full model: loss determinism and variant equivalences") {
  ToyWorld world;
  Model model(toy_config(), 5, 6, 42);
  Model::Batch batch{5, &world.queries, world.window, &world.inv, &world.dyn};

  auto run_once = [&](bool with_tape) {
    if (with_tape) {
      Tape tape;
      Tape::Scope scope(tape);
      return model.run(batch, true, Rng(1234), true).losses.total.item();
    }
    return model.run(batch, true, Rng(1234), true).losses.total.item();
  };
  const double l1 = run_once(false);
  const double l2 = run_once(true);
  CHECK(l1 == l2);
  CHECK(std::isfinite(l1));

  // identically seeded models agree bitwise
  Model model2(toy_config(), 5, 6, 42);
  CHECK(model2.run(batch, true, Rng(1234), true).losses.total.item() == l1);

  // mu = 0 must equal the no-coa variant bitwise
  ModelConfig mu0 = toy_config();
  mu0.mu = 0.0;
  Model model_mu0(mu0, 5, 6, 42);
  ModelConfig nocoa = toy_config();
  nocoa.variant = VariantFlags::from_tag("no-coa");
  Model model_nocoa(nocoa, 5, 6, 42);
  CHECK(model_mu0.run(batch, true, Rng(7), true).losses.total.item() ==
        model_nocoa.run(batch, true, Rng(7), true).losses.total.item());

  // no-dyn equals scoring with the invariance view alone
  ModelConfig nd = toy_config();
  nd.variant = VariantFlags::from_tag("no-dyn");
  Model model_nd(nd, 5, 6, 42);
  auto fused = model_nd.run(batch, false, Rng(7), false).entity_logits;
  CHECK(fused.shape() == Shape{static_cast<i64>(world.queries.entity_queries.size()), 5});
}

TEST_CASE("full model: end-to-end gradients match finite differences") {
  ToyWorld world;
  Model model(toy_config(), 5, 6, 42);
  Model::Batch batch{5, &world.queries, world.window, &world.inv, &world.dyn};

  std::vector<Tensor> params;
  for (const auto& [name, t] : model.params().entries()) params.push_back(t);
  auto gc = check_gradients(
      params, [&] { return model.run(batch, true, Rng(99), true).losses.total; }, 1e-4);
  CAPTURE(gc.worst);
  CHECK(gc.max_err < 1e-4);
  CHECK(gc.all_nonzero);
}

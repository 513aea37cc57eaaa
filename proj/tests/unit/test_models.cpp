#include <cmath>
#include <cstdio>
#include <vector>

#include "doctest.h"
#include "edd/models.hpp"
#include "edd/optimizer.hpp"

using namespace edd;

namespace {

ArchitectureConfig small_arch() {
  ArchitectureConfig a;
  a.input_channels = 3;
  a.input_length = 48;
  a.base_filters = {8, 12, 16};
  a.kernel_widths = {9, 7, 5};
  a.hidden_units = 24;
  return a;
}

Tensor random_batch(std::size_t B, const ArchitectureConfig& a, std::uint64_t seed) {
  Rng rng(seed);
  Tensor x({B, a.input_channels, a.input_length});
  for (double& v : x.values) v = rng.normal();
  return x;
}

std::unordered_map<std::string, Tensor> snapshot(const ModelParameters& m) {
  std::unordered_map<std::string, Tensor> s;
  for (const auto& [name, t] : m.named_parameters()) s.emplace(name, *t);
  return s;
}

}  // namespace

TEST_CASE("width multiplier scales filter counts with ceiling") {
  ArchitectureConfig arch;  // defaults: 32/64/96
  Rng rng(1);
  ModelParameters m1 = build_base(arch, 1.0, rng);
  CHECK(m1.conv[0].weight.dim(0) == 32);
  CHECK(m1.conv[1].weight.dim(0) == 64);
  CHECK(m1.conv[2].weight.dim(0) == 96);
  Rng rng2(1);
  ModelParameters m075 = build_base(arch, 0.75, rng2);
  CHECK(m075.conv[0].weight.dim(0) == 24);
  CHECK(m075.conv[1].weight.dim(0) == 48);
  CHECK(m075.conv[2].weight.dim(0) == 72);
  Rng rng3(1);
  ModelParameters m11 = build_base(arch, 1.1, rng3);
  CHECK(m11.conv[0].weight.dim(0) == 36);  // ceil(35.2)
}

TEST_CASE("identical seeds build identical initial weights") {
  Rng a(42), b(42);
  ModelParameters ma = build_base(small_arch(), 1.0, a);
  ModelParameters mb = build_base(small_arch(), 1.0, b);
  add_head(ma, 4, a);
  add_head(mb, 4, b);
  auto sa = snapshot(ma), sb = snapshot(mb);
  for (const auto& [name, t] : sa) CHECK(t.values == sb.at(name).values);
}

TEST_CASE("input shorter than the receptive field is rejected") {
  ArchitectureConfig arch = small_arch();
  CHECK(arch.receptive_field() == 19);
  arch.input_length = 18;
  Rng rng(1);
  CHECK_THROWS(build_base(arch, 1.0, rng));
  arch.input_length = 19;
  CHECK_NOTHROW(build_base(arch, 1.0, rng));
}

TEST_CASE("classifier with a zeroed output layer predicts exactly uniform") {
  Rng rng(3);
  ModelParameters m = build_base(small_arch(), 1.0, rng);
  add_head(m, 5, rng);
  for (double& v : m.heads[0].out.weight.values) v = 0.0;
  for (double& v : m.heads[0].out.bias.values) v = 0.0;
  const Tensor probs = forward_classifier(m, random_batch(3, m.arch, 10));
  REQUIRE(probs.shape == std::vector<std::size_t>{3, 5});
  for (double p : probs.values) CHECK(p == 0.2);
}

TEST_CASE("classifier rows are valid distributions") {
  Rng rng(4);
  ModelParameters m = build_base(small_arch(), 1.0, rng);
  add_head(m, 4, rng);
  const Tensor probs = forward_classifier(m, random_batch(7, m.arch, 11));
  REQUIRE(probs.dim(0) == 7);
  for (std::size_t b = 0; b < 7; ++b) {
    double s = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(probs.at2(b, k) >= 0.0);
      s += probs.at2(b, k);
    }
    CHECK(std::fabs(s - 1.0) < 1e-9);
  }
}

TEST_CASE("log of classifier output equals log-softmax of the logits") {
  Rng rng(5);
  ModelParameters m = build_base(small_arch(), 1.0, rng);
  add_head(m, 4, rng);
  const Tensor x = random_batch(2, m.arch, 12);

  Tape tape(Tape::Mode::inference);
  BoundModel bm = bind_model(tape, m, false);
  VarId feats = forward_base(tape, bm, tape.leaf(x), nullptr);
  const Tensor logits = tape.value(forward_head_logits(tape, bm, 0, feats, nullptr));
  const Tensor probs = forward_classifier(m, x);

  for (std::size_t b = 0; b < 2; ++b) {
    double mx = logits.at2(b, 0);
    for (std::size_t k = 1; k < 4; ++k) mx = std::max(mx, logits.at2(b, k));
    double lse = 0.0;
    for (std::size_t k = 0; k < 4; ++k) lse += std::exp(logits.at2(b, k) - mx);
    lse = mx + std::log(lse);
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(std::log(probs.at2(b, k)) ==
            doctest::Approx(logits.at2(b, k) - lse).epsilon(1e-10));
    }
  }
}

TEST_CASE("zero logits give the flat Dirichlet at any temperature") {
  Rng rng(6);
  ModelParameters m = build_base(small_arch(), 1.0, rng);
  add_head(m, 4, rng);
  for (double& v : m.heads[0].out.weight.values) v = 0.0;
  for (double& v : m.heads[0].out.bias.values) v = 0.0;
  for (double t : {1.0, 2.0, 10.0}) {
    const Tensor alpha = forward_dirichlet_alpha(m, random_batch(2, m.arch, 13), t);
    for (double a : alpha.values) CHECK(a == 1.0);
  }
}

TEST_CASE("doubling the temperature halves log alpha") {
  Rng rng(7);
  ModelParameters m = build_base(small_arch(), 1.0, rng);
  add_head(m, 4, rng);
  const Tensor x = random_batch(3, m.arch, 14);
  const Tensor a1 = forward_dirichlet_alpha(m, x, 2.0);
  const Tensor a2 = forward_dirichlet_alpha(m, x, 4.0);
  for (std::size_t i = 0; i < a1.numel(); ++i)
    CHECK(std::log(a2.values[i]) ==
          doctest::Approx(0.5 * std::log(a1.values[i])).epsilon(1e-12));
}

TEST_CASE("alpha stays inside the clamp bounds for extreme logits") {
  Rng rng(8);
  ModelParameters m = build_base(small_arch(), 1.0, rng);
  add_head(m, 3, rng);
  for (double& v : m.heads[0].out.weight.values) v *= 500.0;
  const Tensor alpha = forward_dirichlet_alpha(m, random_batch(4, m.arch, 15), 1.0);
  for (double a : alpha.values) {
    CHECK(a >= kAlphaClampLo);
    CHECK(a <= kAlphaClampHi);
  }
}

TEST_CASE("temperatures below one are rejected for the Dirichlet head") {
  Rng rng(9);
  ModelParameters m = build_base(small_arch(), 1.0, rng);
  add_head(m, 3, rng);
  CHECK_THROWS(forward_dirichlet_alpha(m, random_batch(1, m.arch, 16), 0.5));
}

TEST_CASE("pretext forward emits one probability per head") {
  Rng rng(10);
  ModelParameters m = build_base(small_arch(), 1.0, rng);
  for (int h = 0; h < 8; ++h) add_head(m, 1, rng);
  const Tensor probs = forward_pretext(m, random_batch(5, m.arch, 17));
  REQUIRE(probs.shape == std::vector<std::size_t>{5, 8});
  for (double p : probs.values) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
}

TEST_CASE("zeroed pretext heads output exactly one half") {
  Rng rng(11);
  ModelParameters m = build_base(small_arch(), 1.0, rng);
  for (int h = 0; h < 8; ++h) add_head(m, 1, rng);
  for (auto& head : m.heads) {
    for (double& v : head.out.weight.values) v = 0.0;
    for (double& v : head.out.bias.values) v = 0.0;
  }
  const Tensor probs = forward_pretext(m, random_batch(2, m.arch, 18));
  for (double p : probs.values) CHECK(p == 0.5);
}

TEST_CASE("pretext heads are isolated: zero cross-head gradients") {
  Rng rng(12);
  ModelParameters m = build_base(small_arch(), 1.0, rng);
  for (int h = 0; h < 3; ++h) add_head(m, 1, rng);
  Tape tape;
  BoundModel bm = bind_model(tape, m, true);
  VarId x = tape.leaf(random_batch(2, m.arch, 19), false);
  VarId feats = forward_base(tape, bm, x, nullptr);
  VarId loss = tape.mean(tape.sigmoid(forward_head_logits(tape, bm, 0, feats, nullptr)));
  auto grads = tape.backward(loss);
  for (const std::string suffix :
       {".hidden.weight", ".hidden.bias", ".out.weight", ".out.bias"}) {
    for (double g : grads.at(bm.id("head1" + suffix)).values) CHECK(g == 0.0);
    for (double g : grads.at(bm.id("head2" + suffix)).values) CHECK(g == 0.0);
    bool any = false;
    for (double g : grads.at(bm.id("head0" + suffix)).values) any = any || g != 0.0;
    CHECK(any);
  }
}

TEST_CASE("transfer_base copies weights and marks freezes") {
  Rng rng(13);
  ModelParameters src = build_base(small_arch(), 1.0, rng);
  add_head(src, 8, rng);
  Rng rng2(14);
  ModelParameters dst = build_base(small_arch(), 1.0, rng2);
  add_head(dst, 4, rng2);

  transfer_base(src, dst, 0);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(dst.conv[i].weight.values == src.conv[i].weight.values);
    CHECK_FALSE(dst.conv[i].frozen);
  }

  transfer_base(src, dst, 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(dst.conv[i].frozen);
  CHECK(dst.frozen_names().size() == 6);

  // Head weights are untouched by the transfer.
  CHECK(dst.heads[0].out.weight.dim(0) == 4);
}

TEST_CASE("transfer_base then forward matches the source base features") {
  Rng rng(15);
  ModelParameters src = build_base(small_arch(), 1.0, rng);
  add_head(src, 8, rng);
  Rng rng2(16);
  ModelParameters dst = build_base(small_arch(), 1.0, rng2);
  add_head(dst, 4, rng2);
  transfer_base(src, dst, 1);

  const Tensor x = random_batch(3, src.arch, 20);
  Tape t1(Tape::Mode::inference), t2(Tape::Mode::inference);
  BoundModel b1 = bind_model(t1, src, false), b2 = bind_model(t2, dst, false);
  const Tensor f1 = t1.value(forward_base(t1, b1, t1.leaf(x), nullptr));
  const Tensor f2 = t2.value(forward_base(t2, b2, t2.leaf(x), nullptr));
  CHECK(f1.values == f2.values);
}

TEST_CASE("mismatched architectures refuse to transfer") {
  Rng rng(17);
  ModelParameters src = build_base(small_arch(), 1.0, rng);
  ModelParameters dst = build_base(small_arch(), 0.8, rng);
  CHECK_THROWS(transfer_base(src, dst, 0));
  ModelParameters dst2 = build_base(small_arch(), 1.0, rng);
  CHECK_THROWS(transfer_base(src, dst2, 4));
}

TEST_CASE("frozen layers are bit-identical after optimizer steps on a real loss") {
  Rng rng(18);
  ModelParameters src = build_base(small_arch(), 1.0, rng);
  ModelParameters m = build_base(small_arch(), 1.0, rng);
  add_head(m, 4, rng);
  transfer_base(src, m, 2);
  const auto before = snapshot(m);

  Adam opt;
  for (int step = 0; step < 5; ++step) {
    Tape tape;
    BoundModel bm = bind_model(tape, m, true);
    VarId x = tape.leaf(random_batch(4, m.arch, 21 + step), false);
    VarId probs = forward_classifier_graph(tape, bm, x, nullptr);
    VarId loss = tape.neg(tape.mean(tape.log(tape.clamp(probs, 1e-12, 1.0))));
    auto grads_by_id = tape.backward(loss);

    std::unordered_map<std::string, Tensor> params, grads;
    for (auto& [name, t] : m.named_parameters()) params.emplace(name, *t);
    for (auto& [name, id] : bm.ids)
      if (auto it = grads_by_id.find(id); it != grads_by_id.end())
        grads.emplace(name, std::move(it->second));
    opt.step(params, grads, m.frozen_names());
    for (auto& [name, t] : m.named_parameters()) *t = params.at(name);
  }

  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(m.conv[i].weight.values == before.at(m.conv[i].name + ".weight").values);
    CHECK(m.conv[i].bias.values == before.at(m.conv[i].name + ".bias").values);
  }
  CHECK(m.conv[2].weight.values != before.at("conv2.weight").values);
  CHECK(m.heads[0].out.weight.values != before.at("head0.out.weight").values);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  Rng rng(19);
  ModelParameters m = build_base(small_arch(), 0.9, rng);
  add_head(m, 6, rng);
  add_head(m, 1, rng);
  m.conv[0].frozen = true;
  const std::string path = "/tmp/edd_model_test.bin";
  save_model(m, path, 0xDEADBEEFCAFEBABEull);

  std::uint64_t state = 0;
  ModelParameters r = load_model(path, &state);
  CHECK(state == 0xDEADBEEFCAFEBABEull);
  CHECK(r.width_multiplier == m.width_multiplier);
  CHECK(r.arch.input_channels == m.arch.input_channels);
  CHECK(r.arch.base_filters == m.arch.base_filters);
  CHECK(r.conv[0].frozen);
  CHECK_FALSE(r.conv[1].frozen);
  REQUIRE(r.heads.size() == 2);
  auto sm = snapshot(m), sr = snapshot(r);
  for (const auto& [name, t] : sm) CHECK(t.values == sr.at(name).values);

  // And the loaded model computes identical outputs.
  const Tensor x = random_batch(2, m.arch, 22);
  CHECK(forward_classifier(m, x).values == forward_classifier(r, x).values);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint loading rejects corrupt files") {
  const std::string path = "/tmp/edd_model_garbage.bin";
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fputs("EDDXptrash", f);
    std::fclose(f);
  }
  CHECK_THROWS(load_model(path));
  CHECK_THROWS(load_model("/tmp/edd_model_missing.bin"));
  std::remove(path.c_str());
}

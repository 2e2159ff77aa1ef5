#include <cmath>

#include "doctest.h"

#include "capfuse/fusion.hpp"

#include "oracles.hpp"

using namespace capfuse;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                     bool requires_grad = true) {
  std::vector<float> v(shape_numel(shape));
  for (float& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return Tensor::leaf(std::move(shape), std::move(v), requires_grad);
}

oracles::Mat to_mat(const Tensor& t) {
  oracles::Mat m(static_cast<std::size_t>(t.dim(0)),
                 oracles::Vec(static_cast<std::size_t>(t.dim(1))));
  for (int r = 0; r < t.dim(0); ++r) {
    for (int c = 0; c < t.dim(1); ++c) m[r][c] = t.at(static_cast<std::size_t>(r) * t.dim(1) + c);
  }
  return m;
}

oracles::Vec to_vec(const Tensor& t) {
  return oracles::Vec(t.values().begin(), t.values().end());
}

FusionParams random_fusion(int n, int d, int a, int h_dim, Rng& rng) {
  FusionParams f;
  f.embed_relu = false;
  for (int i = 0; i < n; ++i) {
    f.modality_names.push_back("m" + std::to_string(i));
    f.attn_v.push_back(random_tensor({d, a}, rng));
  }
  f.attn_h = random_tensor({h_dim, a}, rng);
  f.attn_out = random_tensor({a, n}, rng);
  return f;
}

}  // namespace

TEST_CASE("embed_modalities zero params give zero embeddings") {
  ParamStore store;
  Rng rng(1);
  FusionParams f = FusionParams::init(store, "fusion", {{"motion", 3}, {"audio", 2}}, 4, 4, 4,
                                      /*embed_relu=*/true, rng);
  for (auto& [path, t] : store.entries()) {
    std::fill(t.values_mut().begin(), t.values_mut().end(), 0.0f);
  }
  FeatureBundle b;
  b.video_id = "v";
  Matrix m1(5, 3);
  std::fill(m1.data.begin(), m1.data.end(), 0.7f);
  Matrix m2(5, 2);
  std::fill(m2.data.begin(), m2.data.end(), -0.3f);
  b.modalities.emplace_back("motion", std::move(m1));
  b.modalities.emplace_back("audio", std::move(m2));

  Tape tape;
  const auto v = embed_modalities(tape, b, f);
  REQUIRE(v.size() == 2);
  for (const Tensor& vi : v) {
    CHECK(vi.dim(0) == 5);
    CHECK(vi.dim(1) == 4);
    for (std::size_t i = 0; i < vi.numel(); ++i) CHECK(vi.at(i) == 0.0f);
  }
}

TEST_CASE("embed_modalities errors on an unknown modality name") {
  ParamStore store;
  Rng rng(1);
  FusionParams f =
      FusionParams::init(store, "fusion", {{"motion", 3}}, 4, 4, 4, true, rng);
  FeatureBundle b;
  b.video_id = "v";
  Matrix m(5, 3);
  b.modalities.emplace_back("appearance", std::move(m));
  Tape tape;
  CHECK_THROWS_AS(embed_modalities(tape, b, f), DataError);
}

TEST_CASE("feature_attention with one modality returns it unchanged") {
  Rng rng(2);
  FusionParams f = random_fusion(1, 4, 3, 4, rng);
  const Tensor v0 = random_tensor({5, 4}, rng);
  const Tensor h = random_tensor({4}, rng);
  Tape tape;
  const FusedStep out = feature_attention(tape, h, {v0}, f);
  REQUIRE(out.weights.numel() == 1);
  CHECK(out.weights.at(0) == doctest::Approx(1.0));
  for (std::size_t i = 0; i < v0.numel(); ++i) {
    CHECK(out.fused.at(i) == doctest::Approx(v0.at(i)));
  }
}

TEST_CASE("feature_attention with zero score weights mixes uniformly") {
  Rng rng(3);
  FusionParams f = random_fusion(3, 4, 3, 4, rng);
  std::fill(f.attn_out.values_mut().begin(), f.attn_out.values_mut().end(), 0.0f);
  const std::vector<Tensor> v = {random_tensor({5, 4}, rng), random_tensor({5, 4}, rng),
                                 random_tensor({5, 4}, rng)};
  const Tensor h = random_tensor({4}, rng);
  Tape tape;
  const FusedStep out = feature_attention(tape, h, v, f);
  for (int i = 0; i < 3; ++i) CHECK(out.weights.at(static_cast<std::size_t>(i)) == doctest::Approx(1.0 / 3.0));
  for (std::size_t k = 0; k < out.fused.numel(); ++k) {
    const double mean = (v[0].at(k) + v[1].at(k) + v[2].at(k)) / 3.0;
    CHECK(out.fused.at(k) == doctest::Approx(mean).epsilon(1e-5));
  }
}

TEST_CASE("feature_attention matches the scripted 64-bit oracle") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + rng.uniform_int(5);
    const int frames = 1 + rng.uniform_int(8);
    const int d = 2 + rng.uniform_int(15);
    const int a = 2 + rng.uniform_int(8);
    const int h_dim = 2 + rng.uniform_int(8);
    FusionParams f = random_fusion(n, d, a, h_dim, rng);
    std::vector<Tensor> v;
    for (int i = 0; i < n; ++i) v.push_back(random_tensor({frames, d}, rng));
    const Tensor h = random_tensor({h_dim}, rng);

    Tape tape;
    const FusedStep got = feature_attention(tape, h, v, f);

    std::vector<oracles::Mat> ov, owv;
    for (const Tensor& vi : v) ov.push_back(to_mat(vi));
    for (const Tensor& wv : f.attn_v) owv.push_back(to_mat(wv));
    const auto want = oracles::feature_attention(to_vec(h), ov, owv, to_mat(f.attn_h),
                                                 to_mat(f.attn_out));

    double weight_sum = 0.0;
    for (int i = 0; i < n; ++i) {
      CHECK(std::abs(got.weights.at(static_cast<std::size_t>(i)) - want.weights[static_cast<std::size_t>(i)]) < 1e-5);
      CHECK(got.weights.at(static_cast<std::size_t>(i)) >= 0.0f);
      weight_sum += got.weights.at(static_cast<std::size_t>(i));
    }
    CHECK(std::abs(weight_sum - 1.0) < 1e-6);
    for (int j = 0; j < frames; ++j) {
      for (int c = 0; c < d; ++c) {
        CHECK(std::abs(got.fused.at(static_cast<std::size_t>(j) * d + c) - want.fused[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)]) < 1e-5);
      }
    }
  }
}

TEST_CASE("feature_attention is permutation equivariant") {
  Rng rng(5);
  FusionParams f = random_fusion(3, 4, 5, 4, rng);
  const std::vector<Tensor> v = {random_tensor({6, 4}, rng), random_tensor({6, 4}, rng),
                                 random_tensor({6, 4}, rng)};
  const Tensor h = random_tensor({4}, rng);

  Tape t1;
  const FusedStep base = feature_attention(t1, h, v, f);

  // Permute modalities together with their parameter blocks: attn_v follows
  // the modality, and the columns of attn_out follow the modality index.
  const std::vector<int> perm = {2, 0, 1};
  FusionParams fp = f;
  std::vector<Tensor> vp(3);
  for (int i = 0; i < 3; ++i) {
    vp[static_cast<std::size_t>(i)] = v[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    fp.attn_v[static_cast<std::size_t>(i)] = f.attn_v[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    fp.modality_names[static_cast<std::size_t>(i)] = f.modality_names[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
  }
  const int a = f.attn_out.dim(0);
  std::vector<float> wa_perm(static_cast<std::size_t>(a) * 3);
  for (int r = 0; r < a; ++r) {
    for (int i = 0; i < 3; ++i) {
      wa_perm[static_cast<std::size_t>(r) * 3 + i] =
          f.attn_out.at(static_cast<std::size_t>(r) * 3 + perm[static_cast<std::size_t>(i)]);
    }
  }
  fp.attn_out = Tensor::leaf({a, 3}, wa_perm, true);

  Tape t2;
  const FusedStep permuted = feature_attention(t2, h, vp, fp);
  for (int i = 0; i < 3; ++i) {
    CHECK(permuted.weights.at(static_cast<std::size_t>(i)) ==
          doctest::Approx(base.weights.at(static_cast<std::size_t>(perm[static_cast<std::size_t>(i)]))).epsilon(1e-6));
  }
  for (std::size_t k = 0; k < base.fused.numel(); ++k) {
    CHECK(permuted.fused.at(k) == doctest::Approx(base.fused.at(k)).epsilon(1e-5));
  }
}

TEST_CASE("fused features are convex combinations of the inputs") {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 2 + rng.uniform_int(3);
    FusionParams f = random_fusion(n, 4, 3, 4, rng);
    std::vector<Tensor> v;
    for (int i = 0; i < n; ++i) v.push_back(random_tensor({4, 4}, rng));
    const Tensor h = random_tensor({4}, rng);
    Tape tape;
    const FusedStep out = feature_attention(tape, h, v, f);
    for (std::size_t k = 0; k < out.fused.numel(); ++k) {
      float lo = v[0].at(k), hi = v[0].at(k);
      for (int i = 1; i < n; ++i) {
        lo = std::min(lo, v[static_cast<std::size_t>(i)].at(k));
        hi = std::max(hi, v[static_cast<std::size_t>(i)].at(k));
      }
      CHECK(out.fused.at(k) >= lo - 1e-5f);
      CHECK(out.fused.at(k) <= hi + 1e-5f);
    }
  }
}

TEST_CASE("feature_attention rejects mismatched modality shapes") {
  Rng rng(7);
  FusionParams f = random_fusion(2, 4, 3, 4, rng);
  const std::vector<Tensor> v = {random_tensor({5, 4}, rng), random_tensor({6, 4}, rng)};
  const Tensor h = random_tensor({4}, rng);
  Tape tape;
  CHECK_THROWS_AS(feature_attention(tape, h, v, f), ShapeError);
}

#include <cmath>

#include "doctest.h"

#include "capfuse/semantic.hpp"

#include "oracles.hpp"

using namespace capfuse;

TEST_CASE("build_attribute_vocab filters stopwords and short tokens") {
  std::vector<std::vector<std::string>> corpus;
  for (int i = 0; i < 20; ++i) corpus.push_back({"a"});
  for (int i = 0; i < 9; ++i) corpus.push_back({"dog"});
  for (int i = 0; i < 5; ++i) corpus.push_back({"runs"});
  for (int i = 0; i < 7; ++i) corpus.push_back({"x"});  // too short
  const auto attrs = build_attribute_vocab(corpus, 2, {"a"});
  CHECK(attrs.tokens == std::vector<std::string>{"dog", "runs"});
  CHECK(attrs.index_of("dog") == 0);
  CHECK(attrs.index_of("missing") == -1);
}

TEST_CASE("build_attribute_vocab reports the shortfall") {
  const std::vector<std::vector<std::string>> corpus = {{"dog", "runs"}};
  try {
    build_attribute_vocab(corpus, 300, {});
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("300") != std::string::npos);
    CHECK(msg.find("short by 298") != std::string::npos);
  }
}

TEST_CASE("build_attribute_vocab ignores corpus order") {
  std::vector<std::vector<std::string>> corpus = {
      {"apple", "banana"}, {"banana", "cherry"}, {"cherry", "apple"}, {"cherry"}};
  const auto a = build_attribute_vocab(corpus, 3, {});
  std::reverse(corpus.begin(), corpus.end());
  const auto b = build_attribute_vocab(corpus, 3, {});
  CHECK(a.tokens == b.tokens);
}

TEST_CASE("attribute vocab text round trip") {
  AttributeVocab attrs;
  attrs.tokens = {"dog", "guitar", "running"};
  CHECK(AttributeVocab::from_text(attrs.to_text()).tokens == attrs.tokens);
}

TEST_CASE("attribute_targets marks attributes found in any reference") {
  const Vocab vocab = Vocab::from_tokens({"a", "dog", "runs", "cat"});
  AttributeVocab attrs;
  attrs.tokens = {"dog", "cat"};
  CaptionRecord rec;
  rec.video_id = "v";
  rec.references = {vocab.encode({"a", "dog", "runs"})};
  CHECK(attribute_targets(rec, attrs, vocab) == std::vector<float>{1.0f, 0.0f});

  CaptionRecord none;
  none.references = {vocab.encode({"a", "runs"})};
  CHECK(attribute_targets(none, attrs, vocab) == std::vector<float>{0.0f, 0.0f});

  CaptionRecord all;
  all.references = {vocab.encode({"dog"}), vocab.encode({"cat"})};
  CHECK(attribute_targets(all, attrs, vocab) == std::vector<float>{1.0f, 1.0f});
}

TEST_CASE("attribute_targets is invariant to reference order") {
  const Vocab vocab = Vocab::from_tokens({"dog", "cat", "bird"});
  AttributeVocab attrs;
  attrs.tokens = {"dog", "cat", "bird"};
  CaptionRecord rec;
  rec.references = {vocab.encode({"dog"}), vocab.encode({"cat"})};
  const auto a = attribute_targets(rec, attrs, vocab);
  std::swap(rec.references[0], rec.references[1]);
  CHECK(attribute_targets(rec, attrs, vocab) == a);
}

TEST_CASE("semantic_forward with zero params outputs 0.5 everywhere") {
  Tape tape;
  SemanticParams p;
  p.w1 = Tensor::zeros({4, 3}, true);
  p.b1 = Tensor::zeros({3}, true);
  p.w2 = Tensor::zeros({3, 5}, true);
  p.b2 = Tensor::zeros({5}, true);
  const Tensor pooled = Tensor::leaf({4}, {0.3f, -0.2f, 0.9f, 0.0f});
  const Tensor probs = semantic_forward(tape, pooled, p);
  REQUIRE(probs.numel() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(probs.at(i) == doctest::Approx(0.5));
}

TEST_CASE("semantic_forward stays in (0,1)") {
  Rng rng(11);
  ParamStore store;
  Rng init(2);
  const SemanticParams p = SemanticParams::init(store, "sem", 6, 4, 3, init);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<float> v(6);
    for (float& x : v) x = static_cast<float>(rng.uniform(-3.0, 3.0));
    Tape tape;
    const Tensor probs = semantic_forward(tape, Tensor::leaf({6}, v), p);
    for (std::size_t i = 0; i < probs.numel(); ++i) {
      CHECK(probs.at(i) > 0.0f);
      CHECK(probs.at(i) < 1.0f);
    }
  }
}

TEST_CASE("semantic_forward rejects dim mismatches") {
  Tape tape;
  SemanticParams p;
  p.w1 = Tensor::zeros({4, 3}, true);
  p.b1 = Tensor::zeros({3}, true);
  p.w2 = Tensor::zeros({3, 5}, true);
  p.b2 = Tensor::zeros({5}, true);
  CHECK_THROWS_AS(semantic_forward(tape, Tensor::zeros({7}), p), ShapeError);
}

TEST_CASE("bce_loss closed forms") {
  Tape tape;
  // probs == targets at saturation: loss collapses to the clamp floor scale.
  const Tensor saturated = Tensor::leaf({2}, {1.0f, 0.0f});
  const Tensor targets = Tensor::leaf({2}, {1.0f, 0.0f});
  CHECK(bce_loss(tape, saturated, targets).item() <= 2e-7f);

  const Tensor half = Tensor::full({4}, 0.5f);
  const Tensor any = Tensor::leaf({4}, {1.0f, 0.0f, 1.0f, 1.0f});
  CHECK(bce_loss(tape, half, any).item() == doctest::Approx(std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("bce_loss matches the scripted oracle") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 3 + rng.uniform_int(6);
    std::vector<float> probs(static_cast<std::size_t>(k));
    std::vector<float> targets(static_cast<std::size_t>(k));
    oracles::Vec op(static_cast<std::size_t>(k)), ot(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
      probs[static_cast<std::size_t>(i)] = static_cast<float>(rng.uniform(0.02, 0.98));
      targets[static_cast<std::size_t>(i)] = rng.uniform() < 0.5 ? 0.0f : 1.0f;
      op[static_cast<std::size_t>(i)] = probs[static_cast<std::size_t>(i)];
      ot[static_cast<std::size_t>(i)] = targets[static_cast<std::size_t>(i)];
    }
    Tape tape;
    const float got =
        bce_loss(tape, Tensor::leaf({k}, probs), Tensor::leaf({k}, targets)).item();
    CHECK(std::abs(got - oracles::bce(op, ot)) < 1e-6);
  }
}

TEST_CASE("bce_loss rejects length mismatches") {
  Tape tape;
  CHECK_THROWS_AS(bce_loss(tape, Tensor::zeros({3}), Tensor::zeros({4})), ShapeError);
}

TEST_CASE("bce_loss is non-negative") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<float> probs(5), targets(5);
    for (int i = 0; i < 5; ++i) {
      probs[static_cast<std::size_t>(i)] = static_cast<float>(rng.uniform(0.0, 1.0));
      targets[static_cast<std::size_t>(i)] = rng.uniform() < 0.5 ? 0.0f : 1.0f;
    }
    Tape tape;
    CHECK(bce_loss(tape, Tensor::leaf({5}, probs), Tensor::leaf({5}, targets)).item() >= 0.0f);
  }
}

TEST_CASE("assemble_semantic_feature duplicates the concatenated row") {
  const std::vector<float> attrs = {0.1f, 0.7f, 0.2f};
  SUBCASE("no aux, two frames") {
    const Matrix m = assemble_semantic_feature(attrs, {}, 2);
    REQUIRE(m.rows == 2);
    REQUIRE(m.cols == 3);
    for (int c = 0; c < 3; ++c) CHECK(m.at(0, c) == m.at(1, c));
    CHECK(m.at(0, 1) == 0.7f);
  }
  SUBCASE("single frame is the row itself") {
    const Matrix m = assemble_semantic_feature(attrs, {{0.5f}}, 1);
    REQUIRE(m.rows == 1);
    REQUIRE(m.cols == 4);
    CHECK(m.at(0, 3) == 0.5f);
  }
  SUBCASE("width adds up across aux distributions") {
    const std::vector<float> a300(300, 0.1f);
    const std::vector<std::vector<float>> aux = {std::vector<float>(400, 0.2f),
                                                 std::vector<float>(600, 0.3f)};
    const Matrix m = assemble_semantic_feature(a300, aux, 8);
    CHECK(m.rows == 8);
    CHECK(m.cols == 1300);
    for (int j = 1; j < 8; ++j) {
      for (int c = 0; c < 1300; ++c) CHECK(m.at(j, c) == m.at(0, c));
    }
  }
}

TEST_CASE("pooled_visual is the frame mean of concatenated embeddings") {
  Tape tape;
  const Tensor a = Tensor::leaf({2, 2}, {1, 2, 3, 4});
  const Tensor b = Tensor::leaf({2, 1}, {10, 20});
  const Tensor pooled = pooled_visual(tape, {a, b});
  REQUIRE(pooled.numel() == 3);
  CHECK(pooled.at(0) == doctest::Approx(2.0));
  CHECK(pooled.at(1) == doctest::Approx(3.0));
  CHECK(pooled.at(2) == doctest::Approx(15.0));
}

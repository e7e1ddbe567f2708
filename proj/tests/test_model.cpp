#include <doctest.h>

#include <algorithm>

#include "contramod/model.hpp"
#include "contramod/nn/checkpoint.hpp"
#include "support.hpp"

using namespace contramod;
using namespace contramod::nn;

namespace {

std::size_t count_prefix(const ParameterTree<float>& p, std::string_view prefix) {
  std::size_t n = 0;
  for (auto id : p.with_prefix(prefix)) n += static_cast<std::size_t>(p[id].value.size());
  return n;
}

template <typename S>
void zero_all(ParameterTree<S>& p) {
  for (std::size_t k = 0; k < p.size(); ++k) p[ParamId{k}].value.setZero();
}

}  // namespace

TEST_CASE("parameter counts of the default architecture") {
  const auto m = Model<float>::create(ModelShape{}, 1);
  const auto& p = m.params();
  // conv: K*Cin*Cout + Cout; LSTM: 4U(F + U + 1); dense: in*out + out
  const std::size_t conv1 = 24 * 2 * 32 + 32;
  const std::size_t lstm1 = 4 * 128 * (32 + 128 + 1);
  const std::size_t lstm2 = 4 * 128 * (128 + 128 + 1);
  const std::size_t conv2 = 8 * 128 * 128 + 128;
  const std::size_t head = (128 * 128 + 128) + (128 * 64 + 64);
  const std::size_t cls = (128 * 128 + 128) + (128 * 11 + 11);
  CHECK(count_prefix(p, "encoder/conv1/") == conv1);
  CHECK(count_prefix(p, "encoder/lstm1/") == lstm1);
  CHECK(count_prefix(p, "encoder/lstm2/") == lstm2);
  CHECK(count_prefix(p, "encoder/conv2/") == conv2);
  CHECK(count_prefix(p, "encoder/") == conv1 + lstm1 + lstm2 + conv2);
  CHECK(count_prefix(p, "head/") == head);
  CHECK(count_prefix(p, "classifier/") == cls);
  CHECK(p.scalar_count() == conv1 + lstm1 + lstm2 + conv2 + head + cls);
  CHECK(m.num_classes() == 11);
}

TEST_CASE("initialization: glorot bounds and forget bias") {
  const auto m = Model<float>::create(ModelShape{}, 2);
  const auto& p = m.params();
  const auto& k = p[p.at("encoder/conv2/kernel")].value;
  const double limit = std::sqrt(6.0 / (8 * 128 + 8 * 128));
  CHECK(k.cwiseAbs().maxCoeff() <= limit);
  CHECK(k.cwiseAbs().maxCoeff() > 0.9 * limit);
  const auto& b = p[p.at("encoder/lstm1/bias")].value;
  CHECK(b.middleCols(128, 128).isOnes(0.0f));
  CHECK(b.leftCols(128).isZero(0.0f));
  CHECK(b.rightCols(256).isZero(0.0f));
  // Same seed, same weights; different seed, different weights.
  CHECK(encode_checkpoint(Model<float>::create(ModelShape{}, 2).params()) == encode_checkpoint(p));
  CHECK(encode_checkpoint(Model<float>::create(ModelShape{}, 3).params()) != encode_checkpoint(p));
}

TEST_CASE("encoder output: length 128, zero network, finite on random frames") {
  auto m = Model<float>::create(ModelShape{}, 3);
  CounterRng rng(4);
  std::vector<IQFrame> frames;
  for (int k = 0; k < 1000; ++k) frames.push_back(normalize(testing::random_frame(128, rng)));
  std::vector<const IQFrame*> ptrs;
  for (const auto& f : frames) ptrs.push_back(&f);
  const auto r = encode_frames(m, std::span<const IQFrame* const>(ptrs), 1, 64);
  CHECK(r.rows() == 1000);
  CHECK(r.cols() == 128);
  CHECK(r.allFinite());
  CHECK(r.minCoeff() >= 0.0f);  // ReLU before the max pool

  // Chunking and threads do not change the result.
  const auto r2 = encode_frames(m, std::span<const IQFrame* const>(ptrs).first(100), 2, 7);
  CHECK(r2 == r.topRows(100));

  zero_all(m.params());
  const auto z = encode_frames(m, std::span<const IQFrame* const>(ptrs).first(4));
  CHECK(z.isZero(0.0f));
}

TEST_CASE("encoder input validation") {
  const auto m = Model<float>::create(ModelShape{}, 5);
  Tape<float> t(m.params(), Mode::Inference);
  CHECK_THROWS(m.encode(t, t.input(Mat<float>::Zero(64, 2), 1)));
  CHECK_THROWS(m.encode(t, t.input(Mat<float>::Zero(128, 3), 1)));
}

TEST_CASE("frames_to_batch is time-major") {
  CounterRng rng(6);
  const std::vector<IQFrame> frames{testing::random_frame(5, rng), testing::random_frame(5, rng)};
  const auto x = frames_to_batch<float>(std::span<const IQFrame>(frames));
  CHECK(x.rows() == 10);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t b = 0; b < 2; ++b) {
      CHECK(x(t * 2 + b, 0) == frames[b].i(t));
      CHECK(x(t * 2 + b, 1) == frames[b].q(t));
    }
  const std::vector<IQFrame> mixed{IQFrame(5), IQFrame(6)};
  CHECK_THROWS(frames_to_batch<float>(std::span<const IQFrame>(mixed)));
}

TEST_CASE("projection head") {
  EncoderShape enc{16, 2, 3, 4, 4, 2};
  auto m = Model<double>::create(enc, HeadShape{3, 2}, 7);
  auto& p = m.params();
  CounterRng rng(8);
  const auto r = testing::random_mat(5, 4, rng);
  const auto W1 = p.value(p.at("head/dense1/kernel"));
  const auto W2 = p.value(p.at("head/dense2/kernel"));
  p[p.at("head/dense1/bias")].value = testing::random_mat(1, 3, rng);
  p[p.at("head/dense2/bias")].value = testing::random_mat(1, 2, rng);
  const auto b1 = p.value(p.at("head/dense1/bias"));
  const auto b2 = p.value(p.at("head/dense2/bias"));
  {
    Tape<double> t(p, Mode::Inference);
    const auto& z = t.value(m.project(t, t.input(r)));
    for (int n = 0; n < 5; ++n)
      for (int o = 0; o < 2; ++o) {
        double acc = b2(0, o);
        for (int h = 0; h < 3; ++h) {
          double hid = b1(0, h);
          for (int i = 0; i < 4; ++i) hid += r(n, i) * W1(i, h);
          acc += std::max(hid, 0.0) * W2(h, o);
        }
        CHECK(std::abs(z(n, o) - acc) < 1e-12);
      }
  }
  // Zero second layer, or zero input with zero biases, yields z = 0.
  p[p.at("head/dense2/kernel")].value.setZero();
  p[p.at("head/dense2/bias")].value.setZero();
  {
    Tape<double> t(p, Mode::Inference);
    CHECK(t.value(m.project(t, t.input(r))).isZero(0.0));
  }
  auto fresh = Model<double>::create(enc, HeadShape{3, 2}, 9);
  Tape<double> t(fresh.params(), Mode::Inference);
  CHECK(t.value(fresh.project(t, t.input(Mat<double>::Zero(2, 4)))).isZero(0.0));
}

TEST_CASE("classifier probabilities") {
  auto m = Model<float>::create(ModelShape{}, 10);
  CounterRng rng(11);
  const Mat<float> reps = testing::random_mat(20, 128, rng).cast<float>().cwiseAbs();
  const auto probs = classify_representations(m, reps);
  for (Eigen::Index r = 0; r < probs.rows(); ++r) CHECK(std::abs(probs.row(r).sum() - 1.0f) < 1e-6f);

  Mat<float> logits = testing::random_mat(3, 11, rng).cast<float>();
  const auto base = softmax_rows<float>(logits);
  Mat<float> shifted = logits.array() + 37.5f;
  const auto moved = softmax_rows<float>(shifted);
  for (Eigen::Index r = 0; r < 3; ++r) {
    Eigen::Index a, b;
    base.row(r).maxCoeff(&a);
    moved.row(r).maxCoeff(&b);
    CHECK(a == b);
    CHECK((base.row(r) - moved.row(r)).cwiseAbs().maxCoeff() < 1e-6f);
  }

  for (auto id : m.params().with_prefix("classifier/")) m.params()[id].value.setZero();
  const auto uniform = classify_representations(m, reps);
  CHECK((uniform.array() - 1.0f / 11).abs().maxCoeff() < 1e-7f);
}

TEST_CASE("models rebuild from checkpoints") {
  auto m = Model<float>::create(ModelShape{}, 12);
  const auto bytes = encode_checkpoint(m.params());
  const auto back = Model<float>::from_params(decode_checkpoint(bytes));
  CHECK(back.has_head());
  CHECK(back.has_classifier());
  CHECK(encode_checkpoint(back.params()) == bytes);

  auto enc_only = Model<float>::from_params(decode_checkpoint(encode_checkpoint(m.params(), "encoder/")));
  CHECK_FALSE(enc_only.has_head());
  CHECK_FALSE(enc_only.has_classifier());
  CHECK_THROWS(enc_only.num_classes());
  enc_only.add_classifier(ClassifierShape{}, 1);
  CHECK(enc_only.num_classes() == 11);
  CHECK_THROWS(enc_only.add_classifier(ClassifierShape{}, 1));

  auto before = enc_only.params().value(enc_only.params().at("classifier/dense1/kernel"));
  enc_only.reset_classifier(2);
  CHECK(enc_only.params().value(enc_only.params().at("classifier/dense1/kernel")) != before);
  CHECK_THROWS_AS(Model<float>::from_params(ParameterTree<float>{}), Error);
}

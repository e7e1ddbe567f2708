#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "contramod/dataio.hpp"
#include "contramod/nn/params.hpp"
#include "contramod/nn/tape.hpp"
#include "contramod/parallel.hpp"
#include "contramod/rng.hpp"

namespace contramod {

/// conv(ReLU) -> LSTM -> LSTM -> conv(ReLU) -> global max pool.
struct EncoderShape {
  std::size_t input_len = 128;
  std::size_t conv1_filters = 32;
  std::size_t conv1_kernel = 24;
  std::size_t lstm_units = 128;
  std::size_t conv2_filters = 128;
  std::size_t conv2_kernel = 8;

  std::size_t output_dim() const noexcept { return conv2_filters; }
};

struct HeadShape {
  std::size_t hidden = 128;
  std::size_t output = 64;
};

struct ClassifierShape {
  std::size_t hidden = 128;
  std::size_t classes = 11;
};

struct ModelShape {
  EncoderShape encoder;
  HeadShape head;
  ClassifierShape classifier;
};

struct DenseLayer {
  nn::ParamId kernel, bias;
};
struct ConvLayer {
  nn::ParamId kernel, bias;
};
struct LstmLayer {
  nn::ParamId kernel, recurrent, bias;
};

/// Encoder, projection head and classifier over one parameter tree.
/// Parameters live under "encoder/", "head/" and "classifier/"; the head and
/// classifier are optional so checkpoints may carry any subset.
template <typename S>
class Model {
 public:
  /// Fresh Glorot-initialized encoder and head; classifier added on request.
  static Model create(const EncoderShape& enc, const HeadShape& head, std::uint64_t seed) {
    Model m;
    m.enc_shape_ = enc;
    CounterRng rng(derive_seed(seed, "init-encoder"));
    const auto cin = std::size_t{2};
    m.conv1_ = m.add_conv("encoder/conv1", enc.conv1_kernel, cin, enc.conv1_filters, rng);
    m.lstm1_ = m.add_lstm("encoder/lstm1", enc.conv1_filters, enc.lstm_units, rng);
    m.lstm2_ = m.add_lstm("encoder/lstm2", enc.lstm_units, enc.lstm_units, rng);
    m.conv2_ = m.add_conv("encoder/conv2", enc.conv2_kernel, enc.lstm_units, enc.conv2_filters, rng);
    m.add_head(head, derive_seed(seed, "init-head"));
    return m;
  }

  static Model create(const ModelShape& shape, std::uint64_t seed) {
    Model m = create(shape.encoder, shape.head, seed);
    m.add_classifier(shape.classifier, derive_seed(seed, "init-classifier"));
    return m;
  }

  /// Rebuilds the layer map from named parameters (e.g. a loaded checkpoint).
  static Model from_params(nn::ParameterTree<S> params, std::size_t input_len = 128) {
    Model m;
    m.params_ = std::move(params);
    auto& p = m.params_;
    m.conv1_ = {p.at("encoder/conv1/kernel"), p.at("encoder/conv1/bias")};
    m.lstm1_ = {p.at("encoder/lstm1/kernel"), p.at("encoder/lstm1/recurrent"), p.at("encoder/lstm1/bias")};
    m.lstm2_ = {p.at("encoder/lstm2/kernel"), p.at("encoder/lstm2/recurrent"), p.at("encoder/lstm2/bias")};
    m.conv2_ = {p.at("encoder/conv2/kernel"), p.at("encoder/conv2/bias")};
    const auto& c1 = p[m.conv1_.kernel].shape;
    const auto& c2 = p[m.conv2_.kernel].shape;
    if (c1.size() != 3 || c2.size() != 3 || c1[1] != 2) throw data_error("checkpoint encoder has unexpected conv shapes");
    m.enc_shape_ = {input_len, c1[2], c1[0], p[m.lstm1_.recurrent].shape[0], c2[2], c2[0]};
    if (auto k = p.find("head/dense1/kernel")) {
      m.head1_ = {*k, p.at("head/dense1/bias")};
      m.head2_ = {p.at("head/dense2/kernel"), p.at("head/dense2/bias")};
      m.has_head_ = true;
    }
    if (auto k = p.find("classifier/dense1/kernel")) {
      m.cls1_ = {*k, p.at("classifier/dense1/bias")};
      m.cls2_ = {p.at("classifier/dense2/kernel"), p.at("classifier/dense2/bias")};
      m.has_classifier_ = true;
    }
    return m;
  }

  void add_head(const HeadShape& head, std::uint64_t seed) {
    if (has_head_) throw usage_error("model already has a projection head");
    CounterRng rng(seed);
    head1_ = add_dense("head/dense1", enc_shape_.output_dim(), head.hidden, rng);
    head2_ = add_dense("head/dense2", head.hidden, head.output, rng);
    has_head_ = true;
  }

  void add_classifier(const ClassifierShape& cls, std::uint64_t seed) {
    if (has_classifier_) throw usage_error("model already has a classifier");
    CounterRng rng(seed);
    cls1_ = add_dense("classifier/dense1", enc_shape_.output_dim(), cls.hidden, rng);
    cls2_ = add_dense("classifier/dense2", cls.hidden, cls.classes, rng);
    has_classifier_ = true;
  }

  /// Replaces classifier weights with a fresh draw (keeps parameter ids).
  void reset_classifier(std::uint64_t seed) {
    require_classifier();
    CounterRng rng(seed);
    reinit_dense(cls1_, rng);
    reinit_dense(cls2_, rng);
  }

  nn::ParameterTree<S>& params() noexcept { return params_; }
  const nn::ParameterTree<S>& params() const noexcept { return params_; }
  const EncoderShape& encoder_shape() const noexcept { return enc_shape_; }
  bool has_head() const noexcept { return has_head_; }
  bool has_classifier() const noexcept { return has_classifier_; }
  std::size_t num_classes() const {
    require_classifier();
    return static_cast<std::size_t>(params_.value(cls2_.kernel).cols());
  }

  std::vector<nn::ParamId> classifier_kernels() const { return {cls1_.kernel, cls2_.kernel}; }

  // --- forward graphs on a tape --------------------------------------------

  /// conv1 -> ReLU -> LSTM -> LSTM. Input: time-major (L*B x 2).
  nn::Var encode_prefix(nn::Tape<S>& t, nn::Var x) const {
    if (t.value(x).cols() != 2) throw usage_error("encoder input must have 2 channels (I, Q)");
    const auto L = static_cast<std::size_t>(t.value(x).rows()) / t.batch(x);
    if (L != enc_shape_.input_len)
      throw usage_error("encoder expects frames of length " + std::to_string(enc_shape_.input_len) + ", got " +
                        std::to_string(L));
    auto h = t.relu(t.conv1d(x, conv1_.kernel, conv1_.bias));
    h = t.lstm(h, lstm1_.kernel, lstm1_.recurrent, lstm1_.bias);
    return t.lstm(h, lstm2_.kernel, lstm2_.recurrent, lstm2_.bias);
  }

  /// conv2 -> ReLU -> global max pool, giving the (B x 128) representation.
  nn::Var encode_suffix(nn::Tape<S>& t, nn::Var seq) const {
    return t.global_max_pool(t.relu(t.conv1d(seq, conv2_.kernel, conv2_.bias)));
  }

  nn::Var encode(nn::Tape<S>& t, nn::Var x) const { return encode_suffix(t, encode_prefix(t, x)); }

  /// z = W2 ReLU(W1 r).
  nn::Var project(nn::Tape<S>& t, nn::Var r) const {
    if (!has_head_) throw usage_error("model has no projection head");
    return t.dense(t.relu(t.dense(r, head1_.kernel, head1_.bias)), head2_.kernel, head2_.bias);
  }

  /// Logits; dropout on the hidden layer is applied only when the tape is in
  /// train mode and a generator is supplied.
  nn::Var classify_logits(nn::Tape<S>& t, nn::Var r, double dropout_rate = 0.0, CounterRng* rng = nullptr) const {
    require_classifier();
    auto h = t.relu(t.dense(r, cls1_.kernel, cls1_.bias));
    if (rng != nullptr) h = t.dropout(h, dropout_rate, *rng);
    return t.dense(h, cls2_.kernel, cls2_.bias);
  }

 private:
  void require_classifier() const {
    if (!has_classifier_) throw usage_error("model has no classifier");
  }

  ConvLayer add_conv(const std::string& name, std::size_t k, std::size_t cin, std::size_t cout, CounterRng& rng) {
    const auto rows = static_cast<Eigen::Index>(k * cin);
    auto w = nn::glorot_uniform<S>(rows, static_cast<Eigen::Index>(cout), double(k * cin), double(k * cout), rng);
    return {params_.add(name + "/kernel", {k, cin, cout}, std::move(w)),
            params_.add(name + "/bias", {cout}, nn::Mat<S>::Zero(1, static_cast<Eigen::Index>(cout)))};
  }

  LstmLayer add_lstm(const std::string& name, std::size_t in, std::size_t units, CounterRng& rng) {
    const auto g = static_cast<Eigen::Index>(4 * units);
    auto wx = nn::glorot_uniform<S>(static_cast<Eigen::Index>(in), g, double(in), double(4 * units), rng);
    auto wh = nn::glorot_uniform<S>(static_cast<Eigen::Index>(units), g, double(units), double(4 * units), rng);
    nn::Mat<S> b = nn::Mat<S>::Zero(1, g);
    b.middleCols(static_cast<Eigen::Index>(units), static_cast<Eigen::Index>(units)).setOnes();  // forget gate
    return {params_.add(name + "/kernel", {in, 4 * units}, std::move(wx)),
            params_.add(name + "/recurrent", {units, 4 * units}, std::move(wh)),
            params_.add(name + "/bias", {4 * units}, std::move(b))};
  }

  DenseLayer add_dense(const std::string& name, std::size_t in, std::size_t out, CounterRng& rng) {
    auto w = nn::glorot_uniform<S>(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out), double(in),
                                   double(out), rng);
    return {params_.add(name + "/kernel", {in, out}, std::move(w)),
            params_.add(name + "/bias", {out}, nn::Mat<S>::Zero(1, static_cast<Eigen::Index>(out)))};
  }

  void reinit_dense(const DenseLayer& layer, CounterRng& rng) {
    auto& w = params_[layer.kernel].value;
    w = nn::glorot_uniform<S>(w.rows(), w.cols(), double(w.rows()), double(w.cols()), rng);
    params_[layer.bias].value.setZero();
  }

  nn::ParameterTree<S> params_;
  EncoderShape enc_shape_;
  ConvLayer conv1_{}, conv2_{};
  LstmLayer lstm1_{}, lstm2_{};
  DenseLayer head1_{}, head2_{}, cls1_{}, cls2_{};
  bool has_head_ = false;
  bool has_classifier_ = false;
};

/// Packs frames into the time-major encoder input (L*B x 2).
template <typename S>
nn::Mat<S> frames_to_batch(std::span<const IQFrame* const> frames) {
  if (frames.empty()) throw usage_error("empty frame batch");
  const std::size_t L = frames.front()->length();
  const auto B = static_cast<Eigen::Index>(frames.size());
  nn::Mat<S> x(static_cast<Eigen::Index>(L) * B, 2);
  for (Eigen::Index b = 0; b < B; ++b) {
    const IQFrame& f = *frames[static_cast<std::size_t>(b)];
    if (f.length() != L) throw usage_error("frames in a batch must share one length");
    for (std::size_t t = 0; t < L; ++t) {
      x(static_cast<Eigen::Index>(t) * B + b, 0) = static_cast<S>(f.i(t));
      x(static_cast<Eigen::Index>(t) * B + b, 1) = static_cast<S>(f.q(t));
    }
  }
  return x;
}

template <typename S>
nn::Mat<S> frames_to_batch(std::span<const IQFrame> frames) {
  std::vector<const IQFrame*> ptrs;
  for (const auto& f : frames) ptrs.push_back(&f);
  return frames_to_batch<S>(std::span<const IQFrame* const>(ptrs));
}

/// Encoder representations (N x 128) in eval mode, computed in fixed-size
/// chunks that may run on several threads.
template <typename S>
nn::Mat<S> encode_frames(const Model<S>& model, std::span<const IQFrame* const> frames, unsigned jobs = 1,
                         std::size_t chunk = 32) {
  const auto dim = static_cast<Eigen::Index>(model.encoder_shape().output_dim());
  nn::Mat<S> out(static_cast<Eigen::Index>(frames.size()), dim);
  const std::size_t n_chunks = (frames.size() + chunk - 1) / chunk;
  parallel_for(n_chunks, jobs, [&](std::size_t c) {
    const std::size_t begin = c * chunk;
    const std::size_t end = std::min(frames.size(), begin + chunk);
    nn::Tape<S> tape(model.params(), nn::Mode::Inference);
    const auto x = tape.input(frames_to_batch<S>(frames.subspan(begin, end - begin)), end - begin);
    out.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin)) =
        tape.value(model.encode(tape, x));
  });
  return out;
}

/// Class probabilities for representations, eval mode.
template <typename S>
nn::Mat<S> classify_representations(const Model<S>& model, const nn::Mat<S>& reps) {
  nn::Tape<S> tape(model.params(), nn::Mode::Inference);
  const auto r = tape.input(reps);
  return nn::softmax_rows<S>(tape.value(model.classify_logits(tape, r)));
}

}  // namespace contramod

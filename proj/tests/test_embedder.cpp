#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "gradient_checks.hpp"
#include "wordspot/embedder.hpp"
#include "wordspot/errors.hpp"

using namespace wordspot;

using gradcheck::random_matrix;

TEST_CASE("features are centred, sized and deterministic") {
  GrayImage flat(40, 20, 90);
  const auto f = extract_features(flat, Box::from_xywh(3, 3, 20, 10));
  CHECK(f.size() == 160);
  for (double v : f) CHECK(std::abs(v) < 1e-12);
  GrayImage g(40, 20);
  for (std::size_t i = 0; i < g.pixels.size(); ++i) g.pixels[i] = static_cast<std::uint8_t>(i * 37 % 251);
  CHECK(extract_features(g, Box::from_xywh(1, 2, 30, 9)) == extract_features(g, Box::from_xywh(1, 2, 30, 9)));
  CHECK_THROWS_AS(extract_features(g, Box::from_xywh(1, 2, 0, 9)), Error);
}

TEST_CASE("outputs are unit norm and batch statistics are normalised") {
  std::mt19937_64 rng(1);
  EmbedNetConfig c;
  c.out_dim = 108;
  DenseNet net(c);
  const auto x = random_matrix(rng, 32, 160);
  const auto out = net.infer(x);
  for (Eigen::Index i = 0; i < out.embeddings.rows(); ++i) CHECK(std::abs(out.embeddings.row(i).norm() - 1.0) < 1e-9);
  const auto tr = net.trace(x, NetMode::train);
  for (const auto& layer : tr.layers) {
    const Eigen::RowVectorXd mean = layer.normalized.colwise().mean();
    const Eigen::RowVectorXd var = (layer.normalized.rowwise() - mean).array().square().colwise().mean();
    CHECK(mean.cwiseAbs().maxCoeff() < 1e-6);
    CHECK((var.array() - 1.0).abs().maxCoeff() < 1e-3);  // eps keeps it just below one
  }
  Matrix same(4, 160);
  for (int i = 0; i < 4; ++i) same.row(i) = x.row(0);
  const auto o = net.infer(same);
  CHECK((o.embeddings.row(0) - o.embeddings.row(3)).norm() == 0.0);
  CHECK_THROWS_AS(net.infer(random_matrix(rng, 2, 7)), Error);
}

TEST_CASE("network gradients match central differences for every loss") {
  CHECK(gradcheck::network_errors(100, 2) < 1e-5);
}

TEST_CASE("adam: zero gradient is a no-op and the schedule decays exactly") {
  std::mt19937_64 rng(3);
  std::vector<Matrix> p{random_matrix(rng, 3, 2)};
  const auto before = p;
  Adam adam;
  adam.step(p, {Matrix::Zero(3, 2)});
  CHECK(p[0] == before[0]);

  Adam sched;
  std::vector<Matrix> q{Matrix::Zero(1, 1)};
  for (int i = 0; i < 10000; ++i) sched.step(q, {Matrix::Zero(1, 1)});
  CHECK(sched.current_lr() == 1e-4);
  for (int i = 0; i < 10000; ++i) sched.step(q, {Matrix::Zero(1, 1)});
  CHECK(sched.current_lr() == 1e-5);
}

TEST_CASE("training on a separable toy set lowers the loss") {
  std::mt19937_64 rng(4);
  EmbedNetConfig c = gradcheck::tiny_net();
  DenseNet net(c);
  net.set_mode(NetMode::train);
  Adam adam;
  Matrix x(16, 6);
  BatchTargets t;
  t.embedding = Matrix::Zero(16, 4);
  for (int i = 0; i < 16; ++i) {
    const int cls = i % 2;
    x.row(i) = random_matrix(rng, 1, 6) * 0.1;
    x(i, 0) += cls ? 2.0 : -2.0;
    t.embedding(i, cls) = 1.0;
    t.is_word.push_back(1);
  }
  LossSpec spec;
  std::vector<Matrix> g;
  const double first = net.loss_and_gradients(x, t, spec, &g).total;
  double last = first;
  for (int it = 0; it < 200; ++it) {
    last = net.loss_and_gradients(x, t, spec, &g).total;
    net.update_running_stats(net.trace(x, NetMode::train));
    adam.step(net.parameters(), g);
  }
  CHECK(last < 0.5 * first);
}

TEST_CASE("running statistics track the training data") {
  std::mt19937_64 rng(5);
  EmbedNetConfig c = gradcheck::tiny_net();
  DenseNet net(c);
  const Matrix x = (random_matrix(rng, 64, 6).array() * 2.0 + 1.0).matrix();
  for (int i = 0; i < 200; ++i) net.update_running_stats(net.trace(x, NetMode::train));
  const auto train_tr = net.trace(x, NetMode::train);
  const auto eval_tr = net.trace(x, NetMode::eval);
  for (std::size_t l = 0; l < train_tr.layers.size(); ++l) {
    const Eigen::RowVectorXd a = train_tr.layers[l].activation.colwise().mean();
    const Eigen::RowVectorXd b = eval_tr.layers[l].activation.colwise().mean();
    CHECK((a - b).cwiseAbs().maxCoeff() < 5e-2);
  }
}

TEST_CASE("model checkpoints round trip bit-exactly and reject corruption") {
  std::mt19937_64 rng(6);
  TrainedModel m;
  EmbedNetConfig c;
  c.out_dim = 108;
  m.net = DenseNet(c);
  for (auto& p : m.net.parameters()) p += 0.1 * random_matrix(rng, p.rows(), p.cols());
  m.net.round_to_float();
  m.text = TextEmbedder::make(EmbeddingKind::dctow);
  const auto bytes = serialize_model(m);
  const auto back = deserialize_model(bytes);
  const auto x = random_matrix(rng, 5, 160);
  CHECK(back.net.infer(x).embeddings == m.net.infer(x).embeddings);
  CHECK(back.net.infer(x).score_logits == m.net.infer(x).score_logits);
  CHECK(serialize_model(back) == bytes);

  auto expect = [](std::vector<std::uint8_t> b, ErrorCode code) {
    try {
      deserialize_model(b);
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.code() == code);
    }
  };
  auto flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x40;
  expect(flipped, ErrorCode::CorruptModel);
  expect({bytes.begin(), bytes.begin() + static_cast<long>(bytes.size() / 2)}, ErrorCode::CorruptModel);
  auto magic = bytes;
  magic[0] = 'X';
  expect(magic, ErrorCode::CorruptModel);
  auto version = bytes;
  version[4] = 9;
  expect(version, ErrorCode::VersionMismatch);
}

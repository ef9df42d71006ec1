#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "stmaml/checkpoint.hpp"

using namespace stmaml;

namespace {

ModelDims dims() {
  ModelDims d;
  d.learner = {2, 6, 1};
  d.encoder = {3, 5, 5};
  d.head_hidden = {4};
  d.d_z = 3;
  d.d_h = 2;
  return d;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i)
    m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

}  // namespace

TEST_CASE("stmaml checkpoint round trip") {
  StMamlParams p = init_stmaml(dims(), 2, 1, 5);
  CheckpointHeader h;
  h.algorithm = "stmaml";
  h.step = 123;
  h.task_d_in = 2;
  h.task_d_out = 1;
  h.config_hash = "cafe0123";

  std::stringstream ss;
  save_checkpoint(p, h, ss);

  CheckpointHeader back_h;
  StMamlParams back = load_stmaml_checkpoint(ss, &back_h);
  CHECK(back_h.step == 123);
  CHECK(back_h.task_d_in == 2);
  CHECK(back_h.config_hash == "cafe0123");
  CHECK(back.dims.d_z == 3);
  CHECK(back.dims.d_h == 2);
  CHECK(back.dims.learner == p.dims.learner);
  CHECK(back.dims.head_hidden == p.dims.head_hidden);

  auto a = p.all_params(), b = back.all_params();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(max_abs_diff(a[i], b[i]) == 0.0);
    CHECK(b[i].tracked());  // loaded parameters must be trainable
  }
}

TEST_CASE("maml checkpoint round trip") {
  MamlParams p = init_maml({2, 6, 1}, 9);
  CheckpointHeader h;
  h.algorithm = "maml";
  h.step = 7;

  std::stringstream ss;
  save_checkpoint(p, h, {2, 6, 1}, ss);
  CheckpointHeader back_h;
  MamlParams back = load_maml_checkpoint(ss, &back_h);
  CHECK(back_h.step == 7);
  for (std::size_t l = 0; l < 2; ++l) {
    CHECK(max_abs_diff(p.learner.weights[l], back.learner.weights[l]) == 0.0);
    CHECK(max_abs_diff(p.learner.biases[l], back.learner.biases[l]) == 0.0);
  }
}

TEST_CASE("header peek does not require the parameter blocks to match") {
  MamlParams p = init_maml({2, 4, 1}, 1);
  CheckpointHeader h;
  h.algorithm = "maml";
  h.step = 42;
  std::stringstream ss;
  save_checkpoint(p, h, {2, 4, 1}, ss);
  CheckpointHeader peeked = peek_header(ss);
  CHECK(peeked.algorithm == "maml");
  CHECK(peeked.step == 42);
}

TEST_CASE("algorithm mismatch is rejected") {
  StMamlParams sp = init_stmaml(dims(), 2, 1, 5);
  CheckpointHeader h;
  h.algorithm = "stmaml";
  std::stringstream ss;
  save_checkpoint(sp, h, ss);
  CHECK_THROWS_WITH_AS(load_maml_checkpoint(ss), doctest::Contains("expected maml"),
                       std::runtime_error);

  MamlParams mp = init_maml({2, 4, 1}, 1);
  CheckpointHeader mh;
  mh.algorithm = "maml";
  std::stringstream ms;
  save_checkpoint(mp, mh, {2, 4, 1}, ms);
  CHECK_THROWS_WITH_AS(load_stmaml_checkpoint(ms), doctest::Contains("expected stmaml"),
                       std::runtime_error);
}

TEST_CASE("values survive with full precision") {
  StMamlParams p = init_stmaml(dims(), 2, 1, 5);
  // Plant an awkward value that loses digits under %.6g-style formatting.
  std::vector<double> v = p.w0.values();
  v[0] = 0.1234567890123456789;
  v[1] = 1e-300;
  p.w0 = Tensor::leaf(p.w0.shape(), std::move(v));

  CheckpointHeader h;
  std::stringstream ss;
  save_checkpoint(p, h, ss);
  StMamlParams back = load_stmaml_checkpoint(ss);
  CHECK(back.w0.values()[0] == p.w0.values()[0]);
  CHECK(back.w0.values()[1] == p.w0.values()[1]);
}

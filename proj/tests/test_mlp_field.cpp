#include <doctest.h>

#include "fewview/mlp_field.hpp"
#include "test_util.hpp"

using namespace fewview;
using test::max_rel_error;

namespace {

using Mat = MatX<double>;
using Vec = VecX<double>;

MlpConfig tiny_config(uint64_t seed) {
  MlpConfig cfg;
  cfg.encoding.l_pos = 2;
  cfg.encoding.l_dir = 1;
  cfg.hidden_layers = 3;
  cfg.hidden_width = 8;
  cfg.color_hidden_width = 6;
  cfg.init_seed = seed;
  return cfg;
}

void random_batch(Rng& rng, int n, Mat& pos, Mat& dir) {
  pos.resize(3, n);
  dir.resize(3, n);
  for (int i = 0; i < n; ++i) {
    pos.col(i) = Eigen::Vector3d(rng.uniform_in(-1.5, 1.5),
                                 rng.uniform_in(-1.5, 1.5),
                                 rng.uniform_in(-1.5, 1.5));
    dir.col(i) = Eigen::Vector3d(rng.uniform_in(-1, 1), rng.uniform_in(-1, 1),
                                 rng.uniform_in(-1, 1))
                     .normalized();
  }
}

// <upstream, outputs> as a scalar so backward can be checked against plain
// finite differences over the whole parameter vector.
double directional_value(const MlpFieldT<double>& field, const Mat& pos,
                         const Mat& dir, const Vec& dsigma, const Mat& drgb) {
  Vec sigma;
  Mat rgb;
  field.eval(pos, dir, sigma, rgb);
  return dsigma.dot(sigma) + (drgb.array() * rgb.array()).sum();
}

}  // namespace

TEST_CASE("mlp outputs stay in range over many random inputs") {
  MlpFieldT<double> field(tiny_config(5));
  Rng rng(17);
  Mat pos, dir;
  random_batch(rng, 10000, pos, dir);
  Vec sigma;
  Mat rgb;
  field.eval(pos, dir, sigma, rgb);
  for (int i = 0; i < sigma.size(); ++i) {
    CHECK(std::isfinite(sigma[i]));
    CHECK(sigma[i] >= 0.0);
    for (int ch = 0; ch < 3; ++ch) {
      CHECK(rgb(ch, i) >= 0.0);
      CHECK(rgb(ch, i) <= 1.0);
    }
  }
}

TEST_CASE("mlp evaluation is pure") {
  MlpFieldT<double> field(tiny_config(1));
  Rng rng(2);
  Mat pos, dir;
  random_batch(rng, 32, pos, dir);
  Vec s1, s2;
  Mat c1, c2;
  field.eval(pos, dir, s1, c1);
  field.eval(pos, dir, s2, c2);
  CHECK(s1 == s2);
  CHECK(c1 == c2);
}

TEST_CASE("mlp rejects non-finite input") {
  MlpFieldT<double> field(tiny_config(1));
  Mat pos = Mat::Zero(3, 2), dir = Mat::Zero(3, 2);
  dir.row(2).setConstant(-1.0);
  pos(1, 1) = std::nan("");
  Vec sigma;
  Mat rgb;
  CHECK_THROWS_AS(field.eval(pos, dir, sigma, rgb), NonFiniteInput);
}

TEST_CASE("mlp density softplus smoke at init") {
  MlpFieldT<double> field(tiny_config(3));
  Mat pos = Mat::Zero(3, 1), dir = Mat::Zero(3, 1);
  dir(2, 0) = -1.0;
  Vec sigma;
  Mat rgb;
  field.eval(pos, dir, sigma, rgb);
  CHECK(std::isfinite(sigma[0]));
  CHECK(sigma[0] > 0.0);  // softplus never reaches zero exactly
}

TEST_CASE("mlp zero upstream gives zero gradients") {
  MlpFieldT<double> field(tiny_config(9));
  Rng rng(4);
  Mat pos, dir;
  random_batch(rng, 6, pos, dir);
  Vec sigma;
  Mat rgb;
  const auto cache = field.eval_cached(pos, dir, sigma, rgb);
  std::vector<double> grad(field.parameter_count(), 0.0);
  field.backward(*cache, Vec::Zero(6), Mat::Zero(3, 6), grad);
  for (double g : grad) CHECK(g == 0.0);
}

TEST_CASE("mlp cache mismatch is detected") {
  MlpFieldT<double> a(tiny_config(1)), b(tiny_config(2));
  Rng rng(4);
  Mat pos, dir;
  random_batch(rng, 3, pos, dir);
  Vec sigma;
  Mat rgb;
  const auto cache = a.eval_cached(pos, dir, sigma, rgb);
  std::vector<double> grad(b.parameter_count(), 0.0);
  CHECK_THROWS_AS(b.backward(*cache, Vec::Zero(3), Mat::Zero(3, 3), grad),
                  CacheMismatch);
}

TEST_CASE("first-layer gradient is the outer product for an affine trunk") {
  // One hidden layer forced into the linear regime of the rectifier: then
  // dL/dW1 = delta * x0^T exactly, with delta the upstream propagated
  // through the (affine) heads.
  MlpConfig cfg = tiny_config(11);
  cfg.hidden_layers = 1;
  MlpFieldT<double> field(cfg);

  // Push the first-layer biases up so every pre-activation is positive.
  const auto blocks = field.param_blocks();
  auto params = field.parameters();
  const auto& b1 = blocks[1];
  REQUIRE(b1.name == "trunk_b1");
  for (int i = 0; i < b1.rows; ++i) params[b1.offset + i] = 10.0;
  const auto& bc1 = blocks[5];
  REQUIRE(bc1.name == "color1_b");
  for (int i = 0; i < bc1.rows; ++i) params[bc1.offset + i] = 100.0;

  Rng rng(6);
  Mat pos, dir;
  random_batch(rng, 1, pos, dir);
  Vec sigma;
  Mat rgb;
  const auto cache = field.eval_cached(pos, dir, sigma, rgb);

  Vec dsigma(1);
  dsigma[0] = 0.7;
  const Mat drgb = Mat::Zero(3, 1);  // isolate the density head
  std::vector<double> grad(field.parameter_count(), 0.0);
  field.backward(*cache, dsigma, drgb, grad);

  // Recompute delta by hand: dL/dz1 = W_sigma^T (dsigma * sigmoid(s)).
  const auto& w1 = blocks[0];
  const auto& wsig = blocks[2];
  const auto& bsig = blocks[3];
  Eigen::Map<const Mat> w1_m(params.data() + w1.offset, w1.rows, w1.cols);
  Eigen::Map<const Mat> wsig_m(params.data() + wsig.offset, wsig.rows,
                               wsig.cols);
  const Mat x0 = positional_encoding<double>(
      pos, cfg.encoding.l_pos, cfg.encoding.include_identity);
  Vec b1_v(b1.rows);
  for (int i = 0; i < b1.rows; ++i) b1_v[i] = params[b1.offset + i];
  const Vec z1 = w1_m * x0.col(0) + b1_v;
  const double s_logit = (wsig_m * z1)(0, 0) + params[bsig.offset];
  const double ds = dsigma[0] / (1.0 + std::exp(-s_logit));
  const Vec delta = wsig_m.transpose() * ds;

  for (int r = 0; r < w1.rows; ++r)
    for (int c = 0; c < w1.cols; ++c)
      CHECK(grad[w1.offset + r + size_t(c) * w1.rows] ==
            doctest::Approx(delta[r] * x0(c, 0)).epsilon(1e-10));
}

TEST_CASE("mlp jacobian matches finite differences on a 4-sample batch") {
  MlpFieldT<double> field(tiny_config(23));
  Rng rng(31);
  Mat pos, dir;
  random_batch(rng, 4, pos, dir);

  auto params = field.parameters();
  const size_t n_params = params.size();
  const double eps = 1e-5;

  // One backward per output row (one-hot upstream) gives the full Jacobian.
  for (int out_idx = 0; out_idx < 4 + 12; ++out_idx) {
    Vec dsigma = Vec::Zero(4);
    Mat drgb = Mat::Zero(3, 4);
    if (out_idx < 4)
      dsigma[out_idx] = 1.0;
    else
      drgb((out_idx - 4) % 3, (out_idx - 4) / 3) = 1.0;

    Vec sigma;
    Mat rgb;
    const auto cache = field.eval_cached(pos, dir, sigma, rgb);
    std::vector<double> analytic(n_params, 0.0);
    field.backward(*cache, dsigma, drgb, analytic);

    std::vector<double> numeric(n_params, 0.0);
    for (size_t p = 0; p < n_params; ++p) {
      const double saved = params[p];
      params[p] = saved + eps;
      const double hi = directional_value(field, pos, dir, dsigma, drgb);
      params[p] = saved - eps;
      const double lo = directional_value(field, pos, dir, dsigma, drgb);
      params[p] = saved;
      numeric[p] = (hi - lo) / (2 * eps);
    }
    CHECK(max_rel_error(analytic, numeric) < 1e-4);
  }
}

TEST_CASE("mlp backward matches finite differences over 20 seeds") {
  double worst = 0.0;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    MlpFieldT<double> field(tiny_config(seed + 100));
    Rng rng(seed);
    Mat pos, dir;
    random_batch(rng, 5, pos, dir);
    Vec dsigma(5);
    Mat drgb(3, 5);
    for (int i = 0; i < 5; ++i) {
      dsigma[i] = rng.uniform_in(-1, 1);
      for (int ch = 0; ch < 3; ++ch) drgb(ch, i) = rng.uniform_in(-1, 1);
    }

    Vec sigma;
    Mat rgb;
    const auto cache = field.eval_cached(pos, dir, sigma, rgb);
    std::vector<double> analytic(field.parameter_count(), 0.0);
    field.backward(*cache, dsigma, drgb, analytic);

    auto params = field.parameters();
    std::vector<double> numeric(params.size(), 0.0);
    const double eps = 1e-5;
    for (size_t p = 0; p < params.size(); ++p) {
      const double saved = params[p];
      params[p] = saved + eps;
      const double hi = directional_value(field, pos, dir, dsigma, drgb);
      params[p] = saved - eps;
      const double lo = directional_value(field, pos, dir, dsigma, drgb);
      params[p] = saved;
      numeric[p] = (hi - lo) / (2 * eps);
    }
    worst = std::max(worst, max_rel_error(analytic, numeric));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("occlusion loss examples") {
  SUBCASE("all zero densities") {
    const std::vector<double> sigmas(12, 0.0);
    CHECK(occlusion_loss<double>(sigmas, 2, 6, 3) == 0.0);
  }
  SUBCASE("K=2 arithmetic mean") {
    const std::vector<double> sigmas{4.0, 2.0, 100.0, 7.0};
    CHECK(occlusion_loss<double>(sigmas, 1, 4, 2) == doctest::Approx(3.0));
  }
  SUBCASE("gradient is 1/(K n_rays) inside the window") {
    std::vector<double> grad(8, 0.0);
    occlusion_loss_backward<double>(2, 4, 2, 1.0, grad);
    for (int r = 0; r < 2; ++r) {
      CHECK(grad[4 * r + 0] == doctest::Approx(0.25));
      CHECK(grad[4 * r + 1] == doctest::Approx(0.25));
      CHECK(grad[4 * r + 2] == 0.0);
      CHECK(grad[4 * r + 3] == 0.0);
    }
  }
  SUBCASE("errors") {
    const std::vector<double> sigmas(8, 0.0);
    CHECK_THROWS_AS(occlusion_loss<double>(sigmas, 2, 4, 5), TooFewSamples);
    CHECK_THROWS_AS(occlusion_loss<double>(sigmas, 3, 4, 2), ShapeMismatch);
  }
}

TEST_CASE("frequency ramp drives the field mask") {
  MlpConfig cfg = tiny_config(1);
  cfg.encoding.l_pos = 4;
  cfg.freq_ramp_fraction = 0.5;
  MlpFieldT<double> field(cfg);

  // Fresh fields have a fully open mask.
  for (double m : field.position_mask()) CHECK(m == 1.0);

  field.set_train_progress(0, 1000);  // ramp = 500 steps
  CHECK(field.position_mask()[0] == 0.0);
  field.set_train_progress(250, 1000);
  CHECK(field.position_mask()[0] == 1.0);
  CHECK(field.position_mask()[3] == 0.0);
  field.set_train_progress(999, 1000);
  for (double m : field.position_mask()) CHECK(m == 1.0);
  // Direction mask stays open unless configured otherwise.
  field.set_train_progress(0, 1000);
  for (double m : field.direction_mask()) CHECK(m == 1.0);
}

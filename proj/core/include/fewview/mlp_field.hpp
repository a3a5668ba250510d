#pragma once

#include <Eigen/Core>
#include <cmath>
#include <memory>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "fewview/encoding.hpp"
#include "fewview/errors.hpp"
#include "fewview/field.hpp"
#include "fewview/rng.hpp"

namespace fewview {

struct MlpConfig {
  EncodingConfig encoding;
  int hidden_layers = 4;
  int hidden_width = 64;
  int color_hidden_width = 32;
  bool mask_direction = false;    // apply the frequency mask to gamma(d) too
  double freq_ramp_fraction = 0.9;  // of total stage steps; <= 0 disables
  uint64_t init_seed = 1;
};

// Coordinate network: gamma(x) -> trunk of relu layers -> density head
// (softplus) and a direction-conditioned color branch (sigmoid). Parameters
// live in one flat buffer so the optimizer and checkpoints can treat every
// field uniformly.
template <typename T>
class MlpFieldT final : public RadianceFieldT<T> {
 public:
  using Mat = MatX<T>;
  using Vec = VecX<T>;

  explicit MlpFieldT(const MlpConfig& cfg) : cfg_(cfg) {
    if (cfg.encoding.l_pos < 1 || cfg.encoding.l_dir < 0)
      throw InvalidBounds("mlp field: need l_pos >= 1 and l_dir >= 0");
    if (cfg.hidden_layers < 1 || cfg.hidden_width < 1 ||
        cfg.color_hidden_width < 1)
      throw InvalidBounds("mlp field: layer sizes must be positive");
    in_pos_ = cfg.encoding.pos_dim();
    in_dir_ = cfg.encoding.dir_dim();
    layout_params();
    init_params();
    pos_mask_.assign(cfg.encoding.l_pos, T(1));
    dir_mask_.assign(cfg.encoding.l_dir, T(1));
  }

  std::string kind() const override { return "mlp"; }
  const MlpConfig& config() const { return cfg_; }

  std::span<T> parameters() override { return params_; }
  std::span<const T> parameters() const override { return params_; }

  void eval(const Mat& positions, const Mat& directions, Vec& sigma,
            Mat& rgb) const override {
    Cache scratch;
    scratch.owner = this;
    run_forward(positions, directions, sigma, rgb, scratch);
  }

  std::unique_ptr<FieldCacheT<T>> make_cache() const override {
    auto cache = std::make_unique<Cache>();
    cache->owner = this;
    return cache;
  }

  void eval_with_cache(const Mat& positions, const Mat& directions,
                       Vec& sigma, Mat& rgb,
                       FieldCacheT<T>& cache) const override {
    auto* c = dynamic_cast<Cache*>(&cache);
    if (!c || c->owner != this)
      throw CacheMismatch("mlp eval: cache from a different field");
    run_forward(positions, directions, sigma, rgb, *c);
  }

  void backward(const FieldCacheT<T>& cache, const Vec& dsigma,
                const Mat& drgb, std::span<T> grad) const override {
    const auto* c = dynamic_cast<const Cache*>(&cache);
    if (!c || c->owner != this)
      throw CacheMismatch("mlp backward: cache from a different field");
    const Eigen::Index batch = c->trunk_act[0].cols();
    if (dsigma.size() != batch || drgb.cols() != batch || drgb.rows() != 3 ||
        grad.size() != params_.size())
      throw ShapeMismatch("mlp backward: gradient shapes disagree");

    const int width = cfg_.hidden_width;
    const int layers = cfg_.hidden_layers;

    // Color branch; sigmoid'(z) = c (1 - c).
    Mat& d_zc2 = c->bw_zc2;
    d_zc2 = (drgb.array() * c->color.array() * (T(1) - c->color.array()))
                .matrix();
    w(grad, wc2_).noalias() += d_zc2 * c->ac1.transpose();
    b(grad, bc2_) += d_zc2.rowwise().sum();
    Mat& d_ac1 = c->bw_ac1;
    d_ac1.noalias() = w(params_, wc2_).transpose() * d_zc2;
    d_ac1.array() *= (c->zc1.array() > T(0)).template cast<T>();
    w(grad, wc1_).noalias() += d_ac1 * c->u.transpose();
    b(grad, bc1_) += d_ac1.rowwise().sum();
    Mat& d_u = c->bw_u;
    d_u.noalias() = w(params_, wc1_).transpose() * d_ac1;

    // Density head; softplus'(x) = sigmoid(x).
    Mat& d_s = c->bw_s;
    d_s = dsigma.transpose().cwiseProduct(sigmoid(c->s_logit));
    w(grad, wsig_).noalias() += d_s * c->trunk_act.back().transpose();
    b(grad, bsig_) += d_s.rowwise().sum();

    // Trunk, last layer first. trunk_act[i] is the activation feeding layer
    // i+1 (trunk_act[0] = encoded positions).
    Mat& d_a = c->bw_a;
    Mat& d_z = c->bw_z;
    d_a.noalias() = w(params_, wsig_).transpose() * d_s;
    d_a += d_u.topRows(width);
    for (int layer = layers; layer >= 1; --layer) {
      d_z = (d_a.array() *
             (c->trunk_pre[layer - 1].array() > T(0)).template cast<T>())
                .matrix();
      w(grad, trunk_w_[layer - 1]).noalias() +=
          d_z * c->trunk_act[layer - 1].transpose();
      b(grad, trunk_b_[layer - 1]) += d_z.rowwise().sum();
      if (layer > 1)
        d_a.noalias() = w(params_, trunk_w_[layer - 1]).transpose() * d_z;
    }
  }

  void set_train_progress(int step, int total_steps) override {
    schedule_.current_step = step;
    if (cfg_.freq_ramp_fraction <= 0.0) {
      std::fill(pos_mask_.begin(), pos_mask_.end(), T(1));
      std::fill(dir_mask_.begin(), dir_mask_.end(), T(1));
      return;
    }
    schedule_.ramp_steps = std::max(
        1, static_cast<int>(std::lround(cfg_.freq_ramp_fraction * total_steps)));
    pos_mask_ = schedule_.template mask<T>(cfg_.encoding.l_pos);
    dir_mask_ = cfg_.mask_direction
                    ? schedule_.template mask<T>(cfg_.encoding.l_dir)
                    : std::vector<T>(cfg_.encoding.l_dir, T(1));
  }

  const std::vector<T>& position_mask() const { return pos_mask_; }
  const std::vector<T>& direction_mask() const { return dir_mask_; }

  // Flat-buffer layout, for tests and manual parameter surgery. Biases have
  // cols == 0.
  struct ParamBlock {
    std::string name;
    size_t offset = 0;
    int rows = 0;
    int cols = 0;
  };
  std::vector<ParamBlock> param_blocks() const {
    std::vector<ParamBlock> blocks;
    for (size_t i = 0; i < trunk_w_.size(); ++i) {
      const std::string tag = std::to_string(i + 1);
      blocks.push_back({"trunk_w" + tag, trunk_w_[i].offset, trunk_w_[i].rows,
                        trunk_w_[i].cols});
      blocks.push_back({"trunk_b" + tag, trunk_b_[i].offset, trunk_b_[i].rows,
                        0});
    }
    blocks.push_back({"sigma_w", wsig_.offset, wsig_.rows, wsig_.cols});
    blocks.push_back({"sigma_b", bsig_.offset, bsig_.rows, 0});
    blocks.push_back({"color1_w", wc1_.offset, wc1_.rows, wc1_.cols});
    blocks.push_back({"color1_b", bc1_.offset, bc1_.rows, 0});
    blocks.push_back({"color2_w", wc2_.offset, wc2_.rows, wc2_.cols});
    blocks.push_back({"color2_b", bc2_.offset, bc2_.rows, 0});
    return blocks;
  }

  nlohmann::json describe() const override {
    return {{"kind", "mlp"},
            {"l_pos", cfg_.encoding.l_pos},
            {"l_dir", cfg_.encoding.l_dir},
            {"include_identity", cfg_.encoding.include_identity},
            {"hidden_layers", cfg_.hidden_layers},
            {"hidden_width", cfg_.hidden_width},
            {"color_hidden_width", cfg_.color_hidden_width},
            {"mask_direction", cfg_.mask_direction},
            {"freq_ramp_fraction", cfg_.freq_ramp_fraction},
            {"init_seed", cfg_.init_seed}};
  }

  static MlpConfig config_from_json(const nlohmann::json& j) {
    MlpConfig cfg;
    cfg.encoding.l_pos = j.at("l_pos").get<int>();
    cfg.encoding.l_dir = j.at("l_dir").get<int>();
    cfg.encoding.include_identity = j.at("include_identity").get<bool>();
    cfg.hidden_layers = j.at("hidden_layers").get<int>();
    cfg.hidden_width = j.at("hidden_width").get<int>();
    cfg.color_hidden_width = j.at("color_hidden_width").get<int>();
    cfg.mask_direction = j.at("mask_direction").get<bool>();
    cfg.freq_ramp_fraction = j.at("freq_ramp_fraction").get<double>();
    cfg.init_seed = j.at("init_seed").get<uint64_t>();
    return cfg;
  }

 private:
  struct Span {
    size_t offset = 0;
    int rows = 0;
    int cols = 0;  // cols == 0 marks a bias vector
  };

  struct Cache final : FieldCacheT<T> {
    const MlpFieldT* owner = nullptr;
    Mat u;                        // [trunk output; encoded directions]
    std::vector<Mat> trunk_pre;   // pre-activations per trunk layer
    std::vector<Mat> trunk_act;   // encoded positions, relu(z1), ..., relu(zL)
    Mat s_logit;                  // 1 x B
    Mat zc1, ac1;                 // color hidden layer
    Mat color;                    // sigmoid output, 3 x B
    // backward scratch, reused across steps when the cache is reused
    mutable Mat bw_zc2, bw_ac1, bw_u, bw_s, bw_a, bw_z;
    mutable Mat dir_enc;
  };

  static Mat sigmoid(const Mat& x) {
    return ((-x.array()).exp() + T(1)).inverse().matrix();
  }
  static Mat relu_mask(const Mat& z) {
    return (z.array() > T(0)).template cast<T>().matrix();
  }
  static Mat softplus(const Mat& x) {
    // log1p(exp(x)) with a linear tail to avoid overflow
    return (x.array() > T(20))
        .select(x.array(), (x.array().min(T(20)).exp().log1p()))
        .matrix();
  }

  Eigen::Map<Mat> w(std::span<T> buf, const Span& s) const {
    return Eigen::Map<Mat>(buf.data() + s.offset, s.rows, s.cols);
  }
  Eigen::Map<const Mat> w(std::span<const T> buf, const Span& s) const {
    return Eigen::Map<const Mat>(buf.data() + s.offset, s.rows, s.cols);
  }
  Eigen::Map<Vec> b(std::span<T> buf, const Span& s) const {
    return Eigen::Map<Vec>(buf.data() + s.offset, s.rows);
  }
  Eigen::Map<const Vec> b(std::span<const T> buf, const Span& s) const {
    return Eigen::Map<const Vec>(buf.data() + s.offset, s.rows);
  }

  void layout_params() {
    size_t offset = 0;
    auto add = [&offset](int rows, int cols) {
      Span s{offset, rows, cols};
      offset += size_t(rows) * std::max(1, cols);
      return s;
    };
    const int width = cfg_.hidden_width;
    trunk_w_.clear();
    trunk_b_.clear();
    for (int layer = 0; layer < cfg_.hidden_layers; ++layer) {
      const int fan_in = layer == 0 ? in_pos_ : width;
      trunk_w_.push_back(add(width, fan_in));
      trunk_b_.push_back(add(width, 0));
    }
    wsig_ = add(1, width);
    bsig_ = add(1, 0);
    wc1_ = add(cfg_.color_hidden_width, width + in_dir_);
    bc1_ = add(cfg_.color_hidden_width, 0);
    wc2_ = add(3, cfg_.color_hidden_width);
    bc2_ = add(3, 0);
    params_.assign(offset, T(0));
  }

  void init_params() {
    Rng rng(cfg_.init_seed);
    auto he_uniform = [this, &rng](const Span& s) {
      const double limit = std::sqrt(6.0 / s.cols);
      auto m = w(std::span<T>(params_), s);
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i)
          m(i, j) = static_cast<T>(rng.uniform_in(-limit, limit));
    };
    for (const auto& s : trunk_w_) he_uniform(s);
    he_uniform(wsig_);
    he_uniform(wc1_);
    he_uniform(wc2_);
    // biases stay zero
  }

  void run_forward(const Mat& positions, const Mat& directions, Vec& sigma,
                   Mat& rgb, Cache& c) const {
    if (positions.rows() != 3 || directions.rows() != 3 ||
        positions.cols() != directions.cols())
      throw ShapeMismatch("mlp eval: positions/directions must be 3 x N");
    if (!positions.allFinite() || !directions.allFinite())
      throw NonFiniteInput("mlp eval: non-finite input");

    const Eigen::Index batch = positions.cols();
    const int layers = cfg_.hidden_layers;
    c.trunk_pre.resize(layers);
    c.trunk_act.resize(layers + 1);
    positional_encoding<T>(positions, cfg_.encoding.l_pos,
                           cfg_.encoding.include_identity,
                           std::span<const T>(pos_mask_), c.trunk_act[0]);
    positional_encoding<T>(directions, cfg_.encoding.l_dir,
                           cfg_.encoding.include_identity,
                           std::span<const T>(dir_mask_), c.dir_enc);

    for (int layer = 0; layer < layers; ++layer) {
      c.trunk_pre[layer].noalias() =
          w(std::span<const T>(params_), trunk_w_[layer]) * c.trunk_act[layer];
      c.trunk_pre[layer].colwise() +=
          b(std::span<const T>(params_), trunk_b_[layer]);
      c.trunk_act[layer + 1] = c.trunk_pre[layer].cwiseMax(T(0));
    }

    c.s_logit.noalias() =
        w(std::span<const T>(params_), wsig_) * c.trunk_act[layers];
    c.s_logit.array() += params_[bsig_.offset];
    sigma = softplus(c.s_logit).transpose();

    c.u.resize(cfg_.hidden_width + in_dir_, batch);
    c.u.topRows(cfg_.hidden_width) = c.trunk_act[layers];
    c.u.bottomRows(in_dir_) = c.dir_enc;
    c.zc1.noalias() = w(std::span<const T>(params_), wc1_) * c.u;
    c.zc1.colwise() += b(std::span<const T>(params_), bc1_);
    c.ac1 = c.zc1.cwiseMax(T(0));
    Mat zc2 = w(std::span<const T>(params_), wc2_) * c.ac1;
    zc2.colwise() += b(std::span<const T>(params_), bc2_);
    c.color = sigmoid(zc2);
    rgb = c.color;
  }

  MlpConfig cfg_;
  int in_pos_ = 0;
  int in_dir_ = 0;
  std::vector<T> params_;
  std::vector<Span> trunk_w_, trunk_b_;
  Span wsig_, bsig_, wc1_, bc1_, wc2_, bc2_;
  FrequencySchedule schedule_;
  std::vector<T> pos_mask_, dir_mask_;
};

using MlpField = MlpFieldT<float>;

// Mean density over the first k samples of every ray; penalizes density
// right in front of the cameras. sigmas is (n_samples x n_rays)-shaped in
// ray-major sample order (sample s of ray r at index r * n_samples + s).
template <typename T>
T occlusion_loss(std::span<const T> sigmas, int n_rays, int n_samples, int k) {
  if (n_rays < 1 || n_samples < 1 ||
      sigmas.size() != size_t(n_rays) * n_samples)
    throw ShapeMismatch("occlusion_loss: bad sample layout");
  if (k < 1 || k > n_samples)
    throw TooFewSamples("occlusion_loss: need at least k samples per ray");
  double total = 0.0;
  for (int r = 0; r < n_rays; ++r)
    for (int s = 0; s < k; ++s) total += sigmas[size_t(r) * n_samples + s];
  return static_cast<T>(total / (double(k) * n_rays));
}

// d(occlusion_loss)/d(sigma_i): 1/(k * n_rays) inside the window, else 0.
// Accumulates into dsigmas scaled by `upstream`.
template <typename T>
void occlusion_loss_backward(int n_rays, int n_samples, int k, T upstream,
                             std::span<T> dsigmas) {
  if (dsigmas.size() != size_t(n_rays) * n_samples)
    throw ShapeMismatch("occlusion_loss_backward: bad sample layout");
  if (k < 1 || k > n_samples)
    throw TooFewSamples("occlusion_loss_backward: k out of range");
  const T g = upstream / (T(k) * T(n_rays));
  for (int r = 0; r < n_rays; ++r)
    for (int s = 0; s < k; ++s) dsigmas[size_t(r) * n_samples + s] += g;
}

}  // namespace fewview

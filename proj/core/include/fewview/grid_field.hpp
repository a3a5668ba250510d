#pragma once

#include <Eigen/Core>
#include <array>
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

// ---------------------------------------------------------------------------
// Interpolation primitives. Grids use align-corners node placement: node i of
// an n-node axis sits at i / (n - 1) in normalized [0,1] coordinates.

template <typename T>
struct LinWeights {
  int i0 = 0;
  T fx = 0;
};

template <typename T>
struct BiWeights {
  int i0 = 0, j0 = 0;
  T fx = 0, fy = 0;
};

template <typename T>
struct TriWeights {
  int i0 = 0, j0 = 0, k0 = 0;
  T fx = 0, fy = 0, fz = 0;
  bool inside = false;
};

template <typename T>
LinWeights<T> linear_weights(int n, T p) {
  const T u = p * (n - 1);
  int i0 = static_cast<int>(std::floor(u));
  i0 = std::clamp(i0, 0, n - 2);
  return {i0, u - i0};
}

template <typename T>
T linear_gather(std::span<const T> line, const LinWeights<T>& w) {
  return line[w.i0] * (T(1) - w.fx) + line[w.i0 + 1] * w.fx;
}

template <typename T>
void linear_scatter(std::span<T> line, const LinWeights<T>& w, T value) {
  line[w.i0] += value * (T(1) - w.fx);
  line[w.i0 + 1] += value * w.fx;
}

template <typename T>
BiWeights<T> bilinear_weights(int nu, int nv, T pu, T pv) {
  const auto wu = linear_weights(nu, pu);
  const auto wv = linear_weights(nv, pv);
  return {wu.i0, wv.i0, wu.fx, wv.fx};
}

// Plane grids are u-fastest: index = u + nu * v.
template <typename T>
T bilinear_gather(std::span<const T> plane, int nu, const BiWeights<T>& w) {
  const size_t base = w.i0 + size_t(nu) * w.j0;
  const T v00 = plane[base], v10 = plane[base + 1];
  const T v01 = plane[base + nu], v11 = plane[base + nu + 1];
  return (v00 * (T(1) - w.fx) + v10 * w.fx) * (T(1) - w.fy) +
         (v01 * (T(1) - w.fx) + v11 * w.fx) * w.fy;
}

template <typename T>
void bilinear_scatter(std::span<T> plane, int nu, const BiWeights<T>& w,
                      T value) {
  const size_t base = w.i0 + size_t(nu) * w.j0;
  plane[base] += value * (T(1) - w.fx) * (T(1) - w.fy);
  plane[base + 1] += value * w.fx * (T(1) - w.fy);
  plane[base + nu] += value * (T(1) - w.fx) * w.fy;
  plane[base + nu + 1] += value * w.fx * w.fy;
}

// Volume grids are x-fastest: index = i + nx * (j + ny * k).
template <typename T>
TriWeights<T> trilinear_weights(const Eigen::Vector3i& res,
                                const Eigen::Matrix<T, 3, 1>& p01) {
  TriWeights<T> w;
  w.inside = p01.x() >= T(0) && p01.x() <= T(1) && p01.y() >= T(0) &&
             p01.y() <= T(1) && p01.z() >= T(0) && p01.z() <= T(1);
  if (!w.inside) return w;
  const auto wx = linear_weights(res.x(), p01.x());
  const auto wy = linear_weights(res.y(), p01.y());
  const auto wz = linear_weights(res.z(), p01.z());
  w.i0 = wx.i0;
  w.j0 = wy.i0;
  w.k0 = wz.i0;
  w.fx = wx.fx;
  w.fy = wy.fx;
  w.fz = wz.fx;
  return w;
}

// Value at p01, or 0 outside the unit box (defined, not an error).
template <typename T>
T trilinear_sample(std::span<const T> grid, const Eigen::Vector3i& res,
                   const Eigen::Matrix<T, 3, 1>& p01) {
  const auto w = trilinear_weights(res, p01);
  if (!w.inside) return T(0);
  return trilinear_gather(grid, res, w);
}

template <typename T>
T trilinear_gather(std::span<const T> grid, const Eigen::Vector3i& res,
                   const TriWeights<T>& w) {
  const size_t nx = res.x(), nxy = size_t(res.x()) * res.y();
  const size_t base = w.i0 + nx * w.j0 + nxy * w.k0;
  auto lerp2 = [&](size_t at) {
    return (grid[at] * (T(1) - w.fx) + grid[at + 1] * w.fx) * (T(1) - w.fy) +
           (grid[at + nx] * (T(1) - w.fx) + grid[at + nx + 1] * w.fx) * w.fy;
  };
  return lerp2(base) * (T(1) - w.fz) + lerp2(base + nxy) * w.fz;
}

template <typename T>
void trilinear_scatter(std::span<T> grid, const Eigen::Vector3i& res,
                       const TriWeights<T>& w, T value) {
  if (!w.inside) return;
  const size_t nx = res.x(), nxy = size_t(res.x()) * res.y();
  const size_t base = w.i0 + nx * w.j0 + nxy * w.k0;
  for (int dz = 0; dz < 2; ++dz) {
    const T wz = dz ? w.fz : T(1) - w.fz;
    for (int dy = 0; dy < 2; ++dy) {
      const T wy = dy ? w.fy : T(1) - w.fy;
      for (int dx = 0; dx < 2; ++dx) {
        const T wx = dx ? w.fx : T(1) - w.fx;
        grid[base + dx + nx * dy + nxy * dz] += value * wx * wy * wz;
      }
    }
  }
}

// ---------------------------------------------------------------------------

struct GridBounds {
  Eigen::Vector3d bbox_min{-1.5, -1.5, -1.5};
  Eigen::Vector3d bbox_max{1.5, 1.5, 1.5};
  Eigen::Vector3i resolution{64, 64, 64};
};

template <typename T>
T shifted_softplus(T x, T shift) {
  const T z = x - shift;
  if (z > T(20)) return z;
  return std::log1p(std::exp(z));
}

// Axis pairings of the vector-matrix decomposition: pairing a couples a
// plane over (kPlaneU[a], kPlaneV[a]) with a line along kLineAxis[a].
inline constexpr int kPlaneU[3] = {0, 0, 1};
inline constexpr int kPlaneV[3] = {1, 2, 2};
inline constexpr int kLineAxis[3] = {2, 1, 0};

struct VmConfig {
  GridBounds bounds;
  int density_rank = 8;
  int appearance_rank = 8;
  int feature_dim = 12;
  int dir_bands = 2;
  bool dir_identity = true;
  double density_shift = 10.0;
  double init_scale = 0.1;
  double decoder_lr_scale = 0.05;
  uint64_t init_seed = 1;
};

// Tensor-factorized radiance field: density and appearance are sums over
// ranks of plane(u,v) * line(w) products across the three axis pairings;
// appearance coefficients go through a linear basis to F features, then a
// linear decoder conditioned on the encoded view direction. Everything is
// linear in the parameters up to the output nonlinearities, which keeps the
// hand-written adjoint short.
template <typename T>
class VmGridT final : public RadianceFieldT<T> {
 public:
  using Mat = MatX<T>;
  using Vec = VecX<T>;

  explicit VmGridT(const VmConfig& cfg) : cfg_(cfg) {
    if (cfg.density_rank < 1 || cfg.appearance_rank < 1 ||
        cfg.feature_dim < 1)
      throw InvalidBounds("vm grid: ranks and feature dim must be positive");
    for (int a = 0; a < 3; ++a)
      if (cfg.bounds.resolution[a] < 2)
        throw InvalidBounds("vm grid: resolution must be >= 2 per axis");
    dir_dim_ = 3 * ((cfg.dir_identity ? 1 : 0) + 2 * cfg.dir_bands);
    dir_ones_.assign(cfg.dir_bands, T(1));
    layout_params();
    init_params();
  }

  std::string kind() const override { return "vm"; }
  const VmConfig& config() const { return cfg_; }

  std::span<T> parameters() override { return params_; }
  std::span<const T> parameters() const override { return params_; }

  std::vector<T> lr_scales() const override {
    std::vector<T> scales(params_.size(), T(1));
    const T s = static_cast<T>(cfg_.decoder_lr_scale);
    for (size_t i = basis_off_; i < params_.size(); ++i) scales[i] = s;
    return scales;
  }

  // Parameter addressing, also used by tests that hand-build factorizations.
  size_t density_plane_offset(int a, int r) const {
    return dplane_off_[a] + size_t(r) * plane_size(a);
  }
  size_t density_line_offset(int a, int r) const {
    return dline_off_[a] + size_t(r) * line_size(a);
  }
  size_t appearance_plane_offset(int a, int r) const {
    return aplane_off_[a] + size_t(r) * plane_size(a);
  }
  size_t appearance_line_offset(int a, int r) const {
    return aline_off_[a] + size_t(r) * line_size(a);
  }
  size_t basis_offset() const { return basis_off_; }
  size_t decoder_w_offset() const { return dec_w_off_; }
  size_t decoder_b_offset() const { return dec_b_off_; }
  size_t plane_size(int a) const {
    return size_t(cfg_.bounds.resolution[kPlaneU[a]]) *
           cfg_.bounds.resolution[kPlaneV[a]];
  }
  size_t line_size(int a) const {
    return cfg_.bounds.resolution[kLineAxis[a]];
  }

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
      throw CacheMismatch("vm eval: cache from a different field");
    run_forward(positions, directions, sigma, rgb, *c);
  }

  void backward(const FieldCacheT<T>& cache, const Vec& dsigma,
                const Mat& drgb, std::span<T> grad) const override {
    const auto* c = dynamic_cast<const Cache*>(&cache);
    if (!c || c->owner != this)
      throw CacheMismatch("vm backward: cache from a different field");
    const Eigen::Index batch = c->raw.size();
    if (dsigma.size() != batch || drgb.cols() != batch || drgb.rows() != 3 ||
        grad.size() != params_.size())
      throw ShapeMismatch("vm backward: gradient shapes disagree");

    const int ra = cfg_.appearance_rank;
    const auto p = std::span<const T>(params_);

    // Color path: logits = W [f; dir_enc] + b, c = sigmoid(logits).
    Mat d_logit =
        (drgb.array() * c->color.array() * (T(1) - c->color.array())).matrix();
    for (Eigen::Index i = 0; i < batch; ++i)
      if (!c->inside[i]) d_logit.col(i).setZero();

    Eigen::Map<Mat> g_w(grad.data() + dec_w_off_, 3, cfg_.feature_dim + dir_dim_);
    Eigen::Map<Vec> g_b(grad.data() + dec_b_off_, 3);
    Eigen::Map<const Mat> w_dec(p.data() + dec_w_off_, 3,
                                cfg_.feature_dim + dir_dim_);
    Mat h(cfg_.feature_dim + dir_dim_, batch);
    h.topRows(cfg_.feature_dim) = c->features;
    h.bottomRows(dir_dim_) = c->dir_enc;
    g_w.noalias() += d_logit * h.transpose();
    g_b += d_logit.rowwise().sum();

    Mat dh = w_dec.transpose() * d_logit;
    Mat df = dh.topRows(cfg_.feature_dim);
    Eigen::Map<Mat> g_basis(grad.data() + basis_off_, cfg_.feature_dim, 3 * ra);
    Eigen::Map<const Mat> basis(p.data() + basis_off_, cfg_.feature_dim,
                                3 * ra);
    g_basis.noalias() += df * c->coeffs.transpose();
    Mat dq = basis.transpose() * df;  // (3 ra) x batch

    for (Eigen::Index i = 0; i < batch; ++i) {
      if (!c->inside[i]) continue;
      // Density factors; softplus'(raw - shift) = sigmoid(raw - shift).
      const T shifted = c->raw[i] - static_cast<T>(cfg_.density_shift);
      const T d_raw = dsigma[i] / (T(1) + std::exp(-shifted));
      for (int a = 0; a < 3; ++a) {
        const auto& bw = c->biw[a][i];
        const auto& lw = c->linw[a][i];
        const int nu = cfg_.bounds.resolution[kPlaneU[a]];
        for (int r = 0; r < cfg_.density_rank; ++r) {
          const T plane_val = c->dplane_vals[a](r, i);
          const T line_val = c->dline_vals[a](r, i);
          bilinear_scatter<T>(
              grad.subspan(density_plane_offset(a, r), plane_size(a)), nu, bw,
              d_raw * line_val);
          linear_scatter<T>(
              grad.subspan(density_line_offset(a, r), line_size(a)), lw,
              d_raw * plane_val);
        }
        // Appearance factors.
        for (int r = 0; r < ra; ++r) {
          const T dcoeff = dq(a * ra + r, i);
          const T plane_val = c->aplane_vals[a](r, i);
          const T line_val = c->aline_vals[a](r, i);
          bilinear_scatter<T>(
              grad.subspan(appearance_plane_offset(a, r), plane_size(a)), nu,
              bw, dcoeff * line_val);
          linear_scatter<T>(
              grad.subspan(appearance_line_offset(a, r), line_size(a)), lw,
              dcoeff * plane_val);
        }
      }
    }
  }

  // Factors resampled onto a finer grid (linear interpolation); decoder
  // parameters carry over unchanged.
  VmGridT upsampled(const Eigen::Vector3i& new_resolution) const {
    for (int a = 0; a < 3; ++a)
      if (new_resolution[a] < cfg_.bounds.resolution[a])
        throw ShrinkNotSupported("vm upsample: new resolution must be >= old");
    VmConfig new_cfg = cfg_;
    new_cfg.bounds.resolution = new_resolution;
    VmGridT out(new_cfg);
    std::fill(out.params_.begin(), out.params_.end(), T(0));
    for (int a = 0; a < 3; ++a) {
      for (int r = 0; r < cfg_.density_rank; ++r) {
        resample_plane(a, density_plane_offset(a, r),
                       out.density_plane_offset(a, r), out);
        resample_line(a, density_line_offset(a, r),
                      out.density_line_offset(a, r), out);
      }
      for (int r = 0; r < cfg_.appearance_rank; ++r) {
        resample_plane(a, appearance_plane_offset(a, r),
                       out.appearance_plane_offset(a, r), out);
        resample_line(a, appearance_line_offset(a, r),
                      out.appearance_line_offset(a, r), out);
      }
    }
    std::copy(params_.begin() + basis_off_, params_.end(),
              out.params_.begin() + out.basis_off_);
    return out;
  }

  nlohmann::json describe() const override {
    return {{"kind", "vm"},
            {"bbox_min", {cfg_.bounds.bbox_min.x(), cfg_.bounds.bbox_min.y(),
                          cfg_.bounds.bbox_min.z()}},
            {"bbox_max", {cfg_.bounds.bbox_max.x(), cfg_.bounds.bbox_max.y(),
                          cfg_.bounds.bbox_max.z()}},
            {"resolution", {cfg_.bounds.resolution.x(),
                            cfg_.bounds.resolution.y(),
                            cfg_.bounds.resolution.z()}},
            {"density_rank", cfg_.density_rank},
            {"appearance_rank", cfg_.appearance_rank},
            {"feature_dim", cfg_.feature_dim},
            {"dir_bands", cfg_.dir_bands},
            {"dir_identity", cfg_.dir_identity},
            {"density_shift", cfg_.density_shift},
            {"init_scale", cfg_.init_scale},
            {"decoder_lr_scale", cfg_.decoder_lr_scale},
            {"init_seed", cfg_.init_seed}};
  }

  static VmConfig config_from_json(const nlohmann::json& j) {
    VmConfig cfg;
    for (int a = 0; a < 3; ++a) {
      cfg.bounds.bbox_min[a] = j.at("bbox_min").at(a).get<double>();
      cfg.bounds.bbox_max[a] = j.at("bbox_max").at(a).get<double>();
      cfg.bounds.resolution[a] = j.at("resolution").at(a).get<int>();
    }
    cfg.density_rank = j.at("density_rank").get<int>();
    cfg.appearance_rank = j.at("appearance_rank").get<int>();
    cfg.feature_dim = j.at("feature_dim").get<int>();
    cfg.dir_bands = j.at("dir_bands").get<int>();
    cfg.dir_identity = j.at("dir_identity").get<bool>();
    cfg.density_shift = j.at("density_shift").get<double>();
    cfg.init_scale = j.at("init_scale").get<double>();
    cfg.decoder_lr_scale = j.at("decoder_lr_scale").get<double>();
    cfg.init_seed = j.at("init_seed").get<uint64_t>();
    return cfg;
  }

 private:
  struct Cache final : FieldCacheT<T> {
    const VmGridT* owner = nullptr;
    std::vector<uint8_t> inside;
    std::array<std::vector<BiWeights<T>>, 3> biw;
    std::array<std::vector<LinWeights<T>>, 3> linw;
    std::array<Mat, 3> dplane_vals, dline_vals;  // rank x batch
    std::array<Mat, 3> aplane_vals, aline_vals;
    Mat coeffs;    // (3 ra) x batch
    Mat features;  // F x batch
    Mat dir_enc;   // dir_dim x batch
    Vec raw;       // density pre-activation
    Mat color;     // 3 x batch
  };

  void layout_params() {
    size_t offset = 0;
    for (int a = 0; a < 3; ++a) {
      dplane_off_[a] = offset;
      offset += size_t(cfg_.density_rank) * plane_size(a);
    }
    for (int a = 0; a < 3; ++a) {
      dline_off_[a] = offset;
      offset += size_t(cfg_.density_rank) * line_size(a);
    }
    for (int a = 0; a < 3; ++a) {
      aplane_off_[a] = offset;
      offset += size_t(cfg_.appearance_rank) * plane_size(a);
    }
    for (int a = 0; a < 3; ++a) {
      aline_off_[a] = offset;
      offset += size_t(cfg_.appearance_rank) * line_size(a);
    }
    basis_off_ = offset;
    offset += size_t(cfg_.feature_dim) * 3 * cfg_.appearance_rank;
    dec_w_off_ = offset;
    offset += size_t(3) * (cfg_.feature_dim + dir_dim_);
    dec_b_off_ = offset;
    offset += 3;
    params_.assign(offset, T(0));
  }

  void init_params() {
    Rng rng(cfg_.init_seed);
    const double s = cfg_.init_scale;
    for (size_t i = 0; i < basis_off_; ++i)
      params_[i] = static_cast<T>(rng.uniform_in(-s, s));
    const double basis_limit = std::sqrt(6.0 / (3.0 * cfg_.appearance_rank));
    for (size_t i = basis_off_; i < dec_w_off_; ++i)
      params_[i] = static_cast<T>(rng.uniform_in(-basis_limit, basis_limit));
    const double dec_limit = std::sqrt(6.0 / (cfg_.feature_dim + dir_dim_));
    for (size_t i = dec_w_off_; i < dec_b_off_; ++i)
      params_[i] = static_cast<T>(rng.uniform_in(-dec_limit, dec_limit));
    // decoder bias stays zero
  }

  void run_forward(const Mat& positions, const Mat& directions, Vec& sigma,
                   Mat& rgb, Cache& c) const {
    if (positions.rows() != 3 || directions.rows() != 3 ||
        positions.cols() != directions.cols())
      throw ShapeMismatch("vm eval: positions/directions must be 3 x N");
    if (!positions.allFinite() || !directions.allFinite())
      throw NonFiniteInput("vm eval: non-finite input");

    const Eigen::Index batch = positions.cols();
    const int rd = cfg_.density_rank;
    const int ra = cfg_.appearance_rank;
    const auto p = std::span<const T>(params_);

    c.inside.assign(batch, 0);
    for (int a = 0; a < 3; ++a) {
      c.biw[a].resize(batch);
      c.linw[a].resize(batch);
      c.dplane_vals[a].setZero(rd, batch);
      c.dline_vals[a].setZero(rd, batch);
      c.aplane_vals[a].setZero(ra, batch);
      c.aline_vals[a].setZero(ra, batch);
    }
    c.coeffs.setZero(3 * ra, batch);
    c.raw.setZero(batch);
    sigma.setZero(batch);

    const Eigen::Matrix<T, 3, 1> bmin = cfg_.bounds.bbox_min.cast<T>();
    const Eigen::Matrix<T, 3, 1> extent =
        (cfg_.bounds.bbox_max - cfg_.bounds.bbox_min).cast<T>();

    for (Eigen::Index i = 0; i < batch; ++i) {
      const Eigen::Matrix<T, 3, 1> p01 =
          (positions.col(i) - bmin).cwiseQuotient(extent);
      const bool inside = p01.minCoeff() >= T(0) && p01.maxCoeff() <= T(1);
      c.inside[i] = inside ? 1 : 0;
      if (!inside) continue;  // sigma stays exactly 0: no contribution

      T raw = T(0);
      for (int a = 0; a < 3; ++a) {
        const int nu = cfg_.bounds.resolution[kPlaneU[a]];
        const int nv = cfg_.bounds.resolution[kPlaneV[a]];
        const int nw = cfg_.bounds.resolution[kLineAxis[a]];
        const auto bw =
            bilinear_weights<T>(nu, nv, p01[kPlaneU[a]], p01[kPlaneV[a]]);
        const auto lw = linear_weights<T>(nw, p01[kLineAxis[a]]);
        c.biw[a][i] = bw;
        c.linw[a][i] = lw;
        for (int r = 0; r < rd; ++r) {
          const T plane_val = bilinear_gather<T>(
              p.subspan(density_plane_offset(a, r), plane_size(a)), nu, bw);
          const T line_val = linear_gather<T>(
              p.subspan(density_line_offset(a, r), line_size(a)), lw);
          c.dplane_vals[a](r, i) = plane_val;
          c.dline_vals[a](r, i) = line_val;
          raw += plane_val * line_val;
        }
        for (int r = 0; r < ra; ++r) {
          const T plane_val = bilinear_gather<T>(
              p.subspan(appearance_plane_offset(a, r), plane_size(a)), nu, bw);
          const T line_val = linear_gather<T>(
              p.subspan(appearance_line_offset(a, r), line_size(a)), lw);
          c.aplane_vals[a](r, i) = plane_val;
          c.aline_vals[a](r, i) = line_val;
          c.coeffs(a * ra + r, i) = plane_val * line_val;
        }
      }
      c.raw[i] = raw;
      sigma[i] = shifted_softplus(raw, static_cast<T>(cfg_.density_shift));
    }

    positional_encoding<T>(directions, cfg_.dir_bands, cfg_.dir_identity,
                           std::span<const T>(dir_ones()), c.dir_enc);

    Eigen::Map<const Mat> basis(p.data() + basis_off_, cfg_.feature_dim,
                                3 * ra);
    c.features.noalias() = basis * c.coeffs;
    Eigen::Map<const Mat> w_dec(p.data() + dec_w_off_, 3,
                                cfg_.feature_dim + dir_dim_);
    Eigen::Map<const Vec> b_dec(p.data() + dec_b_off_, 3);
    Mat logits(3, batch);
    logits.noalias() = w_dec.leftCols(cfg_.feature_dim) * c.features;
    logits.noalias() += w_dec.rightCols(dir_dim_) * c.dir_enc;
    logits.colwise() += b_dec;
    c.color = ((-logits.array()).exp() + T(1)).inverse().matrix();
    for (Eigen::Index i = 0; i < batch; ++i)
      if (!c.inside[i]) c.color.col(i).setZero();
    rgb = c.color;
  }

  const std::vector<T>& dir_ones() const { return dir_ones_; }

  void resample_plane(int a, size_t src_off, size_t dst_off,
                      VmGridT& out) const {
    const int nu_old = cfg_.bounds.resolution[kPlaneU[a]];
    const int nv_old = cfg_.bounds.resolution[kPlaneV[a]];
    const int nu_new = out.cfg_.bounds.resolution[kPlaneU[a]];
    const int nv_new = out.cfg_.bounds.resolution[kPlaneV[a]];
    auto src = std::span<const T>(params_).subspan(src_off, plane_size(a));
    auto dst = std::span<T>(out.params_).subspan(dst_off, out.plane_size(a));
    for (int v = 0; v < nv_new; ++v) {
      const T pv = nv_new == 1 ? T(0) : T(v) / (nv_new - 1);
      for (int u = 0; u < nu_new; ++u) {
        const T pu = nu_new == 1 ? T(0) : T(u) / (nu_new - 1);
        dst[u + size_t(nu_new) * v] =
            bilinear_gather<T>(src, nu_old,
                               bilinear_weights<T>(nu_old, nv_old, pu, pv));
      }
    }
  }

  void resample_line(int a, size_t src_off, size_t dst_off,
                     VmGridT& out) const {
    const int n_old = cfg_.bounds.resolution[kLineAxis[a]];
    const int n_new = out.cfg_.bounds.resolution[kLineAxis[a]];
    auto src = std::span<const T>(params_).subspan(src_off, line_size(a));
    auto dst = std::span<T>(out.params_).subspan(dst_off, out.line_size(a));
    for (int i = 0; i < n_new; ++i) {
      const T pi = n_new == 1 ? T(0) : T(i) / (n_new - 1);
      dst[i] = linear_gather<T>(src, linear_weights<T>(n_old, pi));
    }
  }

  VmConfig cfg_;
  int dir_dim_ = 0;
  std::vector<T> params_;
  std::array<size_t, 3> dplane_off_{}, dline_off_{}, aplane_off_{},
      aline_off_{};
  size_t basis_off_ = 0, dec_w_off_ = 0, dec_b_off_ = 0;
  std::vector<T> dir_ones_;
};

using VmGrid = VmGridT<float>;

// ---------------------------------------------------------------------------

struct DenseConfig {
  GridBounds bounds;
  double density_shift = 10.0;
  double init_scale = 0.0;  // zero-init keeps the grid transparent
  uint64_t init_seed = 1;
};

// Plain per-voxel grid: a density logit volume plus three color logit
// volumes, trilinearly interpolated then pushed through softplus / sigmoid.
// View-independent; serves as the swap-in alternative fast field.
template <typename T>
class DenseGridT final : public RadianceFieldT<T> {
 public:
  using Mat = MatX<T>;
  using Vec = VecX<T>;

  explicit DenseGridT(const DenseConfig& cfg) : cfg_(cfg) {
    for (int a = 0; a < 3; ++a)
      if (cfg.bounds.resolution[a] < 2)
        throw InvalidBounds("dense grid: resolution must be >= 2 per axis");
    voxels_ = size_t(cfg.bounds.resolution.x()) * cfg.bounds.resolution.y() *
              cfg.bounds.resolution.z();
    params_.assign(4 * voxels_, T(0));
    if (cfg.init_scale > 0.0) {
      Rng rng(cfg.init_seed);
      for (auto& v : params_)
        v = static_cast<T>(rng.uniform_in(-cfg.init_scale, cfg.init_scale));
    }
  }

  std::string kind() const override { return "dense"; }
  const DenseConfig& config() const { return cfg_; }

  std::span<T> parameters() override { return params_; }
  std::span<const T> parameters() const override { return params_; }

  size_t sigma_offset() const { return 0; }
  size_t channel_offset(int ch) const { return voxels_ * (1 + ch); }

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
      throw CacheMismatch("dense eval: cache from a different field");
    run_forward(positions, directions, sigma, rgb, *c);
  }

  void backward(const FieldCacheT<T>& cache, const Vec& dsigma,
                const Mat& drgb, std::span<T> grad) const override {
    const auto* c = dynamic_cast<const Cache*>(&cache);
    if (!c || c->owner != this)
      throw CacheMismatch("dense backward: cache from a different field");
    const Eigen::Index batch = c->raw.size();
    if (dsigma.size() != batch || drgb.cols() != batch || drgb.rows() != 3 ||
        grad.size() != params_.size())
      throw ShapeMismatch("dense backward: gradient shapes disagree");
    const auto& res = cfg_.bounds.resolution;
    for (Eigen::Index i = 0; i < batch; ++i) {
      const auto& w = c->weights[i];
      if (!w.inside) continue;
      const T shifted = c->raw[i] - static_cast<T>(cfg_.density_shift);
      const T d_raw = dsigma[i] / (T(1) + std::exp(-shifted));
      trilinear_scatter<T>(grad.subspan(sigma_offset(), voxels_), res, w,
                           d_raw);
      for (int ch = 0; ch < 3; ++ch) {
        const T cc = c->color(ch, i);
        const T d_logit = drgb(ch, i) * cc * (T(1) - cc);
        trilinear_scatter<T>(grad.subspan(channel_offset(ch), voxels_), res, w,
                             d_logit);
      }
    }
  }

  nlohmann::json describe() const override {
    return {{"kind", "dense"},
            {"bbox_min", {cfg_.bounds.bbox_min.x(), cfg_.bounds.bbox_min.y(),
                          cfg_.bounds.bbox_min.z()}},
            {"bbox_max", {cfg_.bounds.bbox_max.x(), cfg_.bounds.bbox_max.y(),
                          cfg_.bounds.bbox_max.z()}},
            {"resolution", {cfg_.bounds.resolution.x(),
                            cfg_.bounds.resolution.y(),
                            cfg_.bounds.resolution.z()}},
            {"density_shift", cfg_.density_shift},
            {"init_scale", cfg_.init_scale},
            {"init_seed", cfg_.init_seed}};
  }

  static DenseConfig config_from_json(const nlohmann::json& j) {
    DenseConfig cfg;
    for (int a = 0; a < 3; ++a) {
      cfg.bounds.bbox_min[a] = j.at("bbox_min").at(a).get<double>();
      cfg.bounds.bbox_max[a] = j.at("bbox_max").at(a).get<double>();
      cfg.bounds.resolution[a] = j.at("resolution").at(a).get<int>();
    }
    cfg.density_shift = j.at("density_shift").get<double>();
    cfg.init_scale = j.at("init_scale").get<double>();
    cfg.init_seed = j.at("init_seed").get<uint64_t>();
    return cfg;
  }

 private:
  struct Cache final : FieldCacheT<T> {
    const DenseGridT* owner = nullptr;
    std::vector<TriWeights<T>> weights;
    Vec raw;
    Mat color;
  };

  void run_forward(const Mat& positions, const Mat& directions, Vec& sigma,
                   Mat& rgb, Cache& c) const {
    if (positions.rows() != 3 || directions.rows() != 3 ||
        positions.cols() != directions.cols())
      throw ShapeMismatch("dense eval: positions/directions must be 3 x N");
    if (!positions.allFinite() || !directions.allFinite())
      throw NonFiniteInput("dense eval: non-finite input");
    const Eigen::Index batch = positions.cols();
    const auto& res = cfg_.bounds.resolution;
    const auto p = std::span<const T>(params_);

    c.weights.resize(batch);
    c.raw.setZero(batch);
    c.color.setZero(3, batch);
    sigma.setZero(batch);
    rgb.setZero(3, batch);

    const Eigen::Matrix<T, 3, 1> bmin = cfg_.bounds.bbox_min.cast<T>();
    const Eigen::Matrix<T, 3, 1> extent =
        (cfg_.bounds.bbox_max - cfg_.bounds.bbox_min).cast<T>();
    for (Eigen::Index i = 0; i < batch; ++i) {
      const Eigen::Matrix<T, 3, 1> p01 =
          (positions.col(i) - bmin).cwiseQuotient(extent);
      const auto w = trilinear_weights<T>(res, p01);
      c.weights[i] = w;
      if (!w.inside) continue;
      const T raw = trilinear_gather<T>(p.subspan(sigma_offset(), voxels_),
                                        res, w);
      c.raw[i] = raw;
      sigma[i] = shifted_softplus(raw, static_cast<T>(cfg_.density_shift));
      for (int ch = 0; ch < 3; ++ch) {
        const T logit = trilinear_gather<T>(
            p.subspan(channel_offset(ch), voxels_), res, w);
        c.color(ch, i) = T(1) / (T(1) + std::exp(-logit));
      }
    }
    rgb = c.color;
  }

  DenseConfig cfg_;
  size_t voxels_ = 0;
  std::vector<T> params_;
};

using DenseGrid = DenseGridT<float>;

}  // namespace fewview

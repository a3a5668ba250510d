#include "fewview/trainer.hpp"

#include <chrono>
#include <cmath>

#include "fewview/checkpoint.hpp"
#include "fewview/errors.hpp"
#include "fewview/mlp_field.hpp"
#include "fewview/optimizer.hpp"
#include "fewview/parallel.hpp"

namespace fewview {

void StageConfig::validate() const {
  if (iterations < 0) throw InvalidBounds("stage: iterations must be >= 0");
  if (rays_per_batch < 1)
    throw InvalidBounds("stage: rays_per_batch must be >= 1");
  if (!(lr >= 0.0) || !(lr_final_factor > 0.0))
    throw InvalidBounds("stage: bad learning rate schedule");
  if (occlusion_weight < 0.0)
    throw InvalidBounds("stage: occlusion weight must be >= 0");
  if (occlusion_k < 1) throw InvalidBounds("stage: occlusion_k must be >= 1");
  if (render.n_samples < 2)
    throw InvalidBounds("stage: need n_samples >= 2");
}

namespace {

constexpr int kChunkRays = 128;

struct RayBatch {
  // One column per ray.
  Eigen::MatrixXd origins;     // 3 x R
  Eigen::MatrixXd directions;  // 3 x R
  MatX<float> gt;              // 3 x R
  MatX<float> depth_draws;     // n_samples x R, uniforms in [0,1)
};

// Draws the whole batch single-threaded so the RNG stream is independent of
// worker scheduling.
void draw_ray_batch(const SceneDataset& dataset, int rays, int n_samples,
                    Rng& rng, RayBatch& batch) {
  batch.origins.resize(3, rays);
  batch.directions.resize(3, rays);
  batch.gt.resize(3, rays);
  batch.depth_draws.resize(n_samples, rays);
  const int n_frames = static_cast<int>(dataset.frames.size());
  for (int r = 0; r < rays; ++r) {
    const auto& frame =
        dataset.frames[rng.uniform_index(static_cast<uint64_t>(n_frames))];
    const int px =
        static_cast<int>(rng.uniform_index(frame.camera.width));
    const int py =
        static_cast<int>(rng.uniform_index(frame.camera.height));
    const Ray ray = pixel_ray(frame.camera, px, py);
    batch.origins.col(r) = ray.origin;
    batch.directions.col(r) = ray.direction;
    const float* gt = frame.image.pixel(px, py);
    batch.gt.col(r) = Eigen::Vector3f(gt[0], gt[1], gt[2]);
    for (int k = 0; k < n_samples; ++k)
      batch.depth_draws(k, r) = rng.uniform_float();
  }
}

StageResult train_loop(const SceneDataset& dataset, RadianceField& field,
                       const StageConfig& cfg, bool regularized) {
  cfg.validate();
  if (dataset.frames.empty())
    throw NotEnoughFrames("train: dataset has no frames");
  dataset.validate();
  const int n = cfg.render.n_samples;
  if (regularized && cfg.occlusion_weight > 0.0 && cfg.occlusion_k > n)
    throw TooFewSamples("train: occlusion_k exceeds samples per ray");

  const auto t_start = std::chrono::steady_clock::now();
  const int rays = cfg.rays_per_batch;
  const int n_chunks = (rays + kChunkRays - 1) / kChunkRays;
  const size_t n_params = field.parameter_count();

  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  Adam adam(n_params, adam_cfg, field.lr_scales());

  Rng rng(cfg.seed);
  RayBatch batch;
  std::vector<std::vector<float>> chunk_grads(
      n_chunks, std::vector<float>(n_params, 0.0f));
  std::vector<double> chunk_recon(n_chunks, 0.0);
  std::vector<double> chunk_occl(n_chunks, 0.0);
  std::vector<float> grad(n_params, 0.0f);
  const Eigen::Vector3f bg = cfg.render.background;

  // Per-chunk scratch reused across iterations; activation buffers keep
  // their allocations once the shapes have settled.
  struct ChunkScratch {
    std::unique_ptr<FieldCache> cache;
    MatX<float> positions, directions, t_values, deltas;
    VecX<float> sigma, dsigma;
    MatX<float> rgb, drgb, dcol_ray;
  };
  std::vector<ChunkScratch> scratch(n_chunks);
  for (auto& s : scratch) s.cache = field.make_cache();

  StageResult result;
  result.loss_curve.reserve(cfg.iterations);

  for (int step = 0; step < cfg.iterations; ++step) {
    if (regularized) field.set_train_progress(step, cfg.iterations);
    draw_ray_batch(dataset, rays, n, rng, batch);

    parallel_chunks(rays, kChunkRays, [&](int64_t begin, int64_t end) {
      const int chunk = static_cast<int>(begin / kChunkRays);
      const int chunk_rays = static_cast<int>(end - begin);
      const int count = chunk_rays * n;
      ChunkScratch& s = scratch[chunk];

      s.positions.resize(3, count);
      s.directions.resize(3, count);
      s.t_values.resize(n, chunk_rays);
      s.deltas.resize(n, chunk_rays);
      for (int r = 0; r < chunk_rays; ++r) {
        detail::stratified_depths<float>(
            cfg.render.near, cfg.render.far, n,
            std::span<const float>(batch.depth_draws.col(begin + r).data(),
                                   n),
            s.t_values.col(r).data(), s.deltas.col(r).data());
        const Eigen::Vector3f o =
            batch.origins.col(begin + r).cast<float>();
        const Eigen::Vector3f d =
            batch.directions.col(begin + r).cast<float>();
        for (int k = 0; k < n; ++k) {
          s.positions.col(r * n + k) = o + s.t_values(k, r) * d;
          s.directions.col(r * n + k) = d;
        }
      }

      field.eval_with_cache(s.positions, s.directions, s.sigma, s.rgb,
                            *s.cache);

      s.dsigma.setZero(count);
      s.drgb.setZero(3, count);
      double recon = 0.0;
      const float inv_elems = 1.0f / (3.0f * rays);
      for (int r = 0; r < chunk_rays; ++r) {
        const auto sig_span =
            std::span<const float>(s.sigma.data() + size_t(r) * n, n);
        const auto delta_span =
            std::span<const float>(s.deltas.col(r).data(), n);
        const auto out =
            composite<float>(sig_span, s.rgb.middleCols(size_t(r) * n, n),
                             delta_span, bg);
        const Eigen::Vector3f diff =
            out.pixel_color - Eigen::Vector3f(batch.gt.col(begin + r));
        recon += diff.squaredNorm();
        const Eigen::Vector3f upstream = 2.0f * inv_elems * diff;
        composite_backward<float>(
            sig_span, s.rgb.middleCols(size_t(r) * n, n), delta_span, bg,
            upstream, std::span<float>(s.dsigma.data() + size_t(r) * n, n),
            s.dcol_ray);
        s.drgb.middleCols(size_t(r) * n, n) = s.dcol_ray;
      }

      double occl = 0.0;
      if (regularized && cfg.occlusion_weight > 0.0) {
        occl = occlusion_loss<float>(
                   std::span<const float>(s.sigma.data(), count), chunk_rays,
                   n, cfg.occlusion_k) *
               chunk_rays;  // re-scaled to a sum over this chunk's rays
        occlusion_loss_backward<float>(
            chunk_rays, n, cfg.occlusion_k,
            static_cast<float>(cfg.occlusion_weight) * chunk_rays /
                static_cast<float>(rays),
            std::span<float>(s.dsigma.data(), count));
      }

      field.backward(*s.cache, s.dsigma, s.drgb, chunk_grads[chunk]);
      chunk_recon[chunk] = recon;
      chunk_occl[chunk] = occl;
    });

    // Fixed-order reduction keeps the result independent of scheduling.
    std::fill(grad.begin(), grad.end(), 0.0f);
    double recon_sum = 0.0, occl_sum = 0.0;
    for (int c = 0; c < n_chunks; ++c) {
      const auto& g = chunk_grads[c];
      for (size_t i = 0; i < n_params; ++i) grad[i] += g[i];
      recon_sum += chunk_recon[c];
      occl_sum += chunk_occl[c];
      std::fill(chunk_grads[c].begin(), chunk_grads[c].end(), 0.0f);
    }

    const double lr =
        cfg.lr * std::pow(cfg.lr_final_factor,
                          double(step) / std::max(1, cfg.iterations - 1));
    adam.step(field.parameters(), grad, lr);

    const double loss = recon_sum / (3.0 * rays) +
                        cfg.occlusion_weight * occl_sum / rays;
    result.loss_curve.push_back(loss);
  }

  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return result;
}

}  // namespace

StageResult train_stage1(const SceneDataset& sparse_train,
                         RadianceField& reg_field, const StageConfig& cfg) {
  return train_loop(sparse_train, reg_field, cfg, /*regularized=*/true);
}

StageResult train_stage2(const SceneDataset& dense_train,
                         RadianceField& fast_field, const StageConfig& cfg) {
  return train_loop(dense_train, fast_field, cfg, /*regularized=*/false);
}

StageResult train_stage3(const SceneDataset& sparse_train,
                         RadianceField& fast_field, const StageConfig& cfg) {
  return train_loop(sparse_train, fast_field, cfg, /*regularized=*/false);
}

SceneDataset generate_pseudo_views(const RadianceField& reg_field,
                                   const std::vector<Camera>& poses,
                                   const RenderConfig& render_cfg) {
  if (poses.empty())
    throw InvalidBounds("generate_pseudo_views: poses must be nonempty");
  SceneDataset ds;
  ds.background = render_cfg.background;
  ds.pseudo = true;
  ds.camera_angle_x =
      2.0 * std::atan(0.5 * poses[0].width / poses[0].focal);
  ds.metadata = {{"generator", "pseudo"},
                 {"field", reg_field.kind()},
                 {"n_views", poses.size()}};
  ds.frames.resize(poses.size());
  for (size_t i = 0; i < poses.size(); ++i) {
    Frame& f = ds.frames[i];
    f.camera = poses[i];
    char buf[16];
    std::snprintf(buf, sizeof(buf), "p_%03zu", i);
    f.name = buf;
    f.image = quantized(render_image(reg_field, poses[i], render_cfg));
  }
  ds.validate();
  return ds;
}

SceneDataset generate_pseudo_views(const std::string& checkpoint_path,
                                   const std::vector<Camera>& poses,
                                   const RenderConfig& render_cfg) {
  const auto field = load_checkpoint(checkpoint_path);
  return generate_pseudo_views(*field, poses, render_cfg);
}

}  // namespace fewview

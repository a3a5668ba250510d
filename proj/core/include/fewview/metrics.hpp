#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "fewview/image.hpp"

namespace fewview {

// Peak signal-to-noise ratio in dB over all channels, MAX = 1 (linear float
// space). Capped at 99 dB once MSE drops below 1e-10.
double psnr(const Image& a, const Image& b);

inline constexpr double kPsnrCap = 99.0;

// Mean structural similarity: 11x11 Gaussian window (sigma 1.5),
// C1 = 0.01^2, C2 = 0.03^2, computed per RGB channel over valid window
// positions (no padding) and averaged. Requires min(width, height) >= 11.
double ssim(const Image& a, const Image& b);

struct ViewMetrics {
  std::string name;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct MetricReport {
  std::vector<ViewMetrics> views;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  std::string config_hash;  // hash of the config snapshot it was computed under

  void finalize();  // fills the means
  nlohmann::json to_json() const;
};

// FNV-1a over the serialized config; stable across runs.
std::string hash_config(const nlohmann::json& config);

// Writes dir/report.json plus one CSV per named curve (step,loss) and a
// plain-text stage table. `report` is stored as-is.
void emit_report(const nlohmann::json& report,
                 const std::vector<std::pair<std::string, std::vector<double>>>&
                     loss_curves,
                 const std::string& dir);

}  // namespace fewview

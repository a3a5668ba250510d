#include "fewview/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fewview/errors.hpp"

namespace fewview {

namespace fs = std::filesystem;

double psnr(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height)
    throw ShapeMismatch("psnr: image shapes disagree");
  double sum_sq = 0.0;
  for (size_t i = 0; i < a.rgb.size(); ++i) {
    const double d = double(a.rgb[i]) - double(b.rgb[i]);
    sum_sq += d * d;
  }
  const double mse = sum_sq / double(a.rgb.size());
  if (mse < 1e-10) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace {

constexpr int kWindow = 11;
constexpr int kRadius = kWindow / 2;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::vector<double>& gaussian_kernel() {
  static const std::vector<double> kernel = [] {
    std::vector<double> k(kWindow);
    const double sigma = 1.5;
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
      const double x = i - kRadius;
      k[i] = std::exp(-x * x / (2.0 * sigma * sigma));
      sum += k[i];
    }
    for (auto& v : k) v /= sum;
    return k;
  }();
  return kernel;
}

// Separable valid-mode Gaussian filter: in is h x w row-major, out becomes
// (h - 10) x (w - 10).
void gauss_valid(const std::vector<double>& in, int w, int h,
                 std::vector<double>& tmp, std::vector<double>& out) {
  const auto& k = gaussian_kernel();
  const int wv = w - 2 * kRadius;
  const int hv = h - 2 * kRadius;
  tmp.assign(size_t(wv) * h, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < wv; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kWindow; ++i) acc += k[i] * in[size_t(y) * w + x + i];
      tmp[size_t(y) * wv + x] = acc;
    }
  out.assign(size_t(wv) * hv, 0.0);
  for (int y = 0; y < hv; ++y)
    for (int x = 0; x < wv; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kWindow; ++i)
        acc += k[i] * tmp[size_t(y + i) * wv + x];
      out[size_t(y) * wv + x] = acc;
    }
}

}  // namespace

double ssim(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height)
    throw ShapeMismatch("ssim: image shapes disagree");
  if (a.width < kWindow || a.height < kWindow)
    throw ImageTooSmall("ssim: images must be at least 11x11");

  const int w = a.width, h = a.height;
  const size_t n = size_t(w) * h;
  std::vector<double> xa(n), xb(n), prod(n);
  std::vector<double> tmp, mu_a, mu_b, s_aa, s_bb, s_ab;

  double total = 0.0;
  for (int ch = 0; ch < 3; ++ch) {
    for (size_t i = 0; i < n; ++i) {
      xa[i] = a.rgb[3 * i + ch];
      xb[i] = b.rgb[3 * i + ch];
    }
    gauss_valid(xa, w, h, tmp, mu_a);
    gauss_valid(xb, w, h, tmp, mu_b);
    for (size_t i = 0; i < n; ++i) prod[i] = xa[i] * xa[i];
    gauss_valid(prod, w, h, tmp, s_aa);
    for (size_t i = 0; i < n; ++i) prod[i] = xb[i] * xb[i];
    gauss_valid(prod, w, h, tmp, s_bb);
    for (size_t i = 0; i < n; ++i) prod[i] = xa[i] * xb[i];
    gauss_valid(prod, w, h, tmp, s_ab);

    double channel_sum = 0.0;
    for (size_t i = 0; i < mu_a.size(); ++i) {
      const double var_a = s_aa[i] - mu_a[i] * mu_a[i];
      const double var_b = s_bb[i] - mu_b[i] * mu_b[i];
      const double cov = s_ab[i] - mu_a[i] * mu_b[i];
      channel_sum += (2.0 * mu_a[i] * mu_b[i] + kC1) * (2.0 * cov + kC2) /
                     ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1) *
                      (var_a + var_b + kC2));
    }
    total += channel_sum / double(mu_a.size());
  }
  return total / 3.0;
}

void MetricReport::finalize() {
  mean_psnr = 0.0;
  mean_ssim = 0.0;
  if (views.empty()) return;
  for (const auto& v : views) {
    mean_psnr += v.psnr;
    mean_ssim += v.ssim;
  }
  mean_psnr /= double(views.size());
  mean_ssim /= double(views.size());
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json jviews = nlohmann::json::array();
  for (const auto& v : views)
    jviews.push_back(
        {{"view", v.name}, {"psnr", v.psnr}, {"ssim", v.ssim}});
  return {{"views", std::move(jviews)},
          {"mean_psnr", mean_psnr},
          {"mean_ssim", mean_ssim},
          {"config_hash", config_hash}};
}

std::string hash_config(const nlohmann::json& config) {
  const std::string s = config.dump();
  uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(hash));
  return buf;
}

void emit_report(
    const nlohmann::json& report,
    const std::vector<std::pair<std::string, std::vector<double>>>& loss_curves,
    const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());

  {
    std::ofstream out(fs::path(dir) / "report.json");
    if (!out) throw IoError("cannot write report.json under " + dir);
    out << report.dump(2) << "\n";
  }

  for (const auto& [name, curve] : loss_curves) {
    const fs::path csv = fs::path(dir) / (name + ".csv");
    fs::create_directories(csv.parent_path(), ec);
    std::ofstream out(csv);
    if (!out) throw IoError("cannot write " + name + ".csv under " + dir);
    out << "step,loss\n";
    for (size_t i = 0; i < curve.size(); ++i) out << i << "," << curve[i] << "\n";
  }

  // Human-readable stage table.
  if (report.contains("stages")) {
    std::ofstream out(fs::path(dir) / "stages.txt");
    if (!out) throw IoError("cannot write stages.txt under " + dir);
    out << "stage            psnr      ssim\n";
    for (const auto& s : report["stages"]) {
      char line[128];
      std::snprintf(line, sizeof(line), "%-12s %9.3f %9.4f\n",
                    s.value("name", "?").c_str(),
                    s.value("mean_psnr", 0.0), s.value("mean_ssim", 0.0));
      out << line;
    }
    if (report.contains("baseline") && !report["baseline"].is_null()) {
      char line[128];
      std::snprintf(line, sizeof(line), "%-12s %9.3f %9.4f\n", "fast-sparse",
                    report["baseline"].value("mean_psnr", 0.0),
                    report["baseline"].value("mean_ssim", 0.0));
      out << line;
    }
  }
}

}  // namespace fewview

#include "fewview/checkpoint.hpp"

#include <filesystem>
#include <fstream>

#include "fewview/dataset.hpp"
#include "fewview/errors.hpp"
#include "fewview/grid_field.hpp"
#include "fewview/mlp_field.hpp"

namespace fewview {

using nlohmann::json;

namespace {
constexpr const char* kMagic = "FEWVIEW_CHECKPOINT 1";
}

std::unique_ptr<RadianceField> make_field(const json& arch) {
  const std::string kind = arch.value("kind", "");
  if (kind == "mlp") {
    MlpConfig cfg;
    cfg.encoding.l_pos = arch.value("l_pos", cfg.encoding.l_pos);
    cfg.encoding.l_dir = arch.value("l_dir", cfg.encoding.l_dir);
    cfg.encoding.include_identity =
        arch.value("include_identity", cfg.encoding.include_identity);
    cfg.hidden_layers = arch.value("hidden_layers", cfg.hidden_layers);
    cfg.hidden_width = arch.value("hidden_width", cfg.hidden_width);
    cfg.color_hidden_width =
        arch.value("color_hidden_width", cfg.color_hidden_width);
    cfg.mask_direction = arch.value("mask_direction", cfg.mask_direction);
    cfg.freq_ramp_fraction =
        arch.value("freq_ramp_fraction", cfg.freq_ramp_fraction);
    cfg.init_seed = arch.value("init_seed", cfg.init_seed);
    return std::make_unique<MlpField>(cfg);
  }
  if (kind == "vm" || kind == "dense") {
    GridBounds bounds;
    if (arch.contains("bbox_min"))
      for (int a = 0; a < 3; ++a)
        bounds.bbox_min[a] = arch["bbox_min"].at(a).get<double>();
    if (arch.contains("bbox_max"))
      for (int a = 0; a < 3; ++a)
        bounds.bbox_max[a] = arch["bbox_max"].at(a).get<double>();
    if (arch.contains("resolution"))
      for (int a = 0; a < 3; ++a)
        bounds.resolution[a] = arch["resolution"].at(a).get<int>();
    if (kind == "vm") {
      VmConfig cfg;
      cfg.bounds = bounds;
      cfg.density_rank = arch.value("density_rank", cfg.density_rank);
      cfg.appearance_rank = arch.value("appearance_rank", cfg.appearance_rank);
      cfg.feature_dim = arch.value("feature_dim", cfg.feature_dim);
      cfg.dir_bands = arch.value("dir_bands", cfg.dir_bands);
      cfg.dir_identity = arch.value("dir_identity", cfg.dir_identity);
      cfg.density_shift = arch.value("density_shift", cfg.density_shift);
      cfg.init_scale = arch.value("init_scale", cfg.init_scale);
      cfg.decoder_lr_scale =
          arch.value("decoder_lr_scale", cfg.decoder_lr_scale);
      cfg.init_seed = arch.value("init_seed", cfg.init_seed);
      return std::make_unique<VmGrid>(cfg);
    }
    DenseConfig cfg;
    cfg.bounds = bounds;
    cfg.density_shift = arch.value("density_shift", cfg.density_shift);
    cfg.init_scale = arch.value("init_scale", cfg.init_scale);
    cfg.init_seed = arch.value("init_seed", cfg.init_seed);
    return std::make_unique<DenseGrid>(cfg);
  }
  if (kind == "analytic") {
    return std::make_unique<AnalyticSceneField>(
        AnalyticScene::from_json(arch.at("scene")));
  }
  throw SchemaError("make_field: unknown field kind '" + kind + "'");
}

void save_checkpoint(const std::string& path, const RadianceField& field) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out << kMagic << "\n" << field.describe().dump() << "\n";
  const auto params = field.parameters();
  out << "PARAMS " << params.size() << "\n";
  out.write(reinterpret_cast<const char*>(params.data()),
            static_cast<std::streamsize>(params.size() * sizeof(float)));
  if (!out) throw IoError("short write on checkpoint " + path);
}

std::unique_ptr<RadianceField> load_checkpoint(const std::string& path) {
  if (!std::filesystem::exists(path))
    throw MissingFile("checkpoint not found: " + path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path);

  std::string magic, arch_line, params_line;
  std::getline(in, magic);
  if (magic != kMagic)
    throw CheckpointCorrupt(path + ": bad magic '" + magic + "'");
  std::getline(in, arch_line);
  json arch;
  try {
    arch = json::parse(arch_line);
  } catch (const json::exception& e) {
    throw CheckpointCorrupt(path + ": bad architecture header: " + e.what());
  }
  std::getline(in, params_line);
  size_t count = 0;
  if (std::sscanf(params_line.c_str(), "PARAMS %zu", &count) != 1)
    throw CheckpointCorrupt(path + ": bad parameter header");

  auto field = make_field(arch);
  auto params = field->parameters();
  if (params.size() != count)
    throw CheckpointCorrupt(path + ": parameter count " +
                            std::to_string(count) + " != expected " +
                            std::to_string(params.size()));
  in.read(reinterpret_cast<char*>(params.data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  if (static_cast<size_t>(in.gcount()) != count * sizeof(float))
    throw CheckpointCorrupt(path + ": truncated parameter blob");
  return field;
}

}  // namespace fewview

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fewview/checkpoint.hpp"
#include "fewview/grid_field.hpp"
#include "fewview/mlp_field.hpp"
#include "test_util.hpp"

using namespace fewview;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / "fewview_test_ckpt";
  fs::create_directories(dir);
  return dir / (tag + ".ckpt");
}

void randomize(RadianceField& field, uint64_t seed) {
  Rng rng(seed);
  for (auto& p : field.parameters()) p = rng.uniform_float() - 0.5f;
}

std::string file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("checkpoints round-trip bit-exact for every field kind") {
  std::vector<std::unique_ptr<RadianceField>> fields;
  fields.push_back(make_field({{"kind", "mlp"},
                               {"hidden_layers", 2},
                               {"hidden_width", 8},
                               {"l_pos", 3}}));
  fields.push_back(make_field({{"kind", "vm"},
                               {"resolution", {6, 6, 6}},
                               {"density_rank", 2},
                               {"appearance_rank", 2},
                               {"feature_dim", 3}}));
  fields.push_back(make_field({{"kind", "dense"},
                               {"resolution", {5, 5, 5}}}));

  for (auto& field : fields) {
    randomize(*field, 11);
    const auto path = temp_file("rt_" + field->kind());
    save_checkpoint(path.string(), *field);
    const auto loaded = load_checkpoint(path.string());
    CHECK(loaded->kind() == field->kind());
    CHECK(loaded->describe() == field->describe());
    REQUIRE(loaded->parameter_count() == field->parameter_count());
    const auto a = field->parameters();
    const auto b = loaded->parameters();
    CHECK(std::equal(a.begin(), a.end(), b.begin()));

    // identical params serialize to identical bytes
    const auto path2 = temp_file("rt2_" + field->kind());
    save_checkpoint(path2.string(), *loaded);
    CHECK(file_bytes(path) == file_bytes(path2));
  }
}

TEST_CASE("checkpoint corruption is reported") {
  const auto path = temp_file("corrupt");
  auto field = make_field({{"kind", "dense"}, {"resolution", {4, 4, 4}}});
  save_checkpoint(path.string(), *field);

  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/nope.ckpt"), MissingFile);
  }

  SUBCASE("bad magic") {
    auto bytes = file_bytes(path);
    bytes[0] = 'X';
    std::ofstream(path, std::ios::binary) << bytes;
    CHECK_THROWS_AS(load_checkpoint(path.string()), CheckpointCorrupt);
  }

  SUBCASE("truncated parameter blob") {
    auto bytes = file_bytes(path);
    bytes.resize(bytes.size() - 17);
    std::ofstream(path, std::ios::binary) << bytes;
    CHECK_THROWS_AS(load_checkpoint(path.string()), CheckpointCorrupt);
  }

  SUBCASE("garbled architecture header") {
    auto bytes = file_bytes(path);
    const auto line_end = bytes.find('\n');
    bytes[line_end + 2] = '!';
    std::ofstream(path, std::ios::binary) << bytes;
    CHECK_THROWS_AS(load_checkpoint(path.string()), CheckpointCorrupt);
  }
}

TEST_CASE("make_field rejects unknown kinds") {
  CHECK_THROWS_AS(make_field({{"kind", "hash-grid"}}), SchemaError);
  CHECK_THROWS_AS(make_field(nlohmann::json::object()), SchemaError);
}

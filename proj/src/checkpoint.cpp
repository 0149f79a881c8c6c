#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "gotham/model.hpp"

namespace gotham {

namespace {

constexpr char kMagic[8] = {'G', 'O', 'T', 'H', 'A', 'M', 'C', 'K'};

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); }

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  using nlohmann::json;
  json header;
  header["format"] = "gotham-checkpoint";
  header["version"] = 1;
  header["backbone"] = to_string(model.gnn.backbone);
  header["gnn_slope"] = model.gnn.slope;
  header["mlp_slope"] = model.mlp.slope;
  header["seed"] = model.seed;
  header["gnn_layers"] = model.gnn.layers.size();
  header["mlp_layers"] = model.mlp.layers.size();
  std::vector<int> widths;
  for (const auto& l : model.gnn.layers) widths.push_back(static_cast<int>(l.weight.cols()));
  header["gnn_widths"] = widths;
  widths.clear();
  for (const auto& l : model.mlp.layers) widths.push_back(static_cast<int>(l.weight.cols()));
  header["mlp_widths"] = widths;

  auto names = model.parameter_names();
  auto params = model.parameters();
  if (model.csd_projection.size() > 0) {
    names.push_back("csd_projection");
    params.push_back(&model.csd_projection);
  }
  header["tensors"] = json::array();
  for (std::size_t i = 0; i < params.size(); ++i)
    header["tensors"].push_back({{"name", names[i]}, {"rows", params[i]->rows()}, {"cols", params[i]->cols()}});

  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Matrix* m : params)
    out.write(reinterpret_cast<const char*>(m->data()), static_cast<std::streamsize>(m->size() * sizeof(double)));
  if (!out) throw ValidationError("failed writing checkpoint " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  using nlohmann::json;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ValidationError(path.string() + " is not a checkpoint file");
  const std::uint64_t len = read_u64(in);
  if (len > (1u << 26)) throw ValidationError(path.string() + ": implausible header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": bad header: " + e.what());
  }

  Model m;
  m.gnn.backbone = backbone_from_string(header.at("backbone").get<std::string>());
  m.gnn.slope = header.at("gnn_slope").get<double>();
  m.mlp.slope = header.at("mlp_slope").get<double>();
  m.seed = header.at("seed").get<std::uint64_t>();
  m.gnn.layers.resize(header.at("gnn_layers").get<std::size_t>());
  m.mlp.layers.resize(header.at("mlp_layers").get<std::size_t>());
  if (m.gnn.backbone == Backbone::gat) {
    m.gnn.attn_src.resize(m.gnn.layers.size());
    m.gnn.attn_dst.resize(m.gnn.layers.size());
  }

  auto names = m.parameter_names();
  auto params = m.parameters();
  const auto& tensors = header.at("tensors");
  if (tensors.size() == params.size() + 1 && tensors.back().at("name") == "csd_projection") {
    names.push_back("csd_projection");
    params.push_back(&m.csd_projection);
  }
  if (tensors.size() != params.size()) throw ValidationError(path.string() + ": tensor count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (tensors[i].at("name").get<std::string>() != names[i])
      throw ValidationError(path.string() + ": unexpected tensor " + tensors[i].at("name").get<std::string>());
    params[i]->resize(tensors[i].at("rows").get<Eigen::Index>(), tensors[i].at("cols").get<Eigen::Index>());
    in.read(reinterpret_cast<char*>(params[i]->data()), static_cast<std::streamsize>(params[i]->size() * sizeof(double)));
    if (!in) throw ValidationError(path.string() + ": truncated tensor data");
  }
  return m;
}

}  // namespace gotham

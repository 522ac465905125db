#include "texweave/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "texweave/errors.hpp"

namespace texweave {

namespace {

constexpr std::array<char, 8> kMagic = {'T', 'X', 'W', 'V', 'D', 'A', 'T', 'A'};

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  std::uint64_t out = 0;
  for (int i = 0; i < 8; ++i) out |= ((v >> (8 * i)) & 0xFF) << (8 * (7 - i));
  return out;
}

void write_u64(std::ostream& out, std::uint64_t v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return to_little(v);
}

}  // namespace

void write_container(const std::filesystem::path& path, const nlohmann::json& meta,
                     const std::vector<std::pair<std::string, const Tensor*>>& arrays) {
  nlohmann::json header = {{"format", "texweave"}, {"version", kContainerVersion}, {"meta", meta}};
  nlohmann::json manifest = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : arrays) {
    manifest.push_back({{"name", name}, {"shape", tensor->shape()}, {"offset", offset}});
    offset += tensor->size();
  }
  header["arrays"] = manifest;
  const std::string text = header.dump();

  // Write to a sibling file first so an interrupted save never clobbers the
  // previous container.
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
    out.write(kMagic.data(), kMagic.size());
    write_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, tensor] : arrays) {
      for (double v : tensor->data()) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        write_u64(out, bits);
      }
    }
    if (!out) throw DataError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

const Tensor& Container::array(const std::string& name) const {
  for (const auto& [n, t] : arrays)
    if (n == name) return t;
  throw DataError("container has no array '" + name + "'");
}

Container read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw DataError(path.string() + " is not a texweave container");
  std::uint64_t header_len = read_u64(in);
  if (!in || header_len > (1ULL << 30)) throw DataError(path.string() + ": corrupt header length");
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw DataError(path.string() + ": truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": malformed header: " + e.what());
  }
  if (header.value("format", "") != "texweave")
    throw DataError(path.string() + ": unexpected container format");
  int version = header.value("version", -1);
  if (version != kContainerVersion)
    throw DataError(path.string() + ": unsupported container version " + std::to_string(version));

  Container c;
  c.meta = header.value("meta", nlohmann::json::object());
  std::uint64_t expected_offset = 0;
  for (const auto& entry : header.at("arrays")) {
    Shape shape = entry.at("shape").get<Shape>();
    if (entry.at("offset").get<std::uint64_t>() != expected_offset)
      throw DataError(path.string() + ": array offsets out of manifest order");
    std::vector<double> data(shape_size(shape));
    for (double& v : data) {
      std::uint64_t bits = read_u64(in);
      std::memcpy(&v, &bits, sizeof v);
    }
    if (!in) throw DataError(path.string() + ": truncated array data");
    expected_offset += data.size();
    c.arrays.emplace_back(entry.at("name").get<std::string>(), Tensor(shape, std::move(data)));
  }
  return c;
}

nlohmann::json to_json(const DrawConfig& c) {
  return {{"steps", c.steps},           {"z_dim", c.z_dim},         {"enc_hidden", c.enc_hidden},
          {"dec_hidden", c.dec_hidden}, {"tile_size", c.tile_size}, {"channels", c.channels},
          {"attention_grid", c.attention_grid}};
}

DrawConfig draw_config_from_json(const nlohmann::json& j) {
  DrawConfig c;
  c.steps = j.value("steps", c.steps);
  c.z_dim = j.value("z_dim", c.z_dim);
  c.enc_hidden = j.value("enc_hidden", c.enc_hidden);
  c.dec_hidden = j.value("dec_hidden", c.dec_hidden);
  c.tile_size = j.value("tile_size", c.tile_size);
  c.channels = j.value("channels", c.channels);
  c.attention_grid = j.value("attention_grid", c.attention_grid);
  c.validate();
  return c;
}

nlohmann::json to_json(const LossSpec& s) {
  return {{"kind", loss_name(s.kind)},
          {"lambda_tv", s.lambda_tv},
          {"lambda_color", s.lambda_color},
          {"gram_layer_weights", s.gram_layer_weights},
          {"filter_support", s.filter_support}};
}

LossSpec loss_spec_from_json(const nlohmann::json& j) {
  LossSpec s;
  s.kind = parse_loss(j.value("kind", std::string("l2")));
  s.lambda_tv = j.value("lambda_tv", s.lambda_tv);
  s.lambda_color = j.value("lambda_color", s.lambda_color);
  s.gram_layer_weights = j.value("gram_layer_weights", s.gram_layer_weights);
  s.filter_support = j.value("filter_support", s.filter_support);
  return s;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  nlohmann::json meta = {{"kind", "draw"},
                         {"config", to_json(checkpoint.model.config)},
                         {"direction", direction_name(checkpoint.direction)},
                         {"loss", to_json(checkpoint.loss)},
                         {"seed", checkpoint.seed}};
  write_container(path, meta, checkpoint.model.parameters());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Container c = read_container(path);
  if (c.meta.value("kind", "") != "draw") throw DataError(path.string() + " is not a DRAW checkpoint");
  Checkpoint ck;
  try {
    ck.model = DrawModel(draw_config_from_json(c.meta.at("config")));
    ck.direction = parse_direction(c.meta.at("direction").get<std::string>());
    ck.loss = loss_spec_from_json(c.meta.at("loss"));
    ck.seed = c.meta.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": malformed checkpoint metadata: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  auto params = ck.model.parameters();
  if (params.size() != c.arrays.size())
    throw DataError(path.string() + ": expected " + std::to_string(params.size()) +
                    " parameter arrays, found " + std::to_string(c.arrays.size()));
  for (auto& [name, tensor] : params) {
    const Tensor& stored = c.array(name);
    if (stored.shape() != tensor->shape())
      throw DataError(path.string() + ": parameter " + name + " has shape " +
                      shape_string(stored.shape()) + ", config implies " +
                      shape_string(tensor->shape()));
    *tensor = stored;
  }
  return ck;
}

}  // namespace texweave

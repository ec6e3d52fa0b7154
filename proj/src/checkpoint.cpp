#include <bit>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "sfi/errors.hpp"
#include "sfi/network.hpp"

namespace sfi {

namespace {

constexpr char kMagic[8] = {'S', 'F', 'I', 'U', 'S', 'S', '0', '1'};

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(const unsigned char* p) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(p[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

bool is_mgf(const std::string& name) { return name.ends_with(".mgf"); }

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"channels", c.channels},   {"bottleneck", c.bottleneck}, {"expansion", c.expansion},
          {"blocks", c.blocks},       {"sources", c.sources},       {"kernel_size", c.kernel_size},
          {"stride", c.stride},       {"fs_train", c.fs_train},     {"grid_size", c.grid_size},
          {"seed", c.seed}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.channels = j.at("channels").get<std::size_t>();
  c.bottleneck = j.at("bottleneck").get<std::size_t>();
  c.expansion = j.at("expansion").get<std::size_t>();
  c.blocks = j.at("blocks").get<std::size_t>();
  c.sources = j.at("sources").get<std::size_t>();
  c.kernel_size = j.at("kernel_size").get<std::size_t>();
  c.stride = j.at("stride").get<std::size_t>();
  c.fs_train = j.at("fs_train").get<int>();
  c.grid_size = j.at("grid_size").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, SeparationModel& model) {
  nlohmann::json manifest = nlohmann::json::array();
  std::string blobs;
  for (const auto& [name, tensor] : model.named_parameters()) {
    const bool wide = is_mgf(name);
    manifest.push_back({{"name", name},
                        {"shape", tensor.shape()},
                        {"offset", blobs.size()},
                        {"dtype", wide ? "float64" : "float32"}});
    for (double v : tensor.data()) {
      if (wide) {
        put_le<double>(blobs, v);
      } else {
        put_le<float>(blobs, static_cast<float>(v));
      }
    }
  }
  const nlohmann::json header = {{"format", "sfi-uss-checkpoint"},
                                 {"version", 1},
                                 {"config", config_to_json(model.config())},
                                 {"tensors", manifest}};
  const std::string text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint64_t>(out, text.size());
  out += text;
  out += blobs;

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

SeparationModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());

  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError(path.string() + ": bad magic");
  }
  const auto header_len = get_le<std::uint64_t>(raw + 8);
  if (header_len > bytes.size() - 16) throw FormatError(path.string() + ": header length exceeds file size");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": header: " + e.what());
  }
  const std::size_t blob_start = 16 + header_len;
  const std::size_t blob_size = bytes.size() - blob_start;

  try {
    SeparationModel model(config_from_json(header.at("config")));
    std::map<std::string, nlohmann::json> entries;
    for (const auto& e : header.at("tensors")) entries[e.at("name").get<std::string>()] = e;

    for (auto& [name, tensor] : model.named_parameters()) {
      const auto it = entries.find(name);
      if (it == entries.end()) throw FormatError(path.string() + ": missing tensor " + name);
      const auto& e = it->second;
      if (e.at("shape").get<ad::Shape>() != tensor.shape()) {
        throw FormatError(path.string() + ": shape mismatch for " + name);
      }
      const std::string dtype = e.at("dtype").get<std::string>();
      const std::size_t width = dtype == "float64" ? 8 : dtype == "float32" ? 4 : 0;
      if (width == 0) throw FormatError(path.string() + ": unsupported dtype " + dtype + " for " + name);
      const auto offset = e.at("offset").get<std::size_t>();
      if (offset > blob_size || tensor.size() * width > blob_size - offset) {
        throw FormatError(path.string() + ": blob for " + name + " out of range");
      }
      auto values = tensor.mutable_data();
      const unsigned char* p = raw + blob_start + offset;
      for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] = width == 8 ? get_le<double>(p + 8 * i) : static_cast<double>(get_le<float>(p + 4 * i));
      }
    }
    model.parameters_changed();
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace sfi

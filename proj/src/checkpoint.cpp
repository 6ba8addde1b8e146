#include "gdvm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "gdvm/config.hpp"

namespace gdvm {

namespace {

constexpr char kMagic[8] = {'G', 'D', 'V', 'M', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::filesystem::path& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw CheckpointError("checkpoint " + path.string() + " truncated");
  }
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const GdvmModel& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof(kMagic));
  write_pod(os, kVersion);

  const std::string spec = model_spec_to_json(model.spec()).dump();
  write_pod(os, static_cast<std::uint64_t>(spec.size()));
  os.write(spec.data(), static_cast<std::streamsize>(spec.size()));

  write_pod(os, static_cast<std::uint64_t>(model.params().size()));
  for (const auto& [name, tensor] : model.params()) {
    write_pod(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(os, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t d : tensor.shape()) write_pod(os, static_cast<std::uint64_t>(d));
    os.write(reinterpret_cast<const char*>(tensor.data()),
             static_cast<std::streamsize>(tensor.size() * sizeof(double)));
  }
  if (!os) throw CheckpointError("write to " + path.string() + " failed");
}

GdvmModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("bad checkpoint magic in " + path.string());
  }
  const auto version = read_pod<std::uint32_t>(is, path);
  if (version != kVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto spec_len = read_pod<std::uint64_t>(is, path);
  std::string spec_str(spec_len, '\0');
  if (!is.read(spec_str.data(), static_cast<std::streamsize>(spec_len))) {
    throw CheckpointError("checkpoint " + path.string() + " truncated in spec");
  }
  ModelSpec spec;
  try {
    spec = model_spec_from_json(nlohmann::json::parse(spec_str));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("checkpoint spec is not valid JSON: " + std::string(e.what()));
  }
  GdvmModel model = GdvmModel::build(spec, 0);

  const auto n_params = read_pod<std::uint64_t>(is, path);
  if (n_params != model.params().size()) {
    throw CheckpointError("checkpoint has " + std::to_string(n_params) +
                          " parameters, model expects " +
                          std::to_string(model.params().size()));
  }
  for (std::uint64_t p = 0; p < n_params; ++p) {
    const auto name_len = read_pod<std::uint32_t>(is, path);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) {
      throw CheckpointError("checkpoint " + path.string() + " truncated in name");
    }
    const auto rank = read_pod<std::uint32_t>(is, path);
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(static_cast<std::size_t>(read_pod<std::uint64_t>(is, path)));
    }
    Tensor* target = model.params().find(name);
    if (!target) {
      throw CheckpointError("checkpoint parameter '" + name + "' not present in model");
    }
    if (target->shape() != shape) {
      throw CheckpointError("checkpoint parameter '" + name + "' has shape " +
                            shape_str(shape) + ", model expects " +
                            shape_str(target->shape()));
    }
    if (!is.read(reinterpret_cast<char*>(target->data()),
                 static_cast<std::streamsize>(target->size() * sizeof(double)))) {
      throw CheckpointError("checkpoint " + path.string() + " truncated in '" + name + "'");
    }
  }
  return model;
}

}  // namespace gdvm

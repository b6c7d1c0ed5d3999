#include "av/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "av/common.hpp"

namespace av {

namespace {
constexpr char kMagic[4] = {'A', 'V', 'C', 'K'};
}

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void write_checkpoint(const std::filesystem::path& path, const std::string& manifest,
                      const ad::ParamStore& params) {
  atomic_file_write(path, [&](const std::filesystem::path& tmp) {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint for writing: " + tmp.string());
    f.write(kMagic, 4);
    const uint8_t header[4] = {1, 0, 0, 0};
    f.write(reinterpret_cast<const char*>(header), 4);
    const uint64_t mlen = manifest.size();
    f.write(reinterpret_cast<const char*>(&mlen), 8);
    f.write(manifest.data(), static_cast<std::streamsize>(mlen));
    const uint32_t count = static_cast<uint32_t>(params.items.size());
    f.write(reinterpret_cast<const char*>(&count), 4);
    for (const auto& [name, var] : params.items) {
      const uint16_t nlen = static_cast<uint16_t>(name.size());
      f.write(reinterpret_cast<const char*>(&nlen), 2);
      f.write(name.data(), nlen);
      const Tensor& t = var.value();
      const uint8_t rank = static_cast<uint8_t>(t.rank());
      f.write(reinterpret_cast<const char*>(&rank), 1);
      for (int64_t d : t.shape()) {
        const uint64_t u = static_cast<uint64_t>(d);
        f.write(reinterpret_cast<const char*>(&u), 8);
      }
      f.write(reinterpret_cast<const char*>(t.data()), t.size() * 8);
    }
    if (!f) throw IoError("short write on checkpoint: " + tmp.string());
  });
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path.string());
  char magic[4];
  uint8_t header[4];
  f.read(magic, 4);
  f.read(reinterpret_cast<char*>(header), 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("not a checkpoint file: " + path.string());
  if (header[0] != 1) throw IoError("unsupported checkpoint version: " + path.string());

  Checkpoint ck;
  uint64_t mlen = 0;
  f.read(reinterpret_cast<char*>(&mlen), 8);
  ck.manifest.resize(mlen);
  f.read(ck.manifest.data(), static_cast<std::streamsize>(mlen));
  uint32_t count = 0;
  f.read(reinterpret_cast<char*>(&count), 4);
  for (uint32_t i = 0; i < count; ++i) {
    uint16_t nlen = 0;
    f.read(reinterpret_cast<char*>(&nlen), 2);
    std::string name(nlen, '\0');
    f.read(name.data(), nlen);
    uint8_t rank = 0;
    f.read(reinterpret_cast<char*>(&rank), 1);
    std::vector<int64_t> shape(rank);
    for (int r = 0; r < rank; ++r) {
      uint64_t u = 0;
      f.read(reinterpret_cast<char*>(&u), 8);
      shape[static_cast<size_t>(r)] = static_cast<int64_t>(u);
    }
    Tensor t(shape);
    f.read(reinterpret_cast<char*>(t.data()), t.size() * 8);
    if (!f) throw IoError("truncated checkpoint: " + path.string());
    ck.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ck;
}

void load_params(ad::ParamStore& params, const Checkpoint& ck) {
  for (auto& [name, var] : params.items) {
    const Tensor* t = ck.find(name);
    if (!t) throw ConfigError("checkpoint is missing parameter: " + name);
    if (!t->same_shape(var.value()))
      throw ConfigError("checkpoint shape mismatch for " + name + ": " +
                        shape_to_string(t->shape()) + " vs " +
                        shape_to_string(var.value().shape()));
    var.mutable_value() = *t;
  }
}

void atomic_file_write(const std::filesystem::path& path,
                       const std::function<void(const std::filesystem::path&)>& writer) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  writer(tmp);
  std::filesystem::rename(tmp, path);
}

}  // namespace av

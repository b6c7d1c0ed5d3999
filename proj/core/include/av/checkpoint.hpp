#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "av/autodiff.hpp"
#include "av/tensor.hpp"

namespace av {

// Checkpoint archive: a config manifest plus named parameter tensors.
//
// Layout (little-endian):
//   magic "AVCK", u8 version (1), 3 reserved bytes,
//   u64 manifest length, manifest bytes (resolved config text),
//   u32 tensor count, then per tensor:
//     u16 name length, name bytes, u8 rank, rank x u64 dims, f64 payload.
struct Checkpoint {
  std::string manifest;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& path, const std::string& manifest,
                      const ad::ParamStore& params);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Loads matching names into an existing store; missing names throw, extra
// archive entries are ignored (lookup is by name).
void load_params(ad::ParamStore& params, const Checkpoint& ck);

// Writes through a temp file in the same directory, then renames.
void atomic_file_write(const std::filesystem::path& path,
                       const std::function<void(const std::filesystem::path&)>& writer);

}  // namespace av

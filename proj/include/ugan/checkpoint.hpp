#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <torch/nn/module.h>
#include <torch/types.h>

#include "json.hpp"

namespace ugan::nets {

inline constexpr std::string_view kCheckpointMagic = "UGAN-CKPT-1";

// Named tensors plus a JSON metadata document.
//
// File layout:
//   "UGAN-CKPT-1\n"
//   header length, 8 bytes little-endian
//   JSON header {"meta": ..., "tensors": [{name, dtype, shape, offset, bytes}]}
//   tensor payloads, contiguous little-endian, offsets relative to payload start
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, torch::Tensor>> tensors;

  const torch::Tensor& tensor(const std::string& name) const;
  bool contains(const std::string& name) const;
};

// Writes to a temporary sibling and renames it into place.
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);

// Throws CheckpointError for missing files, a foreign magic string or a
// truncated/corrupt archive.
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Appends module parameters and buffers as "<prefix>/<name>".
void export_module(const torch::nn::Module& module, const std::string& prefix,
                   Checkpoint& checkpoint);

// Copies "<prefix>/<name>" tensors into the module's parameters and buffers.
// Every parameter and buffer must be present with a matching shape.
void import_module(torch::nn::Module& module, const std::string& prefix,
                   const Checkpoint& checkpoint);

}  // namespace ugan::nets

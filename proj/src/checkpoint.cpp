#include "ugan/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <torch/torch.h>

#include "ugan/error.hpp"

namespace fs = std::filesystem;

namespace ugan::nets {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are stored little-endian");

const torch::Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [key, value] : tensors) {
    if (key == name) return value;
  }
  throw CheckpointError("checkpoint has no tensor '" + name + "'");
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& entry : tensors) {
    if (entry.first == name) return true;
  }
  return false;
}

namespace {

std::string dtype_name(torch::ScalarType type) {
  switch (type) {
    case torch::kFloat32: return "f32";
    case torch::kFloat64: return "f64";
    case torch::kInt64: return "i64";
    default: throw CheckpointError("unsupported tensor dtype in checkpoint");
  }
}

torch::ScalarType parse_dtype(const std::string& name) {
  if (name == "f32") return torch::kFloat32;
  if (name == "f64") return torch::kFloat64;
  if (name == "i64") return torch::kInt64;
  throw CheckpointError("unknown tensor dtype '" + name + "'");
}

}  // namespace

void write_checkpoint(const fs::path& path, const Checkpoint& checkpoint) {
  nlohmann::json index = nlohmann::json::array();
  std::vector<torch::Tensor> payloads;
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : checkpoint.tensors) {
    auto data = tensor.detach().to(torch::kCPU).contiguous();
    const auto bytes = static_cast<std::uint64_t>(data.numel() * data.element_size());
    index.push_back({{"name", name},
                     {"dtype", dtype_name(data.scalar_type())},
                     {"shape", data.sizes().vec()},
                     {"offset", offset},
                     {"bytes", bytes}});
    offset += bytes;
    payloads.push_back(std::move(data));
  }
  const std::string header =
      nlohmann::json{{"meta", checkpoint.meta}, {"tensors", index}}.dump();

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path temp = path;
  temp += ".tmp";
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + temp.string());
    out << kCheckpointMagic << '\n';
    const std::uint64_t header_size = header.size();
    out.write(reinterpret_cast<const char*>(&header_size), sizeof(header_size));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& data : payloads) {
      out.write(static_cast<const char*>(data.data_ptr()),
                static_cast<std::streamsize>(data.numel() * data.element_size()));
    }
    if (!out.flush()) throw CheckpointError("short write on " + temp.string());
  }
  fs::rename(temp, path);
}

Checkpoint read_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::string magic(kCheckpointMagic.size() + 1, '\0');
  in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (!in || magic.substr(0, kCheckpointMagic.size()) != kCheckpointMagic || magic.back() != '\n') {
    throw CheckpointError("not a " + std::string(kCheckpointMagic) + " checkpoint: " +
                          path.string());
  }
  const auto file_size = static_cast<std::uint64_t>(fs::file_size(path));
  std::uint64_t header_size = 0;
  in.read(reinterpret_cast<char*>(&header_size), sizeof(header_size));
  const std::uint64_t prefix = magic.size() + sizeof(header_size);
  if (!in || header_size > file_size - prefix) {
    throw CheckpointError("truncated checkpoint header: " + path.string());
  }
  std::string header(header_size, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_size));
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("corrupt checkpoint header: " + std::string(e.what()));
  }
  const std::uint64_t payload_start = prefix + header_size;
  const std::uint64_t payload_size = file_size - payload_start;

  Checkpoint checkpoint;
  try {
    checkpoint.meta = parsed.at("meta");
    for (const auto& entry : parsed.at("tensors")) {
      const auto dtype = parse_dtype(entry.at("dtype").get<std::string>());
      const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto bytes = entry.at("bytes").get<std::uint64_t>();
      auto tensor = torch::empty(shape, torch::TensorOptions().dtype(dtype));
      if (bytes != static_cast<std::uint64_t>(tensor.numel() * tensor.element_size()) ||
          offset > payload_size || bytes > payload_size - offset) {
        throw CheckpointError("tensor '" + entry.at("name").get<std::string>() +
                              "' exceeds the checkpoint payload");
      }
      in.seekg(static_cast<std::streamoff>(payload_start + offset));
      in.read(static_cast<char*>(tensor.data_ptr()), static_cast<std::streamsize>(bytes));
      if (!in) throw CheckpointError("truncated checkpoint payload: " + path.string());
      checkpoint.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(tensor));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("corrupt checkpoint index: " + std::string(e.what()));
  }
  return checkpoint;
}

void export_module(const torch::nn::Module& module, const std::string& prefix,
                   Checkpoint& checkpoint) {
  for (const auto& item : module.named_parameters()) {
    checkpoint.tensors.emplace_back(prefix + "/" + item.key(), item.value().detach().clone());
  }
  for (const auto& item : module.named_buffers()) {
    checkpoint.tensors.emplace_back(prefix + "/" + item.key(), item.value().detach().clone());
  }
}

void import_module(torch::nn::Module& module, const std::string& prefix,
                   const Checkpoint& checkpoint) {
  torch::NoGradGuard no_grad;
  auto copy_into = [&](const std::string& name, torch::Tensor& target) {
    const auto& source = checkpoint.tensor(prefix + "/" + name);
    if (!source.sizes().equals(target.sizes()) || source.scalar_type() != target.scalar_type()) {
      throw CheckpointError("checkpoint tensor '" + prefix + "/" + name +
                            "' does not match the module");
    }
    target.copy_(source);
  };
  for (auto& item : module.named_parameters()) copy_into(item.key(), item.value());
  for (auto& item : module.named_buffers()) copy_into(item.key(), item.value());
}

}  // namespace ugan::nets

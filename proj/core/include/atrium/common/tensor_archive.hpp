#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace atrium {

using TensorMap = std::map<std::string, torch::Tensor>;

/// A flat archive of named tensors plus string metadata.
///
/// On disk this is the safetensors layout: an 8-byte little-endian header
/// length, a JSON header mapping each name to {dtype, shape, data_offsets}
/// (plus an optional "__metadata__" string map), then the raw little-endian
/// tensor bytes. Supported dtypes: F64, F32, F16, BF16, I64, I32, U8, BOOL.
struct TensorArchive {
  TensorMap tensors;
  std::map<std::string, std::string> metadata;
};

struct ArchiveEntry {
  torch::ScalarType dtype;
  std::vector<std::int64_t> shape;
};

/// Writes atomically (temporary file, then rename).
void save_archive(const std::filesystem::path& path, const TensorArchive& archive);

TensorArchive load_archive(const std::filesystem::path& path);

/// Decodes only the header; cheap even for multi-gigabyte archives.
std::map<std::string, ArchiveEntry> read_archive_header(const std::filesystem::path& path);

/// Result of copying an archive into a module.
struct LoadManifest {
  std::vector<std::string> loaded;   // module state names that were populated
  std::vector<std::string> ignored;  // archive names with no counterpart
};

/// Parameters followed by buffers, keyed by their dotted module path.
TensorMap module_state(const torch::nn::Module& module);

/// Detached deep copy of module_state.
TensorMap clone_state(const torch::nn::Module& module);

/// Copies `state` into the module. Every parameter and buffer of the module
/// must be present with a matching shape (MissingKey / ShapeMismatch name
/// the offending tensor); `prefix` is prepended to module names when looking
/// them up in `state`.
LoadManifest load_module_state(torch::nn::Module& module, const TensorMap& state,
                               const std::string& prefix = "");

/// Writes `bytes` to `path` via a sibling temporary file and rename.
void atomic_write(const std::filesystem::path& path, const std::string& bytes);

}  // namespace atrium

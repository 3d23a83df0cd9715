#include "atrium/common/tensor_archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <c10/util/StringUtil.h>

#include "atrium/common/errors.hpp"
#include <nlohmann/json.hpp>

namespace atrium {

static_assert(std::endian::native == std::endian::little,
              "tensor archives are stored little-endian");

namespace {

using nlohmann::json;

constexpr std::uint64_t kMaxHeaderBytes = 100ULL << 20;

std::string dtype_tag(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat64: return "F64";
    case torch::kFloat32: return "F32";
    case torch::kFloat16: return "F16";
    case torch::kBFloat16: return "BF16";
    case torch::kInt64: return "I64";
    case torch::kInt32: return "I32";
    case torch::kUInt8: return "U8";
    case torch::kBool: return "BOOL";
    default:
      throw FormatError(c10::str("tensor archive: unsupported dtype ", t));
  }
}

torch::ScalarType dtype_from_tag(const std::string& tag) {
  if (tag == "F64") return torch::kFloat64;
  if (tag == "F32") return torch::kFloat32;
  if (tag == "F16") return torch::kFloat16;
  if (tag == "BF16") return torch::kBFloat16;
  if (tag == "I64") return torch::kInt64;
  if (tag == "I32") return torch::kInt32;
  if (tag == "U8") return torch::kUInt8;
  if (tag == "BOOL") return torch::kBool;
  throw FormatError("tensor archive: unsupported dtype tag '" + tag + "'");
}

struct ParsedHeader {
  json header;
  std::uint64_t payload_offset = 0;
};

ParsedHeader parse_header(std::istream& in, const std::filesystem::path& path,
                          std::uint64_t file_size) {
  if (file_size < 8) throw FormatError("tensor archive truncated: " + path.string());
  unsigned char len_bytes[8];
  in.read(reinterpret_cast<char*>(len_bytes), 8);
  std::uint64_t header_len = 0;
  for (int i = 7; i >= 0; --i) header_len = (header_len << 8) | len_bytes[i];
  if (header_len > kMaxHeaderBytes || 8 + header_len > file_size) {
    throw FormatError("tensor archive header length out of range: " + path.string());
  }
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw FormatError("tensor archive truncated header: " + path.string());
  ParsedHeader parsed;
  try {
    parsed.header = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(c10::str("tensor archive header is not JSON (", e.what(),
                                "): ", path.string()));
  }
  if (!parsed.header.is_object()) {
    throw FormatError("tensor archive header is not an object: " + path.string());
  }
  parsed.payload_offset = 8 + header_len;
  return parsed;
}

ArchiveEntry decode_entry(const std::string& name, const json& value,
                          std::uint64_t payload_size, std::uint64_t& begin,
                          std::uint64_t& end) {
  try {
    ArchiveEntry entry;
    entry.dtype = dtype_from_tag(value.at("dtype").get<std::string>());
    entry.shape = value.at("shape").get<std::vector<std::int64_t>>();
    auto offsets = value.at("data_offsets").get<std::vector<std::uint64_t>>();
    if (offsets.size() != 2) throw FormatError("bad data_offsets for " + name);
    begin = offsets[0];
    end = offsets[1];
    std::uint64_t numel = 1;
    for (auto d : entry.shape) {
      if (d < 0) throw FormatError("negative dimension for " + name);
      numel *= static_cast<std::uint64_t>(d);
    }
    const auto expected = numel * c10::elementSize(entry.dtype);
    if (end < begin || end - begin != expected || end > payload_size) {
      throw FormatError("tensor archive: inconsistent byte range for '" + name + "'");
    }
    return entry;
  } catch (const json::exception& e) {
    throw FormatError(c10::str("tensor archive: malformed entry '", name, "' (", e.what(), ")"));
  }
}

std::uint64_t file_size_of(const std::filesystem::path& path) {
  std::error_code ec;
  auto size = std::filesystem::file_size(path, ec);
  if (ec) throw IoError("cannot stat tensor archive: " + path.string());
  return size;
}

}  // namespace

void atomic_write(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_archive(const std::filesystem::path& path, const TensorArchive& archive) {
  json header = json::object();
  if (!archive.metadata.empty()) header["__metadata__"] = archive.metadata;

  std::vector<torch::Tensor> ordered;
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : archive.tensors) {
    if (name == "__metadata__") throw std::invalid_argument("reserved tensor name");
    auto t = tensor.detach().cpu().contiguous();
    const std::uint64_t bytes = t.numel() * t.element_size();
    header[name] = {{"dtype", dtype_tag(t.scalar_type())},
                    {"shape", t.sizes().vec()},
                    {"data_offsets", {offset, offset + bytes}}};
    offset += bytes;
    ordered.push_back(std::move(t));
  }

  std::string text = header.dump();
  // Pad so the payload starts 8-byte aligned.
  while ((text.size() % 8) != 0) text.push_back(' ');

  std::string blob;
  blob.reserve(8 + text.size() + offset);
  const std::uint64_t len = text.size();
  for (int i = 0; i < 8; ++i) blob.push_back(static_cast<char>((len >> (8 * i)) & 0xff));
  blob += text;
  for (const auto& t : ordered) {
    blob.append(static_cast<const char*>(t.data_ptr()), t.numel() * t.element_size());
  }
  atomic_write(path, blob);
}

std::map<std::string, ArchiveEntry> read_archive_header(const std::filesystem::path& path) {
  const auto size = file_size_of(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open tensor archive: " + path.string());
  auto parsed = parse_header(in, path, size);
  const auto payload = size - parsed.payload_offset;
  std::map<std::string, ArchiveEntry> entries;
  for (auto it = parsed.header.begin(); it != parsed.header.end(); ++it) {
    if (it.key() == "__metadata__") continue;
    std::uint64_t begin = 0, end = 0;
    entries.emplace(it.key(), decode_entry(it.key(), it.value(), payload, begin, end));
  }
  return entries;
}

TensorArchive load_archive(const std::filesystem::path& path) {
  const auto size = file_size_of(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open tensor archive: " + path.string());
  auto parsed = parse_header(in, path, size);
  const auto payload = size - parsed.payload_offset;

  TensorArchive archive;
  for (auto it = parsed.header.begin(); it != parsed.header.end(); ++it) {
    if (it.key() == "__metadata__") {
      try {
        archive.metadata = it.value().get<std::map<std::string, std::string>>();
      } catch (const json::exception&) {
        throw FormatError("tensor archive: __metadata__ must map strings to strings");
      }
      continue;
    }
    std::uint64_t begin = 0, end = 0;
    auto entry = decode_entry(it.key(), it.value(), payload, begin, end);
    auto tensor = torch::empty(entry.shape, torch::TensorOptions().dtype(entry.dtype));
    in.seekg(static_cast<std::streamoff>(parsed.payload_offset + begin));
    in.read(static_cast<char*>(tensor.data_ptr()), static_cast<std::streamsize>(end - begin));
    if (!in) throw FormatError("tensor archive truncated payload: " + path.string());
    archive.tensors.emplace(it.key(), std::move(tensor));
  }
  return archive;
}

TensorMap module_state(const torch::nn::Module& module) {
  TensorMap state;
  for (const auto& item : module.named_parameters(/*recurse=*/true)) {
    state.emplace(item.key(), item.value());
  }
  for (const auto& item : module.named_buffers(/*recurse=*/true)) {
    state.emplace(item.key(), item.value());
  }
  return state;
}

TensorMap clone_state(const torch::nn::Module& module) {
  TensorMap state;
  for (const auto& [name, tensor] : module_state(module)) {
    state.emplace(name, tensor.detach().clone());
  }
  return state;
}

LoadManifest load_module_state(torch::nn::Module& module, const TensorMap& state,
                               const std::string& prefix) {
  torch::NoGradGuard no_grad;
  LoadManifest manifest;
  auto targets = module_state(module);
  // Shapes first so a wrong-variant archive is reported as such rather than
  // as a missing key.
  for (const auto& [name, target] : targets) {
    auto it = state.find(prefix + name);
    if (it != state.end() && it->second.sizes() != target.sizes()) {
      throw ShapeMismatch(c10::str("shape mismatch for '", prefix, name, "': archive ",
                                    it->second.sizes(), " vs model ", target.sizes()));
    }
  }
  for (auto& [name, target] : targets) {
    auto it = state.find(prefix + name);
    if (it == state.end()) throw MissingKey("missing tensor '" + prefix + name + "'");
    target.copy_(it->second);
    manifest.loaded.push_back(name);
  }
  for (const auto& [name, tensor] : state) {
    if (name.rfind(prefix, 0) != 0 || !targets.contains(name.substr(prefix.size()))) {
      manifest.ignored.push_back(name);
    }
  }
  return manifest;
}

}  // namespace atrium

#include "atrium/data/nifti.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <c10/util/StringUtil.h>

#include "atrium/common/errors.hpp"

namespace atrium::data {

namespace {

// NIfTI-1 single-file layout: 348-byte header, 4 extension bytes, data.
constexpr std::size_t kHeaderSize = 348;
constexpr std::size_t kVoxOffset = 352;

constexpr std::size_t kDimOffset = 40;
constexpr std::size_t kDatatypeOffset = 70;
constexpr std::size_t kBitpixOffset = 72;
constexpr std::size_t kPixdimOffset = 76;
constexpr std::size_t kVoxOffsetOffset = 108;
constexpr std::size_t kSclSlopeOffset = 112;
constexpr std::size_t kSclInterOffset = 116;
constexpr std::size_t kXyztUnitsOffset = 123;
constexpr std::size_t kMagicOffset = 344;

enum DatatypeCode : std::int16_t {
  kDtUInt8 = 2,
  kDtInt16 = 4,
  kDtInt32 = 8,
  kDtFloat32 = 16,
  kDtFloat64 = 64,
  kDtInt8 = 256,
  kDtUInt16 = 512,
  kDtUInt32 = 768,
};

template <typename T>
T read_field(const std::vector<unsigned char>& buf, std::size_t offset, bool swap) {
  T value;
  unsigned char raw[sizeof(T)];
  std::memcpy(raw, buf.data() + offset, sizeof(T));
  if (swap) std::reverse(raw, raw + sizeof(T));
  std::memcpy(&value, raw, sizeof(T));
  return value;
}

template <typename T>
void write_field(std::vector<unsigned char>& buf, std::size_t offset, T value) {
  std::memcpy(buf.data() + offset, &value, sizeof(T));
}

std::vector<unsigned char> read_all(const std::filesystem::path& path,
                                    std::size_t limit = static_cast<std::size_t>(-1)) {
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
  gzFile file = gzopen(path.c_str(), "rb");
  if (file == nullptr) throw IoError("cannot open: " + path.string());
  std::vector<unsigned char> bytes;
  unsigned char chunk[1 << 16];
  while (true) {
    int n = gzread(file, chunk, sizeof(chunk));
    if (n < 0) {
      gzclose(file);
      throw FormatError("corrupt compressed stream: " + path.string());
    }
    if (n == 0) break;
    bytes.insert(bytes.end(), chunk, chunk + n);
    if (bytes.size() >= limit) break;
  }
  gzclose(file);
  return bytes;
}

std::pair<torch::ScalarType, int> torch_type(std::int16_t code) {
  switch (code) {
    case kDtUInt8: return {torch::kUInt8, 1};
    case kDtInt8: return {torch::kInt8, 1};
    case kDtInt16: return {torch::kInt16, 2};
    case kDtUInt16: return {torch::kInt32, 2};
    case kDtInt32: return {torch::kInt32, 4};
    case kDtUInt32: return {torch::kInt64, 4};
    case kDtFloat32: return {torch::kFloat32, 4};
    case kDtFloat64: return {torch::kFloat64, 8};
    default: throw FormatError(c10::str("unsupported NIfTI datatype code ", code));
  }
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

NiftiExtent read_nifti_extent(const std::filesystem::path& path) {
  auto buf = read_all(path, kHeaderSize);
  if (buf.size() < kHeaderSize) throw FormatError("truncated NIfTI header: " + path.string());
  bool swap = read_field<std::int32_t>(buf, 0, false) != 348;
  if (swap && read_field<std::int32_t>(buf, 0, true) != 348) {
    throw FormatError("not a NIfTI-1 file (sizeof_hdr != 348): " + path.string());
  }
  return {read_field<std::int16_t>(buf, kDimOffset + 4, swap), read_field<std::int16_t>(buf, kDimOffset + 2, swap),
          read_field<std::int16_t>(buf, kDimOffset + 6, swap)};
}

NiftiImage read_nifti(const std::filesystem::path& path) {
  auto buf = read_all(path);
  if (buf.size() < kHeaderSize) throw FormatError("truncated NIfTI header: " + path.string());

  bool swap = false;
  if (read_field<std::int32_t>(buf, 0, false) != 348) {
    if (read_field<std::int32_t>(buf, 0, true) != 348) {
      throw FormatError("not a NIfTI-1 file (sizeof_hdr != 348): " + path.string());
    }
    swap = true;
  }
  const char* magic = reinterpret_cast<const char*>(buf.data() + kMagicOffset);
  if (std::strncmp(magic, "n+1", 3) != 0) {
    throw FormatError("unsupported NIfTI magic (expected single-file n+1): " + path.string());
  }

  std::int16_t dim[8];
  for (int i = 0; i < 8; ++i) dim[i] = read_field<std::int16_t>(buf, kDimOffset + 2 * i, swap);
  const int ndim = dim[0];
  bool trailing_singletons = true;
  for (int i = 4; i <= std::min(ndim, 7); ++i) trailing_singletons &= dim[i] == 1;
  if (ndim < 3 || ndim > 7 || !trailing_singletons) {
    throw FormatError(c10::str("expected a 3D volume, got ", ndim, " dimensions: ", path.string()));
  }
  const std::int64_t nx = dim[1], ny = dim[2], nz = dim[3];
  if (nx < 1 || ny < 1 || nz < 1) throw FormatError("non-positive extent: " + path.string());

  const auto code = read_field<std::int16_t>(buf, kDatatypeOffset, swap);
  auto [dtype, bytes_per_voxel] = torch_type(code);
  const auto vox_offset = static_cast<std::size_t>(read_field<float>(buf, kVoxOffsetOffset, swap));
  const std::size_t count = static_cast<std::size_t>(nx * ny * nz);
  if (vox_offset < kHeaderSize || buf.size() < vox_offset + count * bytes_per_voxel) {
    throw FormatError("truncated NIfTI payload: " + path.string());
  }

  std::vector<unsigned char> payload(buf.begin() + static_cast<std::ptrdiff_t>(vox_offset),
                                     buf.begin() + static_cast<std::ptrdiff_t>(vox_offset + count * bytes_per_voxel));
  if (swap && bytes_per_voxel > 1) {
    for (std::size_t i = 0; i < count; ++i) {
      std::reverse(payload.begin() + i * bytes_per_voxel, payload.begin() + (i + 1) * bytes_per_voxel);
    }
  }

  torch::Tensor raw;
  if (code == kDtUInt16) {
    std::vector<std::int32_t> widened(count);
    for (std::size_t i = 0; i < count; ++i) {
      std::uint16_t v;
      std::memcpy(&v, payload.data() + 2 * i, 2);
      widened[i] = v;
    }
    raw = torch::from_blob(widened.data(), {nz, ny, nx}, torch::kInt32).clone();
  } else if (code == kDtUInt32) {
    std::vector<std::int64_t> widened(count);
    for (std::size_t i = 0; i < count; ++i) {
      std::uint32_t v;
      std::memcpy(&v, payload.data() + 4 * i, 4);
      widened[i] = v;
    }
    raw = torch::from_blob(widened.data(), {nz, ny, nx}, torch::kInt64).clone();
  } else {
    raw = torch::from_blob(payload.data(), {nz, ny, nx}, dtype).clone();
  }

  NiftiImage image;
  image.data = raw.to(torch::kFloat32);
  const float slope = read_field<float>(buf, kSclSlopeOffset, swap);
  const float inter = read_field<float>(buf, kSclInterOffset, swap);
  if (slope != 0.0f && std::isfinite(slope) && std::isfinite(inter) &&
      (slope != 1.0f || inter != 0.0f)) {
    image.data = image.data * slope + inter;
  }
  float pixdim[4];
  for (int i = 0; i < 4; ++i) pixdim[i] = read_field<float>(buf, kPixdimOffset + 4 * i, swap);
  auto positive = [](float v) { return v > 0.0f && std::isfinite(v) ? double{v} : 1.0; };
  image.spacing = {positive(pixdim[2]), positive(pixdim[1]), positive(pixdim[3])};
  return image;
}

void write_nifti(const std::filesystem::path& path, const torch::Tensor& data,
                 NiftiDatatype datatype, const Spacing& spacing) {
  if (data.dim() != 3) throw std::invalid_argument("write_nifti expects [slices, height, width]");
  const auto nz = data.size(0), ny = data.size(1), nx = data.size(2);
  if (nx > 32767 || ny > 32767 || nz > 32767) throw std::invalid_argument("extent too large for NIfTI-1");

  std::vector<unsigned char> header(kVoxOffset, 0);
  write_field<std::int32_t>(header, 0, 348);
  const std::int16_t dim[8] = {3, static_cast<std::int16_t>(nx), static_cast<std::int16_t>(ny),
                               static_cast<std::int16_t>(nz), 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) write_field<std::int16_t>(header, kDimOffset + 2 * i, dim[i]);

  torch::Tensor payload;
  if (datatype == NiftiDatatype::kUInt8) {
    write_field<std::int16_t>(header, kDatatypeOffset, kDtUInt8);
    write_field<std::int16_t>(header, kBitpixOffset, 8);
    payload = data.to(torch::kUInt8).contiguous();
  } else {
    write_field<std::int16_t>(header, kDatatypeOffset, kDtFloat32);
    write_field<std::int16_t>(header, kBitpixOffset, 32);
    payload = data.to(torch::kFloat32).contiguous();
  }
  const float pixdim[8] = {1.0f, static_cast<float>(spacing[1]), static_cast<float>(spacing[0]),
                           static_cast<float>(spacing[2]), 1.0f, 1.0f, 1.0f, 1.0f};
  for (int i = 0; i < 8; ++i) write_field<float>(header, kPixdimOffset + 4 * i, pixdim[i]);
  write_field<float>(header, kVoxOffsetOffset, static_cast<float>(kVoxOffset));
  write_field<float>(header, kSclSlopeOffset, 1.0f);
  write_field<float>(header, kSclInterOffset, 0.0f);
  header[kXyztUnitsOffset] = 2;  // millimetres
  std::memcpy(header.data() + kMagicOffset, "n+1\0", 4);

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto* bytes = static_cast<const char*>(payload.data_ptr());
  const auto nbytes = static_cast<std::size_t>(payload.numel() * payload.element_size());
  if (ends_with(path.string(), ".gz")) {
    gzFile file = gzopen(path.c_str(), "wb6");
    if (file == nullptr) throw IoError("cannot open for writing: " + path.string());
    bool ok = gzwrite(file, header.data(), static_cast<unsigned>(header.size())) ==
              static_cast<int>(header.size());
    std::size_t written = 0;
    while (ok && written < nbytes) {
      const auto chunk = static_cast<unsigned>(std::min<std::size_t>(nbytes - written, 1u << 30));
      ok = gzwrite(file, bytes + written, chunk) == static_cast<int>(chunk);
      written += chunk;
    }
    if (gzclose(file) != Z_OK || !ok) throw IoError("write failed: " + path.string());
  } else {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(header.data()), static_cast<std::streamsize>(header.size()));
    out.write(bytes, static_cast<std::streamsize>(nbytes));
    if (!out) throw IoError("write failed: " + path.string());
  }
}

Volume load_volume(const std::filesystem::path& image_path, const std::filesystem::path& label_path,
                   std::string patient_id) {
  auto image = read_nifti(image_path);
  auto label = read_nifti(label_path);
  if (image.data.sizes() != label.data.sizes()) {
    throw ShapeMismatch(c10::str("image ", image_path.filename().string(), " has shape ",
                                 image.data.sizes(), " but label ", label_path.filename().string(),
                                 " has ", label.data.sizes()));
  }
  if (patient_id.empty()) {
    patient_id = image_path.filename().string();
    for (const char* suffix : {"_image.nii.gz", "_image.nii", ".nii.gz", ".nii"}) {
      if (ends_with(patient_id, suffix)) {
        patient_id.resize(patient_id.size() - std::strlen(suffix));
        break;
      }
    }
  }
  auto labels = (label.data > 0.5f).to(torch::kUInt8);
  return Volume(image.data, labels, std::move(patient_id), image.spacing);
}

void save_volume(const Volume& volume, const std::filesystem::path& dir) {
  const Spacing spacing = volume.spacing().value_or(Spacing{1.0, 1.0, 1.0});
  write_nifti(dir / (volume.patient_id() + "_image.nii.gz"), volume.voxels(), NiftiDatatype::kFloat32,
              spacing);
  write_nifti(dir / (volume.patient_id() + "_label.nii.gz"), volume.labels(), NiftiDatatype::kUInt8,
              spacing);
}

}  // namespace atrium::data

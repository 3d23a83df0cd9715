#pragma once

#include <filesystem>

#include <torch/torch.h>

#include "atrium/data/volume.hpp"

namespace atrium::data {

/// A decoded NIfTI-1 image: [dim3, dim2, dim1] float32 values (scaling
/// applied) and the voxel size.
struct NiftiImage {
  torch::Tensor data;
  Spacing spacing{1.0, 1.0, 1.0};
};

/// Reads a single-file NIfTI-1 volume (.nii or .nii.gz). Accepts 3D data,
/// or 4D data whose fourth extent is 1. Throws IoError / FormatError.
NiftiImage read_nifti(const std::filesystem::path& path);

struct NiftiExtent {
  std::int64_t height = 0;  // dim2
  std::int64_t width = 0;   // dim1
  std::int64_t slices = 0;  // dim3
};

/// Grid extent from the header alone.
NiftiExtent read_nifti_extent(const std::filesystem::path& path);

enum class NiftiDatatype { kUInt8, kFloat32 };

/// Writes [slices, height, width] data as NIfTI-1; gzip-compressed when the
/// file name ends in ".gz".
void write_nifti(const std::filesystem::path& path, const torch::Tensor& data,
                 NiftiDatatype datatype, const Spacing& spacing = {1.0, 1.0, 1.0});

/// Loads an image/label pair into a Volume. Labels are binarized by a
/// > 0.5 test. ShapeMismatch when the two grids disagree.
Volume load_volume(const std::filesystem::path& image_path,
                   const std::filesystem::path& label_path, std::string patient_id = {});

/// Writes `volume` as `<dir>/<id>_image.nii.gz` and `<dir>/<id>_label.nii.gz`.
void save_volume(const Volume& volume, const std::filesystem::path& dir);

}  // namespace atrium::data

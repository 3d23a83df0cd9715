#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "atrium/data/volume.hpp"

namespace atrium::data {

/// Patient-level train / validation / test partition.
struct DatasetSplit {
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
  std::vector<std::string> test_ids;
  std::uint64_t seed = 0;
};

struct SplitCounts {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

/// 70 / 10 / 20 with floor rounding; the remainder goes to test.
SplitCounts default_split_counts(std::size_t n);

/// Sorts the ids, shuffles them with `seed` and cuts them into train, val
/// and test. Throws std::invalid_argument for fewer than 3 ids or duplicates.
DatasetSplit split_patients(std::vector<std::string> ids, std::uint64_t seed);

/// Same, with explicit partition sizes that must add up to ids.size().
DatasetSplit split_patients(std::vector<std::string> ids, std::uint64_t seed, SplitCounts counts);

/// One id per line in `<dir>/train.txt`, `val.txt`, `test.txt` plus the
/// seed in `seed.txt`.
void write_split_manifest(const DatasetSplit& split, const std::filesystem::path& dir);
DatasetSplit read_split_manifest(const std::filesystem::path& dir);

/// Indices into a sequence of n samples selected by subset_by_fraction, in
/// ascending order.
std::vector<std::size_t> subset_indices_by_fraction(std::size_t n, double fraction,
                                                    std::uint64_t seed);

/// ceil(fraction * N) samples, kept in their original order. Nested in
/// fraction for a fixed seed; fraction 1 is the identity.
std::vector<SliceSample> subset_by_fraction(std::span<const SliceSample> samples,
                                            double fraction, std::uint64_t seed);

/// Indices of every sample that belongs to the first k patients of a seeded
/// permutation of the distinct patient ids.
std::vector<std::size_t> subset_indices_by_patients(std::span<const std::string> patient_ids,
                                                    std::size_t k, std::uint64_t seed);

std::vector<SliceSample> subset_by_patients(std::span<const SliceSample> samples, std::size_t k,
                                            std::uint64_t seed);

std::size_t distinct_patients(std::span<const SliceSample> samples);

}  // namespace atrium::data

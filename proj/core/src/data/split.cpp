#include "atrium/data/split.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <c10/util/StringUtil.h>

#include "atrium/common/errors.hpp"
#include "atrium/common/random.hpp"
#include "atrium/common/strings.hpp"
#include "atrium/common/tensor_archive.hpp"

namespace atrium::data {

namespace {

// Salts keep the split and the two subset streams independent for one seed.
constexpr std::uint64_t kFractionSalt = 0x66726163;  // "frac"
constexpr std::uint64_t kPatientSalt = 0x70617469;   // "pati"

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read split manifest: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (!t.empty()) lines.emplace_back(t);
  }
  return lines;
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  atomic_write(path, text);
}

}  // namespace

SplitCounts default_split_counts(std::size_t n) {
  SplitCounts c;
  c.train = n * 70 / 100;
  c.val = n * 10 / 100;
  c.test = n - c.train - c.val;
  return c;
}

DatasetSplit split_patients(std::vector<std::string> ids, std::uint64_t seed) {
  const auto counts = default_split_counts(ids.size());
  return split_patients(std::move(ids), seed, counts);
}

DatasetSplit split_patients(std::vector<std::string> ids, std::uint64_t seed, SplitCounts counts) {
  if (ids.size() < 3) throw std::invalid_argument("split_patients needs at least 3 patient ids");
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw std::invalid_argument("split_patients: duplicate patient ids");
  }
  if (counts.train + counts.val + counts.test != ids.size()) {
    throw std::invalid_argument(c10::str("split counts ", counts.train, "/", counts.val, "/",
                                         counts.test, " do not add up to ", ids.size()));
  }
  const auto order = seeded_permutation(ids.size(), seed);
  DatasetSplit split;
  split.seed = seed;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& id = ids[order[i]];
    if (i < counts.train) {
      split.train_ids.push_back(id);
    } else if (i < counts.train + counts.val) {
      split.val_ids.push_back(id);
    } else {
      split.test_ids.push_back(id);
    }
  }
  return split;
}

void write_split_manifest(const DatasetSplit& split, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_lines(dir / "train.txt", split.train_ids);
  write_lines(dir / "val.txt", split.val_ids);
  write_lines(dir / "test.txt", split.test_ids);
  write_lines(dir / "seed.txt", {std::to_string(split.seed)});
}

DatasetSplit read_split_manifest(const std::filesystem::path& dir) {
  DatasetSplit split;
  split.train_ids = read_lines(dir / "train.txt");
  split.val_ids = read_lines(dir / "val.txt");
  split.test_ids = read_lines(dir / "test.txt");
  if (std::filesystem::exists(dir / "seed.txt")) {
    auto lines = read_lines(dir / "seed.txt");
    if (!lines.empty()) split.seed = std::stoull(lines.front());
  }
  std::set<std::string> seen;
  for (const auto* list : {&split.train_ids, &split.val_ids, &split.test_ids}) {
    for (const auto& id : *list) {
      if (!seen.insert(id).second) {
        throw FormatError("split manifest lists '" + id + "' more than once: " + dir.string());
      }
    }
  }
  return split;
}

std::vector<std::size_t> subset_indices_by_fraction(std::size_t n, double fraction,
                                                    std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument(c10::str("fraction must lie in (0, 1], got ", fraction));
  }
  // The small slack keeps exact products such as 0.1 * 200 from rounding up.
  auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  keep = std::min(keep, n);
  auto order = seeded_permutation(n, mix_seed(seed, kFractionSalt));
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<SliceSample> subset_by_fraction(std::span<const SliceSample> samples, double fraction,
                                            std::uint64_t seed) {
  std::vector<SliceSample> out;
  for (auto i : subset_indices_by_fraction(samples.size(), fraction, seed)) out.push_back(samples[i]);
  return out;
}

std::vector<std::size_t> subset_indices_by_patients(std::span<const std::string> patient_ids,
                                                    std::size_t k, std::uint64_t seed) {
  std::vector<std::string> distinct(patient_ids.begin(), patient_ids.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (k < 1 || k > distinct.size()) {
    throw std::invalid_argument(c10::str("patient count ", k, " outside [1, ", distinct.size(), "]"));
  }
  const auto order = seeded_permutation(distinct.size(), mix_seed(seed, kPatientSalt));
  std::set<std::string> chosen;
  for (std::size_t i = 0; i < k; ++i) chosen.insert(distinct[order[i]]);
  std::vector<std::size_t> indices;
  for (std::size_t i = 0; i < patient_ids.size(); ++i) {
    if (chosen.contains(patient_ids[i])) indices.push_back(i);
  }
  return indices;
}

std::vector<SliceSample> subset_by_patients(std::span<const SliceSample> samples, std::size_t k,
                                            std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(samples.size());
  for (const auto& s : samples) ids.push_back(s.patient_id);
  std::vector<SliceSample> out;
  for (auto i : subset_indices_by_patients(ids, k, seed)) out.push_back(samples[i]);
  return out;
}

std::size_t distinct_patients(std::span<const SliceSample> samples) {
  std::set<std::string> ids;
  for (const auto& s : samples) ids.insert(s.patient_id);
  return ids.size();
}

}  // namespace atrium::data

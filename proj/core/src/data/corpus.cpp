#include "atrium/data/corpus.hpp"

#include <algorithm>

#include "atrium/common/errors.hpp"
#include "atrium/data/nifti.hpp"

namespace atrium::data {

namespace {

bool glob_match(const char* p, const char* s) {
  for (; *p != '\0'; ++p, ++s) {
    if (*p == '*') {
      for (const char* t = s;; ++t) {
        if (glob_match(p + 1, t)) return true;
        if (*t == '\0') return false;
      }
    }
    if (*s == '\0' || (*p != '?' && *p != *s)) return false;
  }
  return *s == '\0';
}

}  // namespace

std::optional<std::string> match_glob(const std::string& pattern, const std::string& name) {
  if (!glob_match(pattern.c_str(), name.c_str())) return std::nullopt;
  const auto star = pattern.find('*');
  if (star == std::string::npos) return std::string{};
  // The capture is whatever the text around the first '*' leaves over; the
  // patterns used here have literal prefixes and suffixes.
  const auto suffix_len = pattern.size() - star - 1;
  if (pattern.find_first_of("*?", star + 1) != std::string::npos) {
    throw std::invalid_argument("glob may contain a single wildcard only: " + pattern);
  }
  return name.substr(star, name.size() - star - suffix_len);
}

Corpus Corpus::open(const std::filesystem::path& dir, const CorpusPatterns& patterns) {
  if (!std::filesystem::is_directory(dir)) throw IoError("data directory not found: " + dir.string());
  if (std::count(patterns.image_glob.begin(), patterns.image_glob.end(), '*') != 1 ||
      std::count(patterns.label_glob.begin(), patterns.label_glob.end(), '*') != 1) {
    throw std::invalid_argument("image and label globs need exactly one '*'");
  }
  Corpus corpus;
  corpus.root_ = dir;
  for (const auto& item : std::filesystem::directory_iterator(dir)) {
    if (!item.is_regular_file()) continue;
    const auto name = item.path().filename().string();
    auto id = match_glob(patterns.image_glob, name);
    if (!id || id->empty()) continue;
    auto label_name = patterns.label_glob;
    label_name.replace(label_name.find('*'), 1, *id);
    const auto label = dir / label_name;
    if (!std::filesystem::exists(label)) {
      throw IoError("image " + name + " has no label file " + label_name);
    }
    corpus.entries_.emplace(*id, Entry{item.path(), label});
  }
  if (corpus.entries_.empty()) {
    throw IoError("no files matching '" + patterns.image_glob + "' in " + dir.string());
  }
  return corpus;
}

std::vector<std::string> Corpus::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, entry] : entries_) out.push_back(id);
  return out;
}

const Corpus::Entry& Corpus::entry(const std::string& patient_id) const {
  auto it = entries_.find(patient_id);
  if (it == entries_.end()) throw IoError("patient '" + patient_id + "' not in corpus " + root_.string());
  return it->second;
}

std::int64_t Corpus::max_side() const {
  std::int64_t side = 0;
  for (const auto& [id, entry] : entries_) {
    const auto extent = read_nifti_extent(entry.image);
    side = std::max({side, extent.height, extent.width});
  }
  return side;
}

Volume Corpus::load(const std::string& patient_id) const {
  const auto& e = entry(patient_id);
  return load_volume(e.image, e.label, patient_id);
}

}  // namespace atrium::data

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "atrium/data/volume.hpp"

namespace atrium::data {

struct CorpusPatterns {
  std::string image_glob = "*_image.nii.gz";
  std::string label_glob = "*_label.nii.gz";
};

/// Image/label pairs discovered in one directory. Each glob must contain a
/// single '*'; the text it matches in the image file name is the patient id
/// and is substituted into the label glob to find the partner file.
class Corpus {
 public:
  struct Entry {
    std::filesystem::path image;
    std::filesystem::path label;
  };

  /// Throws IoError when the directory is missing, holds no image matches,
  /// or an image has no label partner.
  static Corpus open(const std::filesystem::path& dir, const CorpusPatterns& patterns = {});

  /// Sorted patient ids.
  std::vector<std::string> ids() const;
  const Entry& entry(const std::string& patient_id) const;
  Volume load(const std::string& patient_id) const;
  /// Largest in-plane side over all images (header scan): the square every
  /// slice is padded to before resizing.
  std::int64_t max_side() const;
  std::size_t size() const { return entries_.size(); }
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
  std::map<std::string, Entry> entries_;
};

/// Matches `name` against a glob with '*' and '?'; returns the text matched
/// by the first '*' when it matches.
std::optional<std::string> match_glob(const std::string& pattern, const std::string& name);

}  // namespace atrium::data

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include <torch/types.h>

namespace atrium {

/// 64-bit FNV-1a. Used for provenance hashes (config text, test-split
/// contents), not for anything security relevant.
class Fnv1a {
 public:
  Fnv1a& update(std::span<const std::byte> bytes);
  Fnv1a& update(std::string_view text);
  Fnv1a& update(std::uint64_t value);
  /// Hashes dtype, shape and the contiguous element bytes.
  Fnv1a& update(const torch::Tensor& tensor);

  std::uint64_t value() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

}  // namespace atrium

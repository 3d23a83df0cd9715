#include "atrium/common/hashing.hpp"

#include <cstdio>

namespace atrium {

namespace {
constexpr std::uint64_t kPrime = 0x100000001b3ULL;
}

Fnv1a& Fnv1a::update(std::span<const std::byte> bytes) {
  for (std::byte b : bytes) {
    state_ ^= static_cast<std::uint64_t>(b);
    state_ *= kPrime;
  }
  return *this;
}

Fnv1a& Fnv1a::update(std::string_view text) {
  return update(std::as_bytes(std::span(text.data(), text.size())));
}

Fnv1a& Fnv1a::update(std::uint64_t value) {
  std::byte raw[8];
  for (int i = 0; i < 8; ++i) raw[i] = static_cast<std::byte>((value >> (8 * i)) & 0xff);
  return update(std::span<const std::byte>(raw, 8));
}

Fnv1a& Fnv1a::update(const torch::Tensor& tensor) {
  auto t = tensor.contiguous().cpu();
  update(static_cast<std::uint64_t>(t.scalar_type()));
  update(static_cast<std::uint64_t>(t.dim()));
  for (auto d : t.sizes()) update(static_cast<std::uint64_t>(d));
  const auto* data = static_cast<const std::byte*>(t.data_ptr());
  return update(std::span<const std::byte>(data, t.numel() * t.element_size()));
}

std::string Fnv1a::hex() const {
  char buffer[17];
  std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(state_));
  return buffer;
}

}  // namespace atrium

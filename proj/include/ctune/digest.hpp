#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace ctune {

// Incremental 64-bit FNV-1a, used for content digests in manifests and checkpoints.
class Fnv1a {
 public:
  void update_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view s) {
    update_pod(static_cast<std::uint64_t>(s.size()));
    update_bytes(s.data(), s.size());
  }
  template <class T>
  void update_pod(const T& v) {
    update_bytes(&v, sizeof v);
  }

  std::uint64_t value() const { return h_; }
  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h_));
    return buf;
  }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::string digest_bytes(std::string_view bytes) {
  Fnv1a h;
  h.update_bytes(bytes.data(), bytes.size());
  return h.hex();
}

}  // namespace ctune

#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace mdbt {

// FNV-1a, 64 bit. Identity hash for vocabularies, inputs and parameter sets.
class Fnv1a {
 public:
  void update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      state_ ^= c;
      state_ *= 0x100000001b3ULL;
    }
  }
  void update(const void* data, size_t n) {
    update(std::string_view(static_cast<const char*>(data), n));
  }
  uint64_t digest() const { return state_; }
  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(state_));
    return buf;
  }

 private:
  uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::string fnv1a_hex(std::string_view bytes) {
  Fnv1a h;
  h.update(bytes);
  return h.hex();
}

}  // namespace mdbt

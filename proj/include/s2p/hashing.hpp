#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "s2p/tensor.hpp"

namespace s2p {

// SHA-256 hex digest (lowercase). Backed by OpenSSL EVP.
std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_hex(const std::string& s);
std::string sha256_hex(const std::vector<std::uint8_t>& bytes);

// Digest of the raw little-endian float bytes; used for frozen-weight checks.
template <typename T>
std::string tensor_digest(const TensorT<T>& t) {
  return sha256_hex(t.data(), sizeof(T) * static_cast<std::size_t>(t.size()));
}

}  // namespace s2p

#pragma once

#include "drillforge/error.hpp"
#include "drillforge/storage.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace drillforge {

namespace detail {

inline std::string to_hex(const unsigned char* data, std::size_t n) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(n * 2);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(digits[data[i] >> 4]);
    out.push_back(digits[data[i] & 0xf]);
  }
  return out;
}

inline std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::io, "SHA-256 digest failed");
  }
  return to_hex(digest.data(), len);
}

}  // namespace detail

/// 128 random bits, hex encoded.
inline std::string random_salt() {
  std::random_device rd;
  std::array<unsigned char, 16> bytes{};
  for (auto& b : bytes) b = static_cast<unsigned char>(rd() & 0xff);
  return detail::to_hex(bytes.data(), bytes.size());
}

/// Opaque per-export pseudonym: first 16 hex digits of SHA-256(salt ":" id).
inline std::string pseudonym(std::string_view salt, std::string_view student_id) {
  std::string input(salt);
  input += ':';
  input += student_id;
  return "anon-" + detail::sha256_hex(input).substr(0, 16);
}

/// Answer records only, as JSON Lines, with the student replaced by a salted
/// pseudonym. Exports made with different salts cannot be joined.
inline std::string anonymized_export(const EventLog& log, std::string_view salt) {
  std::string out;
  for (const auto& r : log.records()) {
    if (r.kind != EventKind::answer) continue;
    const Json& p = r.payload;
    Json row{{"seq", r.seq},
             {"timestamp", r.timestamp},
             {"student", pseudonym(salt, p.at("student").get<std::string>())},
             {"drillset", p.at("drillset")},
             {"item", p.at("item")},
             {"selected", p.at("selected")},
             {"correct", p.at("correct")},
             {"mode", p.contains("exam") ? "exam" : "drill"}};
    out += row.dump();
    out += '\n';
  }
  return out;
}

inline std::string anonymized_export(const EventLog& log) { return anonymized_export(log, random_salt()); }

}  // namespace drillforge

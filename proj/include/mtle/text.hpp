#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace mtle::text {

// True if `bytes` is well-formed UTF-8.
bool is_valid_utf8(std::string_view bytes);

// Unicode NFKC normalization of a UTF-8 string.
std::string nfkc(std::string_view utf8);

// NFKC, then trim leading/trailing whitespace and collapse internal
// whitespace runs to a single ASCII space. Idempotent.
std::string normalize_text(std::string_view utf8);

// Deduplication key: two texts compare equal iff their normalize_text
// forms are equal. The key is the normalized text itself.
std::string dedup_key(std::string_view utf8);

// Splits a UTF-8 string into extended grapheme clusters.
std::vector<std::string> graphemes(std::string_view utf8);

// Number of extended grapheme clusters in a UTF-8 string.
std::size_t grapheme_count(std::string_view utf8);

// 64-bit FNV-1a over bytes. Stable across runs and platforms; used for
// cache keys and config/prompt digests, not for security.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

// fnv1a64 rendered as fixed-width lowercase hex.
std::string fnv1a64_hex(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

// Renders n with comma grouping, e.g. 13975 -> "13,975".
std::string with_thousands(long long n);

// Signed rendering with comma grouping, e.g. 12020 -> "+12,020".
std::string with_thousands_signed(long long n);

}  // namespace mtle::text

#include "mtle/text.hpp"

#include <unicode/brkiter.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <mutex>
#include <stdexcept>

namespace mtle::text {

namespace {

const icu::Normalizer2& nfkc_instance() {
  static const icu::Normalizer2* instance = [] {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* n = icu::Normalizer2::getNFKCInstance(status);
    if (U_FAILURE(status) || n == nullptr) {
      throw std::runtime_error("ICU NFKC normalizer unavailable");
    }
    return n;
  }();
  return *instance;
}

// ICU BreakIterators are stateful; keep one per thread.
icu::BreakIterator& grapheme_iterator() {
  thread_local std::unique_ptr<icu::BreakIterator> iter = [] {
    UErrorCode status = U_ZERO_ERROR;
    std::unique_ptr<icu::BreakIterator> it(
        icu::BreakIterator::createCharacterInstance(icu::Locale::getRoot(), status));
    if (U_FAILURE(status) || !it) {
      throw std::runtime_error("ICU grapheme break iterator unavailable");
    }
    return it;
  }();
  return *iter;
}

}  // namespace

bool is_valid_utf8(std::string_view bytes) {
  const auto* s = reinterpret_cast<const std::uint8_t*>(bytes.data());
  std::int32_t i = 0;
  const auto length = static_cast<std::int32_t>(bytes.size());
  while (i < length) {
    UChar32 c;
    U8_NEXT(s, i, length, c);
    if (c < 0) return false;
  }
  return true;
}

std::string nfkc(std::string_view utf8) {
  icu::UnicodeString input = icu::UnicodeString::fromUTF8(
      icu::StringPiece(utf8.data(), static_cast<std::int32_t>(utf8.size())));
  UErrorCode status = U_ZERO_ERROR;
  icu::UnicodeString normalized = nfkc_instance().normalize(input, status);
  if (U_FAILURE(status)) {
    throw std::runtime_error("NFKC normalization failed");
  }
  std::string out;
  normalized.toUTF8String(out);
  return out;
}

std::string normalize_text(std::string_view utf8) {
  icu::UnicodeString input = icu::UnicodeString::fromUTF8(
      icu::StringPiece(utf8.data(), static_cast<std::int32_t>(utf8.size())));
  UErrorCode status = U_ZERO_ERROR;
  icu::UnicodeString normalized = nfkc_instance().normalize(input, status);
  if (U_FAILURE(status)) {
    throw std::runtime_error("NFKC normalization failed");
  }

  icu::UnicodeString collapsed;
  bool pending_space = false;
  bool seen_non_space = false;
  for (std::int32_t i = 0; i < normalized.length();) {
    UChar32 c = normalized.char32At(i);
    i += U16_LENGTH(c);
    if (u_isUWhiteSpace(c)) {
      pending_space = seen_non_space;
    } else {
      if (pending_space) collapsed.append(static_cast<UChar32>(' '));
      collapsed.append(c);
      pending_space = false;
      seen_non_space = true;
    }
  }
  std::string out;
  collapsed.toUTF8String(out);
  return out;
}

std::string dedup_key(std::string_view utf8) { return normalize_text(utf8); }

std::vector<std::string> graphemes(std::string_view utf8) {
  icu::UnicodeString input = icu::UnicodeString::fromUTF8(
      icu::StringPiece(utf8.data(), static_cast<std::int32_t>(utf8.size())));
  icu::BreakIterator& it = grapheme_iterator();
  it.setText(input);
  std::vector<std::string> clusters;
  std::int32_t start = it.first();
  for (std::int32_t end = it.next(); end != icu::BreakIterator::DONE; start = end, end = it.next()) {
    std::string piece;
    input.tempSubStringBetween(start, end).toUTF8String(piece);
    clusters.push_back(std::move(piece));
  }
  return clusters;
}

std::size_t grapheme_count(std::string_view utf8) {
  icu::UnicodeString input = icu::UnicodeString::fromUTF8(
      icu::StringPiece(utf8.data(), static_cast<std::int32_t>(utf8.size())));
  icu::BreakIterator& it = grapheme_iterator();
  it.setText(input);
  std::size_t count = 0;
  it.first();
  while (it.next() != icu::BreakIterator::DONE) ++count;
  return count;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string fnv1a64_hex(std::string_view bytes, std::uint64_t seed) {
  static const char* digits = "0123456789abcdef";
  std::uint64_t h = fnv1a64(bytes, seed);
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xF];
    h >>= 4;
  }
  return out;
}

std::string with_thousands(long long n) {
  const bool negative = n < 0;
  std::string digits = std::to_string(negative ? -n : n);
  std::string out;
  out.reserve(digits.size() + digits.size() / 3 + 1);
  int run = 0;
  for (auto it = digits.rbegin(); it != digits.rend(); ++it) {
    if (run == 3) {
      out.push_back(',');
      run = 0;
    }
    out.push_back(*it);
    ++run;
  }
  if (negative) out.push_back('-');
  return {out.rbegin(), out.rend()};
}

std::string with_thousands_signed(long long n) {
  return n >= 0 ? "+" + with_thousands(n) : with_thousands(n);
}

}  // namespace mtle::text

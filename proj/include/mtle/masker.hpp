#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mtle/corpus.hpp"
#include "mtle/segmenter.hpp"

namespace mtle {

// Placeholder used in rendered mask sentences.
inline constexpr const char* kMaskPlaceholder = "<>";

// Rendered masks shorter than this many grapheme clusters (placeholder
// counted as 2) are rejected: they carry too little context to steer
// generation.
inline constexpr std::size_t kMinMaskChars = 6;

struct MaskTemplate {
  std::string pair_id;
  std::string prefix;  // common prefix, possibly empty
  std::string suffix;  // common suffix, possibly empty
  SentencePair source_pair;
};

enum class MaskDisposition { kAccepted, kRejectedIdentical, kRejectedTooShort };

struct MaskOutcome {
  MaskDisposition disposition = MaskDisposition::kAccepted;
  MaskTemplate tmpl;         // valid only when accepted
  std::string reason;        // set on rejection
};

// Longest common token prefix p and suffix s of two token sequences,
// with s shrunk first until p + s <= min(|a|, |b|).
std::pair<std::size_t, std::size_t> common_affix_lengths(std::span<const std::string> a,
                                                         std::span<const std::string> b);

// Extracts the masked template of a pair on the token boundaries of the
// given segmenter. Identical and too-short pairs come back as rejections;
// segmentation failures throw.
MaskOutcome extract_mask(const SentencePair& pair, Segmenter& segmenter);

// prefix + "<>" + suffix.
std::string render_mask(const MaskTemplate& tmpl);

// Grapheme-cluster length of the rendered mask; "<>" contributes exactly 2.
std::size_t mask_char_len(const MaskTemplate& tmpl);

// Batch kernels over whole pair lists. extract_masks_serial is the
// reference implementation; extract_masks runs the same work across
// OpenMP threads with one segmenter instance per thread and must agree
// with it element for element.
std::vector<MaskOutcome> extract_masks_serial(std::span<const SentencePair> pairs,
                                              const SegmenterConfig& config);
std::vector<MaskOutcome> extract_masks(std::span<const SentencePair> pairs,
                                       const SegmenterConfig& config);

}  // namespace mtle

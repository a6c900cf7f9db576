#include "mtle/masker.hpp"

#include <omp.h>

#include <algorithm>
#include <stdexcept>

#include "mtle/text.hpp"

namespace mtle {

namespace {

std::string join(std::span<const std::string> tokens) {
  std::size_t total = 0;
  for (const std::string& t : tokens) total += t.size();
  std::string out;
  out.reserve(total);
  for (const std::string& t : tokens) out += t;
  return out;
}

}  // namespace

std::pair<std::size_t, std::size_t> common_affix_lengths(std::span<const std::string> a,
                                                         std::span<const std::string> b) {
  const std::size_t limit = std::min(a.size(), b.size());
  std::size_t p = 0;
  while (p < limit && a[p] == b[p]) ++p;
  std::size_t s = 0;
  while (s < limit && a[a.size() - 1 - s] == b[b.size() - 1 - s]) ++s;
  // Shrink the suffix first when the affixes would overlap, keeping the
  // maximal prefix: sentence-initial context frames the fills.
  while (p + s > limit) --s;
  return {p, s};
}

MaskOutcome extract_mask(const SentencePair& pair, Segmenter& segmenter) {
  MaskOutcome outcome;
  if (pair.acceptable.text == pair.unacceptable.text) {
    outcome.disposition = MaskDisposition::kRejectedIdentical;
    outcome.reason = "pair sentences are identical";
    return outcome;
  }

  const TokenSequence a = segmenter.segment(pair.acceptable.text);
  const TokenSequence b = segmenter.segment(pair.unacceptable.text);
  const auto [p, s] = common_affix_lengths(a.tokens, b.tokens);

  MaskTemplate tmpl;
  tmpl.pair_id = pair.pair_id;
  tmpl.source_pair = pair;
  tmpl.prefix = join(std::span<const std::string>(a.tokens).first(p));
  tmpl.suffix = join(std::span<const std::string>(a.tokens).last(s));

  if (mask_char_len(tmpl) < kMinMaskChars) {
    outcome.disposition = MaskDisposition::kRejectedTooShort;
    outcome.reason = "mask sentence shorter than " + std::to_string(kMinMaskChars) + " characters";
    outcome.tmpl = std::move(tmpl);
    return outcome;
  }
  outcome.disposition = MaskDisposition::kAccepted;
  outcome.tmpl = std::move(tmpl);
  return outcome;
}

std::string render_mask(const MaskTemplate& tmpl) {
  return tmpl.prefix + kMaskPlaceholder + tmpl.suffix;
}

std::size_t mask_char_len(const MaskTemplate& tmpl) {
  return text::grapheme_count(tmpl.prefix) + 2 + text::grapheme_count(tmpl.suffix);
}

std::vector<MaskOutcome> extract_masks_serial(std::span<const SentencePair> pairs,
                                              const SegmenterConfig& config) {
  Segmenter segmenter(config);
  std::vector<MaskOutcome> outcomes;
  outcomes.reserve(pairs.size());
  for (const SentencePair& pair : pairs) {
    outcomes.push_back(extract_mask(pair, segmenter));
  }
  return outcomes;
}

std::vector<MaskOutcome> extract_masks(std::span<const SentencePair> pairs,
                                       const SegmenterConfig& config) {
  std::vector<MaskOutcome> outcomes(pairs.size());
  std::exception_ptr error;
#pragma omp parallel
  {
    // One segmenter per worker. Exceptions must not escape the parallel
    // region, and the worksharing loop must be reached by every thread,
    // so a failed construction records the error and no-ops the loop.
    std::unique_ptr<Segmenter> segmenter;
    try {
      segmenter = std::make_unique<Segmenter>(config);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
#pragma omp for schedule(dynamic, 64)
    for (long i = 0; i < static_cast<long>(pairs.size()); ++i) {
      if (!segmenter) continue;
      try {
        outcomes[static_cast<std::size_t>(i)] =
            extract_mask(pairs[static_cast<std::size_t>(i)], *segmenter);
      } catch (...) {
#pragma omp critical
        if (!error) error = std::current_exception();
      }
    }
  }
  if (error) std::rethrow_exception(error);
  return outcomes;
}

}  // namespace mtle

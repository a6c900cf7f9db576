#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtle/corpus.hpp"
#include "mtle/gateway.hpp"
#include "mtle/masker.hpp"
#include "mtle/segmenter.hpp"

namespace mtle {

enum class CandidateDisposition {
  kKept,
  kDroppedIndistinguishable,
  kDroppedDuplicateOfOriginal,
  kDroppedDuplicateOfSibling,
  kDroppedOverCap,
  kDroppedSanitization,
};

const char* to_string(CandidateDisposition d);

// One generated sentence on its way through relabeling and filtering.
// The final label of a kept candidate is the relabel verdict, never the
// generation-time intent.
struct Candidate {
  std::string pair_id;
  std::string fill;
  std::string text;  // prefix + fill + suffix
  MoralLabel intended_label = MoralLabel::kAcceptable;
  MoralLabel relabel = MoralLabel::kIndistinguishable;
  CandidateDisposition disposition = CandidateDisposition::kKept;
  std::size_t order_index = 0;  // generation order within the pair
  std::string reason;           // set on drops
  bool relabeled = false;       // false for sanitization drops
};

struct LlmCallCounts {
  std::uint64_t generation = 0;
  std::uint64_t relabel = 0;
  std::uint64_t classify = 0;
  std::uint64_t paraphrase = 0;
};

struct AugmentationReport {
  std::size_t pairs_processed = 0;
  std::size_t masks_accepted = 0;
  std::size_t masks_rejected_short = 0;
  std::size_t masks_rejected_identical = 0;
  std::size_t pairs_failed = 0;        // segmentation or unexpected per-pair failures
  std::size_t generation_failed = 0;   // accepted masks with zero usable fills
  std::size_t sentences_processed = 0; // paraphrase baseline input count
  std::size_t skipped_parse_failures = 0;
  std::size_t candidates_generated = 0;
  std::size_t dropped_indistinguishable = 0;
  std::size_t dropped_duplicate_of_original = 0;
  std::size_t dropped_duplicate_of_sibling = 0;
  std::size_t dropped_over_cap = 0;
  std::size_t dropped_sanitization = 0;
  std::size_t kept_acceptable = 0;
  std::size_t kept_unacceptable = 0;
  LlmCallCounts llm_call_counts;
  // Wall time is reported on stderr, not serialized: report files must be
  // byte-identical across reruns.
  double wall_time_seconds = 0.0;

  std::size_t kept_total() const { return kept_acceptable + kept_unacceptable; }
  std::size_t dropped_total() const;
  // candidates_generated == kept + all drops.
  bool flow_conserved() const;
  nlohmann::json to_json() const;
};

struct AugmenterConfig {
  PairingStrategy pairing = PairingStrategy::kAdjacent;
  SegmenterConfig segmenter;
  // Drop generated texts that collide with any original sentence or any
  // kept candidate of another pair. Off by default: overlap removal is
  // scoped to each pair's own six candidates.
  bool global_dedup = false;
  std::optional<std::string> audit_dir;
  // Set from a signal handler to stop dispatching new work; an
  // interrupted run throws after the in-flight pairs finish.
  std::atomic<bool>* stop_flag = nullptr;
};

// prefix + fill + suffix. The fill must already be sanitized.
std::string reconstruct(const MaskTemplate& tmpl, const std::string& fill);

// Applies the four filtering rules in order to a pair's relabeled
// candidates: drop indistinguishable, drop duplicates of the two
// originals, drop duplicates of earlier surviving siblings, then cap at
// 3 per final label keeping the earliest. Returns the candidates with
// dispositions assigned, in order_index order.
std::vector<Candidate> filter_and_cap(const SentencePair& pair, std::vector<Candidate> candidates);

struct AugmentationResult {
  Corpus corpus;
  AugmentationReport report;
};

// The full pipeline: pair, mask, generate, reconstruct, relabel, filter.
// Originals pass through unchanged (unpaired rows included); kept
// candidates follow in (pair order, order index) order.
AugmentationResult augment_corpus(const Corpus& corpus, LlmGateway& gateway,
                                  const AugmenterConfig& config);

// Paraphrase baseline: 3 label-preserving paraphrases per sentence, no
// relabeling, duplicates dropped, parse failures skipped.
AugmentationResult paraphrase_augment(const Corpus& corpus, LlmGateway& gateway,
                                      const AugmenterConfig& config);

}  // namespace mtle

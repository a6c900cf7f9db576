#include "mtle/augmenter.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "mtle/text.hpp"

namespace mtle {

namespace {

using nlohmann::json;

// Runs fn(i) for i in [0, n) on `workers` threads, collecting results by
// index so output order never depends on scheduling.
template <typename Result>
std::vector<Result> parallel_map_ordered(std::size_t n, int workers,
                                         const std::function<Result(std::size_t)>& fn,
                                         std::atomic<bool>* stop_flag) {
  std::vector<Result> results(n);
  if (n == 0) return results;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stopped{false};
  std::exception_ptr error;
  std::mutex error_mutex;

  auto worker = [&] {
    while (true) {
      if (stopped.load()) return;
      if (stop_flag != nullptr && stop_flag->load()) {
        stopped.store(true);
        return;
      }
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        results[i] = fn(i);
      } catch (...) {
        {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
        stopped.store(true);
        return;
      }
    }
  };

  const int thread_count = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(thread_count));
  for (int t = 0; t < thread_count; ++t) threads.emplace_back(worker);
  for (std::thread& t : threads) t.join();

  if (error) std::rethrow_exception(error);
  if (stop_flag != nullptr && stop_flag->load()) {
    throw std::runtime_error("run interrupted; rerun with the same cache to resume");
  }
  return results;
}

struct PairOutcome {
  MaskDisposition mask_disposition = MaskDisposition::kAccepted;
  std::string mask_reason;
  std::optional<MaskTemplate> tmpl;
  bool hard_failed = false;
  std::string hard_failure;
  bool generation_failed = false;
  std::string generation_failure;
  std::vector<Candidate> candidates;  // dispositions assigned
};

class AuditWriter {
 public:
  AuditWriter(const std::optional<std::string>& dir, const std::string& name) {
    if (!dir) return;
    std::filesystem::create_directories(*dir);
    const auto path = std::filesystem::path(*dir) / name;
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw std::runtime_error("cannot open audit file: " + path.string());
  }
  void write(const json& record) {
    if (out_.is_open()) out_ << record.dump() << '\n';
  }

 private:
  std::ofstream out_;
};

json candidate_record(const Candidate& c) {
  return json{{"pair_id", c.pair_id},
              {"text", c.text},
              {"intended_label", label_value(c.intended_label)},
              {"relabel", c.relabeled ? json(label_value(c.relabel)) : json(nullptr)},
              {"disposition", to_string(c.disposition)},
              {"reason", c.reason}};
}

void tally_candidate(AugmentationReport& report, const Candidate& c) {
  ++report.candidates_generated;
  switch (c.disposition) {
    case CandidateDisposition::kKept:
      if (c.relabel == MoralLabel::kAcceptable) {
        ++report.kept_acceptable;
      } else {
        ++report.kept_unacceptable;
      }
      break;
    case CandidateDisposition::kDroppedIndistinguishable:
      ++report.dropped_indistinguishable;
      break;
    case CandidateDisposition::kDroppedDuplicateOfOriginal:
      ++report.dropped_duplicate_of_original;
      break;
    case CandidateDisposition::kDroppedDuplicateOfSibling:
      ++report.dropped_duplicate_of_sibling;
      break;
    case CandidateDisposition::kDroppedOverCap:
      ++report.dropped_over_cap;
      break;
    case CandidateDisposition::kDroppedSanitization:
      ++report.dropped_sanitization;
      break;
  }
}

void fill_call_counts(AugmentationReport& report, const GatewayCounters& before,
                      const GatewayCounters& after) {
  report.llm_call_counts.generation = after.generation_calls - before.generation_calls;
  report.llm_call_counts.relabel = after.relabel_calls - before.relabel_calls;
  report.llm_call_counts.classify = after.classify_calls - before.classify_calls;
  report.llm_call_counts.paraphrase = after.paraphrase_calls - before.paraphrase_calls;
}

}  // namespace

const char* to_string(CandidateDisposition d) {
  switch (d) {
    case CandidateDisposition::kKept:
      return "kept";
    case CandidateDisposition::kDroppedIndistinguishable:
      return "dropped_indistinguishable";
    case CandidateDisposition::kDroppedDuplicateOfOriginal:
      return "dropped_duplicate_of_original";
    case CandidateDisposition::kDroppedDuplicateOfSibling:
      return "dropped_duplicate_of_sibling";
    case CandidateDisposition::kDroppedOverCap:
      return "dropped_over_cap";
    case CandidateDisposition::kDroppedSanitization:
      return "dropped_sanitization";
  }
  return "unknown";
}

std::size_t AugmentationReport::dropped_total() const {
  return dropped_indistinguishable + dropped_duplicate_of_original +
         dropped_duplicate_of_sibling + dropped_over_cap + dropped_sanitization;
}

bool AugmentationReport::flow_conserved() const {
  return candidates_generated == kept_total() + dropped_total();
}

json AugmentationReport::to_json() const {
  return json{
      {"pairs_processed", pairs_processed},
      {"masks_accepted", masks_accepted},
      {"masks_rejected_short", masks_rejected_short},
      {"masks_rejected_identical", masks_rejected_identical},
      {"pairs_failed", pairs_failed},
      {"generation_failed", generation_failed},
      {"sentences_processed", sentences_processed},
      {"skipped_parse_failures", skipped_parse_failures},
      {"candidates_generated", candidates_generated},
      {"dropped",
       {{"indistinguishable", dropped_indistinguishable},
        {"duplicate_of_original", dropped_duplicate_of_original},
        {"duplicate_of_sibling", dropped_duplicate_of_sibling},
        {"over_cap", dropped_over_cap},
        {"sanitization", dropped_sanitization}}},
      {"kept", {{"acceptable", kept_acceptable}, {"unacceptable", kept_unacceptable}}},
      {"llm_call_counts",
       {{"generation", llm_call_counts.generation},
        {"relabel", llm_call_counts.relabel},
        {"classify", llm_call_counts.classify},
        {"paraphrase", llm_call_counts.paraphrase}}},
  };
}

std::string reconstruct(const MaskTemplate& tmpl, const std::string& fill) {
  if (fill.empty() || fill.find(kMaskPlaceholder) != std::string::npos ||
      fill.find('\n') != std::string::npos || fill.find('\r') != std::string::npos) {
    throw std::invalid_argument("fill is not sanitized: '" + fill + "'");
  }
  return tmpl.prefix + fill + tmpl.suffix;
}

std::vector<Candidate> filter_and_cap(const SentencePair& pair,
                                      std::vector<Candidate> candidates) {
  const std::string key_acceptable = text::dedup_key(pair.acceptable.text);
  const std::string key_unacceptable = text::dedup_key(pair.unacceptable.text);

  std::unordered_set<std::string> surviving_keys;
  std::size_t kept_per_label[2] = {0, 0};

  for (Candidate& c : candidates) {
    if (c.disposition == CandidateDisposition::kDroppedSanitization) continue;

    if (c.relabel == MoralLabel::kIndistinguishable) {
      c.disposition = CandidateDisposition::kDroppedIndistinguishable;
      if (c.reason.empty()) c.reason = "relabeled indistinguishable";
      continue;
    }
    const std::string key = text::dedup_key(c.text);
    if (key == key_acceptable || key == key_unacceptable) {
      c.disposition = CandidateDisposition::kDroppedDuplicateOfOriginal;
      c.reason = "duplicates an original pair sentence";
      continue;
    }
    if (surviving_keys.contains(key)) {
      c.disposition = CandidateDisposition::kDroppedDuplicateOfSibling;
      c.reason = "duplicates an earlier candidate of this pair";
      continue;
    }
    surviving_keys.insert(key);
    std::size_t& kept = kept_per_label[label_value(c.relabel)];
    if (kept >= 3) {
      c.disposition = CandidateDisposition::kDroppedOverCap;
      c.reason = "over the per-label cap of 3";
      continue;
    }
    ++kept;
    c.disposition = CandidateDisposition::kKept;
    c.reason.clear();
  }
  return candidates;
}

AugmentationResult augment_corpus(const Corpus& corpus, LlmGateway& gateway,
                                  const AugmenterConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const GatewayCounters before = gateway.counters();

  AugmentationResult result;

  PairingResult pairing = pair_sentences(corpus, config.pairing);
  result.report.pairs_processed = pairing.pairs.size();

  auto process_pair = [&](std::size_t index) -> PairOutcome {
    PairOutcome outcome;
    const SentencePair& pair = pairing.pairs[index];
    try {
      thread_local std::unique_ptr<Segmenter> segmenter;
      if (!segmenter) segmenter = std::make_unique<Segmenter>(config.segmenter);

      MaskOutcome mask = extract_mask(pair, *segmenter);
      outcome.mask_disposition = mask.disposition;
      outcome.mask_reason = mask.reason;
      if (mask.disposition != MaskDisposition::kAccepted) return outcome;
      outcome.tmpl = mask.tmpl;

      FillResult fills = gateway.generate_fills(mask.tmpl);
      if (fills.failed) {
        outcome.generation_failed = true;
        outcome.generation_failure = fills.failure_reason;
        return outcome;
      }

      std::size_t order = 0;
      auto add_candidates = [&](const std::vector<std::string>& fill_list, MoralLabel intended) {
        for (const std::string& fill : fill_list) {
          Candidate c;
          c.pair_id = pair.pair_id;
          c.fill = fill;
          c.text = reconstruct(mask.tmpl, fill);
          c.intended_label = intended;
          c.order_index = order++;
          c.relabel = gateway.relabel(c.text).verdict;
          c.relabeled = true;
          outcome.candidates.push_back(std::move(c));
        }
      };
      add_candidates(fills.acceptable_fills, MoralLabel::kAcceptable);
      add_candidates(fills.unacceptable_fills, MoralLabel::kUnacceptable);

      outcome.candidates = filter_and_cap(pair, std::move(outcome.candidates));

      // Sanitization drops trail the relabeled candidates in audit order.
      for (const FillResult::DroppedFill& d : fills.dropped) {
        Candidate c;
        c.pair_id = pair.pair_id;
        c.fill = d.fill;
        c.intended_label = d.intended_label;
        c.order_index = order++;
        c.disposition = CandidateDisposition::kDroppedSanitization;
        c.reason = d.reason;
        outcome.candidates.push_back(std::move(c));
      }
    } catch (const AuthError&) {
      throw;
    } catch (const std::exception& e) {
      outcome.hard_failed = true;
      outcome.hard_failure = e.what();
      outcome.candidates.clear();
    }
    return outcome;
  };

  std::vector<PairOutcome> outcomes = parallel_map_ordered<PairOutcome>(
      pairing.pairs.size(), gateway.config().max_concurrent_requests, process_pair,
      config.stop_flag);

  AuditWriter template_audit(config.audit_dir, "templates.jsonl");
  AuditWriter candidate_audit(config.audit_dir, "candidates.jsonl");

  // Originals pass through with text and label unchanged, unpaired rows
  // included; rows that paired up are stamped with their pair id.
  result.corpus.metadata = corpus.metadata;
  result.corpus.metadata.note = "extended";
  result.corpus.sentences = corpus.sentences;
  {
    std::unordered_map<std::string, std::string> pair_of;
    for (const SentencePair& p : pairing.pairs) {
      pair_of[p.acceptable.id] = p.pair_id;
      pair_of[p.unacceptable.id] = p.pair_id;
    }
    for (LabeledSentence& s : result.corpus.sentences) {
      auto it = pair_of.find(s.id);
      if (it != pair_of.end()) s.pair_id = it->second;
    }
  }

  std::unordered_set<std::string> global_keys;
  if (config.global_dedup) {
    for (const LabeledSentence& s : corpus.sentences) global_keys.insert(text::dedup_key(s.text));
  }

  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    PairOutcome& outcome = outcomes[i];
    const SentencePair& pair = pairing.pairs[i];

    if (outcome.hard_failed) {
      ++result.report.pairs_failed;
      template_audit.write(json{{"pair_id", pair.pair_id},
                                {"prefix", nullptr},
                                {"suffix", nullptr},
                                {"rendered", nullptr},
                                {"disposition", "failed"},
                                {"reason", outcome.hard_failure}});
      continue;
    }

    const char* template_disposition = "accepted";
    if (outcome.mask_disposition == MaskDisposition::kRejectedIdentical) {
      ++result.report.masks_rejected_identical;
      template_disposition = "rejected_identical";
    } else if (outcome.mask_disposition == MaskDisposition::kRejectedTooShort) {
      ++result.report.masks_rejected_short;
      template_disposition = "rejected_too_short";
    } else {
      ++result.report.masks_accepted;
      if (outcome.generation_failed) template_disposition = "generation_failed";
    }
    template_audit.write(json{
        {"pair_id", pair.pair_id},
        {"prefix", outcome.tmpl ? json(outcome.tmpl->prefix) : json(nullptr)},
        {"suffix", outcome.tmpl ? json(outcome.tmpl->suffix) : json(nullptr)},
        {"rendered", outcome.tmpl ? json(render_mask(*outcome.tmpl)) : json(nullptr)},
        {"disposition", template_disposition},
        {"reason", outcome.generation_failed ? outcome.generation_failure : outcome.mask_reason}});
    if (outcome.generation_failed) {
      ++result.report.generation_failed;
      continue;
    }

    for (Candidate& c : outcome.candidates) {
      if (config.global_dedup && c.disposition == CandidateDisposition::kKept) {
        const std::string key = text::dedup_key(c.text);
        if (global_keys.contains(key)) {
          c.disposition = CandidateDisposition::kDroppedDuplicateOfSibling;
          c.reason = "duplicates a sentence outside this pair (global dedup)";
        } else {
          global_keys.insert(key);
        }
      }
      tally_candidate(result.report, c);
      candidate_audit.write(candidate_record(c));
      if (c.disposition != CandidateDisposition::kKept) continue;

      // Structural adherence, asserted at emission.
      if (outcome.tmpl && c.text != outcome.tmpl->prefix + c.fill + outcome.tmpl->suffix) {
        throw std::logic_error("kept candidate does not match its template: " + c.text);
      }
      LabeledSentence s;
      s.id = "g-" + c.pair_id + "-" + std::to_string(c.order_index);
      s.text = c.text;
      s.label = c.relabel;  // final label = relabel verdict
      s.origin = Origin::kGenerated;
      s.pair_id = c.pair_id;
      result.corpus.sentences.push_back(std::move(s));
    }
  }

  const GatewayCounters after = gateway.counters();
  fill_call_counts(result.report, before, after);
  result.report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

AugmentationResult paraphrase_augment(const Corpus& corpus, LlmGateway& gateway,
                                      const AugmenterConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const GatewayCounters before = gateway.counters();

  AugmentationResult result;
  result.report.sentences_processed = corpus.sentences.size();

  struct SentenceOutcome {
    bool skipped = false;
    std::vector<Candidate> candidates;
  };

  auto process_sentence = [&](std::size_t index) -> SentenceOutcome {
    SentenceOutcome outcome;
    const LabeledSentence& source = corpus.sentences[index];
    auto paraphrases = gateway.generate_paraphrases(source.text);
    if (!paraphrases) {
      // Sentences whose prompts do not work as intended are not expanded.
      outcome.skipped = true;
      return outcome;
    }
    const std::string source_key = text::dedup_key(source.text);
    std::unordered_set<std::string> sibling_keys;
    std::size_t order = 0;
    for (std::string& p : *paraphrases) {
      Candidate c;
      c.pair_id = source.id;
      c.fill = p;
      c.text = std::move(p);
      c.intended_label = source.label;
      c.relabel = source.label;  // the baseline preserves labels
      c.relabeled = false;
      c.order_index = order++;
      const std::string key = text::dedup_key(c.text);
      if (key == source_key) {
        c.disposition = CandidateDisposition::kDroppedDuplicateOfOriginal;
        c.reason = "paraphrase equals the source sentence";
      } else if (sibling_keys.contains(key)) {
        c.disposition = CandidateDisposition::kDroppedDuplicateOfSibling;
        c.reason = "duplicates an earlier paraphrase";
      } else {
        sibling_keys.insert(key);
        c.disposition = CandidateDisposition::kKept;
      }
      outcome.candidates.push_back(std::move(c));
    }
    return outcome;
  };

  std::vector<SentenceOutcome> outcomes = parallel_map_ordered<SentenceOutcome>(
      corpus.sentences.size(), gateway.config().max_concurrent_requests, process_sentence,
      config.stop_flag);

  AuditWriter candidate_audit(config.audit_dir, "candidates.jsonl");

  result.corpus.metadata = corpus.metadata;
  result.corpus.metadata.note = "extended (paraphrase baseline)";
  result.corpus.sentences = corpus.sentences;

  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    SentenceOutcome& outcome = outcomes[i];
    const LabeledSentence& source = corpus.sentences[i];
    if (outcome.skipped) {
      ++result.report.skipped_parse_failures;
      continue;
    }
    for (Candidate& c : outcome.candidates) {
      tally_candidate(result.report, c);
      candidate_audit.write(candidate_record(c));
      if (c.disposition != CandidateDisposition::kKept) continue;
      LabeledSentence s;
      s.id = "p-" + source.id + "-" + std::to_string(c.order_index);
      s.text = c.text;
      s.label = source.label;
      s.origin = Origin::kGenerated;
      s.pair_id = source.id;
      result.corpus.sentences.push_back(std::move(s));
    }
  }

  const GatewayCounters after = gateway.counters();
  fill_call_counts(result.report, before, after);
  result.report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace mtle

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtle/corpus.hpp"
#include "mtle/gateway.hpp"

namespace mtle {

// Positive class is Unacceptable (1), the usual convention for
// harm-detection tasks.
struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
  std::size_t abstentions = 0;
};

struct EvalResult {
  ConfusionMatrix matrix;
  double accuracy = 0.0;
  double f1_binary = 0.0;  // positive class 1
  double f1_macro = 0.0;   // mean of per-class F1 over {0, 1}
  std::size_t n_evaluated = 0;
};

// Scores predictions against gold labels. Abstentions (nullopt
// predictions) are excluded from the matrix but counted. Per-class F1
// with a zero denominator is 0. Throws on length mismatch and when every
// item abstained.
EvalResult evaluate_predictions(const std::vector<MoralLabel>& gold,
                                const std::vector<std::optional<MoralLabel>>& pred);

struct EvalRecord {
  std::string id;
  std::string text;
  MoralLabel gold = MoralLabel::kAcceptable;
  std::optional<MoralLabel> pred;
};

struct SampleSpec {
  std::size_t size = 0;
  std::uint64_t seed = 0;
};

struct OneShotEvalOutput {
  EvalResult result;
  std::vector<EvalRecord> records;  // in corpus order
};

// Classifies every (optionally sampled) sentence through the gateway's
// one-shot prompt. Per-item backend failures become abstentions.
// Sampling without replacement is deterministic in the seed.
OneShotEvalOutput run_one_shot_eval(const Corpus& corpus, const std::string& exemplar_text,
                                    MoralLabel exemplar_label, LlmGateway& gateway,
                                    const std::optional<SampleSpec>& sample = std::nullopt);

nlohmann::json eval_result_to_json(const EvalResult& result);

}  // namespace mtle

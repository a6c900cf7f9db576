#include "mtle/eval.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

namespace mtle {

namespace {

double f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::size_t denom = 2 * tp + fp + fn;
  if (denom == 0) return 0.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

}  // namespace

EvalResult evaluate_predictions(const std::vector<MoralLabel>& gold,
                                const std::vector<std::optional<MoralLabel>>& pred) {
  if (gold.size() != pred.size()) {
    throw std::invalid_argument("gold and prediction lists differ in length");
  }
  EvalResult result;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (!is_binary(gold[i])) throw std::invalid_argument("gold labels must be binary");
    if (!pred[i]) {
      ++result.matrix.abstentions;
      continue;
    }
    const bool gold_pos = gold[i] == MoralLabel::kUnacceptable;
    const bool pred_pos = *pred[i] == MoralLabel::kUnacceptable;
    if (gold_pos && pred_pos) {
      ++result.matrix.tp;
    } else if (!gold_pos && pred_pos) {
      ++result.matrix.fp;
    } else if (gold_pos && !pred_pos) {
      ++result.matrix.fn;
    } else {
      ++result.matrix.tn;
    }
  }
  const ConfusionMatrix& m = result.matrix;
  result.n_evaluated = m.tp + m.fp + m.fn + m.tn;
  if (result.n_evaluated == 0) {
    throw std::invalid_argument("every item abstained; nothing to score");
  }
  result.accuracy =
      static_cast<double>(m.tp + m.tn) / static_cast<double>(result.n_evaluated);
  result.f1_binary = f1_from_counts(m.tp, m.fp, m.fn);
  // Class 0 as positive swaps the roles: tn are its hits, fn its false
  // positives, fp its misses.
  const double f1_class0 = f1_from_counts(m.tn, m.fn, m.fp);
  result.f1_macro = (result.f1_binary + f1_class0) / 2.0;
  return result;
}

OneShotEvalOutput run_one_shot_eval(const Corpus& corpus, const std::string& exemplar_text,
                                    MoralLabel exemplar_label, LlmGateway& gateway,
                                    const std::optional<SampleSpec>& sample) {
  if (!is_binary(exemplar_label)) throw std::invalid_argument("exemplar label must be binary");
  for (const LabeledSentence& s : corpus.sentences) {
    if (!is_binary(s.label)) {
      throw std::invalid_argument("corpus contains a non-binary label (sentence " + s.id + ")");
    }
  }

  std::vector<std::size_t> indices(corpus.sentences.size());
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  if (sample && sample->size < indices.size()) {
    std::mt19937_64 rng(sample->seed);
    std::shuffle(indices.begin(), indices.end(), rng);
    indices.resize(sample->size);
    std::sort(indices.begin(), indices.end());  // records stay in corpus order
  }

  OneShotEvalOutput output;
  output.records.resize(indices.size());

  // Items fan out through the gateway's own concurrency bound.
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    while (true) {
      const std::size_t slot = next.fetch_add(1);
      if (slot >= indices.size()) return;
      const LabeledSentence& s = corpus.sentences[indices[slot]];
      EvalRecord record;
      record.id = s.id;
      record.text = s.text;
      record.gold = s.label;
      try {
        record.pred = gateway.one_shot_classify(s.text, exemplar_text, exemplar_label);
      } catch (const AuthError&) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        output.records[slot] = std::move(record);
        return;
      } catch (const GatewayError&) {
        record.pred = std::nullopt;  // abstention
      }
      output.records[slot] = std::move(record);
    }
  };
  const int workers =
      std::max(1, std::min<int>(gateway.config().max_concurrent_requests,
                                static_cast<int>(indices.size())));
  std::vector<std::thread> threads;
  for (int t = 0; t < workers; ++t) threads.emplace_back(worker);
  for (std::thread& t : threads) t.join();
  if (error) std::rethrow_exception(error);

  std::vector<MoralLabel> gold;
  std::vector<std::optional<MoralLabel>> pred;
  gold.reserve(output.records.size());
  pred.reserve(output.records.size());
  for (const EvalRecord& r : output.records) {
    gold.push_back(r.gold);
    pred.push_back(r.pred);
  }
  output.result = evaluate_predictions(gold, pred);
  return output;
}

nlohmann::json eval_result_to_json(const EvalResult& result) {
  return nlohmann::json{
      {"matrix",
       {{"tp", result.matrix.tp},
        {"fp", result.matrix.fp},
        {"fn", result.matrix.fn},
        {"tn", result.matrix.tn},
        {"abstentions", result.matrix.abstentions}}},
      {"accuracy", result.accuracy},
      {"f1_binary", result.f1_binary},
      {"f1_macro", result.f1_macro},
      {"n_evaluated", result.n_evaluated},
      // Which F1 a comparison wants is a definitional choice; both are
      // reported and f1_binary (positive class 1) is the default.
      {"f1_definition", "binary, positive class = unacceptable(1); f1_macro also reported"},
  };
}

}  // namespace mtle

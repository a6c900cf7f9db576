// mtle: masked-template LLM augmentation for paired moral-judgment
// corpora, plus dataset statistics and a one-shot evaluation harness.
//
// Subcommands: mask, augment, stats, eval. Progress goes to stderr;
// machine-readable outputs go to files; stdout carries only the short
// human-readable result so pipelines stay clean.

#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mtle/augmenter.hpp"
#include "mtle/corpus.hpp"
#include "mtle/eval.hpp"
#include "mtle/gateway.hpp"
#include "mtle/masker.hpp"
#include "mtle/prompts.hpp"
#include "mtle/text.hpp"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitBackend = 4;

std::atomic<bool> g_stop{false};

void handle_signal(int) { g_stop.store(true); }

struct PipelineConfig {
  std::string input;
  std::string output;
  std::string report;
  std::string records;
  std::string summary;
  std::string base;
  std::string subset;

  std::string delimiter = ",";  // "," or "tab"
  bool header = true;
  std::string text_column = "text";
  std::string label_column = "label";
  std::string id_column;
  std::string pair_id_column;
  bool allow_label_2 = false;

  std::string pairing = "adjacent";  // or "explicit"

  std::string segmenter_backend = "character";  // or "external"
  std::string analyzer_command;
  long analyzer_timeout_ms = 10000;

  std::string backend = "mock";  // or "http"
  std::string endpoint_url;
  std::string model_name = "gpt-3.5-turbo";
  std::string api_key_env = "OPENAI_API_KEY";
  int max_retries = 3;
  long request_timeout_ms = 30000;
  long retry_base_delay_ms = 500;
  int max_concurrent_requests = 4;
  int requests_per_minute_cap = 600;
  std::string cache;
  std::string fixtures;
  std::string audit_dir;

  std::string prompt_dir;
  bool baseline_paraphrase = false;
  bool global_dedup = false;

  std::string exemplar_text;
  int exemplar_label = -1;
  long sample_size = -1;
  long long seed = -1;
};

void apply_config_file(PipelineConfig& cfg, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open config file");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw std::invalid_argument(path + ": invalid JSON: " + e.what());
  }
  auto get = [&doc](const char* key, auto& target) {
    if (doc.contains(key) && !doc.at(key).is_null()) doc.at(key).get_to(target);
  };
  get("input", cfg.input);
  get("output", cfg.output);
  get("report", cfg.report);
  get("records", cfg.records);
  get("summary", cfg.summary);
  get("delimiter", cfg.delimiter);
  get("header", cfg.header);
  get("text_column", cfg.text_column);
  get("label_column", cfg.label_column);
  get("id_column", cfg.id_column);
  get("pair_id_column", cfg.pair_id_column);
  get("allow_label_2", cfg.allow_label_2);
  get("pairing", cfg.pairing);
  get("segmenter_backend", cfg.segmenter_backend);
  get("analyzer_command", cfg.analyzer_command);
  get("analyzer_timeout_ms", cfg.analyzer_timeout_ms);
  get("backend", cfg.backend);
  get("endpoint_url", cfg.endpoint_url);
  get("model_name", cfg.model_name);
  get("api_key_env", cfg.api_key_env);
  get("max_retries", cfg.max_retries);
  get("request_timeout_ms", cfg.request_timeout_ms);
  get("retry_base_delay_ms", cfg.retry_base_delay_ms);
  get("max_concurrent_requests", cfg.max_concurrent_requests);
  get("requests_per_minute_cap", cfg.requests_per_minute_cap);
  get("cache", cfg.cache);
  get("fixtures", cfg.fixtures);
  get("audit_dir", cfg.audit_dir);
  get("prompt_dir", cfg.prompt_dir);
  get("global_dedup", cfg.global_dedup);
  get("exemplar_text", cfg.exemplar_text);
  get("exemplar_label", cfg.exemplar_label);
}

mtle::FormatConfig make_format(const PipelineConfig& cfg) {
  mtle::FormatConfig format;
  if (cfg.delimiter == "tab" || cfg.delimiter == "\t") {
    format.delimiter = '\t';
  } else if (cfg.delimiter == ",") {
    format.delimiter = ',';
  } else {
    throw std::invalid_argument("delimiter must be ',' or 'tab'");
  }
  format.has_header = cfg.header;
  format.text_column = cfg.text_column;
  format.label_column = cfg.label_column;
  if (!cfg.id_column.empty()) format.id_column = cfg.id_column;
  if (!cfg.pair_id_column.empty()) format.pair_id_column = cfg.pair_id_column;
  format.allow_label_2 = cfg.allow_label_2;
  return format;
}

mtle::PairingStrategy make_pairing(const PipelineConfig& cfg) {
  if (cfg.pairing == "adjacent") return mtle::PairingStrategy::kAdjacent;
  if (cfg.pairing == "explicit") return mtle::PairingStrategy::kExplicitColumn;
  throw std::invalid_argument("pairing must be 'adjacent' or 'explicit'");
}

mtle::SegmenterConfig make_segmenter(const PipelineConfig& cfg) {
  mtle::SegmenterConfig seg;
  if (cfg.segmenter_backend == "character") {
    seg.backend = mtle::SegmenterBackend::kCharacterLevel;
  } else if (cfg.segmenter_backend == "external") {
    seg.backend = mtle::SegmenterBackend::kExternalAnalyzer;
  } else {
    throw std::invalid_argument("segmenter backend must be 'character' or 'external'");
  }
  seg.analyzer_command = cfg.analyzer_command;
  seg.analyzer_timeout = std::chrono::milliseconds(cfg.analyzer_timeout_ms);
  return seg;
}

mtle::BackendConfig make_backend(const PipelineConfig& cfg) {
  mtle::BackendConfig b;
  if (cfg.backend == "mock") {
    b.kind = mtle::BackendKind::kMock;
  } else if (cfg.backend == "http") {
    b.kind = mtle::BackendKind::kHttpChatService;
  } else {
    throw std::invalid_argument("backend must be 'http' or 'mock'");
  }
  b.endpoint_url = cfg.endpoint_url;
  b.model_name = cfg.model_name;
  b.api_key_env = cfg.api_key_env;
  b.max_retries = cfg.max_retries;
  b.request_timeout = std::chrono::milliseconds(cfg.request_timeout_ms);
  b.retry_base_delay = std::chrono::milliseconds(cfg.retry_base_delay_ms);
  b.max_concurrent_requests = cfg.max_concurrent_requests;
  b.requests_per_minute_cap = cfg.requests_per_minute_cap;
  if (!cfg.cache.empty()) b.cache_path = cfg.cache;
  if (!cfg.fixtures.empty()) b.fixtures_path = cfg.fixtures;
  if (!cfg.audit_dir.empty()) b.audit_path = cfg.audit_dir + "/exchanges.jsonl";
  return b;
}

mtle::PromptSet make_prompts(const PipelineConfig& cfg) {
  return cfg.prompt_dir.empty() ? mtle::PromptSet::defaults()
                                : mtle::PromptSet::from_directory(cfg.prompt_dir);
}

// Effective configuration as echoed into reports. Secrets stay out: only
// the name of the key-holding environment variable appears.
json effective_config(const PipelineConfig& cfg, const std::string& command) {
  return json{
      {"command", command},
      {"input", cfg.input},
      {"format",
       {{"delimiter", cfg.delimiter},
        {"header", cfg.header},
        {"text_column", cfg.text_column},
        {"label_column", cfg.label_column},
        {"id_column", cfg.id_column},
        {"pair_id_column", cfg.pair_id_column}}},
      {"pairing", cfg.pairing},
      {"segmenter",
       {{"backend", cfg.segmenter_backend},
        {"analyzer_command", cfg.analyzer_command},
        {"analyzer_timeout_ms", cfg.analyzer_timeout_ms}}},
      {"backend",
       {{"kind", cfg.backend},
        {"endpoint_url", cfg.endpoint_url},
        {"model_name", cfg.model_name},
        {"api_key_env", cfg.api_key_env},
        {"max_retries", cfg.max_retries},
        {"request_timeout_ms", cfg.request_timeout_ms},
        {"retry_base_delay_ms", cfg.retry_base_delay_ms},
        {"max_concurrent_requests", cfg.max_concurrent_requests},
        {"requests_per_minute_cap", cfg.requests_per_minute_cap},
        {"cache", cfg.cache},
        {"fixtures", cfg.fixtures}}},
      {"prompt_dir", cfg.prompt_dir},
      {"baseline", cfg.baseline_paraphrase ? "paraphrase" : "mtle"},
      {"global_dedup", cfg.global_dedup},
      {"audit_dir", cfg.audit_dir},
  };
}

void write_json_file(const std::string& path, const json& doc) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << doc.dump(2) << '\n';
  if (!out.flush()) throw std::runtime_error(path + ": write error");
}

int cmd_stats(const PipelineConfig& cfg) {
  const mtle::FormatConfig format = make_format(cfg);
  mtle::Corpus corpus = mtle::load_corpus(cfg.input, format);
  std::optional<mtle::Corpus> base;
  if (!cfg.base.empty()) base = mtle::load_corpus(cfg.base, format);
  mtle::DatasetStats stats = mtle::compute_stats(corpus, base ? &*base : nullptr);
  std::cout << mtle::render_stats(stats) << '\n';
  if (!cfg.summary.empty()) {
    json doc{{"config", effective_config(cfg, "stats")},
             {"acceptable", stats.count_acceptable},
             {"unacceptable", stats.count_unacceptable},
             {"total", stats.total}};
    if (stats.delta_vs_base) {
      doc["delta_vs_base"] = {{"acceptable", (*stats.delta_vs_base)[0]},
                              {"unacceptable", (*stats.delta_vs_base)[1]},
                              {"total", (*stats.delta_vs_base)[2]}};
    }
    write_json_file(cfg.summary, doc);
  }
  return kExitOk;
}

int cmd_mask(const PipelineConfig& cfg) {
  const mtle::FormatConfig format = make_format(cfg);
  mtle::Corpus corpus = mtle::load_corpus(cfg.input, format);
  mtle::PairingResult pairing = mtle::pair_sentences(corpus, make_pairing(cfg));
  std::vector<mtle::MaskOutcome> outcomes =
      mtle::extract_masks(pairing.pairs, make_segmenter(cfg));

  std::size_t accepted = 0, rejected_short = 0, rejected_identical = 0;
  std::ofstream out;
  if (!cfg.output.empty()) {
    out.open(cfg.output, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(cfg.output + ": cannot open for writing");
  }
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const mtle::MaskOutcome& o = outcomes[i];
    const char* disposition = "accepted";
    switch (o.disposition) {
      case mtle::MaskDisposition::kAccepted:
        ++accepted;
        break;
      case mtle::MaskDisposition::kRejectedTooShort:
        ++rejected_short;
        disposition = "rejected_too_short";
        break;
      case mtle::MaskDisposition::kRejectedIdentical:
        ++rejected_identical;
        disposition = "rejected_identical";
        break;
    }
    if (out.is_open()) {
      const bool has_template = o.disposition != mtle::MaskDisposition::kRejectedIdentical;
      out << json{{"pair_id", pairing.pairs[i].pair_id},
                  {"prefix", has_template ? json(o.tmpl.prefix) : json(nullptr)},
                  {"suffix", has_template ? json(o.tmpl.suffix) : json(nullptr)},
                  {"rendered", has_template ? json(mtle::render_mask(o.tmpl)) : json(nullptr)},
                  {"disposition", disposition},
                  {"reason", o.reason}}
                 .dump()
          << '\n';
    }
  }
  std::cout << "pairs=" << pairing.pairs.size() << " unpaired=" << pairing.unpaired.size()
            << " accepted=" << accepted << " rejected_short=" << rejected_short
            << " rejected_identical=" << rejected_identical << '\n';
  return kExitOk;
}

int cmd_augment(const PipelineConfig& cfg) {
  const mtle::FormatConfig format = make_format(cfg);
  mtle::Corpus corpus = mtle::load_corpus(cfg.input, format);
  std::cerr << "loaded " << corpus.sentences.size() << " sentences from " << cfg.input << '\n';

  mtle::LlmGateway gateway(make_backend(cfg), make_prompts(cfg));
  mtle::AugmenterConfig acfg;
  acfg.pairing = make_pairing(cfg);
  acfg.segmenter = make_segmenter(cfg);
  acfg.global_dedup = cfg.global_dedup;
  if (!cfg.audit_dir.empty()) acfg.audit_dir = cfg.audit_dir;
  acfg.stop_flag = &g_stop;

  mtle::AugmentationResult result = cfg.baseline_paraphrase
                                        ? mtle::paraphrase_augment(corpus, gateway, acfg)
                                        : mtle::augment_corpus(corpus, gateway, acfg);
  if (!result.report.flow_conserved()) {
    throw std::logic_error("augmentation report violates flow conservation");
  }

  mtle::save_corpus(result.corpus, cfg.output, format);
  if (!cfg.report.empty()) {
    json doc = result.report.to_json();
    doc["config"] = effective_config(cfg, "augment");
    doc["prompt_digest"] = gateway.prompts().digest();
    write_json_file(cfg.report, doc);
  }

  const mtle::GatewayCounters counters = gateway.counters();
  std::cerr << "kept " << result.report.kept_total() << " of " << result.report.candidates_generated
            << " candidates; corpus " << corpus.sentences.size() << " -> "
            << result.corpus.sentences.size() << '\n'
            << "transport requests=" << counters.transport_requests
            << " cache_hits=" << counters.cache_hits << " retries=" << counters.transport_retries
            << " wall=" << result.report.wall_time_seconds << "s\n";
  std::cout << result.corpus.sentences.size() << " sentences written to " << cfg.output << '\n';
  return kExitOk;
}

int cmd_eval(const PipelineConfig& cfg) {
  const mtle::FormatConfig format = make_format(cfg);
  const std::string input = cfg.subset.empty() ? cfg.input : cfg.subset;
  if (input.empty()) throw CLI::ValidationError("--in", "either --in or --subset is required");
  mtle::Corpus corpus = mtle::load_corpus(input, format);

  if (cfg.exemplar_label != 0 && cfg.exemplar_label != 1) {
    throw CLI::ValidationError("--exemplar-label", "must be 0 or 1");
  }
  std::optional<mtle::SampleSpec> sample;
  if (cfg.sample_size >= 0) {
    if (cfg.seed < 0) throw CLI::ValidationError("--sample", "sampling requires --seed");
    sample = mtle::SampleSpec{static_cast<std::size_t>(cfg.sample_size),
                              static_cast<std::uint64_t>(cfg.seed)};
  }

  mtle::LlmGateway gateway(make_backend(cfg), make_prompts(cfg));
  mtle::OneShotEvalOutput output = mtle::run_one_shot_eval(
      corpus, cfg.exemplar_text,
      cfg.exemplar_label == 0 ? mtle::MoralLabel::kAcceptable : mtle::MoralLabel::kUnacceptable,
      gateway, sample);

  if (!cfg.records.empty()) {
    std::ofstream out(cfg.records, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(cfg.records + ": cannot open for writing");
    for (const mtle::EvalRecord& r : output.records) {
      out << json{{"id", r.id},
                  {"text", r.text},
                  {"gold", mtle::label_value(r.gold)},
                  {"pred", r.pred ? json(mtle::label_value(*r.pred)) : json(nullptr)},
                  {"abstained", !r.pred.has_value()}}
                 .dump()
          << '\n';
    }
  }

  json summary = mtle::eval_result_to_json(output.result);
  summary["config"] = effective_config(cfg, "eval");
  summary["config_digest"] = mtle::text::fnv1a64_hex(effective_config(cfg, "eval").dump());
  summary["prompt_digest"] = gateway.prompts().digest();
  summary["exemplar"] = {{"text", cfg.exemplar_text}, {"label", cfg.exemplar_label}};
  if (!cfg.summary.empty()) write_json_file(cfg.summary, summary);

  std::cout << "n=" << output.result.n_evaluated << " accuracy=" << output.result.accuracy
            << " f1_binary=" << output.result.f1_binary << " f1_macro=" << output.result.f1_macro
            << " abstentions=" << output.result.matrix.abstentions << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);

  PipelineConfig cfg;

  // --config is applied before the full parse so flags can override it.
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string_view(argv[i]) == "--config") {
      try {
        apply_config_file(cfg, argv[i + 1]);
      } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
      } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
      }
    }
  }

  CLI::App app{"masked-template LLM data augmentation for moral-judgment corpora"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file (flags override it)");

  auto add_format_options = [&cfg](CLI::App* sub) {
    sub->add_option("--delimiter", cfg.delimiter, "field delimiter: ',' or 'tab'");
    sub->add_flag("--no-header{false}", cfg.header, "input has no header row");
    sub->add_option("--text-column", cfg.text_column, "text column name or index");
    sub->add_option("--label-column", cfg.label_column, "label column name or index");
    sub->add_option("--id-column", cfg.id_column, "id column name or index");
    sub->add_option("--pair-id-column", cfg.pair_id_column, "pair id column name or index");
    sub->add_flag("--allow-label-2", cfg.allow_label_2,
                  "permit label 2 rows (intermediate files only)");
  };
  auto add_segmenter_options = [&cfg](CLI::App* sub) {
    sub->add_option("--segmenter", cfg.segmenter_backend, "'character' or 'external'");
    sub->add_option("--analyzer-command", cfg.analyzer_command,
                    "external analyzer command (line protocol)");
    sub->add_option("--analyzer-timeout-ms", cfg.analyzer_timeout_ms, "analyzer read timeout");
  };
  auto add_backend_options = [&cfg](CLI::App* sub) {
    sub->add_option("--backend", cfg.backend, "'http' or 'mock'");
    sub->add_option("--endpoint-url", cfg.endpoint_url, "chat completions endpoint URL");
    sub->add_option("--model", cfg.model_name, "model identifier");
    sub->add_option("--api-key-env", cfg.api_key_env,
                    "environment variable holding the API key");
    sub->add_option("--max-retries", cfg.max_retries, "retries per request / parse attempt");
    sub->add_option("--request-timeout-ms", cfg.request_timeout_ms, "per-request timeout");
    sub->add_option("--retry-base-delay-ms", cfg.retry_base_delay_ms, "backoff base delay");
    sub->add_option("--max-concurrent-requests", cfg.max_concurrent_requests,
                    "in-flight request bound and worker pool size");
    sub->add_option("--requests-per-minute", cfg.requests_per_minute_cap, "dispatch rate cap");
    sub->add_option("--cache", cfg.cache, "response cache file (doubles as resume checkpoint)");
    sub->add_option("--fixtures", cfg.fixtures, "mock backend fixture file");
    sub->add_option("--prompt-dir", cfg.prompt_dir, "directory of prompt template overrides");
    sub->add_option("--audit-dir", cfg.audit_dir, "directory for audit logs");
  };

  CLI::App* stats = app.add_subcommand("stats", "per-label sentence counts of a corpus");
  stats->fallthrough();
  stats->add_option("--in", cfg.input, "corpus file")->required();
  stats->add_option("--base", cfg.base, "base corpus for deltas");
  stats->add_option("--out", cfg.summary, "summary JSON output");
  add_format_options(stats);

  CLI::App* mask = app.add_subcommand("mask", "extract masked templates from sentence pairs");
  mask->fallthrough();
  mask->add_option("--in", cfg.input, "corpus file")->required();
  mask->add_option("--out", cfg.output, "template dump (JSONL)");
  mask->add_option("--pairing", cfg.pairing, "'adjacent' or 'explicit'");
  add_format_options(mask);
  add_segmenter_options(mask);

  CLI::App* augment = app.add_subcommand("augment", "run the augmentation pipeline end to end");
  augment->fallthrough();
  augment->add_option("--in", cfg.input, "source corpus file")->required();
  augment->add_option("--out", cfg.output, "extended corpus file")->required();
  augment->add_option("--report", cfg.report, "report JSON output");
  augment->add_option("--pairing", cfg.pairing, "'adjacent' or 'explicit'");
  augment->add_option("--baseline", [&cfg](const std::vector<std::string>& values) {
    if (values[0] != "paraphrase") return false;
    cfg.baseline_paraphrase = true;
    return true;
  }, "'paraphrase' switches to the paraphrase baseline");
  augment->add_flag("--global-dedup", cfg.global_dedup, "drop cross-pair duplicate texts");
  add_format_options(augment);
  add_segmenter_options(augment);
  add_backend_options(augment);

  CLI::App* eval = app.add_subcommand("eval", "one-shot classification over a labeled corpus");
  eval->fallthrough();
  eval->add_option("--in", cfg.input, "corpus file");
  eval->add_option("--subset", cfg.subset, "evaluate this subset file instead of --in");
  eval->add_option("--exemplar-text", cfg.exemplar_text, "one-shot exemplar sentence")
      ->required();
  eval->add_option("--exemplar-label", cfg.exemplar_label, "exemplar label (0 or 1)")->required();
  eval->add_option("--records", cfg.records, "per-item record file (JSONL)");
  eval->add_option("--out", cfg.summary, "summary JSON output");
  eval->add_option("--sample", cfg.sample_size, "evaluate a random sample of this size");
  eval->add_option("--seed", cfg.seed, "sampling seed");
  add_format_options(eval);
  add_backend_options(eval);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (stats->parsed()) return cmd_stats(cfg);
    if (mask->parsed()) return cmd_mask(cfg);
    if (augment->parsed()) return cmd_augment(cfg);
    if (eval->parsed()) return cmd_eval(cfg);
    std::cerr << "error: no subcommand\n";
    return kExitUsage;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const mtle::AuthError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBackend;
  } catch (const mtle::BackendExhaustedError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBackend;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  }
}

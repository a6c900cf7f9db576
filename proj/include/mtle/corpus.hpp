#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mtle {

// Moral judgment label. Acceptable/Unacceptable are the only values that
// may appear in a final corpus; Indistinguishable exists for relabeling
// verdicts and intermediate files loaded with FormatConfig::allow_label_2.
enum class MoralLabel : std::uint8_t {
  kAcceptable = 0,
  kUnacceptable = 1,
  kIndistinguishable = 2,
};

inline bool is_binary(MoralLabel label) { return label != MoralLabel::kIndistinguishable; }
inline int label_value(MoralLabel label) { return static_cast<int>(label); }

enum class Origin : std::uint8_t { kOriginal, kGenerated };

struct LabeledSentence {
  std::string id;
  std::string text;
  MoralLabel label = MoralLabel::kAcceptable;
  Origin origin = Origin::kOriginal;
  std::optional<std::string> pair_id;
};

// One JCM-style unit: an acceptable/unacceptable sentence pair. Pairing
// checks labels only; degenerate pairs with identical texts are weeded
// out downstream as mask rejections.
struct SentencePair {
  std::string pair_id;
  LabeledSentence acceptable;    // label 0
  LabeledSentence unacceptable;  // label 1
};

struct CorpusMetadata {
  std::string source;
  std::string split;
  std::string note;
};

struct Corpus {
  std::vector<LabeledSentence> sentences;
  CorpusMetadata metadata;
};

struct DatasetStats {
  std::size_t count_acceptable = 0;
  std::size_t count_unacceptable = 0;
  std::size_t total = 0;
  // (acceptable, unacceptable, total) difference vs a base corpus.
  std::optional<std::array<long long, 3>> delta_vs_base;
};

// Column/delimiter mapping for delimiter-separated corpus files.
// Columns are resolved by header name when has_header is true, otherwise
// by zero-based index given as a decimal string.
struct FormatConfig {
  char delimiter = ',';
  bool has_header = true;
  std::string text_column = "text";
  std::string label_column = "label";
  std::optional<std::string> id_column;
  std::optional<std::string> pair_id_column;
  // Permits label 2 rows in intermediate pipeline files. Final corpora
  // never carry label 2.
  bool allow_label_2 = false;
};

enum class PairingStrategy { kAdjacent, kExplicitColumn };

struct PairingResult {
  std::vector<SentencePair> pairs;
  std::vector<LabeledSentence> unpaired;
};

Corpus load_corpus(const std::string& path, const FormatConfig& format);
void save_corpus(const Corpus& corpus, const std::string& path, const FormatConfig& format);

// Adjacent: rows (2k, 2k+1) whose labels are (0,1) or (1,0) become one
// pair with the label-0 member as `acceptable`; violating rows come back
// unpaired. ExplicitColumn: groups rows by pair id and requires exactly
// one 0 and one 1 per group; malformed groups come back unpaired.
PairingResult pair_sentences(const Corpus& corpus, PairingStrategy strategy);

// Counts per label; delta_vs_base filled when base is given. Throws if
// any label-2 row is present (stats are defined on final corpora only).
DatasetStats compute_stats(const Corpus& corpus, const Corpus* base = nullptr);

// "7,515 / 6,460 / 13,975" with an optional second line of deltas.
std::string render_stats(const DatasetStats& stats);

}  // namespace mtle

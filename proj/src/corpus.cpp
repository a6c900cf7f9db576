#include "mtle/corpus.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "mtle/csv.hpp"
#include "mtle/text.hpp"

namespace mtle {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error(path + ": " + what);
}

[[noreturn]] void fail_line(const std::string& path, std::size_t line, const std::string& what) {
  throw std::runtime_error(path + ": line " + std::to_string(line) + ": " + what);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open file");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) fail(path, "read error");
  return buf.str();
}

// Resolves a column spec (header name, or decimal index for headerless
// files) to a field index.
std::size_t resolve_column(const std::string& path, const std::vector<std::string>& header,
                           bool has_header, const std::string& spec) {
  if (has_header) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == spec) return i;
    }
  }
  // Fall back to a numeric index.
  if (!spec.empty() && spec.find_first_not_of("0123456789") == std::string::npos) {
    return static_cast<std::size_t>(std::stoull(spec));
  }
  fail(path, has_header ? "column '" + spec + "' not found in header"
                        : "file has no header; column '" + spec + "' must be a numeric index");
}

MoralLabel parse_label(const std::string& path, std::size_t line, const std::string& raw,
                       bool allow_label_2) {
  if (raw == "0") return MoralLabel::kAcceptable;
  if (raw == "1") return MoralLabel::kUnacceptable;
  if (raw == "2" && allow_label_2) return MoralLabel::kIndistinguishable;
  fail_line(path, line, "label '" + raw + "' outside permitted set");
}

}  // namespace

Corpus load_corpus(const std::string& path, const FormatConfig& format) {
  const std::string content = read_file(path);
  if (!text::is_valid_utf8(content)) fail(path, "input is not valid UTF-8");

  std::vector<csv::Row> rows;
  try {
    rows = csv::parse(content, format.delimiter);
  } catch (const std::exception& e) {
    fail(path, e.what());
  }

  Corpus corpus;
  corpus.metadata.source = path;

  std::size_t begin = 0;
  std::vector<std::string> header;
  if (format.has_header) {
    if (rows.empty()) return corpus;  // header-only or empty file
    header = rows[0].fields;
    begin = 1;
  }
  if (rows.size() <= begin) return corpus;

  const std::size_t text_col = resolve_column(path, header, format.has_header, format.text_column);
  const std::size_t label_col = resolve_column(path, header, format.has_header, format.label_column);
  std::optional<std::size_t> id_col;
  if (format.id_column) id_col = resolve_column(path, header, format.has_header, *format.id_column);
  std::optional<std::size_t> pair_col;
  if (format.pair_id_column) {
    pair_col = resolve_column(path, header, format.has_header, *format.pair_id_column);
  }

  const std::size_t expected_fields =
      format.has_header ? header.size()
                        : std::max({text_col, label_col, id_col.value_or(0), pair_col.value_or(0)}) + 1;

  std::unordered_set<std::string> seen_ids;
  corpus.sentences.reserve(rows.size() - begin);
  for (std::size_t r = begin; r < rows.size(); ++r) {
    const csv::Row& row = rows[r];
    if (format.has_header ? row.fields.size() != expected_fields
                          : row.fields.size() < expected_fields) {
      fail_line(path, row.line,
                "expected " + std::to_string(expected_fields) + " columns, got " +
                    std::to_string(row.fields.size()));
    }
    LabeledSentence s;
    s.text = row.fields[text_col];
    s.label = parse_label(path, row.line, row.fields[label_col], format.allow_label_2);
    s.id = id_col ? row.fields[*id_col] : std::to_string(r - begin);
    if (pair_col && !row.fields[*pair_col].empty()) s.pair_id = row.fields[*pair_col];
    if (text::normalize_text(s.text).empty()) {
      fail_line(path, row.line, "text is empty after normalization");
    }
    if (!seen_ids.insert(s.id).second) {
      fail_line(path, row.line, "duplicate sentence id '" + s.id + "'");
    }
    corpus.sentences.push_back(std::move(s));
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path, const FormatConfig& format) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(path, "cannot open file for writing");

  const bool with_pair = format.pair_id_column.has_value();
  if (format.has_header) {
    std::vector<std::string> header{format.text_column, format.label_column};
    if (with_pair) header.push_back(*format.pair_id_column);
    out << csv::encode_row(header, format.delimiter) << '\n';
  }
  for (const LabeledSentence& s : corpus.sentences) {
    if (!format.allow_label_2 && !is_binary(s.label)) {
      fail(path, "refusing to emit label 2 for sentence '" + s.id + "' into a final corpus");
    }
    std::vector<std::string> fields{s.text, std::to_string(label_value(s.label))};
    if (with_pair) fields.push_back(s.pair_id.value_or(""));
    out << csv::encode_row(fields, format.delimiter) << '\n';
  }
  out.flush();
  if (!out) fail(path, "write error");
}

PairingResult pair_sentences(const Corpus& corpus, PairingStrategy strategy) {
  PairingResult result;
  if (strategy == PairingStrategy::kAdjacent) {
    std::size_t i = 0;
    for (; i + 1 < corpus.sentences.size(); i += 2) {
      const LabeledSentence& a = corpus.sentences[i];
      const LabeledSentence& b = corpus.sentences[i + 1];
      const bool ab = a.label == MoralLabel::kAcceptable && b.label == MoralLabel::kUnacceptable;
      const bool ba = a.label == MoralLabel::kUnacceptable && b.label == MoralLabel::kAcceptable;
      if (!ab && !ba) {
        result.unpaired.push_back(a);
        result.unpaired.push_back(b);
        continue;
      }
      SentencePair pair;
      pair.pair_id = a.id;
      pair.acceptable = ab ? a : b;
      pair.unacceptable = ab ? b : a;
      pair.acceptable.pair_id = pair.pair_id;
      pair.unacceptable.pair_id = pair.pair_id;
      result.pairs.push_back(std::move(pair));
    }
    if (i < corpus.sentences.size()) result.unpaired.push_back(corpus.sentences[i]);
    return result;
  }

  // ExplicitColumn: group by pair id, preserving first-appearance order.
  std::vector<std::string> group_order;
  std::unordered_map<std::string, std::vector<const LabeledSentence*>> groups;
  for (const LabeledSentence& s : corpus.sentences) {
    if (!s.pair_id) {
      result.unpaired.push_back(s);
      continue;
    }
    auto [it, inserted] = groups.try_emplace(*s.pair_id);
    if (inserted) group_order.push_back(*s.pair_id);
    it->second.push_back(&s);
  }
  for (const std::string& key : group_order) {
    const auto& members = groups[key];
    const LabeledSentence* zero = nullptr;
    const LabeledSentence* one = nullptr;
    bool well_formed = members.size() == 2;
    for (const LabeledSentence* m : members) {
      if (m->label == MoralLabel::kAcceptable && !zero) {
        zero = m;
      } else if (m->label == MoralLabel::kUnacceptable && !one) {
        one = m;
      } else {
        well_formed = false;
      }
    }
    if (!well_formed || !zero || !one) {
      for (const LabeledSentence* m : members) result.unpaired.push_back(*m);
      continue;
    }
    SentencePair pair;
    pair.pair_id = key;
    pair.acceptable = *zero;
    pair.unacceptable = *one;
    result.pairs.push_back(std::move(pair));
  }
  return result;
}

DatasetStats compute_stats(const Corpus& corpus, const Corpus* base) {
  DatasetStats stats;
  for (const LabeledSentence& s : corpus.sentences) {
    switch (s.label) {
      case MoralLabel::kAcceptable:
        ++stats.count_acceptable;
        break;
      case MoralLabel::kUnacceptable:
        ++stats.count_unacceptable;
        break;
      case MoralLabel::kIndistinguishable:
        throw std::runtime_error("label 2 present in corpus '" + corpus.metadata.source +
                                 "'; stats are defined on final corpora only");
    }
  }
  stats.total = stats.count_acceptable + stats.count_unacceptable;
  if (base != nullptr) {
    DatasetStats b = compute_stats(*base);
    stats.delta_vs_base = {
        static_cast<long long>(stats.count_acceptable) - static_cast<long long>(b.count_acceptable),
        static_cast<long long>(stats.count_unacceptable) -
            static_cast<long long>(b.count_unacceptable),
        static_cast<long long>(stats.total) - static_cast<long long>(b.total),
    };
  }
  return stats;
}

std::string render_stats(const DatasetStats& stats) {
  std::string out = text::with_thousands(static_cast<long long>(stats.count_acceptable)) + " / " +
                    text::with_thousands(static_cast<long long>(stats.count_unacceptable)) +
                    " / " + text::with_thousands(static_cast<long long>(stats.total));
  if (stats.delta_vs_base) {
    const auto& d = *stats.delta_vs_base;
    out += "\ndelta vs base: " + text::with_thousands_signed(d[0]) + " / " +
           text::with_thousands_signed(d[1]) + " / " + text::with_thousands_signed(d[2]);
  }
  return out;
}

}  // namespace mtle

#include "mtle/prompts.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mtle/text.hpp"

namespace mtle {

namespace {

// All default prompts are Japanese: the corpora this pipeline targets are
// Japanese and mixing instruction languages measurably degrades fills.

constexpr const char* kGenerationSystem =
    "あなたは日本語の文を作る有能なアシスタントです。指示された形式だけで答えてください。";

constexpr const char* kGenerationUser =
    "次のマスク文の「<>」に入る語句を考えてください。\n"
    "マスク文: {mask}\n"
    "「<>」を置き換えると道徳的に許容される文になる語句を3つ、"
    "道徳的に許容されない文になる語句を3つ挙げてください。\n"
    "必ず次のJSON形式のみで答えてください。説明は不要です。\n"
    "{\"acceptable\": [\"語句1\", \"語句2\", \"語句3\"], "
    "\"unacceptable\": [\"語句1\", \"語句2\", \"語句3\"]}";

constexpr const char* kRelabelSystem =
    "あなたは日本の社会常識に基づいて文の道徳性を判定する審査員です。";

constexpr const char* kRelabelUser =
    "次の文は道徳的に許容されますか。\n"
    "文: {sentence}\n"
    "許容される場合は 0、許容されない場合は 1、判断できない場合は 2 と、"
    "数字1文字だけで答えてください。";

constexpr const char* kClassifySystem =
    "あなたは日本の社会常識に基づいて文の道徳性を判定する審査員です。";

constexpr const char* kClassifyUser =
    "文が道徳的に許容されるなら 0、許容されないなら 1 と答えます。\n"
    "例:\n"
    "文: {exemplar_text}\n"
    "答え: {exemplar_label}\n"
    "次の文について、数字1文字だけで答えてください。\n"
    "文: {sentence}\n"
    "答え:";

constexpr const char* kParaphraseSystem =
    "あなたは日本語の文を言い換える有能なアシスタントです。指示された形式だけで答えてください。";

constexpr const char* kParaphraseUser =
    "次の文と同じ意味を保つ言い換えを3つ作ってください。\n"
    "文: {sentence}\n"
    "必ず次のJSON形式のみで答えてください。説明は不要です。\n"
    "[\"言い換え1\", \"言い換え2\", \"言い換え3\"]";

constexpr const char* kCorrectiveSuffix =
    "\n（再試行 {attempt} 回目）前回の答えは形式に合いませんでした。"
    "指示された形式だけで答え直してください。";

void maybe_load(const std::string& dir, const char* name, std::string& target) {
  const std::filesystem::path path = std::filesystem::path(dir) / (std::string(name) + ".txt");
  std::ifstream in(path, std::ios::binary);
  if (!in) return;
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string content = buf.str();
  // Editors append a final newline; the templates do not want one.
  while (!content.empty() && (content.back() == '\n' || content.back() == '\r')) content.pop_back();
  target = std::move(content);
}

}  // namespace

PromptSet PromptSet::defaults() {
  PromptSet p;
  p.generation_system = kGenerationSystem;
  p.generation_user = kGenerationUser;
  p.relabel_system = kRelabelSystem;
  p.relabel_user = kRelabelUser;
  p.classify_system = kClassifySystem;
  p.classify_user = kClassifyUser;
  p.paraphrase_system = kParaphraseSystem;
  p.paraphrase_user = kParaphraseUser;
  p.corrective_suffix = kCorrectiveSuffix;
  return p;
}

PromptSet PromptSet::from_directory(const std::string& dir) {
  PromptSet p = defaults();
  maybe_load(dir, "generation_system", p.generation_system);
  maybe_load(dir, "generation_user", p.generation_user);
  maybe_load(dir, "relabel_system", p.relabel_system);
  maybe_load(dir, "relabel_user", p.relabel_user);
  maybe_load(dir, "classify_system", p.classify_system);
  maybe_load(dir, "classify_user", p.classify_user);
  maybe_load(dir, "paraphrase_system", p.paraphrase_system);
  maybe_load(dir, "paraphrase_user", p.paraphrase_user);
  maybe_load(dir, "corrective_suffix", p.corrective_suffix);
  return p;
}

std::string PromptSet::digest() const {
  std::string all = std::string(kPromptSetVersion) + '\x1f' + generation_system + '\x1f' +
                    generation_user + '\x1f' + relabel_system + '\x1f' + relabel_user + '\x1f' +
                    classify_system + '\x1f' + classify_user + '\x1f' + paraphrase_system + '\x1f' +
                    paraphrase_user + '\x1f' + corrective_suffix;
  return text::fnv1a64_hex(all);
}

std::string render_prompt(const std::string& tmpl,
                          const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      std::size_t close = tmpl.find('}', i + 1);
      if (close != std::string::npos) {
        const std::string name = tmpl.substr(i + 1, close - i - 1);
        auto it = values.find(name);
        if (it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(tmpl[i]);
    ++i;
  }
  return out;
}

}  // namespace mtle

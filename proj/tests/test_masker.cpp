#include "mtle/masker.hpp"

#include <doctest.h>

#include <random>

#include "mtle/text.hpp"

using namespace mtle;

namespace {

SentencePair make_pair(const std::string& acceptable, const std::string& unacceptable,
                       const std::string& id = "p") {
  SentencePair pair;
  pair.pair_id = id;
  pair.acceptable = {id + "-0", acceptable, MoralLabel::kAcceptable, Origin::kOriginal, id};
  pair.unacceptable = {id + "-1", unacceptable, MoralLabel::kUnacceptable, Origin::kOriginal, id};
  return pair;
}

// Exhaustive search over all (p, s) with p + s <= min(|a|, |b|),
// maximizing p and then s. The reference the fast path must agree with.
std::pair<std::size_t, std::size_t> brute_force_affixes(const std::vector<std::string>& a,
                                                        const std::vector<std::string>& b) {
  const std::size_t limit = std::min(a.size(), b.size());
  std::size_t best_p = 0, best_s = 0;
  bool found = false;
  for (std::size_t p = 0; p <= limit; ++p) {
    bool prefix_ok = true;
    for (std::size_t i = 0; i < p; ++i) prefix_ok = prefix_ok && a[i] == b[i];
    if (!prefix_ok) continue;
    for (std::size_t s = 0; p + s <= limit; ++s) {
      bool suffix_ok = true;
      for (std::size_t i = 0; i < s; ++i) {
        suffix_ok = suffix_ok && a[a.size() - 1 - i] == b[b.size() - 1 - i];
      }
      if (!suffix_ok) continue;
      if (!found || p > best_p || (p == best_p && s > best_s)) {
        best_p = p;
        best_s = s;
        found = true;
      }
    }
  }
  return {best_p, best_s};
}

std::vector<std::string> random_tokens(std::mt19937_64& rng, int alphabet, int max_len) {
  std::uniform_int_distribution<int> len(0, max_len);
  std::uniform_int_distribution<int> sym(0, alphabet - 1);
  std::vector<std::string> tokens;
  const int n = len(rng);
  tokens.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) tokens.push_back(std::string(1, static_cast<char>('a' + sym(rng))));
  return tokens;
}

}  // namespace

TEST_CASE("affix extraction on the medicine/alcohol pair") {
  Segmenter seg({});
  MaskOutcome o = extract_mask(make_pair("赤ちゃんに薬を飲ませる", "赤ちゃんにお酒を飲ませる"), seg);
  REQUIRE(o.disposition == MaskDisposition::kAccepted);
  CHECK(o.tmpl.prefix == "赤ちゃんに");
  CHECK(o.tmpl.suffix == "を飲ませる");
  CHECK(render_mask(o.tmpl) == "赤ちゃんに<>を飲ませる");
  CHECK(mask_char_len(o.tmpl) == 12);
}

TEST_CASE("identical pair is rejected as degenerate") {
  Segmenter seg({});
  MaskOutcome o = extract_mask(make_pair("ab", "ab"), seg);
  CHECK(o.disposition == MaskDisposition::kRejectedIdentical);
}

TEST_CASE("short mask is rejected") {
  Segmenter seg({});
  MaskOutcome o = extract_mask(make_pair("xy", "xz"), seg);
  CHECK(o.disposition == MaskDisposition::kRejectedTooShort);
  // The would-be mask is "x<>": length 3 < 6.
  CHECK(render_mask(o.tmpl) == "x<>");
  CHECK(mask_char_len(o.tmpl) == 3);
}

TEST_CASE("render_mask concatenates prefix, placeholder, suffix") {
  MaskTemplate t;
  t.prefix = "赤ちゃんに";
  t.suffix = "を飲ませる";
  CHECK(render_mask(t) == "赤ちゃんに<>を飲ませる");
  t.prefix = "";
  t.suffix = "をあげた";
  CHECK(render_mask(t) == "<>をあげた");
  t.prefix = "１９歳の子に";
  CHECK(render_mask(t) == "１９歳の子に<>をあげた");
}

TEST_CASE("mask_char_len counts grapheme clusters with the placeholder as 2") {
  MaskTemplate t;
  CHECK(mask_char_len(t) == 2);  // "<>"
  t.prefix = "x";
  CHECK(mask_char_len(t) == 3);  // "x<>"
  t.prefix = "１９歳の子に";
  t.suffix = "をあげた";
  CHECK(mask_char_len(t) == 12);
}

TEST_CASE("suffix shrinks first when affixes overlap") {
  std::vector<std::string> a = {"x", "x"};
  std::vector<std::string> b = {"x", "x", "x"};
  // p and s are both 2; p + s exceeds min(|a|,|b|) = 2, so s gives way.
  CHECK(common_affix_lengths(a, b) == std::pair<std::size_t, std::size_t>{2, 0});

  std::vector<std::string> c = {"a", "b", "a", "b"};
  std::vector<std::string> d = {"a", "b"};
  CHECK(common_affix_lengths(c, d) == std::pair<std::size_t, std::size_t>{2, 0});
}

TEST_CASE("affix kernel agrees with the exhaustive oracle") {
  std::mt19937_64 rng(1234);
  std::uniform_int_distribution<int> alphabet(2, 8);
  for (int round = 0; round < 1000; ++round) {
    const int k = alphabet(rng);
    const std::vector<std::string> a = random_tokens(rng, k, 20);
    const std::vector<std::string> b = random_tokens(rng, k, 20);
    CHECK(common_affix_lengths(a, b) == brute_force_affixes(a, b));
  }
}

TEST_CASE("accepted templates reconstruct both sentences with distinct middles") {
  Segmenter seg({});
  std::mt19937_64 rng(99);
  const std::vector<std::string> pool = {"あ", "い", "う", "え", "お", "か", "き"};
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::uniform_int_distribution<int> affix_len(0, 5);
  std::uniform_int_distribution<int> middle_len(0, 4);

  auto random_run = [&](int n) {
    std::string s;
    for (int i = 0; i < n; ++i) s += pool[pick(rng)];
    return s;
  };

  int accepted = 0;
  for (int round = 0; round < 300; ++round) {
    // Shared affixes with independent middles, like real pair data.
    const std::string prefix = random_run(affix_len(rng));
    const std::string suffix = random_run(affix_len(rng));
    const std::string left = prefix + random_run(middle_len(rng)) + suffix;
    const std::string right = prefix + random_run(middle_len(rng)) + suffix;
    if (left == right || left.empty() || right.empty()) continue;
    MaskOutcome o = extract_mask(make_pair(left, right), seg);
    if (o.disposition != MaskDisposition::kAccepted) continue;
    ++accepted;
    CHECK(mask_char_len(o.tmpl) >= kMinMaskChars);
    for (const std::string& sentence : {left, right}) {
      REQUIRE(sentence.size() >= o.tmpl.prefix.size() + o.tmpl.suffix.size());
      CHECK(sentence.substr(0, o.tmpl.prefix.size()) == o.tmpl.prefix);
      CHECK(sentence.substr(sentence.size() - o.tmpl.suffix.size()) == o.tmpl.suffix);
    }
    const std::string middle_left =
        left.substr(o.tmpl.prefix.size(), left.size() - o.tmpl.prefix.size() - o.tmpl.suffix.size());
    const std::string middle_right = right.substr(
        o.tmpl.prefix.size(), right.size() - o.tmpl.prefix.size() - o.tmpl.suffix.size());
    CHECK(middle_left != middle_right);
  }
  CHECK(accepted > 20);  // the property must actually get exercised
}

TEST_CASE("batch kernels agree with each other") {
  std::mt19937_64 rng(7);
  const std::vector<std::string> pool = {"安", "全", "危", "険", "な", "行", "動", "を", "した"};
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::uniform_int_distribution<int> len(1, 10);

  std::vector<SentencePair> pairs;
  for (int i = 0; i < 500; ++i) {
    std::string a, b;
    const int n = len(rng);
    for (int j = 0; j < n; ++j) a += pool[pick(rng)];
    const int m = len(rng);
    for (int j = 0; j < m; ++j) b += pool[pick(rng)];
    pairs.push_back(make_pair(a, b, std::to_string(i)));
  }

  SegmenterConfig config;
  const std::vector<MaskOutcome> serial = extract_masks_serial(pairs, config);
  const std::vector<MaskOutcome> parallel = extract_masks(pairs, config);
  REQUIRE(serial.size() == parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    CHECK(serial[i].disposition == parallel[i].disposition);
    CHECK(serial[i].tmpl.prefix == parallel[i].tmpl.prefix);
    CHECK(serial[i].tmpl.suffix == parallel[i].tmpl.suffix);
  }
}

#include "mtle/corpus.hpp"

#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "mtle/csv.hpp"

using namespace mtle;
using mtle::testing::TempDir;
using mtle::testing::write_file;

namespace {

Corpus load_text(const std::string& content, const FormatConfig& format = {}) {
  TempDir dir;
  const std::string path = dir.file("corpus.csv");
  write_file(path, content);
  return load_corpus(path, format);
}

}  // namespace

TEST_CASE("load_corpus parses a small fixture") {
  Corpus c = load_text("text,label\na,0\nb,1\nc,0\n");
  REQUIRE(c.sentences.size() == 3);
  CHECK(c.sentences[0].text == "a");
  CHECK(c.sentences[0].label == MoralLabel::kAcceptable);
  CHECK(c.sentences[1].label == MoralLabel::kUnacceptable);
  CHECK(c.sentences[2].label == MoralLabel::kAcceptable);
  // Row-index ids when no id column exists.
  CHECK(c.sentences[0].id == "0");
  CHECK(c.sentences[2].id == "2");
}

TEST_CASE("load_corpus handles a header-only file") {
  Corpus c = load_text("text,label\n");
  CHECK(c.sentences.empty());
}

TEST_CASE("load_corpus errors carry line numbers") {
  TempDir dir;

  SUBCASE("wrong column count") {
    const std::string path = dir.file("bad.csv");
    write_file(path, "text,label\na,0\nb\n");
    CHECK_THROWS_WITH_AS(load_corpus(path, {}),
                         doctest::Contains("line 3"), std::runtime_error);
  }
  SUBCASE("label outside permitted set") {
    const std::string path = dir.file("bad.csv");
    write_file(path, "text,label\na,0\nb,7\n");
    try {
      load_corpus(path, {});
      FAIL("expected an error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
      CHECK(std::string(e.what()).find("'7'") != std::string::npos);
    }
  }
  SUBCASE("label 2 rejected without the flag, accepted with it") {
    const std::string path = dir.file("mid.csv");
    write_file(path, "text,label\na,2\n");
    CHECK_THROWS_AS(load_corpus(path, {}), std::runtime_error);
    FormatConfig format;
    format.allow_label_2 = true;
    Corpus c = load_corpus(path, format);
    REQUIRE(c.sentences.size() == 1);
    CHECK(c.sentences[0].label == MoralLabel::kIndistinguishable);
  }
  SUBCASE("invalid utf-8") {
    const std::string path = dir.file("bad.csv");
    write_file(path, std::string("text,label\na\xFF\xFE,0\n"));
    CHECK_THROWS_WITH_AS(load_corpus(path, {}), doctest::Contains("UTF-8"), std::runtime_error);
  }
  SUBCASE("missing file names the path") {
    CHECK_THROWS_WITH_AS(load_corpus(dir.file("nope.csv"), {}),
                         doctest::Contains("nope.csv"), std::runtime_error);
  }
  SUBCASE("empty text rejected") {
    const std::string path = dir.file("bad.csv");
    write_file(path, "text,label\n　,0\n");
    CHECK_THROWS_WITH_AS(load_corpus(path, {}),
                         doctest::Contains("empty"), std::runtime_error);
  }
  SUBCASE("duplicate explicit ids rejected") {
    const std::string path = dir.file("bad.csv");
    write_file(path, "id,text,label\nx,a,0\nx,b,1\n");
    FormatConfig format;
    format.id_column = "id";
    CHECK_THROWS_WITH_AS(load_corpus(path, format),
                         doctest::Contains("duplicate"), std::runtime_error);
  }
}

TEST_CASE("save/load round-trip preserves texts, labels, and order") {
  TempDir dir;
  Corpus c;
  c.sentences = {
      {"0", "plain text", MoralLabel::kAcceptable, Origin::kOriginal, std::nullopt},
      {"1", "with, embedded comma", MoralLabel::kUnacceptable, Origin::kOriginal, std::nullopt},
      {"2", "quoted \"inner\" text", MoralLabel::kAcceptable, Origin::kOriginal, std::nullopt},
      {"3", "１９歳の子にお酒をあげた", MoralLabel::kUnacceptable, Origin::kOriginal, std::nullopt},
  };
  const std::string path = dir.file("rt.csv");
  save_corpus(c, path, {});
  Corpus back = load_corpus(path, {});
  REQUIRE(back.sentences.size() == c.sentences.size());
  for (std::size_t i = 0; i < c.sentences.size(); ++i) {
    CHECK(back.sentences[i].text == c.sentences[i].text);
    CHECK(back.sentences[i].label == c.sentences[i].label);
  }
}

TEST_CASE("round-trip property over random corpora") {
  // Texts drawn from pieces that exercise quoting, delimiters, and
  // full-width characters.
  const std::vector<std::string> pieces = {"薬", "お酒", "１９歳", "a,b", "\"", "銭湯 で",
                                           "たばこ", "x", "ＡＢＣ"};
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1);
  std::uniform_int_distribution<int> rows(1, 40);
  std::uniform_int_distribution<int> parts(1, 4);
  std::uniform_int_distribution<int> coin(0, 1);

  for (int round = 0; round < 20; ++round) {
    TempDir dir;
    Corpus c;
    const int n = rows(rng);
    for (int i = 0; i < n; ++i) {
      std::string text;
      const int k = parts(rng);
      for (int j = 0; j < k; ++j) text += pieces[pick(rng)];
      c.sentences.push_back({std::to_string(i), text,
                             coin(rng) ? MoralLabel::kUnacceptable : MoralLabel::kAcceptable,
                             Origin::kOriginal, std::nullopt});
    }
    const std::string path = dir.file("rt.csv");
    save_corpus(c, path, {});
    Corpus back = load_corpus(path, {});
    REQUIRE(back.sentences.size() == c.sentences.size());
    for (std::size_t i = 0; i < c.sentences.size(); ++i) {
      CHECK(back.sentences[i].text == c.sentences[i].text);
      CHECK(back.sentences[i].label == c.sentences[i].label);
    }
  }
}

TEST_CASE("save_corpus refuses label 2 in final corpora") {
  TempDir dir;
  Corpus c;
  c.sentences = {{"0", "x", MoralLabel::kIndistinguishable, Origin::kGenerated, std::nullopt}};
  CHECK_THROWS_AS(save_corpus(c, dir.file("out.csv"), {}), std::runtime_error);
}

TEST_CASE("tab-separated files work through the same format config") {
  TempDir dir;
  const std::string path = dir.file("corpus.tsv");
  write_file(path, "text\tlabel\nease of, commas\t0\n日本語\t1\n");
  FormatConfig format;
  format.delimiter = '\t';
  Corpus c = load_corpus(path, format);
  REQUIRE(c.sentences.size() == 2);
  CHECK(c.sentences[0].text == "ease of, commas");
  save_corpus(c, dir.file("back.tsv"), format);
  Corpus back = load_corpus(dir.file("back.tsv"), format);
  CHECK(back.sentences[1].text == "日本語");
}

TEST_CASE("adjacent pairing") {
  SUBCASE("canonical pair") {
    Corpus c = load_text("text,label\ngive medicine,0\ngive alcohol,1\n");
    PairingResult r = pair_sentences(c, PairingStrategy::kAdjacent);
    REQUIRE(r.pairs.size() == 1);
    CHECK(r.unpaired.empty());
    CHECK(r.pairs[0].acceptable.text == "give medicine");
    CHECK(r.pairs[0].unacceptable.text == "give alcohol");
  }
  SUBCASE("label pattern violation leaves both rows unpaired") {
    Corpus c = load_text("text,label\na,0\nb,0\n");
    PairingResult r = pair_sentences(c, PairingStrategy::kAdjacent);
    CHECK(r.pairs.empty());
    CHECK(r.unpaired.size() == 2);
  }
  SUBCASE("reversed labels normalize so acceptable is label 0") {
    Corpus c = load_text("text,label\nbad,1\ngood,0\n");
    PairingResult r = pair_sentences(c, PairingStrategy::kAdjacent);
    REQUIRE(r.pairs.size() == 1);
    CHECK(r.pairs[0].acceptable.text == "good");
    CHECK(r.pairs[0].unacceptable.text == "bad");
  }
  SUBCASE("odd trailing row is unpaired") {
    Corpus c = load_text("text,label\na,0\nb,1\nc,0\n");
    PairingResult r = pair_sentences(c, PairingStrategy::kAdjacent);
    CHECK(r.pairs.size() == 1);
    REQUIRE(r.unpaired.size() == 1);
    CHECK(r.unpaired[0].text == "c");
  }
  SUBCASE("JCM-style example pairs") {
    Corpus c = load_text(
        "text,label\n"
        "赤ちゃんに薬を飲ませる,0\n"
        "赤ちゃんにお酒を飲ませる,1\n"
        "銭湯で身体を洗って入浴する,0\n"
        "銭湯で泡だらけの身体で入浴する,1\n");
    PairingResult r = pair_sentences(c, PairingStrategy::kAdjacent);
    REQUIRE(r.pairs.size() == 2);
    CHECK(r.unpaired.empty());
    for (const SentencePair& p : r.pairs) {
      CHECK(p.acceptable.label == MoralLabel::kAcceptable);
      CHECK(p.unacceptable.label == MoralLabel::kUnacceptable);
    }
  }
}

TEST_CASE("explicit-column pairing") {
  FormatConfig format;
  format.pair_id_column = "pid";
  TempDir dir;
  const std::string path = dir.file("pairs.csv");
  write_file(path,
             "text,label,pid\n"
             "a,0,p1\n"
             "b,1,p1\n"
             "c,0,p2\n"
             "d,0,p2\n"      // duplicate labels: whole group unpaired
             "e,1,p3\n"      // group of one: unpaired
             "f,0,\n");      // no pair id: unpaired
  Corpus c = load_corpus(path, format);
  PairingResult r = pair_sentences(c, PairingStrategy::kExplicitColumn);
  REQUIRE(r.pairs.size() == 1);
  CHECK(r.pairs[0].pair_id == "p1");
  CHECK(r.unpaired.size() == 4);
}

TEST_CASE("adjacent pairing conserves rows and label structure") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> label(0, 1);
  for (int round = 0; round < 30; ++round) {
    Corpus c;
    const int n = static_cast<int>(rng() % 25);
    for (int i = 0; i < n; ++i) {
      c.sentences.push_back({std::to_string(i), "t" + std::to_string(i),
                             label(rng) ? MoralLabel::kUnacceptable : MoralLabel::kAcceptable,
                             Origin::kOriginal, std::nullopt});
    }
    PairingResult r = pair_sentences(c, PairingStrategy::kAdjacent);
    CHECK(r.pairs.size() * 2 + r.unpaired.size() == c.sentences.size());
    for (const SentencePair& p : r.pairs) {
      CHECK(p.acceptable.label == MoralLabel::kAcceptable);
      CHECK(p.unacceptable.label == MoralLabel::kUnacceptable);
    }
  }
}

TEST_CASE("compute_stats") {
  SUBCASE("small corpus") {
    Corpus c = load_text("text,label\na,0\nb,1\nc,0\n");
    DatasetStats s = compute_stats(c);
    CHECK(s.count_acceptable == 2);
    CHECK(s.count_unacceptable == 1);
    CHECK(s.total == 3);
    CHECK_FALSE(s.delta_vs_base.has_value());
  }
  SUBCASE("empty corpus") {
    Corpus c;
    DatasetStats s = compute_stats(c);
    CHECK(s.total == 0);
  }
  SUBCASE("total equals corpus size") {
    Corpus c = load_text("text,label\na,0\nb,1\nc,0\nd,1\ne,1\n");
    DatasetStats s = compute_stats(c);
    CHECK(s.total == c.sentences.size());
    CHECK(s.count_acceptable + s.count_unacceptable == s.total);
  }
  SUBCASE("delta vs base") {
    Corpus base = load_text("text,label\na,0\nb,1\n");
    Corpus ext = load_text("text,label\na,0\nb,1\nc,0\nd,0\ne,1\n");
    DatasetStats s = compute_stats(ext, &base);
    REQUIRE(s.delta_vs_base.has_value());
    CHECK((*s.delta_vs_base)[0] == 2);
    CHECK((*s.delta_vs_base)[1] == 1);
    CHECK((*s.delta_vs_base)[2] == 3);
  }
  SUBCASE("label 2 is an error") {
    Corpus c;
    c.sentences = {{"0", "x", MoralLabel::kIndistinguishable, Origin::kOriginal, std::nullopt}};
    CHECK_THROWS_AS(compute_stats(c), std::runtime_error);
  }
}

TEST_CASE("render_stats formats counts and deltas") {
  DatasetStats s;
  s.count_acceptable = 7515;
  s.count_unacceptable = 6460;
  s.total = 13975;
  CHECK(render_stats(s) == "7,515 / 6,460 / 13,975");
  s.count_acceptable = 19535;
  s.count_unacceptable = 11649;
  s.total = 31184;
  s.delta_vs_base = {{12020, 5189, 17209}};
  CHECK(render_stats(s) ==
        "19,535 / 11,649 / 31,184\ndelta vs base: +12,020 / +5,189 / +17,209");
}

TEST_CASE("csv encode/parse handles quoting edge cases") {
  using mtle::csv::encode_row;
  using mtle::csv::parse;
  CHECK(encode_row({"a", "b"}, ',') == "a,b");
  CHECK(encode_row({"a,b"}, ',') == "\"a,b\"");
  CHECK(encode_row({"say \"hi\""}, ',') == "\"say \"\"hi\"\"\"");

  auto rows = parse("a,\"b,c\"\n\"multi\nline\",2\n", ',');
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].fields == std::vector<std::string>{"a", "b,c"});
  CHECK(rows[1].fields == std::vector<std::string>{"multi\nline", "2"});
  CHECK(rows[1].line == 2);

  CHECK_THROWS(parse("\"unterminated\n", ','));
}

#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "relx/error.hpp"
#include "relx/mhred.hpp"
#include "test_util.hpp"

using namespace relx;
using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json record_json(const QaRecord& r) {
  ordered_json j;
  j["id"] = r.id;
  j["split"] = r.test_source ? "test" : "train";
  j["relation"] = r.relation;
  j["subject"] = r.subject;
  j["answer"] = r.answer;
  j["candidates"] = r.candidates;
  j["documents"] = ordered_json::array();
  for (const auto& d : r.documents) {
    ordered_json dj;
    dj["tokens"] = d.tokens;
    dj["sent_ids"] = d.sent_ids;
    dj["mentions"] = ordered_json::array();
    for (const auto& m : d.mentions)
      dj["mentions"].push_back({{"string", m.text}, {"span", {m.span.start, m.span.end}}});
    j["documents"].push_back(std::move(dj));
  }
  return j;
}

void check_spans(const std::vector<Span>& got, const std::vector<Span>& want) {
  REQUIRE(got.size() == want.size());
  for (size_t i = 0; i < got.size(); ++i) CHECK(got[i] == want[i]);
}

KbIndex zoo_kb() {
  KbIndex kb;
  kb.add("Zoo Lake", "Johannesburg");
  kb.add("Gauteng", "South Africa");
  return kb;
}

ChainInstance labeled(const std::string& rel) {
  ChainInstance c;
  c.relation = rel;
  return c;
}

}  // namespace

TEST_CASE("find_mentions matches token sequences case-insensitively") {
  std::vector<std::string> toks = {"The", "South", "African", "city", "of",
                                   "JOHANNESBURG", "lies", "in", "South", "Africa"};
  check_spans(find_mentions(toks, "south africa"), {{8, 9}});
  check_spans(find_mentions(toks, "Johannesburg"), {{5, 5}});
  check_spans(find_mentions(toks, "berlin"), {});
  check_spans(find_mentions(toks, ""), {});
  check_spans(find_mentions({}, "city"), {});

  // overlapping matches are consumed leftmost-first
  std::vector<std::string> rep = {"a", "a", "a"};
  check_spans(find_mentions(rep, "a a"), {{0, 1}});
  check_spans(find_mentions({"a", "a", "a", "a"}, "a a"), {{0, 1}, {2, 3}});
}

TEST_CASE("kb index is order-sensitive over canonical strings") {
  KbIndex kb;
  kb.add("Zoo  Lake", "Johannesburg");
  CHECK(kb.related("zoo lake", "JOHANNESBURG"));
  CHECK_FALSE(kb.related("johannesburg", "zoo lake"));
  CHECK_FALSE(kb.related("zoo lake", "gauteng"));
}

TEST_CASE("kb file loads tab-separated triples and skips comments") {
  testutil::TempDir dir;
  std::string path = dir.file("kb.tsv");
  testutil::write_file(path,
                       "# comment\n"
                       "\n"
                       "Zoo Lake\tJohannesburg\tlocated_in\r\n"
                       "Gauteng\tSouth Africa\tpart_of\n");
  KbIndex kb = KbIndex::load(path);
  CHECK(kb.related("zoo lake", "johannesburg"));
  CHECK(kb.related("gauteng", "south africa"));
  CHECK_FALSE(kb.related("south africa", "gauteng"));

  std::string bad = dir.file("bad.tsv");
  testutil::write_file(bad, "only two\tfields\n");
  CHECK_THROWS_AS(KbIndex::load(bad), FormatError);
  CHECK_THROWS_AS(KbIndex::load(dir.file("missing.tsv")), ConfigError);
}

TEST_CASE("qa records round trip through the jsonl reader") {
  testutil::TempDir dir;
  QaRecord rec = testutil::zoo_record();
  std::string path = dir.file("records.jsonl");
  testutil::write_file(path, record_json(rec).dump() + "\n");
  RelationSet rels = RelationSet::from_names({testutil::kZooRelation});
  auto got = read_qa_records(path, rels);
  REQUIRE(got.size() == 1);
  CHECK(got[0].id == rec.id);
  CHECK_FALSE(got[0].test_source);
  CHECK(got[0].relation == rec.relation);
  CHECK(got[0].subject == rec.subject);
  CHECK(got[0].answer == rec.answer);
  CHECK(got[0].candidates == rec.candidates);
  REQUIRE(got[0].documents.size() == 3);
  for (size_t d = 0; d < 3; ++d) {
    CHECK(got[0].documents[d].tokens == rec.documents[d].tokens);
    CHECK(got[0].documents[d].sent_ids == rec.documents[d].sent_ids);
    REQUIRE(got[0].documents[d].mentions.size() == rec.documents[d].mentions.size());
    for (size_t m = 0; m < rec.documents[d].mentions.size(); ++m) {
      CHECK(got[0].documents[d].mentions[m].text == rec.documents[d].mentions[m].text);
      CHECK(got[0].documents[d].mentions[m].span == rec.documents[d].mentions[m].span);
    }
  }
}

TEST_CASE("qa reader rejects malformed records") {
  testutil::TempDir dir;
  RelationSet rels = RelationSet::from_names({testutil::kZooRelation});
  auto write_and_read = [&](ordered_json j, const char* name) {
    std::string path = dir.file(name);
    testutil::write_file(path, j.dump() + "\n");
    return read_qa_records(path, rels);
  };

  QaRecord rec = testutil::zoo_record();
  ordered_json base = record_json(rec);

  ordered_json bad_split = base;
  bad_split["split"] = "dev";
  CHECK_THROWS_AS(write_and_read(bad_split, "split.jsonl"), ValidationError);

  ordered_json bad_rel = base;
  bad_rel["relation"] = "unheard_of";
  CHECK_THROWS_AS(write_and_read(bad_rel, "rel.jsonl"), ValidationError);

  ordered_json bad_answer = base;
  bad_answer["answer"] = "Pretoria";
  CHECK_THROWS_AS(write_and_read(bad_answer, "ans.jsonl"), ValidationError);

  ordered_json one_doc = base;
  one_doc["documents"].erase(1);
  one_doc["documents"].erase(1);
  CHECK_THROWS_AS(write_and_read(one_doc, "docs.jsonl"), ValidationError);

  ordered_json bad_span = base;
  bad_span["documents"][0]["mentions"][0]["span"] = {50, 200};
  CHECK_THROWS_AS(write_and_read(bad_span, "span.jsonl"), ValidationError);

  ordered_json bad_sids = base;
  bad_sids["documents"][0]["sent_ids"].erase(0);
  CHECK_THROWS_AS(write_and_read(bad_sids, "sids.jsonl"), ValidationError);

  std::string junk = dir.file("junk.jsonl");
  testutil::write_file(junk, "{not json\n");
  CHECK_THROWS_AS(read_qa_records(junk, rels), FormatError);
  CHECK_THROWS_AS(read_qa_records(dir.file("absent.jsonl"), rels), ConfigError);
}

TEST_CASE("the lake record yields one positive and one None chain") {
  QaRecord rec = testutil::zoo_record();
  std::ostringstream warn;
  auto chains = build_chains(rec, zoo_kb(), &warn);
  CHECK(warn.str().empty());
  REQUIRE(chains.size() == 2);

  const ChainInstance want = testutil::zoo_positive_chain();
  const ChainInstance& pos = chains[0];
  CHECK(pos.relation == want.relation);
  CHECK(pos.doc1_tokens == want.doc1_tokens);
  CHECK(pos.doc2_tokens == want.doc2_tokens);
  CHECK(pos.sent_ids_1 == want.sent_ids_1);
  CHECK(pos.sent_ids_2 == want.sent_ids_2);
  check_spans(pos.subject_mentions, want.subject_mentions);
  check_spans(pos.object_mentions, want.object_mentions);
  REQUIRE(pos.commons.size() == want.commons.size());
  for (size_t i = 0; i < want.commons.size(); ++i) {
    CHECK(pos.commons[i].canonical == want.commons[i].canonical);
    check_spans(pos.commons[i].mentions_1, want.commons[i].mentions_1);
    check_spans(pos.commons[i].mentions_2, want.commons[i].mentions_2);
  }
  REQUIRE(pos.extra_1.size() == want.extra_1.size());
  for (size_t i = 0; i < want.extra_1.size(); ++i) {
    CHECK(pos.extra_1[i].text == want.extra_1[i].text);
    CHECK(pos.extra_1[i].span == want.extra_1[i].span);
  }
  CHECK(pos.extra_2.empty());

  // doc1 -> doc3 through south africa, object Tanzania, labeled None
  const ChainInstance& none = chains[1];
  CHECK(none.relation == kNoneLabel);
  CHECK(none.doc2_tokens == rec.documents[2].tokens);
  check_spans(none.subject_mentions, {{0, 1}, {31, 32}});
  check_spans(none.object_mentions, {{16, 16}});
  REQUIRE(none.commons.size() == 1);
  CHECK(none.commons[0].canonical == "south africa");
  check_spans(none.commons[0].mentions_1, {{12, 13}});
  check_spans(none.commons[0].mentions_2, {{36, 37}});
  // johannesburg is no common entity of this pair, so it stays an extra
  REQUIRE(none.extra_1.size() == 4);
  CHECK(none.extra_1[0].text == "Johannesburg");
  CHECK(none.extra_2.size() == 8);
}

TEST_CASE("a record whose subject never surfaces is skipped with a warning") {
  QaRecord rec = testutil::zoo_record();
  rec.subject = "Atlantis";
  std::ostringstream warn;
  CHECK(build_chains(rec, zoo_kb(), &warn).empty());
  CHECK(warn.str() ==
        "zoo-lake: subject 'Atlantis' not found in any document; record skipped\n");
}

TEST_CASE("document pairs without a common entity yield nothing") {
  QaRecord rec = testutil::zoo_record();
  // strip doc2/doc3 NER so no entity bridges the documents
  rec.documents[1].mentions.clear();
  rec.documents[2].mentions.clear();
  CHECK(build_chains(rec, zoo_kb(), nullptr).empty());
}

TEST_CASE("kb-related candidates are not used as None objects") {
  QaRecord rec = testutil::zoo_record();
  auto count_none = [&](const KbIndex& kb) {
    auto chains = build_chains(rec, kb, nullptr);
    size_t n = 0;
    for (const auto& c : chains) n += c.relation == kNoneLabel;
    return n;
  };
  CHECK(count_none(zoo_kb()) == 1);
  for (auto [s, o] : std::vector<std::pair<const char*, const char*>>{
           {"Zoo Lake", "Tanzania"},
           {"Tanzania", "Zoo Lake"},
           {"Tanzania", "Gauteng"},
           {"Gauteng", "Tanzania"}}) {
    KbIndex kb = zoo_kb();
    kb.add(s, o);
    CHECK(count_none(kb) == 0);
  }

  // duplicate candidate strings produce one None chain, not two
  QaRecord dup = testutil::zoo_record();
  dup.candidates.push_back("TANZANIA");
  CHECK(build_chains(dup, zoo_kb(), nullptr).size() == 2);
}

TEST_CASE("balance_and_split keeps every positive and caps None per part") {
  std::vector<ChainInstance> train_src;
  for (int i = 0; i < 20; ++i) train_src.push_back(labeled("r"));
  for (int i = 0; i < 50; ++i) train_src.push_back(labeled(kNoneLabel));
  std::vector<ChainInstance> test_src = {labeled("r"), labeled(kNoneLabel), labeled(kNoneLabel)};

  MhredSplits s = balance_and_split(train_src, test_src, 9);
  auto count = [](const std::vector<ChainInstance>& v, const char* rel) {
    return std::count_if(v.begin(), v.end(),
                         [&](const ChainInstance& c) { return c.relation == rel; });
  };
  long train_pos = count(s.train, "r"), train_none = count(s.train, kNoneLabel);
  long val_pos = count(s.validation, "r"), val_none = count(s.validation, kNoneLabel);
  CHECK(train_pos + val_pos == 20);
  CHECK(train_none <= train_pos);
  CHECK(val_none <= val_pos);
  CHECK(val_pos + val_none <= 7);  // the validation part draws 10% of 70 raw chains
  REQUIRE(s.test.size() == 3);
  CHECK(s.test[0].relation == "r");
  CHECK(s.test[2].relation == kNoneLabel);

  MhredSplits again = balance_and_split(train_src, test_src, 9);
  CHECK(again.train.size() == s.train.size());
  CHECK(again.validation.size() == s.validation.size());

  std::vector<ChainInstance> no_pos(5, labeled(kNoneLabel));
  CHECK_THROWS_AS(balance_and_split(no_pos, {}, 1), ConfigError);
  CHECK_THROWS_AS(balance_and_split({}, {}, 1), ConfigError);
}

TEST_CASE("build_mhred separates sources and reports stats") {
  QaRecord train_rec = testutil::zoo_record();
  QaRecord test_rec = testutil::zoo_record();
  test_rec.id = "zoo-lake-test";
  test_rec.test_source = true;
  QaRecord skipped = testutil::zoo_record();
  skipped.id = "nowhere";
  skipped.subject = "Atlantis";

  std::ostringstream warn;
  MhredBuild b = build_mhred({train_rec, test_rec, skipped}, zoo_kb(), 5, &warn);
  CHECK(warn.str() == "nowhere: subject 'Atlantis' not found in any document; record skipped\n");
  CHECK(b.stats.records == 3);
  CHECK(b.stats.records_skipped == 1);
  CHECK(b.stats.chains_pos == 2);
  CHECK(b.stats.chains_none == 2);
  CHECK(b.stats.commons_per_chain == std::map<size_t, size_t>{{1, 2}, {2, 2}});

  // the test source passes through unbalanced
  CHECK(b.stats.test_pos == 1);
  CHECK(b.stats.test_none == 1);
  CHECK(b.splits.test.size() == 2);
  CHECK(b.stats.train_pos + b.stats.val_pos == 1);
  CHECK(b.stats.train_none <= b.stats.train_pos);
  CHECK(b.stats.val_none <= b.stats.val_pos);

  std::string text = format_stats(b.stats);
  CHECK(text.find("records      3 (1 produced no chains)") != std::string::npos);
  CHECK(text.find("chains       4 (2 positive, 2 None)") != std::string::npos);
  CHECK(text.find("test         2 (1 positive, 1 None)") != std::string::npos);
  CHECK(text.find("common entities per chain:") != std::string::npos);
  CHECK(text.find("  2: 2") != std::string::npos);
}

TEST_CASE("build_mhred is deterministic for a fixed seed") {
  QaRecord rec = testutil::zoo_record();
  QaRecord rec2 = testutil::zoo_record();
  rec2.id = "zoo-lake-2";
  MhredBuild a = build_mhred({rec, rec2}, zoo_kb(), 42, nullptr);
  MhredBuild b = build_mhred({rec, rec2}, zoo_kb(), 42, nullptr);

  testutil::TempDir dir;
  std::string pa = dir.file("a.jsonl"), pb = dir.file("b.jsonl");
  write_chain_dataset(pa, a.splits.train);
  write_chain_dataset(pb, b.splits.train);
  CHECK(testutil::read_file(pa) == testutil::read_file(pb));
  CHECK(a.splits.validation.size() == b.splits.validation.size());
}

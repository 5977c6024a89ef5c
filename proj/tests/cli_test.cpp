#include <doctest.h>

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "relx/cli.hpp"
#include "relx/corpus.hpp"
#include "relx/error.hpp"
#include "relx/mhred.hpp"
#include "test_util.hpp"

using namespace relx;
using testutil::TempDir;
using ordered_json = nlohmann::ordered_json;

namespace {

int run(const std::vector<std::string>& args, std::string* out_text = nullptr,
        std::string* err_text = nullptr) {
  std::ostringstream out, err;
  int rc = run_cli(args, out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return rc;
}

bool file_exists(const std::string& path) { return std::ifstream(path).good(); }

size_t count_occurrences(const std::string& text, const std::string& needle) {
  size_t n = 0;
  for (size_t at = text.find(needle); at != std::string::npos; at = text.find(needle, at + 1)) ++n;
  return n;
}

// Four sentences, two relations, dependency paths included so the distance
// feature has something to walk.
void write_mfa_corpus(const std::string& dir) {
  testutil::write_file(dir + "/relations.txt", "works_at\nbased_in\n");
  std::vector<RelationInstance> data(4);
  data[0].tokens = {"ann", "works", "at", "acme", "corp"};
  data[0].e1 = {0, 0};
  data[0].e2 = {3, 4};
  data[0].relation = "works_at";
  data[0].dep_edges = {{1, 0}, {1, 2}, {2, 3}, {3, 4}};
  data[1].tokens = {"bob", "joined", "acme", "last", "year"};
  data[1].e1 = {0, 0};
  data[1].e2 = {2, 2};
  data[1].relation = "works_at";
  data[1].dep_edges = {{1, 0}, {1, 2}, {2, 3}, {3, 4}};
  data[2].tokens = {"acme", "is", "based", "in", "berlin"};
  data[2].e1 = {0, 0};
  data[2].e2 = {4, 4};
  data[2].relation = "based_in";
  data[2].dep_edges = {{2, 0}, {2, 1}, {2, 3}, {3, 4}};
  data[3].tokens = {"zirco", "operates", "from", "oslo"};
  data[3].e1 = {0, 0};
  data[3].e2 = {3, 3};
  data[3].relation = "based_in";
  data[3].dep_edges = {{1, 0}, {1, 2}, {2, 3}};
  write_sentence_dataset(dir + "/train.jsonl", data);
}

void write_mfa_config(const std::string& dir, const std::string& out_dir, int epochs) {
  std::ostringstream cfg;
  cfg << "# tiny classifier smoke setup\n"
      << "model = mfa\n"
      << "relations = " << dir << "/relations.txt\n"
      << "train_data = " << dir << "/train.jsonl\n"
      << "out_dir = " << out_dir << "\n"
      << "epochs = " << epochs << "\n"
      << "d_w = 8\nd_z = 4\nd_u = 3\nm = 2\nws = 3\n"
      << "f_g = 6\nf_e = 6\nk = 3\ncontext_radius = 2\npos_clamp = 10\ndropout = 0\n";
  testutil::write_file(dir + "/train.conf", cfg.str());
}

void write_wdec_corpus(const std::string& dir) {
  testutil::write_file(dir + "/relations.txt", "contains\nborders\n");
  std::vector<JointInstance> data(3);
  data[0].tokens = {"paris", "lies", "in", "france"};
  data[0].tuples = {{{3, 3}, {0, 0}, "contains"}};
  data[1].tokens = {"berlin", "sits", "in", "germany"};
  data[1].tuples = {{{3, 3}, {0, 0}, "contains"}};
  data[2].tokens = {"france", "borders", "spain"};
  data[2].tuples = {{{0, 0}, {2, 2}, "borders"}};
  write_joint_dataset(dir + "/train.jsonl", data);
}

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

}  // namespace

TEST_CASE("run config getters parse and reject values") {
  RunConfig cfg;
  cfg.command = "train";
  cfg.values = {{"s", "hello"}, {"n", "12"},    {"d", "0.5"},  {"b1", "yes"},
                {"b0", "off"},  {"neg", "-1"},  {"junk", "7x"}, {"inf", "inf"},
                {"empty", ""},  {"b_bad", "maybe"}};

  CHECK(cfg.get("s") == "hello");
  CHECK_THROWS_AS(cfg.get("absent"), ConfigError);
  CHECK(cfg.get_or("absent", "dflt") == "dflt");
  CHECK(cfg.get_or("s", "dflt") == "hello");

  CHECK(cfg.get_u64("n", 0) == 12);
  CHECK(cfg.get_u64("absent", 9) == 9);
  CHECK(cfg.get_size("n", 0) == 12);
  CHECK_THROWS_AS(cfg.get_u64("neg", 0), ConfigError);
  CHECK_THROWS_AS(cfg.get_u64("junk", 0), ConfigError);
  CHECK_THROWS_AS(cfg.get_u64("empty", 0), ConfigError);

  CHECK(cfg.get_double("d", 0.0) == 0.5);
  CHECK(cfg.get_double("absent", 1.5) == 1.5);
  CHECK_THROWS_AS(cfg.get_double("junk", 0.0), ConfigError);
  CHECK_THROWS_AS(cfg.get_double("inf", 0.0), ConfigError);

  CHECK(cfg.get_bool("b1", false));
  CHECK(!cfg.get_bool("b0", true));
  CHECK(cfg.get_bool("absent", true));
  CHECK_THROWS_AS(cfg.get_bool("b_bad", false), ConfigError);
}

TEST_CASE("config files strip comments and reject malformed lines") {
  TempDir dir;
  testutil::write_file(dir.file("good.conf"),
                       "a = 1\n"
                       "  # a full-line comment\n"
                       "b = two words   # trailing comment\n"
                       "\n"
                       "c=3\n");
  auto values = read_config_file(dir.file("good.conf"));
  REQUIRE(values.size() == 3);
  CHECK(values["a"] == "1");
  CHECK(values["b"] == "two words");
  CHECK(values["c"] == "3");

  testutil::write_file(dir.file("dup.conf"), "a = 1\na = 2\n");
  CHECK_THROWS_AS(read_config_file(dir.file("dup.conf")), FormatError);
  testutil::write_file(dir.file("noeq.conf"), "novalue\n");
  CHECK_THROWS_AS(read_config_file(dir.file("noeq.conf")), FormatError);
  testutil::write_file(dir.file("nokey.conf"), " = 5\n");
  CHECK_THROWS_AS(read_config_file(dir.file("nokey.conf")), FormatError);
  CHECK_THROWS_AS(read_config_file(dir.file("missing.conf")), ConfigError);
}

TEST_CASE("tuple prediction files round trip and validate") {
  TempDir dir;
  std::vector<TupleSet> preds = {{{"a", "b", "r"}, {"c", "d", "s"}}, {}};
  write_tuple_predictions(dir.file("p.jsonl"), preds);
  auto got = read_tuple_predictions(dir.file("p.jsonl"));
  REQUIRE(got.size() == 2);
  CHECK(got[0] == preds[0]);
  CHECK(got[1].empty());

  testutil::write_file(dir.file("junk.jsonl"), "{not json\n");
  CHECK_THROWS_AS(read_tuple_predictions(dir.file("junk.jsonl")), FormatError);
  testutil::write_file(dir.file("not_array.jsonl"), R"({"tuples": 3})"
                                                    "\n");
  CHECK_THROWS_AS(read_tuple_predictions(dir.file("not_array.jsonl")), ValidationError);
  testutil::write_file(dir.file("short.jsonl"), R"({"tuples": [["a","b"]]})"
                                                "\n");
  CHECK_THROWS_AS(read_tuple_predictions(dir.file("short.jsonl")), ValidationError);
  CHECK_THROWS_AS(read_tuple_predictions(dir.file("missing.jsonl")), ConfigError);
}

TEST_CASE("scored prediction files round trip and validate") {
  TempDir dir;
  std::vector<ScoredPrediction> preds = {{"works_at", 0.8125, "works_at"},
                                         {"None", 0.3, "based_in"}};
  write_scored_predictions(dir.file("p.jsonl"), preds);
  auto got = read_scored_predictions(dir.file("p.jsonl"));
  REQUIRE(got.size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    CHECK(got[i].predicted == preds[i].predicted);
    CHECK(got[i].confidence == preds[i].confidence);
    CHECK(got[i].gold == preds[i].gold);
  }

  testutil::write_file(dir.file("bad.jsonl"), R"({"predicted": 1, "confidence": 0.5, "gold": "x"})"
                                              "\n");
  CHECK_THROWS_AS(read_scored_predictions(dir.file("bad.jsonl")), ValidationError);
  testutil::write_file(dir.file("bad2.jsonl"),
                       R"({"predicted": "x", "confidence": "high", "gold": "x"})"
                       "\n");
  CHECK_THROWS_AS(read_scored_predictions(dir.file("bad2.jsonl")), ValidationError);
}

TEST_CASE("cli rejects missing and unknown commands, keys, and overrides") {
  std::string err;
  CHECK(run({}, nullptr, &err) == 2);
  CHECK(run({"frobnicate"}, nullptr, &err) == 2);

  TempDir dir;
  const std::string root = dir.path.string();
  write_mfa_corpus(root);
  write_mfa_config(root, root + "/run", 1);

  CHECK(run({"train", "--config", dir.file("train.conf"), "--set", "epochs"}, nullptr, &err) == 2);
  CHECK(run({"train", "--config", dir.file("train.conf"), "--set", "=3"}, nullptr, &err) == 2);

  testutil::write_file(dir.file("bogus.conf"), "model = mfa\nbogus = 1\n");
  CHECK(run({"train", "--config", dir.file("bogus.conf")}, nullptr, &err) == 2);
  CHECK(err.find("unknown config key 'bogus'") != std::string::npos);

  testutil::write_file(dir.file("incomplete.conf"), "model = mfa\nout_dir = /tmp/x\n");
  CHECK(run({"train", "--config", dir.file("incomplete.conf")}, nullptr, &err) == 2);
  CHECK(err.find("missing config key") != std::string::npos);

  testutil::write_file(dir.file("badkind.conf"),
                       "model = transformer\nout_dir = /tmp/x\nrelations = /tmp/r\n"
                       "train_data = /tmp/t\n");
  CHECK(run({"train", "--config", dir.file("badkind.conf")}, nullptr, &err) == 2);
  CHECK(err.find("unknown model kind") != std::string::npos);
}

TEST_CASE("classifier pipeline trains, evaluates, predicts, and tunes") {
  TempDir dir;
  const std::string root = dir.path.string();
  write_mfa_corpus(root);
  write_mfa_config(root, root + "/run1", 3);

  std::string out, err;
  REQUIRE(run({"train", "--config", dir.file("train.conf"), "--seed", "7"}, &out, &err) == 0);
  CHECK(out.find("trained mfa for 3 epochs") != std::string::npos);
  CHECK(file_exists(root + "/run1/model.ckpt"));
  CHECK(file_exists(root + "/run1/vocab.txt"));
  CHECK(file_exists(root + "/run1/threshold.txt"));
  std::string log = testutil::read_file(root + "/run1/train.log");
  CHECK(count_occurrences(log, "epoch ") == 3);

  std::ostringstream eval_cfg;
  eval_cfg << "checkpoint = " << root << "/run1/model.ckpt\n"
           << "test_data = " << root << "/train.jsonl\n"
           << "out_dir = " << root << "/eval1\n";
  testutil::write_file(dir.file("eval.conf"), eval_cfg.str());
  REQUIRE(run({"eval", "--config", dir.file("eval.conf")}, &out, &err) == 0);
  CHECK(out.substr(0, 3) == "f1 ");
  std::string report = testutil::read_file(root + "/eval1/report.txt");
  CHECK(report.find("classification: precision") != std::string::npos);
  CHECK(read_scored_predictions(root + "/eval1/predictions.jsonl").size() == 4);

  // A command-line threshold wins over the stored one.
  REQUIRE(run({"eval", "--config", dir.file("eval.conf"), "--threshold", "0.75", "--out",
               root + "/eval2"},
              &out, &err) == 0);
  report = testutil::read_file(root + "/eval2/report.txt");
  CHECK(report.find("threshold: 0.75") != std::string::npos);

  std::ostringstream pred_cfg;
  pred_cfg << "checkpoint = " << root << "/run1/model.ckpt\n"
           << "data = " << root << "/train.jsonl\n"
           << "out_dir = " << root << "/pred1\n";
  testutil::write_file(dir.file("pred.conf"), pred_cfg.str());
  REQUIRE(run({"predict", "--config", dir.file("pred.conf")}, &out, &err) == 0);
  CHECK(out.find("wrote 4 predictions") != std::string::npos);

  std::ostringstream tune_cfg;
  tune_cfg << "checkpoint = " << root << "/run1/model.ckpt\n"
           << "val_data = " << root << "/train.jsonl\n";
  testutil::write_file(dir.file("tune.conf"), tune_cfg.str());
  REQUIRE(run({"tune-threshold", "--config", dir.file("tune.conf")}, &out, &err) == 0);
  CHECK(out.substr(0, 10) == "threshold ");

  // --set overrides the config file.
  REQUIRE(run({"train", "--config", dir.file("train.conf"), "--seed", "7", "--set", "epochs=1",
               "--out", root + "/run3"},
              &out, &err) == 0);
  log = testutil::read_file(root + "/run3/train.log");
  CHECK(count_occurrences(log, "epoch ") == 1);
}

TEST_CASE("identical seeds give byte-identical checkpoints and predictions") {
  TempDir dir;
  const std::string root = dir.path.string();
  write_mfa_corpus(root);
  write_mfa_config(root, root + "/run1", 2);

  std::string out, err;
  REQUIRE(run({"train", "--config", dir.file("train.conf"), "--seed", "11"}, &out, &err) == 0);
  REQUIRE(run({"train", "--config", dir.file("train.conf"), "--seed", "11", "--out",
               root + "/run2"},
              &out, &err) == 0);
  CHECK(testutil::read_file(root + "/run1/model.ckpt") ==
        testutil::read_file(root + "/run2/model.ckpt"));

  for (const char* pdir : {"/p1", "/p2"}) {
    std::ostringstream pred_cfg;
    pred_cfg << "checkpoint = " << root << "/run1/model.ckpt\n"
             << "data = " << root << "/train.jsonl\n"
             << "out_dir = " << root << pdir << "\n";
    testutil::write_file(dir.file("pred.conf"), pred_cfg.str());
    REQUIRE(run({"predict", "--config", dir.file("pred.conf")}, &out, &err) == 0);
  }
  CHECK(testutil::read_file(root + "/p1/predictions.jsonl") ==
        testutil::read_file(root + "/p2/predictions.jsonl"));
}

TEST_CASE("a checkpoint refuses a vocabulary that no longer matches") {
  TempDir dir;
  const std::string root = dir.path.string();
  write_mfa_corpus(root);
  write_mfa_config(root, root + "/run1", 1);

  std::string out, err;
  REQUIRE(run({"train", "--config", dir.file("train.conf"), "--seed", "3"}, &out, &err) == 0);
  std::string vocab = testutil::read_file(root + "/run1/vocab.txt");
  testutil::write_file(root + "/run1/vocab.txt", vocab + "straggler\n");

  std::ostringstream eval_cfg;
  eval_cfg << "checkpoint = " << root << "/run1/model.ckpt\n"
           << "test_data = " << root << "/train.jsonl\n"
           << "out_dir = " << root << "/eval1\n";
  testutil::write_file(dir.file("eval.conf"), eval_cfg.str());
  CHECK(run({"eval", "--config", dir.file("eval.conf")}, &out, &err) == 2);
  CHECK(err.find("fingerprint") != std::string::npos);
}

TEST_CASE("joint pipeline trains, evaluates tuples, and feeds the ensemble") {
  TempDir dir;
  const std::string root = dir.path.string();
  write_wdec_corpus(root);
  std::ostringstream cfg;
  cfg << "model = wdec\n"
      << "relations = " << root << "/relations.txt\n"
      << "train_data = " << root << "/train.jsonl\n"
      << "out_dir = " << root << "/run1\n"
      << "epochs = 2\n"
      << "d_w = 8\nd_c = 4\nd_f = 4\nd_h = 8\nchar_width = 2\nmax_word_len = 8\n"
      << "attn = single\nmax_steps = 16\ndropout = 0\n";
  testutil::write_file(dir.file("train.conf"), cfg.str());

  std::string out, err;
  REQUIRE(run({"train", "--config", dir.file("train.conf"), "--seed", "5"}, &out, &err) == 0);
  CHECK(file_exists(root + "/run1/chars.txt"));

  std::ostringstream eval_cfg;
  eval_cfg << "checkpoint = " << root << "/run1/model.ckpt\n"
           << "test_data = " << root << "/train.jsonl\n"
           << "out_dir = " << root << "/eval1\n";
  testutil::write_file(dir.file("eval.conf"), eval_cfg.str());
  REQUIRE(run({"eval", "--config", dir.file("eval.conf")}, &out, &err) == 0);
  CHECK(out.substr(0, 3) == "f1 ");
  std::string report = testutil::read_file(root + "/eval1/report.txt");
  CHECK(report.find("tuples:") != std::string::npos);
  CHECK(report.find("errors:") != std::string::npos);
  auto preds = read_tuple_predictions(root + "/eval1/predictions.jsonl");
  CHECK(preds.size() == 3);

  // Three copies of one run still make a well-formed ensemble.
  for (const char* name : {"/p1.jsonl", "/p2.jsonl", "/p3.jsonl"})
    write_tuple_predictions(root + name, preds);
  std::ostringstream ens_cfg;
  ens_cfg << "relations = " << root << "/relations.txt\n"
          << "gold = " << root << "/train.jsonl\n"
          << "out_dir = " << root << "/ens1\n";
  testutil::write_file(dir.file("ens.conf"), ens_cfg.str());
  REQUIRE(run({"ensemble", "--config", dir.file("ens.conf"), "--runs", "3",
               root + "/p1.jsonl", root + "/p2.jsonl", root + "/p3.jsonl"},
              &out, &err) == 0);
  CHECK(out.substr(0, 3) == "f1 ");
  CHECK(read_tuple_predictions(root + "/ens1/voted.jsonl").size() == 3);
  CHECK(file_exists(root + "/ens1/report.txt"));

  // File count has to match the declared number of runs.
  CHECK(run({"ensemble", "--config", dir.file("ens.conf"), root + "/p1.jsonl",
             root + "/p2.jsonl", root + "/p3.jsonl"},
            &out, &err) == 2);
  CHECK(err.find("runs") != std::string::npos);
  CHECK(run({"ensemble", "--config", dir.file("ens.conf"), "--runs", "1", root + "/p1.jsonl"},
            &out, &err) == 2);
}

TEST_CASE("chain dataset builder writes splits, stats, and repeats exactly") {
  TempDir dir;
  const std::string root = dir.path.string();
  QaRecord train_rec = testutil::zoo_record();
  QaRecord test_rec = train_rec;
  test_rec.id = "zoo-lake-test";
  test_rec.test_source = true;
  QaRecord skipped = train_rec;
  skipped.id = "lost-city";
  skipped.subject = "Atlantis";

  std::ostringstream lines;
  lines << record_json(train_rec) << "\n"
        << record_json(test_rec) << "\n"
        << record_json(skipped) << "\n";
  testutil::write_file(dir.file("records.jsonl"), lines.str());
  testutil::write_file(dir.file("kb.tsv"),
                       "# subject\tobject\tnote\n"
                       "Zoo Lake\tJohannesburg\tcity\n"
                       "Gauteng\tSouth Africa\tcountry\n");
  testutil::write_file(dir.file("relations.txt"), std::string(testutil::kZooRelation) + "\n");

  std::ostringstream cfg;
  cfg << "records = " << root << "/records.jsonl\n"
      << "kb = " << root << "/kb.tsv\n"
      << "relations = " << root << "/relations.txt\n"
      << "out_dir = " << root << "/build1\n";
  testutil::write_file(dir.file("mh.conf"), cfg.str());

  std::string out, err;
  REQUIRE(run({"build-mhred", "--config", dir.file("mh.conf"), "--seed", "42"}, &out, &err) == 0);
  CHECK(out.find("records      3") != std::string::npos);
  for (const char* name : {"/build1/train.jsonl", "/build1/validation.jsonl",
                           "/build1/test.jsonl", "/build1/stats.txt"})
    CHECK(file_exists(root + name));
  std::string stats = testutil::read_file(root + "/build1/stats.txt");
  CHECK(stats.find("skipped records:") != std::string::npos);
  CHECK(stats.find("lost-city") != std::string::npos);

  REQUIRE(run({"build-mhred", "--config", dir.file("mh.conf"), "--seed", "42", "--out",
               root + "/build2"},
              &out, &err) == 0);
  for (const char* name : {"/train.jsonl", "/validation.jsonl", "/test.jsonl"})
    CHECK(testutil::read_file(root + "/build1" + name) ==
          testutil::read_file(root + "/build2" + name));
}

TEST_CASE("chain dataset builder needs at least one positive chain") {
  TempDir dir;
  const std::string root = dir.path.string();
  QaRecord rec;
  rec.id = "hopeless";
  rec.relation = "related_to";
  rec.subject = "alpha";
  rec.answer = "omega";
  rec.candidates = {"omega"};
  QaDocument d1, d2;
  d1.tokens = {"alpha", "beta"};
  d1.sent_ids = {0, 0};
  d1.mentions = {{"alpha", {0, 0}}};
  d2.tokens = {"gamma", "delta"};
  d2.sent_ids = {0, 0};
  d2.mentions = {{"gamma", {0, 0}}};
  rec.documents = {d1, d2};

  testutil::write_file(dir.file("records.jsonl"), record_json(rec).dump() + "\n");
  testutil::write_file(dir.file("kb.tsv"), "");
  testutil::write_file(dir.file("relations.txt"), "related_to\n");
  std::ostringstream cfg;
  cfg << "records = " << root << "/records.jsonl\n"
      << "kb = " << root << "/kb.tsv\n"
      << "relations = " << root << "/relations.txt\n"
      << "out_dir = " << root << "/build\n";
  testutil::write_file(dir.file("mh.conf"), cfg.str());

  std::string out, err;
  CHECK(run({"build-mhred", "--config", dir.file("mh.conf")}, &out, &err) == 2);
  CHECK(err.find("no positive chains") != std::string::npos);
}

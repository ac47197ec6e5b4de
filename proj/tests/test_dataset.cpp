#include "releval/dataset.hpp"

#include "mock_backends.hpp"
#include "releval/errors.hpp"
#include "releval/util.hpp"

#include <doctest.h>

#include <string>

using namespace releval;
using releval::testing::TempDir;

namespace {

std::filesystem::path write_fixture(const TempDir& dir, const std::string& name,
                                    const std::string& content) {
    auto path = dir.path() / name;
    write_file_atomic(path, content);
    return path;
}

} // namespace

TEST_CASE("close-ended rows with op1..op4 and 1-based cop become MCQA items") {
    TempDir dir("ds");
    auto path = write_fixture(dir, "careqa.jsonl",
        R"({"id":"c1","question":"The Glisson's capsule covers:","op1":"Spleen.","op2":"Liver.","op3":"Kidney.","op4":"Lung.","cop":2,"year":2024,"category":"Biology"})"
        "\n");
    auto items = load_dataset(path);
    REQUIRE(items.size() == 1);
    const auto& item = items[0];
    CHECK(item.id == "c1");
    CHECK(item.category == "Biology");
    REQUIRE(item.is_mcqa());
    const auto& mcqa = std::get<Mcqa>(item.payload);
    REQUIRE(mcqa.options.size() == 4);
    CHECK(mcqa.options[1] == "Liver.");
    CHECK(mcqa.gold_index == 1);
    CHECK(item.references().empty());
}

TEST_CASE("factuality rows with must_have/nice_to_have become pairs") {
    TempDir dir("ds");
    auto path = write_fixture(dir, "olaph.jsonl",
        R"({"id":"o1","question":"Are benign brain tumors serious?","must_have":"Benign brain tumors are not cancerous.","nice_to_have":"They grow slowly."})"
        "\n");
    auto items = load_dataset(path);
    REQUIRE(items.size() == 1);
    const auto* pair = std::get_if<FactualityPair>(&items[0].payload);
    REQUIRE(pair != nullptr);
    CHECK(pair->must_have == "Benign brain tumors are not cancerous.");
    auto targets = items[0].targets();
    REQUIRE(targets.size() == 2);
    CHECK(targets[0].first == "must_have");
    CHECK(targets[1].first == "nice_to_have");
    CHECK(items[0].references().size() == 2);
}

TEST_CASE("free-target rows accept target or answer fields") {
    TempDir dir("ds");
    auto path = write_fixture(dir, "free.jsonl",
        R"({"id":"f1","question":"What is water?","target":"H2O"})" "\n"
        R"({"id":"f2","question":"What is salt?","answer":"NaCl"})" "\n");
    auto items = load_dataset(path);
    REQUIRE(items.size() == 2);
    CHECK(std::get<FreeTarget>(items[0].payload).target == "H2O");
    CHECK(std::get<FreeTarget>(items[1].payload).target == "NaCl");
    CHECK(items[0].targets().size() == 1);
    CHECK(items[0].targets()[0].first == "target");
}

TEST_CASE("missing gold index names the offending id") {
    TempDir dir("ds");
    auto path = write_fixture(dir, "bad.jsonl",
        R"({"id":"ok","question":"q","target":"t"})" "\n"
        R"({"id":"broken","question":"q","op1":"a","op2":"b"})" "\n");
    try {
        load_dataset(path);
        FAIL("expected ValidationError");
    } catch (const ValidationError& ex) {
        CHECK(std::string(ex.what()).find("broken") != std::string::npos);
        CHECK(std::string(ex.what()).find("gold") != std::string::npos);
    }
}

TEST_CASE("duplicate ids are rejected") {
    TempDir dir("ds");
    auto path = write_fixture(dir, "dup.jsonl",
        R"({"id":"x","question":"q1","target":"t"})" "\n"
        R"({"id":"x","question":"q2","target":"t"})" "\n");
    try {
        load_dataset(path);
        FAIL("expected ValidationError");
    } catch (const ValidationError& ex) {
        CHECK(std::string(ex.what()).find("duplicate") != std::string::npos);
        CHECK(std::string(ex.what()).find("x") != std::string::npos);
    }
}

TEST_CASE("broken JSON reports the line number") {
    TempDir dir("ds");
    auto path = write_fixture(dir, "broken.jsonl",
        R"({"id":"a","question":"q","target":"t"})" "\n"
        "{not json}\n");
    try {
        load_dataset(path);
        FAIL("expected ParseError");
    } catch (const ParseError& ex) {
        CHECK(std::string(ex.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("empty question, empty target, option count bounds") {
    TempDir dir("ds");
    auto empty_q = write_fixture(dir, "q.jsonl", R"({"id":"a","question":"","target":"t"})" "\n");
    CHECK_THROWS_AS(load_dataset(empty_q), ValidationError);
    auto empty_t = write_fixture(dir, "t.jsonl", R"({"id":"a","question":"q","target":""})" "\n");
    CHECK_THROWS_AS(load_dataset(empty_t), ValidationError);
    auto one_opt = write_fixture(dir, "o.jsonl",
        R"({"id":"a","question":"q","options":["only"],"gold_index":0})" "\n");
    CHECK_THROWS_AS(load_dataset(one_opt), ValidationError);
    auto oob = write_fixture(dir, "g.jsonl",
        R"({"id":"a","question":"q","options":["x","y"],"gold_index":4})" "\n");
    CHECK_THROWS_AS(load_dataset(oob), ValidationError);
}

TEST_CASE("rows without an id get a line-derived one") {
    TempDir dir("ds");
    auto path = write_fixture(dir, "noid.jsonl",
        R"({"question":"q1","target":"t"})" "\n"
        R"({"question":"q2","target":"t"})" "\n");
    auto items = load_dataset(path);
    REQUIRE(items.size() == 2);
    CHECK(items[0].id == "item-1");
    CHECK(items[1].id == "item-2");
}

TEST_CASE("CSV datasets parse with quoting and pick the right payloads") {
    TempDir dir("ds");
    auto path = write_fixture(dir, "mixed.csv",
        "id,question,target,must_have,nice_to_have,op1,op2,cop\n"
        "a,\"What, exactly?\",\"an answer\",,,,,\n"
        "b,Pair question?,,must text,nice text,,,\n"
        "c,Choose one:,,,,optA,optB,1\n");
    auto items = load_dataset(path);
    REQUIRE(items.size() == 3);
    CHECK(items[0].question == "What, exactly?");
    CHECK(std::get<FreeTarget>(items[0].payload).target == "an answer");
    CHECK(std::get<FactualityPair>(items[1].payload).must_have == "must text");
    const auto& mcqa = std::get<Mcqa>(items[2].payload);
    CHECK(mcqa.options.size() == 2);
    CHECK(mcqa.gold_index == 0);
}

TEST_CASE("format detection by extension with explicit override") {
    TempDir dir("ds");
    auto path = write_fixture(dir, "data.txt", R"({"id":"a","question":"q","target":"t"})" "\n");
    CHECK(load_dataset(path).size() == 1); // auto falls back to jsonl
    CHECK(load_dataset(path, DatasetFormat::jsonl).size() == 1);
    CHECK(dataset_format_from("csv") == DatasetFormat::csv);
    CHECK_THROWS_AS(dataset_format_from("xml"), InvalidRequest);
}

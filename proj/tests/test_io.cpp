#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "inscp/document.hpp"
#include "inscp/error.hpp"
#include "inscp/jsonio.hpp"

using namespace inscp;

namespace {

std::filesystem::path write_temp(const char* name, const std::string& content) {
    const auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path, std::ios::binary);
    out << content;
    return path;
}

}  // namespace

TEST_CASE("strict parse rejects duplicate keys and syntax errors") {
    CHECK(parse_strict("{\"a\":1}", "t")["a"] == 1);
    CHECK_THROWS_AS(parse_strict("{\"a\":1,\"a\":2}", "t"), ConfigError);
    CHECK_THROWS_AS(parse_strict("{broken", "t"), ConfigError);
    CHECK_THROWS_AS(parse_strict("", "t"), ConfigError);
}

TEST_CASE("dump_line is compact and single-line") {
    const std::string line = dump_line(json{{"b", 1}, {"a", "x\ny"}});
    CHECK(line.find('\n') == std::string::npos);
    CHECK(line == "{\"a\":\"x\\ny\",\"b\":1}");
}

TEST_CASE("jsonl round trip with a meta line") {
    const auto path = std::filesystem::temp_directory_path() / "inscp_test_io.jsonl";
    const std::vector<json> records{json{{"id", "a"}}, json{{"id", "b"}}};
    write_jsonl(path, records, json{{"config_hash", "cafe"}});

    // raw file has the meta line first
    const std::string raw = read_file(path);
    CHECK(raw.rfind("{\"meta\":", 0) == 0);

    // readers skip it
    const std::vector<json> back = read_jsonl(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0]["id"] == "a");

    size_t seen = 0;
    for_each_jsonl(path, [&](const json& rec, size_t lineno) {
        ++seen;
        CHECK(lineno >= 2);  // line 1 is the meta line
        CHECK(rec.contains("id"));
    });
    CHECK(seen == 2);
    std::filesystem::remove(path);
}

TEST_CASE("jsonl without meta writes no meta line") {
    const auto path = std::filesystem::temp_directory_path() / "inscp_test_io2.jsonl";
    write_jsonl(path, {json{{"k", 1}}});
    CHECK(read_file(path) == "{\"k\":1}\n");
    std::filesystem::remove(path);
}

TEST_CASE("malformed jsonl reports path and line number") {
    const auto path = write_temp("inscp_test_bad.jsonl", "{\"ok\":1}\nnot json\n");
    try {
        read_jsonl(path);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("inscp_test_bad.jsonl") != std::string::npos);
        CHECK(msg.find(":2") != std::string::npos);
    }
    std::filesystem::remove(path);
}

TEST_CASE("atomic write replaces content and leaves no temp files") {
    const auto dir = std::filesystem::temp_directory_path() / "inscp_test_atomic";
    std::filesystem::create_directories(dir);
    const auto path = dir / "f.txt";
    write_file_atomic(path, "one");
    write_file_atomic(path, "two");
    CHECK(read_file(path) == "two");
    size_t entries = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        (void)entry;
        ++entries;
    }
    CHECK(entries == 1);
    std::filesystem::remove_all(dir);
}

TEST_CASE("read_file on a missing path is a data error") {
    CHECK_THROWS_AS(read_file("/nonexistent/inscp/file"), DataError);
    CHECK_THROWS_AS(read_documents("/nonexistent/inscp/file"), DataError);
}

TEST_CASE("documents round trip including lang") {
    const auto path = std::filesystem::temp_directory_path() / "inscp_test_docs.jsonl";
    const std::vector<Document> docs{{"d1", "hello", {}}, {"d2", "你好", "zh"}};
    write_documents(path, docs, json{{"config_hash", "00"}});
    const std::vector<Document> back = read_documents(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].id == "d1");
    CHECK_FALSE(back[0].lang.has_value());
    CHECK(back[1].text == "你好");
    CHECK(back[1].lang == "zh");
    std::filesystem::remove(path);
}

TEST_CASE("ingest splits qa records when asked") {
    const std::string body =
        "{\"id\":\"d1\",\"question\":\"q text\",\"answer\":\"a text\"}\n"
        "{\"id\":\"d2\",\"text\":\"plain\"}\n";
    const auto path = write_temp("inscp_test_ingest.jsonl", body);

    const std::vector<Document> split = ingest(path, true);
    REQUIRE(split.size() == 3);
    CHECK(split[0].id == "d1#q");
    CHECK(split[0].text == "q text");
    CHECK(split[1].id == "d1#a");
    CHECK(split[1].text == "a text");
    CHECK(split[2].id == "d2");

    const std::vector<Document> joined = ingest(path, false);
    REQUIRE(joined.size() == 2);
    CHECK(joined[0].id == "d1");
    CHECK(joined[0].text == "q text\na text");
    std::filesystem::remove(path);
}

TEST_CASE("ingest rejects duplicates and malformed records") {
    const auto dup = write_temp("inscp_test_dup.jsonl",
                                "{\"id\":\"d1\",\"text\":\"a\"}\n"
                                "{\"id\":\"d1\",\"text\":\"b\"}\n");
    try {
        ingest(dup, false);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("d1") != std::string::npos);
    }
    std::filesystem::remove(dup);

    const auto missing = write_temp("inscp_test_missing.jsonl", "{\"id\":\"d1\"}\n");
    CHECK_THROWS_AS(ingest(missing, false), DataError);
    std::filesystem::remove(missing);

    const auto q_only = write_temp("inscp_test_qonly.jsonl",
                                   "{\"id\":\"d1\",\"question\":\"q\"}\n");
    CHECK_THROWS_AS(ingest(q_only, true), DataError);
    std::filesystem::remove(q_only);

    const auto empty = write_temp("inscp_test_empty.jsonl", "");
    CHECK(ingest(empty, false).empty());
    std::filesystem::remove(empty);
}

#include <doctest.h>

#include "selfevo/error.hpp"
#include "selfevo/util.hpp"
#include "test_support.hpp"

using namespace selfevo;

TEST_CASE("trim and case helpers") {
    CHECK(trim("  a b \n") == "a b");
    CHECK(trim("   ").empty());
    CHECK(to_lower_ascii("AbC") == "abc");
    CHECK(contains_ci("See The Document Above.", "the document above"));
    CHECK_FALSE(contains_ci("abc", "abd"));
}

TEST_CASE("utf8 code points and truncation") {
    const std::string s = "a\xE4\xB8\xAD" "b";  // a, U+4E2D, b
    CHECK(utf8_length(s) == 3);
    auto cps = utf8_code_points(s);
    REQUIRE(cps.size() == 3);
    CHECK(cps[1] == "\xE4\xB8\xAD");

    std::string t = s;
    CHECK(truncate_utf8(t, 2));
    CHECK(t == "a\xE4\xB8\xAD");
    CHECK_FALSE(truncate_utf8(t, 5));
}

TEST_CASE("placeholders are substituted in one pass") {
    auto out = render_placeholders("Q: {Question} K: {Knowledge} {Other}",
                                   {{"Question", "{Knowledge}?"}, {"Knowledge", "text"}});
    CHECK(out == "Q: {Knowledge}? K: text {Other}");
}

TEST_CASE("sha256 of known vectors") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("jsonl reader reports line numbers") {
    testing::TempDir dir;
    testing::write_lines(dir / "a.jsonl", {R"({"x":1})", "", R"({"x":)"});
    try {
        for_each_jsonl(dir / "a.jsonl", [](const json&, std::size_t) {});
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        CHECK(e.line() == 3);
    }
    testing::write_lines(dir / "b.jsonl", {"[1,2]"});
    CHECK_THROWS_AS(for_each_jsonl(dir / "b.jsonl", [](const json&, std::size_t) {}), SchemaError);
    CHECK_THROWS_AS(for_each_jsonl(dir / "missing.jsonl", [](const json&, std::size_t) {}), IoError);
}

TEST_CASE("atomic write creates parents and replaces content") {
    testing::TempDir dir;
    auto p = dir / "nested/deeper/file.txt";
    write_file_atomic(p, "one");
    write_file_atomic(p, "two");
    CHECK(read_file(p) == "two");
    CHECK(sha256_file(p) == sha256_hex("two"));
}

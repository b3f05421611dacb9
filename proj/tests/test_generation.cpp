#include <doctest.h>

#include <mutex>

#include "selfevo/config.hpp"
#include "selfevo/error.hpp"
#include "selfevo/generation.hpp"
#include "test_support.hpp"

using namespace selfevo;

namespace {

const ModelRef generator{"mock://", "gen", ModelRole::generator};

PromptTemplates shipped_templates() {
    return load_prompt_templates(default_template_dir() / "question_prompt.v1.txt",
                                 default_template_dir() / "answer_prompt.v1.txt");
}

/// Replies from a per-seed table so regeneration can be observed.
class SeededBackend final : public Backend {
public:
    std::vector<std::string> questions;  // indexed by attempt
    std::vector<std::string> answers;

protected:
    std::string do_generate(const ModelRef&, const MessageList& messages, const GenerationParams& params) const override {
        const auto attempt = static_cast<std::size_t>(params.seed.value_or(0) - 100);
        const bool answer = messages.front().content.find("Knowledge fragment:") != std::string::npos;
        const auto& table = answer ? answers : questions;
        return table.at(std::min(attempt, table.size() - 1));
    }
    ScoredContinuation do_score(const ModelRef&, const std::string&, const std::string&) const override {
        throw CapabilityError("not a scorer");
    }
};

GenerationSettings seeded_settings() {
    GenerationSettings s;
    s.params.seed = 100;
    s.max_parallel = 2;
    return s;
}

}  // namespace

TEST_CASE("shipped templates carry the quoted rule lines") {
    auto t = shipped_templates();
    KnowledgeDocument doc{"d", "Alarm 2031 means the cell is out of service.", {}};
    auto q = build_question_prompt(doc, t.question).messages.at(0).content;
    for (const char* line : {"Reference document: Alarm 2031 means the cell is out of service.",
                             "Note 1: The question should be as concise as possible.",
                             "Note 2: The question should not contain multiple sub-questions, only one question is permitted.",
                             "Note 6: Do not output declarative sentences; it must be a question!",
                             "Please formulate a question now."}) {
        CHECK_MESSAGE(q.find(line) != std::string::npos, line);
    }
    CHECK(q.substr(q.size() - 9) == "Question:");

    auto a = build_answer_prompt(doc, "What does alarm 2031 mean?", t.answer).messages.at(0).content;
    for (const char* line : {"Your response must ensure two points: conciseness and accuracy.",
                             "Question: What does alarm 2031 mean?",
                             "Knowledge fragment: Alarm 2031 means the cell is out of service."}) {
        CHECK_MESSAGE(a.find(line) != std::string::npos, line);
    }
    CHECK(t.question.sha256.size() == 64);
}

TEST_CASE("template loading validates placeholders") {
    testing::TempDir dir;
    write_file_atomic(dir / "q.txt", "no placeholder here\n");
    CHECK_THROWS_AS(load_prompt_template(dir / "q.txt", {"Knowledge"}), ConfigError);
    CHECK_THROWS_AS(load_prompt_template(dir / "missing.txt", {"Knowledge"}), ConfigError);
}

TEST_CASE("documents over the budget are truncated") {
    auto t = shipped_templates();
    KnowledgeDocument doc{"d", std::string(50, 'x'), {}};
    auto r = build_question_prompt(doc, t.question, 10);
    CHECK(r.truncated);
    CHECK(r.messages[0].content.find(std::string(11, 'x')) == std::string::npos);
    CHECK_THROWS_AS(build_answer_prompt(doc, "  ", t.answer), PreconditionError);
}

TEST_CASE("question validation") {
    CHECK(validate_question("What causes alarm 2031?"));
    CHECK(validate_question("\xE4\xB8\xBA\xE4\xBB\x80\xE4\xB9\x88\xEF\xBC\x9F"));
    CHECK(validate_question("What is X? And what is Y?").reason == reason_multiple_questions);
    CHECK(validate_question("Alarm 2031 indicates an outage.").reason == reason_not_interrogative);
    CHECK(validate_question("").reason == reason_empty);
    CHECK(validate_question(std::string(400, 'a') + "?").reason == reason_too_long);
}

TEST_CASE("answer validation") {
    CHECK(validate_answer("Reset the baseband board after checking the link."));
    CHECK(validate_answer("short").reason == reason_too_short);
    CHECK(validate_answer("   ").reason == reason_empty);
    auto v = validate_answer("As described in THE DOCUMENT ABOVE, reset the board.");
    CHECK_FALSE(v);
    CHECK(v.reason.rfind(std::string(reason_dangling_reference), 0) == 0);
}

TEST_CASE("one QA pair per document with the mock backend") {
    MockBackend mock;
    std::vector<KnowledgeDocument> docs;
    for (int i = 4; i >= 0; --i) docs.push_back({"doc" + std::to_string(i), "Procedure " + std::to_string(i) + " for fan trays.\nReplace the tray and verify airflow readings.", {}});
    GenerationSettings s;
    s.params.seed = 1;
    auto ds = generate_iteration_dataset(docs, mock, generator, 2, s, shipped_templates());
    REQUIRE(ds.pairs.size() == 5);
    CHECK(ds.pairs[0].doc_id == "doc0");
    CHECK(ds.pairs[0].id == "it2:doc0");
    CHECK(ds.pairs[4].iteration == 2);
    CHECK(ds.stats.generated == 5);
    CHECK(ds.stats.rejected == 0);

    auto again = generate_iteration_dataset(docs, mock, generator, 2, s, shipped_templates());
    CHECK(again.pairs == ds.pairs);
}

TEST_CASE("invalid samples are regenerated with the next seed") {
    SeededBackend b;
    b.questions = {"Two? Questions?", "One question here?"};
    b.answers = {"Replace the module and retest the port."};
    std::vector<KnowledgeDocument> docs{{"d", "text", {}}};
    auto ds = generate_iteration_dataset(docs, b, generator, 0, seeded_settings(), shipped_templates());
    REQUIRE(ds.pairs.size() == 1);
    CHECK(ds.pairs[0].question == "One question here?");
    CHECK(ds.stats.regenerated == 1);
}

TEST_CASE("documents that never validate are rejected and gated") {
    SeededBackend b;
    b.questions = {"Not a question."};
    b.answers = {"Replace the module and retest the port."};
    std::vector<KnowledgeDocument> docs{{"d1", "text", {}}};
    try {
        generate_iteration_dataset(docs, b, generator, 0, seeded_settings(), shipped_templates());
        FAIL("expected FailureGateError");
    } catch (const FailureGateError& e) {
        CHECK(std::string(e.what()).find("d1") != std::string::npos);
    }

    auto settings = seeded_settings();
    settings.max_failure_fraction = 1.0;
    auto ds = generate_iteration_dataset(docs, b, generator, 0, settings, shipped_templates());
    CHECK(ds.pairs.empty());
    REQUIRE(ds.stats.rejections.size() == 1);
    CHECK(ds.stats.rejections[0].reason == "question: not interrogative");
    CHECK(ds.stats.regenerated == 2);
}

TEST_CASE("empty completions count as failed attempts") {
    MockScript script;
    script.replies.push_back({"Reference document:", "", "", "empty"});
    MockBackend mock(script);
    std::vector<KnowledgeDocument> docs{{"d1", "text", {}}};
    auto settings = seeded_settings();
    settings.max_failure_fraction = 1.0;
    auto ds = generate_iteration_dataset(docs, mock, generator, 0, settings, shipped_templates());
    REQUIRE(ds.stats.rejections.size() == 1);
    CHECK(ds.stats.rejections[0].reason == "question: empty completion");
}

TEST_CASE("dataset round trip rejects duplicate ids") {
    testing::TempDir dir;
    std::vector<QAPair> pairs{{"it0:a", 0, "a", "q?", "answer text"}, {"it0:b", 0, "b", "q2?", "answer two"}};
    write_dataset(dir / "d.jsonl", pairs);
    CHECK(load_dataset(dir / "d.jsonl") == pairs);
    pairs.push_back(pairs[0]);
    write_dataset(dir / "dup.jsonl", pairs);
    CHECK_THROWS_AS(load_dataset(dir / "dup.jsonl"), SchemaError);
}

#pragma once

#include <map>
#include <string>
#include <vector>

#include "selfevo/util.hpp"

namespace selfevo {

/// One unlabeled domain document. Metadata is carried for reporting only.
struct KnowledgeDocument {
    std::string id;
    std::string text;
    std::map<std::string, std::string> metadata;

    bool operator==(const KnowledgeDocument&) const = default;
};

/// Held-out question with its reference answer.
struct EvalPair {
    std::string id;
    std::string question;
    std::string reference_answer;

    bool operator==(const EvalPair&) const = default;
};

/// Loads `{"id","text","metadata"?}` JSON-Lines in file order.
/// Throws IoError for a missing file, SchemaError (with line number) for a
/// malformed line, duplicate id or blank text.
std::vector<KnowledgeDocument> load_documents(const fs::path& path);

/// Loads `{"id","question","reference_answer"}` JSON-Lines in file order.
std::vector<EvalPair> load_eval_set(const fs::path& path);

json to_json(const KnowledgeDocument& doc);
json to_json(const EvalPair& pair);

void write_documents(const fs::path& path, const std::vector<KnowledgeDocument>& docs);
void write_eval_set(const fs::path& path, const std::vector<EvalPair>& pairs);

inline constexpr std::size_t default_document_char_budget = 8000;

}  // namespace selfevo

#include "selfevo/corpus.hpp"

#include <unordered_map>

#include "selfevo/error.hpp"

namespace selfevo {

namespace {

void check_unique(std::unordered_map<std::string, std::size_t>& seen, const std::string& id,
                  std::size_t line) {
    auto [it, inserted] = seen.emplace(id, line);
    if (!inserted) {
        throw SchemaError("duplicate id \"" + id + "\" (first seen on line " +
                              std::to_string(it->second) + ")",
                          line);
    }
}

std::string require_nonblank(const json& record, const char* field, std::size_t line) {
    auto value = require_string(record, field, line);
    if (trim(value).empty()) throw SchemaError(std::string("empty ") + field, line);
    return value;
}

}  // namespace

std::vector<KnowledgeDocument> load_documents(const fs::path& path) {
    std::vector<KnowledgeDocument> docs;
    std::unordered_map<std::string, std::size_t> seen;
    for_each_jsonl(path, [&](const json& record, std::size_t line) {
        KnowledgeDocument doc;
        doc.id = require_string(record, "id", line);
        check_unique(seen, doc.id, line);
        doc.text = require_nonblank(record, "text", line);
        if (auto it = record.find("metadata"); it != record.end() && !it->is_null()) {
            if (!it->is_object()) throw SchemaError("metadata must be an object", line);
            for (const auto& [key, value] : it->items()) {
                if (!value.is_string()) {
                    throw SchemaError("metadata value for '" + key + "' must be a string", line);
                }
                doc.metadata.emplace(key, value.get<std::string>());
            }
        }
        docs.push_back(std::move(doc));
    });
    return docs;
}

std::vector<EvalPair> load_eval_set(const fs::path& path) {
    std::vector<EvalPair> pairs;
    std::unordered_map<std::string, std::size_t> seen;
    for_each_jsonl(path, [&](const json& record, std::size_t line) {
        EvalPair pair;
        pair.id = require_string(record, "id", line);
        check_unique(seen, pair.id, line);
        pair.question = require_nonblank(record, "question", line);
        pair.reference_answer = require_nonblank(record, "reference_answer", line);
        pairs.push_back(std::move(pair));
    });
    return pairs;
}

json to_json(const KnowledgeDocument& doc) {
    json j{{"id", doc.id}, {"text", doc.text}};
    if (!doc.metadata.empty()) j["metadata"] = doc.metadata;
    return j;
}

json to_json(const EvalPair& pair) {
    return json{{"id", pair.id}, {"question", pair.question}, {"reference_answer", pair.reference_answer}};
}

void write_documents(const fs::path& path, const std::vector<KnowledgeDocument>& docs) {
    std::vector<json> records;
    records.reserve(docs.size());
    for (const auto& d : docs) records.push_back(to_json(d));
    write_file_atomic(path, to_jsonl(records));
}

void write_eval_set(const fs::path& path, const std::vector<EvalPair>& pairs) {
    std::vector<json> records;
    records.reserve(pairs.size());
    for (const auto& p : pairs) records.push_back(to_json(p));
    write_file_atomic(path, to_jsonl(records));
}

}  // namespace selfevo

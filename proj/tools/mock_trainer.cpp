// Stand-in trainer adapter for offline runs. Honors the adapter CLI contract
// and writes result.json without training anything; the child model name is
// the parent's with its "@N" generation suffix bumped.

#include <iostream>

#include <CLI11.hpp>

#include "selfevo/error.hpp"
#include "selfevo/util.hpp"

using namespace selfevo;

namespace {

std::string parent_model_name(const std::string& base) {
    const fs::path result = fs::path(base) / "result.json";
    if (fs::is_directory(base) && fs::exists(result)) {
        return json::parse(read_file(result)).at("model_ref").at("model_name").get<std::string>();
    }
    return base;
}

std::string next_generation_name(const std::string& parent) {
    auto at = parent.rfind('@');
    if (at != std::string::npos && at + 1 < parent.size() &&
        parent.find_first_not_of("0123456789", at + 1) == std::string::npos) {
        return parent.substr(0, at) + "@" + std::to_string(std::stoi(parent.substr(at + 1)) + 1);
    }
    return parent + "@1";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mock trainer adapter"};
    std::string base, data, out, config_path;
    app.add_option("--base", base, "parent model name or artifact directory")->required();
    app.add_option("--data", data, "training set (JSONL)")->required();
    app.add_option("--out", out, "output directory")->required();
    app.add_option("--config", config_path, "trainer config JSON")->required();
    CLI11_PARSE(app, argc, argv);

    try {
        std::size_t samples = 0;
        for_each_jsonl(data, [&](const json& record, std::size_t line) {
            require_string(record, "instruction", line);
            require_string(record, "output", line);
            ++samples;
        });
        if (samples == 0) throw SchemaError("training set " + data + " is empty");

        const json config = json::parse(read_file(config_path));
        std::string backend_url = "mock://";
        if (auto extra = config.find("extra"); extra != config.end() && extra->contains("backend_url")) {
            backend_url = extra->at("backend_url").get<std::string>();
        }

        const std::string name = next_generation_name(parent_model_name(base));
        fs::create_directories(out);
        json adapter{{"lora_rank", config.value("lora_rank", 4)},
                     {"lora_alpha", config.value("lora_alpha", 8)},
                     {"lora_target", config.value("lora_target", std::string("all"))},
                     {"epochs", config.value("epochs", 3)},
                     {"samples", samples}};
        write_file_atomic(fs::path(out) / "adapter_config.json", adapter.dump(2) + "\n");
        json result{{"model_ref", {{"backend_url", backend_url}, {"model_name", name}}}};
        write_file_atomic(fs::path(out) / "result.json", result.dump(2) + "\n");
        std::cerr << "mock trainer: " << samples << " samples -> " << name << "\n";
    } catch (const std::exception& e) {
        std::cerr << "mock trainer: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

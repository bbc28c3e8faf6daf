#include "marspo/jsonl.hpp"

namespace marspo {

std::vector<PromptRecord> read_dataset(const std::filesystem::path& path) {
    auto records = read_jsonl<PromptRecord>(path);
    std::unordered_set<std::string> seen;
    for (const auto& r : records) {
        if (!seen.insert(r.id).second) {
            throw std::runtime_error(path.string() + ": duplicate id " + r.id);
        }
    }
    return records;
}

}  // namespace marspo

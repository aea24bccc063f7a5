#pragma once

#include <cctype>
#include <string>
#include <unordered_map>
#include <vector>

#include "skillrc/errors.hpp"
#include "skillrc/hash.hpp"

namespace skillrc {

inline std::string lowercase(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

/// Token → dense index map with lowercased keys. Index 0 is always the
/// UNK entry; unknown tokens resolve to it.
class Vocabulary {
public:
    static constexpr const char* kUnkToken = "<unk>";

    Vocabulary() { add(kUnkToken); }

    std::size_t add(std::string_view token) {
        std::string key = lowercase(token);
        auto it = index_.find(key);
        if (it != index_.end()) return it->second;
        std::size_t id = tokens_.size();
        index_.emplace(key, id);
        tokens_.push_back(std::move(key));
        return id;
    }

    void add_all(const std::vector<std::string>& tokens) {
        for (const auto& t : tokens) add(t);
    }

    std::size_t lookup(std::string_view token) const {
        auto it = index_.find(lowercase(token));
        return it == index_.end() ? kUnkIndex : it->second;
    }

    bool contains(std::string_view token) const { return index_.count(lowercase(token)) != 0; }

    const std::string& token(std::size_t id) const {
        if (id >= tokens_.size()) throw IndexError("vocabulary: id out of range");
        return tokens_[id];
    }

    std::size_t size() const { return tokens_.size(); }

    /// Order-sensitive content hash (tokens are stored densely from 0).
    std::uint64_t content_hash() const {
        std::uint64_t h = 1469598103934665603ull;
        for (const auto& t : tokens_) {
            h = mix_seed(h, t);
        }
        return h;
    }

    static constexpr std::size_t kUnkIndex = 0;

private:
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<std::string> tokens_;
};

}  // namespace skillrc

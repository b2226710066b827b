// Token table mapping LaTeX symbol strings to dense integer ids, with the
// <sos> / <eol> sentinels reserved for sequence start and termination.
#pragma once

#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace hmer {

inline constexpr const char* kSosToken = "<sos>";
inline constexpr const char* kEolToken = "<eol>";

class Vocabulary {
  public:
    // Ids are assigned by position; both sentinels must be present.
    static Vocabulary from_tokens(const std::vector<std::string>& tokens) {
        Vocabulary v;
        v.tokens_ = tokens;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            if (tokens[i].empty())
                throw std::invalid_argument("vocabulary: line " + std::to_string(i + 1) +
                                            ": empty token");
            auto [it, fresh] = v.index_.emplace(tokens[i], i);
            if (!fresh)
                throw std::invalid_argument("vocabulary: line " + std::to_string(i + 1) +
                                            ": duplicate token '" + tokens[i] + "' (first at line " +
                                            std::to_string(it->second + 1) + ")");
        }
        const auto sos = v.index_.find(kSosToken);
        const auto eol = v.index_.find(kEolToken);
        if (sos == v.index_.end())
            throw std::invalid_argument(std::string("vocabulary: missing sentinel ") + kSosToken);
        if (eol == v.index_.end())
            throw std::invalid_argument(std::string("vocabulary: missing sentinel ") + kEolToken);
        v.sos_ = sos->second;
        v.eol_ = eol->second;
        return v;
    }

    // One token per line, UTF-8, line order defines ids.
    static Vocabulary parse(std::istream& in) {
        std::vector<std::string> tokens;
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            tokens.push_back(line);
        }
        return from_tokens(tokens);
    }

    std::size_t size() const { return tokens_.size(); }
    std::size_t sos_id() const { return sos_; }
    std::size_t eol_id() const { return eol_; }

    bool contains(const std::string& token) const { return index_.count(token) != 0; }

    std::size_t id(const std::string& token) const {
        const auto it = index_.find(token);
        if (it == index_.end())
            throw std::invalid_argument("vocabulary: unknown token '" + token + "'");
        return it->second;
    }

    const std::string& token(std::size_t id) const {
        if (id >= tokens_.size())
            throw std::invalid_argument("vocabulary: id " + std::to_string(id) +
                                        " out of range [0," + std::to_string(tokens_.size()) + ")");
        return tokens_[id];
    }

    const std::vector<std::string>& tokens() const { return tokens_; }

  private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> index_;
    std::size_t sos_ = 0, eol_ = 0;
};

inline std::vector<std::size_t> encode_sequence(const std::vector<std::string>& tokens,
                                                const Vocabulary& v) {
    std::vector<std::size_t> ids;
    ids.reserve(tokens.size());
    for (const std::string& t : tokens) ids.push_back(v.id(t));
    return ids;
}

inline std::vector<std::string> decode_sequence(const std::vector<std::size_t>& ids,
                                                const Vocabulary& v) {
    std::vector<std::string> tokens;
    tokens.reserve(ids.size());
    for (std::size_t id : ids) tokens.push_back(v.token(id));
    return tokens;
}

inline std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

inline std::vector<std::string> split_tokens(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream s(line);
    std::string tok;
    while (s >> tok) out.push_back(tok);
    return out;
}

}  // namespace hmer

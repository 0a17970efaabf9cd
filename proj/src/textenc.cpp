#include "agcd/textenc.hpp"

#include <cctype>
#include <cstring>

namespace agcd::textenc {

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (unsigned char c : text) {
        const char lc = static_cast<char>(std::tolower(c));
        if ((lc >= 'a' && lc <= 'z') || (lc >= '0' && lc <= '9')) {
            cur.push_back(lc);
        } else if (!cur.empty()) {
            tokens.push_back(cur);
            cur.clear();
            if (tokens.size() == kMaxTokens) return tokens;
        }
    }
    if (!cur.empty() && tokens.size() < kMaxTokens) tokens.push_back(cur);
    if (tokens.empty()) tokens.push_back(kNullToken);
    return tokens;
}

Tensor embed(const std::vector<std::string>& tokens) {
    if (tokens.empty()) throw ContractError("embed: empty token sequence");
    Tensor out = Tensor::zeros({tokens.size(), kDim});
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        SplitMix64 rng(fnv1a64(tokens[i]));
        for (std::size_t j = 0; j < kDim; ++j) out(i, j) = rng.normal();
    }
    return out;
}

Tensor embed_text(const std::string& text) { return embed(tokenize(text)); }

std::uint64_t table_fingerprint(const std::vector<std::string>& probe_tokens) {
    const Tensor emb = embed(probe_tokens);
    std::string bytes(reinterpret_cast<const char*>(emb.v.data()),
                      emb.v.size() * sizeof(double));
    return fnv1a64(bytes);
}

}  // namespace agcd::textenc

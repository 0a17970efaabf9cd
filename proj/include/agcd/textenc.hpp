#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "agcd/tensor.hpp"

// Frozen deterministic stand-in for the narrative encoder: whitespace and
// punctuation tokenizer plus a fixed hash-seeded embedding table. Nothing in
// here is trainable.
namespace agcd::textenc {

inline constexpr std::size_t kMaxTokens = 64;
inline constexpr std::size_t kDim = 48;
inline constexpr const char* kNullToken = "⌀";  // empty narrative placeholder

// Lowercase, split on anything that is not [a-z0-9], truncate to kMaxTokens.
// The empty string maps to the single null token.
std::vector<std::string> tokenize(const std::string& text);

// Each token row is a seeded pseudo-random unit-variance vector derived from
// a 64-bit hash of the token string. N_t x kDim.
Tensor embed(const std::vector<std::string>& tokens);

Tensor embed_text(const std::string& text);

// Hash of the embedding rows for a probe vocabulary; used to prove the
// encoder stays frozen across training.
std::uint64_t table_fingerprint(const std::vector<std::string>& probe_tokens);

}  // namespace agcd::textenc

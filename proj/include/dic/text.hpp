#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dic/tensor.hpp"

namespace dic {

inline constexpr std::size_t kTextDim = 16;
inline constexpr std::string_view kNullToken = "<null>";

// Toy text encoder output: one unit-norm hash vector per token.
struct PromptEmbedding {
  std::string text;
  std::vector<std::string> tokens;
  Tensor vectors;  // [tokens x kTextDim]
  bool is_null = false;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return tokens.size(); }
};

// Whitespace split, '[' and ']' removed, lowercased. The empty string (or one
// with no tokens left) becomes the null prompt holding the reserved token.
std::vector<std::string> tokenize(std::string_view text);
PromptEmbedding encode_prompt(std::string_view text, std::uint64_t seed);
PromptEmbedding null_prompt(std::uint64_t seed);

// For every target token, the aligned source token index or nullopt.
struct Alignment {
  std::vector<std::optional<std::size_t>> map;

  std::size_t size() const noexcept { return map.size(); }
  bool operator==(const Alignment&) const = default;
};

// Longest common subsequence over exact token equality; ties resolve toward
// the earliest source match.
Alignment align(const PromptEmbedding& src, const PromptEmbedding& tgt);

// Indices of prompt tokens equal to any word of `phrase` (tokenized the same way).
std::vector<std::size_t> token_indices(const PromptEmbedding& prompt, std::string_view phrase);

}  // namespace dic

#include "dic/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "dic/error.hpp"
#include "dic/rng.hpp"

namespace dic {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (c != '[' && c != ']') {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return tokens;
}

namespace {

void fill_token_vector(Tensor& vectors, std::size_t row, std::string_view token, std::uint64_t seed) {
  SeededRng rng(hash_string(token, seed));
  double norm = 0.0;
  for (std::size_t j = 0; j < kTextDim; ++j) {
    const double v = rng.normal();
    vectors.at(row, j) = v;
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (std::size_t j = 0; j < kTextDim; ++j) vectors.at(row, j) /= norm;
}

}  // namespace

PromptEmbedding encode_prompt(std::string_view text, std::uint64_t seed) {
  PromptEmbedding out;
  out.text = std::string(text);
  out.seed = seed;
  out.tokens = tokenize(text);
  if (out.tokens.empty()) {
    out.is_null = true;
    out.tokens = {std::string(kNullToken)};
  }
  out.vectors = Tensor({out.tokens.size(), kTextDim});
  for (std::size_t i = 0; i < out.tokens.size(); ++i) fill_token_vector(out.vectors, i, out.tokens[i], seed);
  return out;
}

PromptEmbedding null_prompt(std::uint64_t seed) { return encode_prompt("", seed); }

Alignment align(const PromptEmbedding& src, const PromptEmbedding& tgt) {
  if (src.is_null || tgt.is_null) throw AlignmentError("cannot align the null prompt");
  const std::size_t n = src.size(), m = tgt.size();
  // suffix[i][j] = LCS length of src[i:] and tgt[j:].
  std::vector<std::vector<std::size_t>> suffix(n + 1, std::vector<std::size_t>(m + 1, 0));
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = m; j-- > 0;) {
      suffix[i][j] = src.tokens[i] == tgt.tokens[j] ? suffix[i + 1][j + 1] + 1
                                                    : std::max(suffix[i + 1][j], suffix[i][j + 1]);
    }
  }
  Alignment a;
  a.map.assign(m, std::nullopt);
  std::size_t i = 0, j = 0;
  while (i < n && j < m) {
    if (src.tokens[i] == tgt.tokens[j] && suffix[i][j] == suffix[i + 1][j + 1] + 1) {
      a.map[j] = i;
      ++i;
      ++j;
    } else if (suffix[i + 1][j] >= suffix[i][j + 1]) {
      ++i;
    } else {
      ++j;
    }
  }
  return a;
}

std::vector<std::size_t> token_indices(const PromptEmbedding& prompt, std::string_view phrase) {
  const auto words = tokenize(phrase);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < prompt.size(); ++i) {
    if (std::find(words.begin(), words.end(), prompt.tokens[i]) != words.end()) out.push_back(i);
  }
  return out;
}

}  // namespace dic

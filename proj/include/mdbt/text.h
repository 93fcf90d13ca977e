#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mdbt {

using TokenSeq = std::vector<std::string>;

// Lowercases ASCII, deletes ASCII punctuation ("it's" -> "its") and splits
// on whitespace.
TokenSeq tokenize(std::string_view text);

std::string join(const TokenSeq& tokens, std::string_view sep = " ");

}  // namespace mdbt

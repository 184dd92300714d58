#pragma once

#include <string>

namespace eva {

// Porter stemming algorithm (the original 1980 definition). Input is
// expected to be a lowercase word; words of length <= 2 are returned
// unchanged.
std::string porter_stem(const std::string& word);

}  // namespace eva

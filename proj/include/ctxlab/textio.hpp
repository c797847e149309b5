#pragma once

// Small text helpers shared by the CSV / key=value writers.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ctxlab::text {

/// 17 significant digits, so every double round-trips exactly.
std::string num(double v);

std::vector<std::string> split(std::string_view line, char sep);
std::string trim(std::string_view s);

double to_double(const std::string& s);
long long to_int(const std::string& s);
std::uint64_t to_u64(const std::string& s);

}  // namespace ctxlab::text

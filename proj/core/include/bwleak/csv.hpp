/*
 * Copyright 2026 The bwleak Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <initializer_list>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace bwleak {

/// Shortest round-trip decimal form of a double; stable across runs.
std::string format_double(double v);
/// Fixed-point form with `digits` decimals, for aligned text reports.
std::string format_fixed(double v, int digits);

/// Minimal comma-separated reader with line-aware errors. No quoting.
class CsvReader {
public:
    CsvReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

    void expect_header(std::initializer_list<const char*> columns);
    /// Next non-empty data row, or nullopt at end of input.
    std::optional<std::vector<std::string>> next();
    std::size_t line() const { return line_; }

    std::uint64_t to_u64(const std::string& field, const char* name) const;
    double to_double(const std::string& field, const char* name) const;

private:
    std::istream& in_;
    std::string source_;
    std::size_t line_ = 0;
};

std::vector<std::string> split(const std::string& s, char sep);

/// Writes a file via a temporary sibling and rename, so readers never see a
/// partial file. Throws bwleak::Error with the path on failure.
void write_file_atomic(const std::filesystem::path& path,
                       const std::function<void(std::ostream&)>& writer);
std::string read_file(const std::filesystem::path& path);

}  // namespace bwleak

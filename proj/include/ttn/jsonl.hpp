#pragma once

#include <fstream>
#include <functional>
#include <iosfwd>
#include <string>

#include <json.hpp>

namespace ttn::io {

using Json = nlohmann::json;

std::ifstream open_input(const std::string& path);
std::ofstream open_output(const std::string& path);

/// Calls fn(object, line_number) for every non-blank line. Parse errors and
/// exceptions thrown by fn surface as FormatError with the line number.
void for_each_jsonl(std::istream& in, const std::string& name,
                    const std::function<void(const Json&, std::size_t)>& fn);

void write_jsonl_line(std::ostream& out, const Json& object);

// Field accessors that throw std::invalid_argument with the field name.
const Json& require(const Json& object, const char* key);
std::string require_string(const Json& object, const char* key);

}  // namespace ttn::io

#include "ttn/jsonl.hpp"

#include <filesystem>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "ttn/error.hpp"

namespace ttn::io {

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path + " for reading");
  return in;
}

std::ofstream open_output(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  std::error_code ec;
  if (!parent.empty()) std::filesystem::create_directories(parent, ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path + " for writing");
  return out;
}

void for_each_jsonl(std::istream& in, const std::string& name,
                    const std::function<void(const Json&, std::size_t)>& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json object;
    try {
      object = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw FormatError(name, line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!object.is_object()) throw FormatError(name, line_no, "expected a JSON object");
    try {
      fn(object, line_no);
    } catch (const FormatError&) {
      throw;
    } catch (const Json::exception& e) {
      throw FormatError(name, line_no, e.what());
    } catch (const std::invalid_argument& e) {
      throw FormatError(name, line_no, e.what());
    } catch (const Error& e) {
      throw FormatError(name, line_no, e.what());
    }
  }
}

void write_jsonl_line(std::ostream& out, const Json& object) {
  out << object.dump() << '\n';
}

const Json& require(const Json& object, const char* key) {
  auto it = object.find(key);
  if (it == object.end()) throw std::invalid_argument(std::string("missing field '") + key + "'");
  return *it;
}

std::string require_string(const Json& object, const char* key) {
  const Json& value = require(object, key);
  if (!value.is_string()) {
    throw std::invalid_argument(std::string("field '") + key + "' must be a string");
  }
  return value.get<std::string>();
}

}  // namespace ttn::io

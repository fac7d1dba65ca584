#include "egovideo/common/jsonl.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "egovideo/common/error.hpp"

namespace egovideo::io {

std::vector<Json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingDependency("cannot open " + path.string());
  std::vector<Json> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(Json::parse(line));
    } catch (const Json::exception& e) {
      throw InvalidArgument(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& records) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  for (const auto& r : records) out << r.dump() << '\n';
}

Json read_json_with_comments(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingDependency("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return Json::parse(buf.str(), nullptr, true, true);
  } catch (const Json::exception& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const Json& value) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << value.dump(2) << '\n';
}

uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace egovideo::io

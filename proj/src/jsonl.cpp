#include "trajsim/jsonl.hpp"

#include <fstream>

#include "trajsim/error.hpp"
#include "trajsim/text.hpp"

namespace trajsim::jsonl {

std::vector<Json> read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIoError, "cannot open " + path.string());
  std::vector<Json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(Json::parse(line));
    } catch (const Json::parse_error& e) {
      throw Error(Errc::kIoError, path.string() + ":" + std::to_string(lineno) +
                                      ": " + e.what());
    }
  }
  return out;
}

std::string dump_line(const Json& record) {
  return record.dump(-1, ' ', false, Json::error_handler_t::replace);
}

void write(const std::filesystem::path& path, const std::vector<Json>& records) {
  std::string content;
  for (const auto& r : records) {
    content += dump_line(r);
    content += '\n';
  }
  text::write_file(path, content);
}

void append(const std::filesystem::path& path, const Json& record) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw Error(Errc::kIoError, "cannot append " + path.string());
  out << dump_line(record) << '\n';
}

}  // namespace trajsim::jsonl

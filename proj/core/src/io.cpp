#include "headprune/io.hpp"

#include "headprune/errors.hpp"

#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>

namespace headprune::io {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split(std::string_view line, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(delim, start);
    out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string json_to_text(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

} // namespace

const std::string& Record::at(std::string_view key, std::string_view source) const {
  auto it = fields.find(key);
  if (it == fields.end()) throw ParseError(std::string(source), line, "missing field '" + std::string(key) + "'");
  return it->second;
}

double Record::number(std::string_view key, std::string_view source) const {
  const std::string& text = at(key, source);
  // strtod accepts "inf"/"nan", which the readers reject downstream where it matters.
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size())
    throw ParseError(std::string(source), line, "field '" + std::string(key) + "' is not a number: '" + text + "'");
  return v;
}

long long Record::integer(std::string_view key, std::string_view source) const {
  const std::string& text = at(key, source);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw ParseError(std::string(source), line, "field '" + std::string(key) + "' is not an integer: '" + text + "'");
  return v;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<Record> parse_records(std::string_view content, std::string_view source) {
  std::vector<Record> out;
  std::vector<std::string> header;
  char delim = ',';
  bool jsonl = false;
  bool decided = false;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= content.size()) {
    auto eol = content.find('\n', pos);
    if (eol == std::string_view::npos) eol = content.size();
    const std::string_view line = trim(content.substr(pos, eol - pos));
    pos = eol + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') {
      if (eol == content.size()) break;
      continue;
    }

    if (!decided) {
      decided = true;
      jsonl = line.front() == '{';
      if (!jsonl) {
        delim = line.find('\t') != std::string_view::npos ? '\t' : ',';
        header = split(line, delim);
        if (eol == content.size()) break;
        continue;
      }
    }

    Record rec;
    rec.line = line_no;
    if (jsonl) {
      nlohmann::json obj;
      try {
        obj = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string(source), line_no, std::string("invalid JSON: ") + e.what());
      }
      if (!obj.is_object()) throw ParseError(std::string(source), line_no, "expected a JSON object");
      for (auto it = obj.begin(); it != obj.end(); ++it) rec.fields.emplace(it.key(), json_to_text(it.value()));
    } else {
      auto cells = split(line, delim);
      if (cells.size() != header.size())
        throw ParseError(std::string(source), line_no,
                         "expected " + std::to_string(header.size()) + " columns, found " + std::to_string(cells.size()));
      for (std::size_t i = 0; i < cells.size(); ++i) rec.fields.emplace(header[i], std::move(cells[i]));
    }
    out.push_back(std::move(rec));
    if (eol == content.size()) break;
  }
  return out;
}

std::vector<Record> read_records(const std::filesystem::path& path) {
  return parse_records(read_file(path), path.string());
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error("short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) return std::to_string(v);
  return std::string(buf, ptr);
}

} // namespace headprune::io

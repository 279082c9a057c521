#include "kws/pipeline/manifest.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "kws/error.hpp"

namespace kws::pipeline {
namespace {

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string::size_type at = 0;
  while (true) {
    const auto next = s.find(sep, at);
    out.push_back(s.substr(at, next == std::string::npos ? std::string::npos : next - at));
    if (next == std::string::npos) return out;
    at = next + 1;
  }
}

int parse_frame(const std::string& s, const std::string& where) {
  int v = 0;
  const auto* end = s.data() + s.size();
  const auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end || v < 0) throw DataError(where + ": bad frame index '" + s + "'");
  return v;
}

std::vector<Label> parse_labels(const std::string& field, const std::string& where) {
  std::vector<Label> out;
  if (field == "-") return out;
  for (const auto& item : split_on(field, ';')) {
    if (item.empty()) throw DataError(where + ": empty label");
    const auto parts = split_on(item, ':');
    Label l;
    l.keyword = parts[0];
    if (l.keyword.empty()) throw DataError(where + ": label without keyword name");
    if (parts.size() == 3) {
      l.start = parse_frame(parts[1], where);
      l.end = parse_frame(parts[2], where);
      if (l.end <= l.start) throw DataError(where + ": label '" + item + "' has end <= start");
    } else if (parts.size() != 1) {
      throw DataError(where + ": label '" + item + "' is not keyword:start:end");
    }
    out.push_back(std::move(l));
  }
  return out;
}

}  // namespace

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "dev") return Split::kDev;
  if (s == "test") return Split::kTest;
  throw DataError("unknown split '" + s + "' (expected train, dev or test)");
}

std::vector<const ManifestEntry*> Manifest::split(Split s) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.split == s) out.push_back(&e);
  return out;
}

Manifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir,
                        const std::string& source_name) {
  Manifest m;
  std::set<std::string> ids;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::string where = source_name + ":" + std::to_string(line_no);
    const auto f = split_on(line, '\t');
    if (f.size() < 3 || f.size() > 5)
      throw DataError(where + ": expected 3 to 5 tab-separated fields, got " + std::to_string(f.size()));
    ManifestEntry e;
    e.id = f[0];
    if (e.id.empty()) throw DataError(where + ": empty utterance id");
    if (!ids.insert(e.id).second) throw DataError(where + ": duplicate utterance id '" + e.id + "'");
    e.relative_path = f[1];
    if (e.relative_path.empty()) throw DataError(where + ": empty path");
    e.path = base_dir / e.relative_path;
    e.split = split_from_string(f[2]);
    if (f.size() >= 4 && !f[3].empty()) e.labels = parse_labels(f[3], where);
    if (f.size() == 5) e.speaker = f[4];
    m.entries.push_back(std::move(e));
  }
  return m;
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  auto m = parse_manifest(ss.str(), path.parent_path(), path.string());
  m.source = path;
  for (const auto& e : m.entries)
    if (!std::filesystem::is_regular_file(e.path))
      throw DataError(path.string() + ": file for '" + e.id + "' does not exist: " + e.path.string());
  return m;
}

std::string format_manifest(const std::vector<ManifestEntry>& entries) {
  std::string out;
  for (const auto& e : entries) {
    out += e.id + '\t' + e.relative_path + '\t' + to_string(e.split);
    if (e.labels || !e.speaker.empty()) {
      out += '\t';
      if (e.labels) {
        if (e.labels->empty()) out += '-';
        for (std::size_t i = 0; i < e.labels->size(); ++i) {
          const auto& l = (*e.labels)[i];
          if (i) out += ';';
          out += l.keyword;
          if (l.start >= 0) out += ':' + std::to_string(l.start) + ':' + std::to_string(l.end);
        }
      }
    }
    if (!e.speaker.empty()) out += '\t' + e.speaker;
    out += '\n';
  }
  return out;
}

}  // namespace kws::pipeline

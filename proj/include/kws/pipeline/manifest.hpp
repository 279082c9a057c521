#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace kws::pipeline {

enum class Split { kTrain, kDev, kTest };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

// A keyword occurrence; start/end are frames, end exclusive. Both are -1
// when the label names the keyword without a span (isolated templates).
struct Label {
  std::string keyword;
  int start = -1;
  int end = -1;
};

struct ManifestEntry {
  std::string id;
  std::string relative_path;
  std::filesystem::path path;  // resolved against the manifest directory
  Split split = Split::kTrain;
  // Absent: unlabeled. Present but empty ("-" in the file): no keywords.
  std::optional<std::vector<Label>> labels;
  std::string speaker;
};

// Tab-separated lines: id, relative path, split, labels, speaker. The last
// two columns are optional; labels are "keyword:start:end" (or a bare
// keyword) joined by ';', "-" for an explicitly empty set. Blank lines and
// lines starting with '#' are ignored.
struct Manifest {
  std::filesystem::path source;
  std::vector<ManifestEntry> entries;

  std::vector<const ManifestEntry*> split(Split s) const;
};

Manifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir,
                        const std::string& source_name = "manifest");
// Also checks that every referenced file exists.
Manifest read_manifest(const std::filesystem::path& path);
std::string format_manifest(const std::vector<ManifestEntry>& entries);

}  // namespace kws::pipeline

// Copyright 2026 The fsed Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/**
 * @file manifest.hpp
 * @brief Corpus manifests: one clip per row of a comma-delimited UTF-8 file.
 *
 * Format:
 *
 *     clip_id,path,label,duration_s
 *     1-100032-A-0,audio/1-100032-A-0.wav,dog,5.0
 *
 * Fields may be double-quoted (a doubled quote escapes a quote). Blank lines
 * are skipped. Lines starting with '#' are comments, except the optional
 * directive `# sample_rate_hz=<int>` which records the corpus rate.
 * Relative paths resolve against the manifest's directory.
 */
#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "fsed/error.hpp"

namespace fsed::data {

struct ManifestEntry {
  std::string clip_id;
  std::string file_path;
  std::string class_label;
  double duration_s = 0.0;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  int sample_rate_hz = 0;  // 0 when the manifest does not declare it
  std::filesystem::path base_dir;

  /// Distinct labels in order of first appearance.
  std::vector<std::string> classes() const {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (const auto& e : entries) {
      if (seen.insert(e.class_label).second) out.push_back(e.class_label);
    }
    return out;
  }

  /// Entry indices per label, in manifest order.
  std::map<std::string, std::vector<std::size_t>> clips_by_class() const {
    std::map<std::string, std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      out[entries[i].class_label].push_back(i);
    }
    return out;
  }

  std::filesystem::path resolve(const ManifestEntry& e) const {
    std::filesystem::path p(e.file_path);
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  }

  /// Throws ValidationError on duplicate ids, non-positive durations, or a
  /// class with fewer than two clips.
  void validate() const {
    std::unordered_set<std::string> ids;
    for (const auto& e : entries) {
      if (!ids.insert(e.clip_id).second) {
        throw ValidationError("manifest: duplicate clip_id '" + e.clip_id + "'");
      }
      if (!(e.duration_s > 0.0)) {
        throw ValidationError("manifest: clip '" + e.clip_id +
                              "' has non-positive duration");
      }
    }
    for (const auto& [label, idx] : clips_by_class()) {
      if (idx.size() < 2) {
        throw ValidationError("manifest: class '" + label + "' has " +
                              std::to_string(idx.size()) +
                              " clip(s); at least 2 are required");
      }
    }
  }
};

namespace detail {

inline std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

/// Splits one delimited line, honouring double quotes. Returns false on an
/// unterminated quote.
inline bool split_csv_line(const std::string& line, std::vector<std::string>& out) {
  out.clear();
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(field));
      field.clear();
    } else {
      field += c;
    }
  }
  if (quoted) return false;
  out.push_back(trim(field));
  return true;
}

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace detail

inline DatasetManifest parse_manifest(std::istream& in,
                                      const std::string& source = "<stream>") {
  DatasetManifest m;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::vector<std::string> fields;
  auto fail = [&](const std::string& why) {
    throw ParseError(source + ":" + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      const std::string key = "sample_rate_hz=";
      const std::string body = detail::trim(t.substr(1));
      if (body.rfind(key, 0) == 0) {
        const std::string v = body.substr(key.size());
        int rate = 0;
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), rate);
        if (ec != std::errc() || p != v.data() + v.size() || rate <= 0) {
          fail("invalid sample_rate_hz directive");
        }
        m.sample_rate_hz = rate;
      }
      continue;
    }
    if (!detail::split_csv_line(line, fields)) fail("unterminated quote");
    if (!header_seen) {
      if (fields != std::vector<std::string>{"clip_id", "path", "label", "duration_s"}) {
        fail("expected header 'clip_id,path,label,duration_s'");
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != 4) {
      fail("expected 4 fields, found " + std::to_string(fields.size()));
    }
    if (fields[0].empty() || fields[1].empty() || fields[2].empty()) {
      fail("empty clip_id, path or label");
    }
    ManifestEntry e{fields[0], fields[1], fields[2], 0.0};
    try {
      std::size_t used = 0;
      e.duration_s = std::stod(fields[3], &used);
      if (used != fields[3].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      fail("invalid duration '" + fields[3] + "'");
    }
    m.entries.push_back(std::move(e));
  }
  if (!header_seen) {
    throw ParseError(source + ": empty manifest (no header row)");
  }
  m.validate();
  return m;
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  DatasetManifest m = parse_manifest(in, path.string());
  m.base_dir = path.parent_path();
  return m;
}

inline void write_manifest(const std::filesystem::path& path,
                           const DatasetManifest& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest: " + path.string());
  if (m.sample_rate_hz > 0) out << "# sample_rate_hz=" << m.sample_rate_hz << '\n';
  out << "clip_id,path,label,duration_s\n";
  for (const auto& e : m.entries) {
    out << detail::csv_quote(e.clip_id) << ',' << detail::csv_quote(e.file_path)
        << ',' << detail::csv_quote(e.class_label) << ',' << e.duration_s << '\n';
  }
  if (!out) throw IoError("failed writing manifest: " + path.string());
}

/// label -> domain map from a `label,domain` file with that header row.
inline std::map<std::string, std::string> load_domain_map(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open domain file: " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  std::vector<std::string> fields;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty() || detail::trim(line)[0] == '#') continue;
    if (!detail::split_csv_line(line, fields) || fields.size() != 2) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": expected 'label,domain'");
    }
    if (!header) {
      if (fields[0] != "label" || fields[1] != "domain") {
        throw ParseError(path.string() + ":" + std::to_string(line_no) +
                         ": expected header 'label,domain'");
      }
      header = true;
      continue;
    }
    out[fields[0]] = fields[1];
  }
  return out;
}

inline std::set<std::string> classes_in_domain(
    const std::map<std::string, std::string>& domains, const std::string& name) {
  std::set<std::string> out;
  for (const auto& [label, domain] : domains) {
    if (domain == name) out.insert(label);
  }
  return out;
}

}  // namespace fsed::data

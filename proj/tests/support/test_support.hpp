#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "dstkit/corpus.hpp"
#include "dstkit/log.hpp"
#include "dstkit/schema.hpp"

namespace dstkit::testing {

inline std::filesystem::path fixtures_dir() { return DSTKIT_FIXTURES_DIR; }
inline std::filesystem::path golden_dir() { return DSTKIT_GOLDEN_DIR; }
inline std::filesystem::path data_dir() { return DSTKIT_DATA_DIR; }

inline std::filesystem::path mwoz_schema_path() { return fixtures_dir() / "mwoz" / "schema.json"; }

// Fixture schema with police and hospital removed.
Schema mwoz_schema();
Schema mwoz_schema_unfiltered();
std::vector<Dialogue> mwoz_split(const std::string& split, const Schema& schema);
std::vector<Dialogue> mwoz_all(const Schema& schema);

std::string read_text(const std::filesystem::path& path);

// Golden file content without its final newline.
std::string golden(const std::string& name);
void write_text(const std::filesystem::path& path, const std::string& content);

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Collects warnings for the lifetime of the object.
class WarningCapture {
 public:
  WarningCapture();
  const std::vector<std::string>& messages() const { return messages_; }
  bool contains(const std::string& needle) const;

 private:
  std::vector<std::string> messages_;
  log::ScopedSink sink_;
};

// Random schema-valid states over `schema` with values drawn from the value
// lists (categorical) or a small pool of multi-word strings.
DialogueState random_state(const Schema& schema, std::mt19937_64& rng, double fill_probability);

}  // namespace dstkit::testing

#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "ibpa/skeleton.hpp"

namespace ibpa {

struct VideoRecord {
  std::int64_t video_id = 0;
  double frame_rate = 0.0;
  std::vector<FrameDetections> frames;  // strictly increasing frame indices
  int label = -1;
};

struct Dataset {
  std::vector<std::string> classes;
  std::vector<VideoRecord> records;

  // Index of a class name, or -1.
  int class_index(const std::string& name) const;
};

// Newline-delimited JSON pose file; see docs/pose_format.md. Errors are
// DataError carrying "<source>:<line>:". An empty input yields an empty
// dataset and a warning on stderr.
Dataset parse_dataset(std::istream& in, const std::string& source);
Dataset ingest(const std::filesystem::path& path);

void write_dataset(std::ostream& out, const Dataset& data);
void save_dataset(const std::filesystem::path& path, const Dataset& data);

}  // namespace ibpa

#include "ibpa/dataset.hpp"

#include <fstream>
#include <iostream>
#include <map>

#include "ibpa/errors.hpp"
#include "json.hpp"

namespace ibpa {

namespace {

using nlohmann::json;

class LineError {
 public:
  LineError(const std::string& source, int line) : prefix_(source + ":" + std::to_string(line) + ": ") {}
  [[noreturn]] void operator()(const std::string& what) const { throw DataError(prefix_ + what); }

 private:
  std::string prefix_;
};

double number(const json& v, const LineError& fail, const char* what) {
  if (!v.is_number()) fail(std::string(what) + " must be a number");
  return v.get<double>();
}

DetectionBox parse_box(const json& j, const LineError& fail) {
  if (!j.is_array() || j.size() != 4) fail("box must be an array [x, y, w, h]");
  DetectionBox b{number(j[0], fail, "box x"), number(j[1], fail, "box y"), number(j[2], fail, "box width"),
                 number(j[3], fail, "box height")};
  if (!(b.width > 0.0) || !(b.height > 0.0)) fail("box width and height must be positive");
  return b;
}

Detection parse_person(const json& j, const LineError& fail) {
  if (!j.is_object()) fail("person entry must be an object");
  Detection d;
  if (!j.contains("box")) fail("person entry without \"box\"");
  d.box = parse_box(j["box"], fail);
  d.is_object = j.value("object", false);
  if (d.is_object) {
    if (j.contains("pose")) fail("object entries carry no pose");
    return d;
  }
  if (!j.contains("pose")) fail("person entry without \"pose\"");
  const json& pose = j["pose"];
  if (!pose.is_array() || pose.size() != kRawJointCount) {
    fail("pose must have exactly " + std::to_string(kRawJointCount) + " joints, got " +
         std::to_string(pose.is_array() ? pose.size() : 0));
  }
  for (int i = 0; i < kRawJointCount; ++i) {
    const json& kp = pose[i];
    if (!kp.is_array() || kp.size() != 3) fail("joint " + std::to_string(i) + " must be [x, y, confidence]");
    const double conf = number(kp[2], fail, "confidence");
    if (conf > 0.0) {
      d.pose.joints[i] = {{number(kp[0], fail, "x"), number(kp[1], fail, "y")}, true, false};
    }
  }
  return d;
}

json box_json(const DetectionBox& b) { return json::array({b.x, b.y, b.width, b.height}); }

}  // namespace

int Dataset::class_index(const std::string& name) const {
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] == name) return static_cast<int>(i);
  }
  return -1;
}

Dataset parse_dataset(std::istream& in, const std::string& source) {
  Dataset data;
  std::map<std::int64_t, std::size_t> by_video;
  bool saw_classes = false;
  bool saw_anything = false;
  std::string text;
  int line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    saw_anything = true;
    const LineError fail(source, line);
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      fail(std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) fail("record without a \"type\" string");
    const std::string type = j["type"].get<std::string>();

    try {
      if (type == "classes") {
        if (saw_classes) fail("duplicate classes record");
        if (!j.contains("names") || !j["names"].is_array() || j["names"].empty()) fail("classes record needs names");
        for (const auto& n : j["names"]) data.classes.push_back(n.get<std::string>());
        saw_classes = true;
      } else if (type == "clip") {
        const auto video = j.at("video").get<std::int64_t>();
        if (by_video.contains(video)) fail("duplicate clip record for video " + std::to_string(video));
        const std::string label = j.at("label").get<std::string>();
        const int idx = data.class_index(label);
        if (idx < 0) fail("unknown class label '" + label + "'");
        VideoRecord rec;
        rec.video_id = video;
        rec.label = idx;
        rec.frame_rate = j.value("fps", 0.0);
        by_video[video] = data.records.size();
        data.records.push_back(std::move(rec));
      } else if (type == "frame") {
        const auto video = j.at("video").get<std::int64_t>();
        auto it = by_video.find(video);
        if (it == by_video.end()) fail("frame for video " + std::to_string(video) + " before its clip record");
        VideoRecord& rec = data.records[it->second];
        FrameDetections fd;
        fd.frame = j.at("frame").get<int>();
        if (!rec.frames.empty() && fd.frame <= rec.frames.back().frame) fail("frame indices must increase");
        const json& persons = j.at("persons");
        if (!persons.is_array()) fail("persons must be an array");
        for (const auto& p : persons) fd.detections.push_back(parse_person(p, fail));
        rec.frames.push_back(std::move(fd));
      } else {
        fail("unknown record type '" + type + "'");
      }
    } catch (const json::exception& e) {
      fail(e.what());
    }
  }
  if (!saw_anything) {
    std::cerr << "warning: " << source << " contains no records\n";
    return data;
  }
  for (const auto& rec : data.records) {
    if (rec.frames.empty()) throw DataError(source + ": video " + std::to_string(rec.video_id) + " has no frames");
  }
  return data;
}

Dataset ingest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_dataset(in, path.string());
}

void write_dataset(std::ostream& out, const Dataset& data) {
  if (data.classes.empty() && data.records.empty()) return;
  out << json{{"type", "classes"}, {"names", data.classes}}.dump() << '\n';
  for (const auto& rec : data.records) {
    out << json{{"type", "clip"}, {"video", rec.video_id}, {"label", data.classes.at(rec.label)},
                {"fps", rec.frame_rate}}
               .dump()
        << '\n';
    for (const auto& fd : rec.frames) {
      json persons = json::array();
      for (const auto& d : fd.detections) {
        if (d.is_object) {
          persons.push_back({{"object", true}, {"box", box_json(d.box)}});
          continue;
        }
        json pose = json::array();
        for (const auto& jt : d.pose.joints) {
          pose.push_back(jt.valid ? json::array({jt.pos.x, jt.pos.y, 1.0}) : json::array({0.0, 0.0, 0.0}));
        }
        persons.push_back({{"pose", std::move(pose)}, {"box", box_json(d.box)}});
      }
      out << json{{"type", "frame"}, {"video", rec.video_id}, {"frame", fd.frame}, {"persons", std::move(persons)}}
                 .dump()
          << '\n';
    }
  }
}

void save_dataset(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_dataset(out, data);
}

}  // namespace ibpa

#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "ibpa/config.hpp"
#include "ibpa/dataset.hpp"
#include "ibpa/embedding.hpp"
#include "ibpa/errors.hpp"
#include "ibpa/pipeline.hpp"

using namespace ibpa;

namespace {

const std::filesystem::path kData = IBPA_TEST_DATA_DIR;

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string error_of(const std::string& text) {
  std::istringstream in(text);
  try {
    parse_dataset(in, "mem");
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

std::string pose_line(int joints) {
  std::string pose = "[";
  for (int i = 0; i < joints; ++i) pose += std::string(i ? "," : "") + "[1,2,1]";
  return pose + "]";
}

const std::string kHeader =
    "{\"type\":\"classes\",\"names\":[\"a\",\"b\"]}\n{\"type\":\"clip\",\"video\":1,\"label\":\"a\",\"fps\":30}\n";

}  // namespace

TEST_CASE("golden pose file parses to the documented values") {
  const Dataset d = ingest(kData / "golden_clip.jsonl");
  CHECK(d.classes == std::vector<std::string>{"shake", "hug"});
  REQUIRE(d.records.size() == 1);
  const VideoRecord& r = d.records[0];
  CHECK(r.video_id == 7);
  CHECK(r.label == 1);
  CHECK(r.frame_rate == 25.0);
  REQUIRE(r.frames.size() == 3);
  CHECK(r.frames[0].detections.size() == 2);
  CHECK(r.frames[0].detections[0].pose.joints[0].pos == Vec2{103.0, 50.5});
  CHECK(r.frames[0].detections[0].box == DetectionBox{66.0, 33.5, 68.0, 269.0});
  CHECK_FALSE(r.frames[1].detections[0].pose.joints[4].valid);
  CHECK(r.frames[1].detections[0].pose.joints[3].valid);
  CHECK_FALSE(r.frames[2].detections[1].pose.joints[0].valid);
  REQUIRE(r.frames[2].detections.size() == 3);
  CHECK(r.frames[2].detections[2].is_object);
  CHECK(r.frames[2].detections[2].box == DetectionBox{300.0, 150.0, 40.0, 20.0});
}

TEST_CASE("golden pose file is reproduced byte for byte") {
  std::ostringstream out;
  write_dataset(out, ingest(kData / "golden_clip.jsonl"));
  CHECK(out.str() == slurp(kData / "golden_clip.jsonl"));
}

TEST_CASE("golden clip tracks two people and one object") {
  const Dataset d = ingest(kData / "golden_clip.jsonl");
  const auto tracks = track_people(d.records[0].frames);
  REQUIRE(tracks.size() == 3);
  CHECK(tracks[0].frames.size() == 3);
  CHECK(tracks[1].frames.size() == 3);
  CHECK(tracks[2].is_object);
}

TEST_CASE("malformed records report their line") {
  const std::string short_pose =
      kHeader + "{\"type\":\"frame\",\"video\":1,\"frame\":0,\"persons\":[{\"pose\":" + pose_line(17) +
      ",\"box\":[0,0,5,5]}]}\n";
  const std::string e = error_of(short_pose);
  CHECK(e.find("mem:3:") == 0);
  CHECK(e.find("exactly 18 joints, got 17") != std::string::npos);

  CHECK(error_of("{\"type\":\"classes\",\"names\":[\"a\"]}\n{\"type\":\"clip\",\"video\":1,\"label\":\"zzz\"}\n")
            .find("mem:2: unknown class label 'zzz'") == 0);
  CHECK(error_of(kHeader + "{not json\n").find("mem:3: malformed JSON") == 0);
  CHECK(error_of(kHeader).find("has no frames") != std::string::npos);
  CHECK(error_of(kHeader + "{\"type\":\"frame\",\"video\":1,\"frame\":0,\"persons\":[{\"pose\":" + pose_line(18) +
                 ",\"box\":[0,0,0,5]}]}\n")
            .find("positive") != std::string::npos);
  CHECK(error_of(kHeader + "{\"type\":\"frame\",\"video\":1,\"frame\":2,\"persons\":[]}\n" +
                 "{\"type\":\"frame\",\"video\":1,\"frame\":2,\"persons\":[]}\n")
            .find("mem:4: frame indices must increase") == 0);
}

TEST_CASE("an empty file gives an empty dataset") {
  std::istringstream in("");
  const Dataset d = parse_dataset(in, "empty");
  CHECK(d.records.empty());
  CHECK(d.classes.empty());
}

TEST_CASE("embedding table binary round trip") {
  EmbeddingTable t(3);
  t.insert({3, 7, 1, 4}, {0.5f, -1.25f, 3e-8f});
  t.insert({3, 7, 1, kFullBodyJoint}, {1, 2, 3});
  t.insert({-2, 0, 0, 0}, {9, 9, 9});
  const auto path = std::filesystem::temp_directory_path() / "ibpa_table_test.bin";
  t.save(path);
  CHECK(EmbeddingTable::load(path) == t);
  const auto provider = TableEmbeddingProvider::from_file(path);
  CHECK(provider.embed({{3, 7, 1, 4}, {}, 32}) == std::vector<double>{0.5, -1.25, static_cast<double>(3e-8f)});
  CHECK_THROWS_AS(provider.embed({{3, 7, 1, 5}, {}, 32}), MissingEmbeddingError);
  CHECK_THROWS_AS(t.insert({0, 0, 0, 0}, {1}), std::invalid_argument);

  std::ofstream(path, std::ios::binary) << "IBPAEMBD";
  CHECK_THROWS_AS(EmbeddingTable::load(path), DataError);
  std::filesystem::remove(path);
}

TEST_CASE("config JSON round trip and strictness") {
  PipelineConfig c = PipelineConfig::desk_profile();
  c.attention.mode = AttentionMode::Proportional;
  c.pairing = AttentionPairing::AllPairsMean;
  c.ablation = Ablation::Baseline2;
  c.adam.learning_rate = 0.1 + 0.2;
  const nlohmann::json j = c;
  CHECK(j.get<PipelineConfig>() == c);
  CHECK(j["attention"]["mode"] == "proportional");
  CHECK(c.hash() != PipelineConfig{}.hash());

  nlohmann::json bad = j;
  bad["attention"]["colour"] = 1;
  CHECK_THROWS_AS(bad.get<PipelineConfig>(), std::invalid_argument);
  bad = j;
  bad["ablation"] = "baseline3";
  CHECK_THROWS_AS(bad.get<PipelineConfig>(), std::invalid_argument);

  PipelineConfig features_only = c;
  features_only.epochs += 1;
  CHECK(features_only.feature_hash() == c.feature_hash());
  CHECK(features_only.hash() != c.hash());
  features_only.segment_length += 1;
  CHECK(features_only.feature_hash() != c.feature_hash());
}

TEST_CASE("config validation names the field") {
  PipelineConfig c;
  c.patch_size = 31;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("patch_size"), std::invalid_argument);
  const auto path = std::filesystem::temp_directory_path() / "ibpa_config_test.json";
  std::ofstream(path) << R"({"segments": 0})";
  CHECK_THROWS_AS(load_config(path), DataError);
  std::ofstream(path) << R"({"segments": 4, "attention": {"S": 0.5}})";
  const PipelineConfig loaded = load_config(path);
  CHECK(loaded.segments == 4);
  CHECK(loaded.attention.scale == 0.5);
  std::filesystem::remove(path);
}

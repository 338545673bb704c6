#include "ibpa/embedding.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ibpa/binary_io.hpp"
#include "ibpa/random.hpp"

namespace ibpa {

namespace {

constexpr std::string_view kTableMagic = "IBPAEMBD";

std::uint64_t key_hash(std::uint64_t seed, const EmbeddingKey& key) {
  std::uint64_t h = hash_combine(seed, static_cast<std::uint64_t>(key.video));
  h = hash_combine(h, static_cast<std::uint64_t>(key.frame));
  h = hash_combine(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(key.person)));
  return hash_combine(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(key.joint)));
}

int slot_of_joint(std::int32_t joint) {
  switch (joint) {
    case 0: return 0;
    case 4: return 1;
    case 7: return 2;
    case 10: return 3;
    case 13: return 4;
    default: return 5;
  }
}

}  // namespace

std::string to_string(const EmbeddingKey& key) {
  std::ostringstream os;
  os << "(video=" << key.video << ", frame=" << key.frame << ", person=" << key.person
     << ", joint=" << key.joint << ")";
  return os.str();
}

MissingEmbeddingError::MissingEmbeddingError(const EmbeddingKey& key)
    : DataError("no embedding for key " + to_string(key)), key_(key) {}

void EmbeddingTable::insert(const EmbeddingKey& key, std::vector<float> values) {
  if (static_cast<int>(values.size()) != dim_) {
    throw ShapeError("embedding of length " + std::to_string(values.size()) +
                     " does not match table dimension " + std::to_string(dim_));
  }
  rows_[key] = std::move(values);
}

const std::vector<float>* EmbeddingTable::find(const EmbeddingKey& key) const {
  auto it = rows_.find(key);
  return it == rows_.end() ? nullptr : &it->second;
}

void EmbeddingTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  io::BinaryWriter w(out);
  w.put_magic(kTableMagic);
  w.put<std::uint32_t>(kFormatVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(dim_));
  w.put<std::uint64_t>(rows_.size());
  for (const auto& [key, values] : rows_) {
    w.put<std::int64_t>(key.video);
    w.put<std::int64_t>(key.frame);
    w.put<std::int32_t>(key.person);
    w.put<std::int32_t>(key.joint);
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(float)));
  }
  if (!out) throw DataError("write failed for " + path.string());
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  io::BinaryReader r(in, path.string());
  r.expect_magic(kTableMagic);
  const auto version = r.get<std::uint32_t>();
  if (version != kFormatVersion) r.fail("unsupported embedding table version " + std::to_string(version));
  const auto dim = r.get<std::uint32_t>();
  if (dim == 0 || dim > (1U << 20)) r.fail("implausible embedding dimension");
  const auto count = r.get<std::uint64_t>();
  EmbeddingTable table(static_cast<int>(dim));
  for (std::uint64_t i = 0; i < count; ++i) {
    EmbeddingKey key;
    key.video = r.get<std::int64_t>();
    key.frame = r.get<std::int64_t>();
    key.person = r.get<std::int32_t>();
    key.joint = r.get<std::int32_t>();
    std::vector<float> values(dim);
    for (auto& v : values) v = r.get<float>();
    table.rows_.emplace(key, std::move(values));
  }
  return table;
}

TableEmbeddingProvider::TableEmbeddingProvider(std::shared_ptr<const EmbeddingTable> table)
    : table_(std::move(table)) {}

TableEmbeddingProvider TableEmbeddingProvider::from_file(const std::filesystem::path& path) {
  return TableEmbeddingProvider(std::make_shared<const EmbeddingTable>(EmbeddingTable::load(path)));
}

std::vector<double> TableEmbeddingProvider::embed(const PatchQuery& query) const {
  const auto* row = table_->find(query.key);
  if (row == nullptr) throw MissingEmbeddingError(query.key);
  return {row->begin(), row->end()};
}

StubEmbeddingProvider::StubEmbeddingProvider(int dim, std::uint64_t seed)
    : dim_(dim), seed_(seed), projection_(static_cast<std::size_t>(dim) * kInputs) {
  Rng rng(seed);
  for (auto& w : projection_) w = rng.normal() / std::sqrt(static_cast<double>(kInputs));
}

std::vector<double> StubEmbeddingProvider::embed(const PatchQuery& query) const {
  std::array<double, kInputs> phi{};
  const double scale = query.size > 0.0 ? query.size : 1.0;
  phi[0] = std::sin(query.center.x / scale);
  phi[1] = std::cos(query.center.y / scale);
  phi[2] = 1.0;
  std::uint64_t h = key_hash(seed_, query.key);
  for (int i = 3; i < kInputs; ++i) {
    h = mix64(h);
    phi[i] = static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0;
  }
  std::vector<double> out(dim_);
  for (int r = 0; r < dim_; ++r) {
    double acc = 0.0;
    for (int c = 0; c < kInputs; ++c) acc += projection_[static_cast<std::size_t>(r) * kInputs + c] * phi[c];
    out[r] = std::tanh(acc);
  }
  return out;
}

ClassSignalEmbeddingProvider::ClassSignalEmbeddingProvider(ClassSignalOptions options,
                                                           std::map<std::int64_t, int> video_labels)
    : options_(options),
      video_labels_(std::move(video_labels)),
      means_(static_cast<std::size_t>(options.classes) * kSlots * options.dim) {
  Rng rng(options.mean_seed);
  const auto dim = static_cast<std::size_t>(options_.dim);
  for (std::size_t block = 0; block < means_.size() / dim; ++block) {
    double sq = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      means_[block * dim + i] = rng.normal();
      sq += means_[block * dim + i] * means_[block * dim + i];
    }
    const double s = options_.strength / std::sqrt(sq);
    for (std::size_t i = 0; i < dim; ++i) means_[block * dim + i] *= s;
  }
}

std::vector<double> ClassSignalEmbeddingProvider::embed(const PatchQuery& query) const {
  auto it = video_labels_.find(query.key.video);
  if (it == video_labels_.end() || it->second < 0 || it->second >= options_.classes) {
    throw MissingEmbeddingError(query.key);
  }
  const auto dim = static_cast<std::size_t>(options_.dim);
  const std::size_t base =
      (static_cast<std::size_t>(it->second) * kSlots + slot_of_joint(query.key.joint)) * dim;
  Rng rng(key_hash(options_.noise_seed, query.key));
  std::vector<double> out(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    out[i] = static_cast<float>(means_[base + i] + options_.noise * rng.normal());
  }
  return out;
}

}  // namespace ibpa

#include "ibpa/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "ibpa/binary_io.hpp"
#include "ibpa/errors.hpp"
#include "ibpa/random.hpp"

namespace ibpa {

namespace {

constexpr double kMinSpread = 1e-12;

void finish_moments(std::vector<double>& mean, std::vector<double>& scale, const std::vector<double>& sum,
                    const std::vector<double>& sq, std::size_t n) {
  mean.assign(sum.size(), 0.0);
  scale.assign(sum.size(), 0.0);
  if (n == 0) return;
  for (std::size_t i = 0; i < sum.size(); ++i) {
    mean[i] = sum[i] / static_cast<double>(n);
    const double var = std::max(0.0, sq[i] / static_cast<double>(n) - mean[i] * mean[i]);
    const double sd = std::sqrt(var);
    scale[i] = sd > kMinSpread ? 1.0 / sd : 0.0;
  }
}

void put_doubles(io::BinaryWriter& w, const std::vector<double>& v) { w.put_array<double>(v); }

}  // namespace

Standardizer Standardizer::fit(std::span<const SequenceSample> samples) {
  Standardizer s;
  if (samples.empty()) return s;
  const auto& first = samples.front();
  std::vector<double> cf_sum(first.cf_dim), cf_sq(first.cf_dim), d_sum(first.desc_dim), d_sq(first.desc_dim);
  std::size_t cf_n = 0, d_n = 0;
  for (const auto& x : samples) {
    if (x.cf_dim != first.cf_dim || x.desc_dim != first.desc_dim) throw ShapeError("samples differ in shape");
    for (int t = 0; t < x.segments; ++t) {
      if (!x.segment_mask[t]) continue;
      for (int m = 0; m < x.persons; ++m) {
        if (!x.person_present(t, m)) continue;
        const auto f = x.person_features(t, m);
        for (int i = 0; i < x.cf_dim; ++i) {
          cf_sum[i] += f[i];
          cf_sq[i] += f[i] * f[i];
        }
        ++cf_n;
      }
      const auto d = x.segment_descriptor(t);
      for (int i = 0; i < x.desc_dim; ++i) {
        d_sum[i] += d[i];
        d_sq[i] += d[i] * d[i];
      }
      ++d_n;
    }
  }
  finish_moments(s.cf_mean, s.cf_scale, cf_sum, cf_sq, cf_n);
  finish_moments(s.desc_mean, s.desc_scale, d_sum, d_sq, d_n);
  return s;
}

void Standardizer::apply(SequenceSample& x) const {
  if (empty()) return;
  if (static_cast<int>(cf_mean.size()) != x.cf_dim || static_cast<int>(desc_mean.size()) != x.desc_dim) {
    throw ShapeError("standardizer does not match sample dimensions");
  }
  for (int t = 0; t < x.segments; ++t) {
    if (!x.segment_mask[t]) continue;
    for (int m = 0; m < x.persons; ++m) {
      if (!x.person_present(t, m)) continue;
      auto f = x.person_features(t, m);
      for (int i = 0; i < x.cf_dim; ++i) f[i] = (f[i] - cf_mean[i]) * cf_scale[i];
    }
    auto d = x.segment_descriptor(t);
    for (int i = 0; i < x.desc_dim; ++i) d[i] = (d[i] - desc_mean[i]) * desc_scale[i];
  }
}

void write_checkpoint(std::ostream& out, const Checkpoint& c) {
  io::BinaryWriter w(out);
  w.put_magic("IBPACKPT");
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put_string(nlohmann::json(c.config).dump());
  w.put<std::uint64_t>(c.config.hash());
  w.put<std::uint64_t>(c.config.feature_hash());
  w.put<std::uint64_t>(c.classes.size());
  for (const auto& name : c.classes) w.put_string(name);

  const ModelDims& d = c.params.dims();
  for (int v : {d.cf_dim, d.desc_dim, d.persons, d.sub_hidden, d.fusion_hidden, d.classes}) w.put<std::int32_t>(v);
  w.put<std::uint8_t>(d.shared_sub ? 1 : 0);
  w.put_array<double>(c.params.values());

  const AdamOptions& o = c.adam.options;
  for (double v : {o.learning_rate, o.beta1, o.beta2, o.eps}) w.put<double>(v);
  w.put<std::int64_t>(c.adam.step);
  put_doubles(w, c.adam.m);
  put_doubles(w, c.adam.v);

  w.put<std::int32_t>(c.codebook.k());
  w.put<std::int32_t>(c.codebook.dim());
  w.put<std::uint64_t>(c.codebook.seed());
  put_doubles(w, c.codebook.centroids());

  put_doubles(w, c.standardizer.cf_mean);
  put_doubles(w, c.standardizer.cf_scale);
  put_doubles(w, c.standardizer.desc_mean);
  put_doubles(w, c.standardizer.desc_scale);
  w.put_string(c.rng_state);
  put_doubles(w, c.epoch_loss);
  if (!out) throw DataError("failed to write checkpoint");
}

Checkpoint read_checkpoint(std::istream& in, const std::string& source) {
  io::BinaryReader r(in, source);
  r.expect_magic("IBPACKPT");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  try {
    nlohmann::json::parse(r.get_string()).get_to(c.config);
  } catch (const nlohmann::json::exception& e) {
    r.fail(std::string("bad embedded config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    r.fail(std::string("bad embedded config: ") + e.what());
  }
  const auto hash = r.get<std::uint64_t>();
  const auto feature_hash = r.get<std::uint64_t>();
  if (hash != c.config.hash() || feature_hash != c.config.feature_hash()) r.fail("config hash mismatch");
  const auto n_classes = r.get<std::uint64_t>();
  if (n_classes > 1'000'000) r.fail("class count out of range");
  for (std::uint64_t i = 0; i < n_classes; ++i) c.classes.push_back(r.get_string());

  ModelDims d;
  d.cf_dim = r.get<std::int32_t>();
  d.desc_dim = r.get<std::int32_t>();
  d.persons = r.get<std::int32_t>();
  d.sub_hidden = r.get<std::int32_t>();
  d.fusion_hidden = r.get<std::int32_t>();
  d.classes = r.get<std::int32_t>();
  d.shared_sub = r.get<std::uint8_t>() != 0;
  if (d.cf_dim < 0 || d.desc_dim < 0 || d.persons < 1 || d.sub_hidden < 1 || d.fusion_hidden < 1 || d.classes < 2) {
    r.fail("invalid model dimensions");
  }
  c.params = ModelParams(d);
  const auto values = r.get_array<double>();
  if (values.size() != c.params.size()) r.fail("parameter count does not match model dimensions");
  std::copy(values.begin(), values.end(), c.params.values().begin());

  AdamOptions o;
  o.learning_rate = r.get<double>();
  o.beta1 = r.get<double>();
  o.beta2 = r.get<double>();
  o.eps = r.get<double>();
  c.adam.options = o;
  c.adam.step = r.get<std::int64_t>();
  c.adam.m = r.get_array<double>();
  c.adam.v = r.get_array<double>();
  if (c.adam.m.size() != values.size() || c.adam.v.size() != values.size()) r.fail("optimizer state size mismatch");

  const int k = r.get<std::int32_t>();
  const int dim = r.get<std::int32_t>();
  const auto seed = r.get<std::uint64_t>();
  auto centroids = r.get_array<double>();
  if (k < 1 || dim < 1 || centroids.size() != static_cast<std::size_t>(k) * dim) r.fail("invalid codebook");
  c.codebook = Codebook(k, dim, seed, std::move(centroids));

  c.standardizer.cf_mean = r.get_array<double>();
  c.standardizer.cf_scale = r.get_array<double>();
  c.standardizer.desc_mean = r.get_array<double>();
  c.standardizer.desc_scale = r.get_array<double>();
  c.rng_state = r.get_string();
  c.epoch_loss = r.get_array<double>();
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_checkpoint(in, path.string());
}

SequenceSample prepare_sample(const Checkpoint& ckpt, const ClipFeatures& clip) {
  SequenceSample s = assemble_sample(clip, ckpt.config, ckpt.codebook);
  ckpt.standardizer.apply(s);
  return s;
}

Checkpoint train_from_clips(std::span<const ClipFeatures> clips, const std::vector<std::string>& classes,
                            const PipelineConfig& cfg, const EpochObserver& on_epoch) {
  cfg.validate();
  if (clips.empty()) throw DataError("training set is empty");
  if (classes.size() < 2) throw DataError("training needs at least two classes");
  for (const auto& clip : clips) {
    if (clip.label < 0 || clip.label >= static_cast<int>(classes.size())) {
      throw DataError("video " + std::to_string(clip.video_id) + " has no valid label");
    }
  }

  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.classes = classes;
  ckpt.codebook = fit_codebook(clips, cfg);

  std::vector<SequenceSample> samples;
  samples.reserve(clips.size());
  for (const auto& clip : clips) samples.push_back(assemble_sample(clip, cfg, ckpt.codebook));
  if (cfg.standardize) {
    ckpt.standardizer = Standardizer::fit(samples);
    for (auto& s : samples) ckpt.standardizer.apply(s);
  }

  ModelDims dims;
  dims.cf_dim = samples.front().cf_dim;
  dims.desc_dim = samples.front().desc_dim;
  dims.persons = cfg.persons;
  dims.sub_hidden = cfg.sub_hidden;
  dims.fusion_hidden = cfg.fusion_hidden;
  dims.classes = static_cast<int>(classes.size());
  dims.shared_sub = cfg.shared_sub;
  ckpt.params = ModelParams(dims);

  Rng rng(cfg.seed);
  if (cfg.init == InitDistribution::Uniform) {
    ckpt.params.init_uniform(rng, cfg.init_range);
  } else {
    ckpt.params.init_normal(rng, cfg.init_stddev);
  }
  ckpt.adam = AdamState(cfg.adam, ckpt.params.size());

  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<SequenceSample> batch;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(std::span(order));
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(samples[order[i]]);
      LossAndGrad lg = loss_and_grad(ckpt.params, batch, cfg.l2);
      if (!std::isfinite(lg.loss)) {
        throw NumericError("non-finite loss in epoch " + std::to_string(epoch));
      }
      for (double g : lg.grad.values()) {
        if (!std::isfinite(g)) throw NumericError("non-finite gradient in epoch " + std::to_string(epoch));
      }
      adam_step(ckpt.adam, ckpt.params.values(), lg.grad.values());
      total += lg.loss * static_cast<double>(end - start);
    }
    const double mean = total / static_cast<double>(order.size());
    ckpt.epoch_loss.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  ckpt.rng_state = rng.state();
  return ckpt;
}

Checkpoint train(std::span<const VideoRecord> records, const std::vector<std::string>& classes,
                 const PipelineConfig& cfg, const EmbeddingProvider& provider, const EpochObserver& on_epoch) {
  cfg.validate();
  const auto clips = extract_all(records, cfg, provider);
  return train_from_clips(clips, classes, cfg, on_epoch);
}

void EvalReport::write_confusion_csv(std::ostream& out) const {
  out << "true\\predicted";
  for (const auto& c : classes) out << ',' << c;
  out << '\n';
  for (std::size_t i = 0; i < classes.size(); ++i) {
    out << classes[i];
    for (std::size_t j = 0; j < classes.size(); ++j) out << ',' << cell(static_cast<int>(i), static_cast<int>(j));
    out << '\n';
  }
}

EvalReport make_report(const std::vector<std::string>& classes, std::span<const int> labels,
                       std::span<const int> predictions) {
  if (labels.size() != predictions.size()) throw ShapeError("labels and predictions differ in length");
  const std::size_t c = classes.size();
  EvalReport r;
  r.classes = classes;
  r.samples = static_cast<std::int64_t>(labels.size());
  r.confusion.assign(c * c, 0);
  r.per_class_accuracy.assign(c, 0.0);
  r.predictions.assign(predictions.begin(), predictions.end());
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c || predictions[i] < 0 ||
        static_cast<std::size_t>(predictions[i]) >= c) {
      throw DataError("label or prediction outside the class vocabulary");
    }
    ++r.confusion[labels[i] * c + predictions[i]];
    correct += labels[i] == predictions[i] ? 1 : 0;
  }
  r.accuracy = labels.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(labels.size());
  for (std::size_t i = 0; i < c; ++i) {
    std::int64_t row = 0;
    for (std::size_t j = 0; j < c; ++j) row += r.confusion[i * c + j];
    if (row > 0) r.per_class_accuracy[i] = static_cast<double>(r.confusion[i * c + i]) / static_cast<double>(row);
  }
  return r;
}

EvalReport evaluate_clips(const Checkpoint& ckpt, std::span<const ClipFeatures> clips) {
  std::vector<int> labels(clips.size());
  std::vector<int> predictions(clips.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < clips.size(); i = next++) {
      labels[i] = clips[i].label;
      predictions[i] = predict(ckpt.params, prepare_sample(ckpt, clips[i]));
    }
  };
  const int workers = std::min<int>(ckpt.config.threads, static_cast<int>(std::max<std::size_t>(clips.size(), 1)));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  return make_report(ckpt.classes, labels, predictions);
}

EvalReport evaluate(const Checkpoint& ckpt, std::span<const VideoRecord> test,
                    const std::vector<std::string>& classes, const EmbeddingProvider& provider) {
  if (classes != ckpt.classes) throw DataError("class vocabulary of the test data differs from the checkpoint");
  const auto clips = extract_all(test, ckpt.config, provider);
  return evaluate_clips(ckpt, clips);
}

void require_feature_compatible(const Checkpoint& ckpt, const PipelineConfig& cfg) {
  if (ckpt.config.feature_hash() != cfg.feature_hash()) {
    throw DataError("feature settings differ from those the checkpoint was trained with");
  }
}

Split stratified_split(std::span<const int> labels, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction <= 1.0)) throw std::invalid_argument("test_fraction must be in [0, 1]");
  int max_label = -1;
  for (int l : labels) max_label = std::max(max_label, l);
  Rng rng(seed);
  Split split;
  for (int c = 0; c <= max_label; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == c) members.push_back(i);
    }
    rng.shuffle(std::span(members));
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(members.size())));
    for (std::size_t i = 0; i < members.size(); ++i) (i < n_test ? split.test : split.train).push_back(members[i]);
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

std::vector<Split> leave_one_out(std::size_t count) {
  std::vector<Split> out(count);
  for (std::size_t held = 0; held < count; ++held) {
    out[held].test = {held};
    for (std::size_t i = 0; i < count; ++i) {
      if (i != held) out[held].train.push_back(i);
    }
  }
  return out;
}

}  // namespace ibpa

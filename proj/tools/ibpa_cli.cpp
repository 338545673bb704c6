#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ibpa/config.hpp"
#include "ibpa/dataset.hpp"
#include "ibpa/embedding.hpp"
#include "ibpa/errors.hpp"
#include "ibpa/pipeline.hpp"
#include "ibpa/sequence_model.hpp"
#include "ibpa/synthetic.hpp"
#include "ibpa/training.hpp"

namespace {

using ibpa::PipelineConfig;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

// Config file first, then --desk, then individual flags as JSON patches.
struct ConfigFlags {
  std::string path;
  bool desk = false;
  json patch = json::object();

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", path, "JSON pipeline configuration");
    cmd->add_flag("--desk", desk, "start from the small single-core profile");
    add<int>(cmd, "--segment-length", "/segment_length", "frames per segment");
    add<int>(cmd, "--segments", "/segments", "segments per sample");
    add<int>(cmd, "--patch-size", "/patch_size", "patch side in pixels");
    add<int>(cmd, "--interp-max-gap", "/interp_max_gap", "longest gap filled by interpolation");
    add<double>(cmd, "--track-iou", "/track_iou", "box overlap needed to continue a track");
    add<int>(cmd, "--codebook-size", "/codebook_size", "k-means codewords");
    add<double>(cmd, "--psi", "/psi", "pair score offset");
    add<double>(cmd, "--attention-scale", "/attention/S", "attention scale");
    add<double>(cmd, "--attention-cap", "/attention/cap", "attention cap");
    add<std::string>(cmd, "--attention-mode", "/attention/mode", "as-written or proportional");
    add<std::string>(cmd, "--pairing", "/attention/pairing", "nearest or all-pairs-mean");
    add<std::string>(cmd, "--aggregation", "/attention/aggregation", "min or mean");
    add<std::string>(cmd, "--ablation", "/ablation", "full, baseline1 or baseline2");
    add<int>(cmd, "--sub-hidden", "/model/sub_hidden", "per-person hidden size");
    add<int>(cmd, "--fusion-hidden", "/model/fusion_hidden", "fusion hidden size");
    add<double>(cmd, "--lr", "/train/learning_rate", "Adam learning rate");
    add<double>(cmd, "--l2", "/train/l2", "weight penalty");
    add<int>(cmd, "--batch-size", "/train/batch_size", "minibatch size");
    add<int>(cmd, "--epochs", "/train/epochs", "training epochs");
    add<std::uint64_t>(cmd, "--seed", "/seed", "random seed");
    add<int>(cmd, "--threads", "/threads", "worker threads for extraction and evaluation");
  }

  template <typename T>
  void add(CLI::App* cmd, const std::string& flag, const std::string& pointer, const std::string& help) {
    cmd->add_option_function<T>(flag, [this, pointer](const T& v) { patch[json::json_pointer(pointer)] = v; }, help);
  }

  PipelineConfig resolve() const {
    PipelineConfig base = desk ? PipelineConfig::desk_profile() : PipelineConfig{};
    if (!path.empty()) {
      base = ibpa::load_config(path);
      if (desk) throw CLI::ValidationError("--desk", "cannot be combined with --config");
    }
    json j = base;
    j.merge_patch(patch);
    try {
      PipelineConfig cfg = j.get<PipelineConfig>();
      cfg.validate();
      return cfg;
    } catch (const json::exception& e) {
      throw CLI::ValidationError("config", e.what());
    } catch (const std::invalid_argument& e) {
      throw CLI::ValidationError("config", e.what());
    }
  }
};

struct EmbeddingFlags {
  std::string table;
  bool stub = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--embeddings", table, "binary embedding table");
    cmd->add_flag("--stub-embeddings", stub, "use the class-agnostic stub provider");
  }

  std::shared_ptr<const ibpa::EmbeddingProvider> make(const PipelineConfig& cfg) const {
    if (!table.empty() && stub) throw CLI::ValidationError("--embeddings", "cannot be combined with --stub-embeddings");
    if (stub) return std::make_shared<ibpa::StubEmbeddingProvider>(cfg.embedding_dim, cfg.seed);
    if (table.empty()) throw CLI::RequiredError("--embeddings or --stub-embeddings");
    return std::make_shared<ibpa::TableEmbeddingProvider>(ibpa::TableEmbeddingProvider::from_file(table));
  }
};

void log_line(const std::string& text) { std::cerr << text << '\n'; }

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ibpa::DataError("cannot open " + path + " for writing");
  return out;
}

int run_synth(const std::string& out_path, const std::string& emb_path, int count, std::uint64_t seed,
              std::int64_t first_id, std::optional<double> drop_rate, std::optional<double> noise, int dim) {
  ibpa::SyntheticSpec spec = ibpa::default_synthetic_spec();
  if (drop_rate) spec.drop_rate = *drop_rate;
  if (noise) spec.embedding_noise = *noise;
  spec.embedding_dim = dim;
  const auto data = ibpa::synth_generate(spec, count, seed, first_id);
  ibpa::save_dataset(out_path, data.dataset);
  ibpa::build_embedding_table(data.dataset, *data.provider).save(emb_path);
  log_line("wrote " + std::to_string(data.dataset.records.size()) + " clips to " + out_path + " and embeddings to " +
           emb_path);
  return kExitOk;
}

void write_feature_rows(std::ostream& out, const ibpa::ClipFeatures& clip,
                        const std::vector<std::vector<double>>& descriptors) {
  for (int t = 0; t < clip.real_segments; ++t) {
    for (int m = 0; m < clip.persons; ++m) {
      const std::size_t cell = static_cast<std::size_t>(t) * clip.persons + m;
      out << clip.video_id << ",cf," << t << ',' << clip.person_ids[m] << ',' << int(clip.person_mask[cell]);
      for (int i = 0; i < clip.cf_dim; ++i) out << ',' << clip.cf[cell * clip.cf_dim + i];
      out << '\n';
    }
    out << clip.video_id << ",descriptor," << t << ",-1,1";
    for (double v : descriptors[t]) out << ',' << v;
    out << '\n';
  }
}

int run_extract(const ConfigFlags& cf, const EmbeddingFlags& ef, const std::string& data_path,
                const std::string& codebook_in, const std::string& codebook_out, const std::string& out_path) {
  const PipelineConfig cfg = cf.resolve();
  const auto provider = ef.make(cfg);
  const auto data = ibpa::ingest(data_path);
  const auto clips = ibpa::extract_all(data.records, cfg, *provider);
  const ibpa::Codebook cb = codebook_in.empty() ? ibpa::fit_codebook(clips, cfg) : ibpa::Codebook::load(codebook_in);
  if (!codebook_out.empty()) cb.save(codebook_out);
  auto out = open_out(out_path);
  out.precision(17);
  out << "video,stream,segment,person,present,values...\n";
  for (const auto& clip : clips) write_feature_rows(out, clip, ibpa::descriptor_trace(clip, cfg, cb));
  log_line("extracted " + std::to_string(clips.size()) + " clips to " + out_path);
  return kExitOk;
}

int run_train(const ConfigFlags& cf, const EmbeddingFlags& ef, const std::string& data_path,
              const std::string& out_path, const std::string& loss_path) {
  const PipelineConfig cfg = cf.resolve();
  const auto provider = ef.make(cfg);
  const auto data = ibpa::ingest(data_path);
  if (data.records.empty()) throw ibpa::DataError(data_path + ": no training clips");
  std::vector<std::pair<int, double>> losses;
  const auto start = std::chrono::steady_clock::now();
  const auto ckpt = ibpa::train(data.records, data.classes, cfg, *provider, [&](int epoch, double loss) {
    losses.emplace_back(epoch, loss);
    char line[96];
    std::snprintf(line, sizeof line, "epoch %d loss %.6f", epoch, loss);
    log_line(line);
  });
  ibpa::save_checkpoint(out_path, ckpt);
  if (!loss_path.empty()) {
    auto out = open_out(loss_path);
    out.precision(17);
    out << "epoch,loss\n";
    for (const auto& [e, l] : losses) out << e << ',' << l << '\n';
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  log_line("saved checkpoint to " + out_path + " after " + std::to_string(secs) + " s");
  return kExitOk;
}

int run_eval(const ConfigFlags& cf, const EmbeddingFlags& ef, const std::string& ckpt_path,
             const std::string& data_path, const std::string& confusion_path, bool check_config) {
  const auto ckpt = ibpa::load_checkpoint(ckpt_path);
  if (check_config) ibpa::require_feature_compatible(ckpt, cf.resolve());
  const auto provider = ef.make(ckpt.config);
  const auto data = ibpa::ingest(data_path);
  const auto report = ibpa::evaluate(ckpt, data.records, data.classes, *provider);
  std::printf("samples %lld\naccuracy %.6f\n", static_cast<long long>(report.samples), report.accuracy);
  for (std::size_t c = 0; c < report.classes.size(); ++c) {
    std::printf("class %s %.6f\n", report.classes[c].c_str(), report.per_class_accuracy[c]);
  }
  if (!confusion_path.empty()) {
    auto out = open_out(confusion_path);
    report.write_confusion_csv(out);
  } else {
    report.write_confusion_csv(std::cout);
  }
  return kExitOk;
}

int run_gradcheck(int seeds, double tolerance, double step, int sub_hidden, int fusion_hidden, int classes,
                  int segments) {
  double worst = 0.0;
  for (int s = 0; s < seeds; ++s) {
    ibpa::Rng rng(ibpa::hash_combine(0x67726164, static_cast<std::uint64_t>(s)));
    ibpa::ModelDims dims;
    dims.cf_dim = 6;
    dims.desc_dim = 4;
    dims.persons = 2;
    dims.sub_hidden = sub_hidden;
    dims.fusion_hidden = fusion_hidden;
    dims.classes = classes;
    ibpa::ModelParams params(dims);
    params.init_uniform(rng, 0.5);
    std::vector<ibpa::SequenceSample> batch;
    for (int b = 0; b < 3; ++b) {
      ibpa::SequenceSample x(segments, dims.persons, dims.cf_dim, dims.desc_dim);
      for (double& v : x.cf) v = rng.uniform(-1, 1);
      for (double& v : x.descriptor) v = rng.uniform(-1, 1);
      std::fill(x.person_mask.begin(), x.person_mask.end(), 1);
      std::fill(x.segment_mask.begin(), x.segment_mask.end(), 1);
      x.label = static_cast<int>(rng.below(classes));
      batch.push_back(std::move(x));
    }
    ibpa::GradCheckOptions opts;
    opts.fd_step = step;
    const auto report = ibpa::grad_check(params, batch, opts);
    std::printf("seed %d max_rel_error %.3e at %s (checked %zu, skipped %zu)\n", s, report.max_rel_error,
                report.worst_name.c_str(), report.checked, report.skipped);
    worst = std::max(worst, report.max_rel_error);
  }
  std::printf("worst %.3e tolerance %.1e %s\n", worst, tolerance, worst < tolerance ? "ok" : "FAILED");
  return worst < tolerance ? kExitOk : kExitNumeric;
}

int run_inspect(const ConfigFlags& cf, const EmbeddingFlags& ef, const std::string& data_path,
                const std::string& ckpt_path, std::optional<std::int64_t> video, const std::string& delim) {
  std::optional<ibpa::Checkpoint> ckpt;
  if (!ckpt_path.empty()) ckpt = ibpa::load_checkpoint(ckpt_path);
  const PipelineConfig cfg = ckpt ? ckpt->config : cf.resolve();
  const auto provider = ef.make(cfg);
  auto data = ibpa::ingest(data_path);
  if (video) {
    std::erase_if(data.records, [&](const ibpa::VideoRecord& r) { return r.video_id != *video; });
    if (data.records.empty()) throw ibpa::DataError("video " + std::to_string(*video) + " not found");
  }
  const auto clips = ibpa::extract_all(data.records, cfg, *provider);
  const ibpa::Codebook cb = ckpt ? ckpt->codebook : ibpa::fit_codebook(clips, cfg);
  const char* part_names[] = {"right_arm", "left_arm", "right_leg", "left_leg", "torso"};
  std::cout << "kind" << delim << "video" << delim << "segment" << delim << "person";
  for (const char* p : part_names) std::cout << delim << p;
  std::cout << delim << "active\n";
  std::cout.precision(10);
  for (const auto& clip : clips) {
    for (int t = 0; t < clip.real_segments; ++t) {
      for (int m = 0; m < clip.persons; ++m) {
        const std::size_t cell = static_cast<std::size_t>(t) * clip.persons + m;
        if (!clip.person_mask[cell]) continue;
        std::cout << "lambda" << delim << clip.video_id << delim << t << delim << clip.person_ids[m];
        for (double l : clip.attention[cell].lambda) std::cout << delim << l;
        std::cout << delim << part_names[ibpa::index_of(clip.active_part[cell])] << '\n';
      }
    }
    const auto trace = ibpa::descriptor_trace(clip, cfg, cb);
    for (int t = 0; t < clip.real_segments; ++t) {
      std::cout << "descriptor" << delim << clip.video_id << delim << t;
      for (double v : trace[t]) std::cout << delim << v;
      std::cout << '\n';
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interacting body part attention pipeline"};
  app.require_subcommand(1);

  ConfigFlags cfg_flags;
  EmbeddingFlags emb_flags;
  std::function<int()> action;

  auto* synth = app.add_subcommand("synth", "generate a synthetic interaction dataset and embedding table");
  std::string synth_out, synth_emb;
  int synth_count = 40, synth_dim = 16;
  std::uint64_t synth_seed = 1;
  std::int64_t synth_first = 0;
  std::optional<double> synth_drop, synth_noise;
  synth->add_option("--out", synth_out, "pose file to write")->required();
  synth->add_option("--embeddings-out", synth_emb, "embedding table to write")->required();
  synth->add_option("--count", synth_count, "number of clips")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--first-id", synth_first, "video id of the first clip");
  synth->add_option("--drop-rate", synth_drop, "probability of dropping a joint");
  synth->add_option("--embedding-noise", synth_noise, "appearance noise level");
  synth->add_option("--dim", synth_dim, "embedding dimension")->check(CLI::PositiveNumber);
  synth->callback([&] {
    action = [&] {
      return run_synth(synth_out, synth_emb, synth_count, synth_seed, synth_first, synth_drop, synth_noise, synth_dim);
    };
  });

  auto* extract = app.add_subcommand("extract", "dump per-segment joint features and descriptors as CSV");
  std::string ex_data, ex_out, ex_cb_in, ex_cb_out;
  extract->add_option("--data", ex_data, "pose file")->required();
  extract->add_option("--out", ex_out, "CSV to write")->required();
  extract->add_option("--codebook", ex_cb_in, "existing codebook (otherwise fitted on --data)");
  extract->add_option("--codebook-out", ex_cb_out, "write the codebook used");
  cfg_flags.attach(extract);
  emb_flags.attach(extract);
  extract->callback([&] { action = [&] { return run_extract(cfg_flags, emb_flags, ex_data, ex_cb_in, ex_cb_out, ex_out); }; });

  auto* train = app.add_subcommand("train", "fit codebook and model, write a checkpoint");
  std::string tr_data, tr_out, tr_loss;
  train->add_option("--data", tr_data, "training pose file")->required();
  train->add_option("--out", tr_out, "checkpoint to write")->required();
  train->add_option("--loss-out", tr_loss, "per-epoch loss CSV");
  cfg_flags.attach(train);
  emb_flags.attach(train);
  train->callback([&] { action = [&] { return run_train(cfg_flags, emb_flags, tr_data, tr_out, tr_loss); }; });

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on labelled clips");
  std::string ev_ckpt, ev_data, ev_confusion;
  eval->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
  eval->add_option("--data", ev_data, "test pose file")->required();
  eval->add_option("--confusion", ev_confusion, "write the confusion matrix CSV here instead of stdout");
  cfg_flags.attach(eval);
  emb_flags.attach(eval);
  eval->callback([&] {
    const bool check = !cfg_flags.path.empty() || cfg_flags.desk || !cfg_flags.patch.empty();
    action = [&, check] { return run_eval(cfg_flags, emb_flags, ev_ckpt, ev_data, ev_confusion, check); };
  });

  auto* gradcheck = app.add_subcommand("gradcheck", "compare analytic and finite-difference gradients");
  int gc_seeds = 5, gc_sub = 8, gc_fusion = 16, gc_classes = 4, gc_segments = 4;
  double gc_tol = 1e-4, gc_step = 1e-5;
  gradcheck->add_option("--seeds", gc_seeds, "number of random models")->check(CLI::PositiveNumber);
  gradcheck->add_option("--tolerance", gc_tol, "maximum relative error");
  gradcheck->add_option("--step", gc_step, "central difference step");
  gradcheck->add_option("--sub-hidden", gc_sub)->check(CLI::PositiveNumber);
  gradcheck->add_option("--fusion-hidden", gc_fusion)->check(CLI::PositiveNumber);
  gradcheck->add_option("--classes", gc_classes)->check(CLI::Range(2, 1000));
  gradcheck->add_option("--segments", gc_segments)->check(CLI::PositiveNumber);
  gradcheck->callback([&] {
    action = [&] { return run_gradcheck(gc_seeds, gc_tol, gc_step, gc_sub, gc_fusion, gc_classes, gc_segments); };
  });

  auto* inspect = app.add_subcommand("inspect", "print attention traces and descriptor values");
  std::string in_data, in_ckpt, in_delim = "\t";
  std::optional<std::int64_t> in_video;
  inspect->add_option("--data", in_data, "pose file")->required();
  inspect->add_option("--checkpoint", in_ckpt, "take config and codebook from a checkpoint");
  inspect->add_option("--video", in_video, "only this video id");
  inspect->add_option("--delimiter", in_delim, "field separator");
  cfg_flags.attach(inspect);
  emb_flags.attach(inspect);
  inspect->callback(
      [&] { action = [&] { return run_inspect(cfg_flags, emb_flags, in_data, in_ckpt, in_video, in_delim); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    return action();
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ibpa::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const ibpa::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const ibpa::ShapeError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  }
}

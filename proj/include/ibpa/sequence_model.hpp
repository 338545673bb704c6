#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ibpa/random.hpp"

namespace ibpa {

// Gate blocks inside each 4H-row weight matrix, in storage order.
enum class Gate : int { Input = 0, Forget = 1, Output = 2, Candidate = 3 };
inline constexpr int kGateCount = 4;

struct ModelDims {
  int cf_dim = 0;    // per-person combined feature length
  int desc_dim = 0;  // flattened descriptor length (K*K)
  int persons = 2;
  int sub_hidden = 200;
  int fusion_hidden = 625;
  int classes = 2;
  bool shared_sub = true;

  int fusion_input() const { return persons * sub_hidden + desc_dim; }
  int sub_cells() const { return shared_sub ? 1 : persons; }

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

// Parameters of one gated recurrent cell, viewed inside the flat buffer.
// wx: 4H x I, wh: 4H x H, b: 4H; rows grouped by Gate.
template <typename T>
struct CellView {
  std::span<T> wx;
  std::span<T> wh;
  std::span<T> b;
  int input_dim = 0;
  int hidden_dim = 0;
};

// All trainable values live in one contiguous buffer so that optimizers,
// gradient checks and checkpoints treat the model as a flat vector. A
// gradient is simply another ModelParams with the same dims.
class ModelParams {
 public:
  ModelParams() = default;
  explicit ModelParams(const ModelDims& dims);

  const ModelDims& dims() const { return dims_; }
  std::size_t size() const { return data_.size(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  CellView<double> sub_cell(int person);
  CellView<const double> sub_cell(int person) const;
  CellView<double> fusion_cell();
  CellView<const double> fusion_cell() const;
  std::span<double> out_weight();  // classes x fusion_hidden
  std::span<const double> out_weight() const;
  std::span<double> out_bias();
  std::span<const double> out_bias() const;

  // Human-readable location of a flat index, e.g. "fusion.wx.forget[3,7]".
  std::string describe(std::size_t index) const;
  // Flat index range [first, last) of one gate block of a cell's wx/wh/b.
  struct Range {
    std::size_t first = 0;
    std::size_t last = 0;
  };
  std::vector<Range> gate_ranges(Gate gate) const;

  void init_uniform(Rng& rng, double range);
  void init_normal(Rng& rng, double stddev);

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  struct CellLayout {
    std::size_t offset = 0;
    int input_dim = 0;
    int hidden_dim = 0;
    std::size_t wx() const { return offset; }
    std::size_t wh() const { return offset + 4ULL * hidden_dim * input_dim; }
    std::size_t b() const { return wh() + 4ULL * hidden_dim * hidden_dim; }
    std::size_t end() const { return b() + 4ULL * hidden_dim; }
    friend bool operator==(const CellLayout&, const CellLayout&) = default;
  };

  template <typename T>
  static CellView<T> view(std::span<T> data, const CellLayout& l);

  ModelDims dims_;
  std::vector<CellLayout> sub_;
  CellLayout fusion_;
  std::size_t out_w_ = 0;
  std::size_t out_b_ = 0;
  std::vector<double> data_;
};

// Per-segment model input for one clip.
struct SequenceSample {
  int segments = 0;
  int persons = 0;
  int cf_dim = 0;
  int desc_dim = 0;
  std::vector<double> cf;                 // segments x persons x cf_dim
  std::vector<std::uint8_t> person_mask;  // segments x persons
  std::vector<double> descriptor;         // segments x desc_dim
  std::vector<std::uint8_t> segment_mask; // segments
  int label = -1;

  SequenceSample() = default;
  SequenceSample(int segments, int persons, int cf_dim, int desc_dim);

  std::span<double> person_features(int t, int m) {
    return {cf.data() + (static_cast<std::size_t>(t) * persons + m) * cf_dim, static_cast<std::size_t>(cf_dim)};
  }
  std::span<const double> person_features(int t, int m) const {
    return {cf.data() + (static_cast<std::size_t>(t) * persons + m) * cf_dim, static_cast<std::size_t>(cf_dim)};
  }
  std::span<double> segment_descriptor(int t) {
    return {descriptor.data() + static_cast<std::size_t>(t) * desc_dim, static_cast<std::size_t>(desc_dim)};
  }
  std::span<const double> segment_descriptor(int t) const {
    return {descriptor.data() + static_cast<std::size_t>(t) * desc_dim, static_cast<std::size_t>(desc_dim)};
  }
  bool person_present(int t, int m) const { return person_mask[static_cast<std::size_t>(t) * persons + m] != 0; }

  // Appends fully masked segments.
  void pad_to(int total_segments);
};

struct CellState {
  std::vector<double> h;
  std::vector<double> c;
};

// One step of the gated recurrence: sigmoid input/forget/output gates, tanh
// candidate, c' = f*c + i*g, h' = o*tanh(c').
CellState cell_step(const CellView<const double>& p, std::span<const double> x,
                    std::span<const double> h, std::span<const double> c);

// Class probabilities. Per-person streams feed their sub-cell on segments
// where the person is present; each unmasked segment concatenates the
// sub-cell hidden states (zero for absent people) with the descriptor and
// steps the fusion cell. Masked segments are skipped entirely.
std::vector<double> forward(const ModelParams& params, const SequenceSample& sample);

struct LossAndGrad {
  double loss = 0.0;
  ModelParams grad;
};

// Mean cross-entropy over the batch plus l2 * sum(w^2) / 2 over every
// parameter, with exact gradients by backpropagation through time.
LossAndGrad loss_and_grad(const ModelParams& params, std::span<const SequenceSample> batch,
                          double l2 = 0.0);

double batch_loss(const ModelParams& params, std::span<const SequenceSample> batch, double l2 = 0.0);

int predict(const ModelParams& params, const SequenceSample& sample);

struct GradCheckOptions {
  double fd_step = 1e-5;
  double l2 = 0.0;
  // Partials whose analytic and numeric magnitudes are both below this are
  // 0/0 cases and are counted as skipped.
  double skip_below = 1e-10;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::string worst_name;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

// Compares every analytic partial with a central finite difference. When
// `analytic` is given it is checked instead of a freshly computed gradient.
GradCheckReport grad_check(const ModelParams& params, std::span<const SequenceSample> batch,
                           const GradCheckOptions& options = {}, const ModelParams* analytic = nullptr);

}  // namespace ibpa

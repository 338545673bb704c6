#include "ibpa/sequence_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "ibpa/errors.hpp"

namespace ibpa {

namespace {

constexpr const char* kGateNames[kGateCount] = {"input", "forget", "output", "candidate"};

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Everything one cell step needs for its backward pass.
struct CellTrace {
  std::vector<double> x;
  std::vector<double> h_prev;
  std::vector<double> c_prev;
  std::vector<double> gates;  // activated i, f, o, g
  std::vector<double> c;
  std::vector<double> tanh_c;
  std::vector<double> h;
};

void check_cell_shapes(const CellView<const double>& p, std::size_t x, std::size_t h, std::size_t c) {
  if (x != static_cast<std::size_t>(p.input_dim) || h != static_cast<std::size_t>(p.hidden_dim) ||
      c != static_cast<std::size_t>(p.hidden_dim)) {
    std::ostringstream os;
    os << "cell_step: got input " << x << ", hidden " << h << ", cell " << c << "; expected input "
       << p.input_dim << ", hidden/cell " << p.hidden_dim;
    throw ShapeError(os.str());
  }
}

void run_cell(const CellView<const double>& p, CellTrace& t) {
  const int hd = p.hidden_dim;
  const int in = p.input_dim;
  t.gates.assign(4 * static_cast<std::size_t>(hd), 0.0);
  for (int r = 0; r < 4 * hd; ++r) {
    double z = p.b[r];
    const double* wx = p.wx.data() + static_cast<std::size_t>(r) * in;
    for (int k = 0; k < in; ++k) z += wx[k] * t.x[k];
    const double* wh = p.wh.data() + static_cast<std::size_t>(r) * hd;
    for (int k = 0; k < hd; ++k) z += wh[k] * t.h_prev[k];
    t.gates[r] = r < 3 * hd ? sigmoid(z) : std::tanh(z);
  }
  t.c.resize(hd);
  t.tanh_c.resize(hd);
  t.h.resize(hd);
  for (int u = 0; u < hd; ++u) {
    const double i = t.gates[u];
    const double f = t.gates[hd + u];
    const double o = t.gates[2 * hd + u];
    const double g = t.gates[3 * hd + u];
    t.c[u] = f * t.c_prev[u] + i * g;
    t.tanh_c[u] = std::tanh(t.c[u]);
    t.h[u] = o * t.tanh_c[u];
  }
}

// Accumulates parameter gradients into `grad`; dh and dc are the gradients
// flowing into this step's outputs; on return they hold the gradients with
// respect to h_prev and c_prev. dx receives the input gradient when non-empty.
void backprop_cell(const CellView<const double>& p, const CellView<double>& grad, const CellTrace& t,
                   std::vector<double>& dh, std::vector<double>& dc, std::span<double> dx) {
  const int hd = p.hidden_dim;
  const int in = p.input_dim;
  std::vector<double> dz(4 * static_cast<std::size_t>(hd));
  for (int u = 0; u < hd; ++u) {
    const double i = t.gates[u];
    const double f = t.gates[hd + u];
    const double o = t.gates[2 * hd + u];
    const double g = t.gates[3 * hd + u];
    const double tc = t.tanh_c[u];
    const double d_o = dh[u] * tc;
    const double d_c = dc[u] + dh[u] * o * (1.0 - tc * tc);
    dz[u] = d_c * g * i * (1.0 - i);
    dz[hd + u] = d_c * t.c_prev[u] * f * (1.0 - f);
    dz[2 * hd + u] = d_o * o * (1.0 - o);
    dz[3 * hd + u] = d_c * i * (1.0 - g * g);
    dc[u] = d_c * f;
  }
  std::fill(dh.begin(), dh.end(), 0.0);
  if (!dx.empty()) std::fill(dx.begin(), dx.end(), 0.0);
  for (int r = 0; r < 4 * hd; ++r) {
    const double d = dz[r];
    if (d == 0.0) continue;
    grad.b[r] += d;
    double* gwx = grad.wx.data() + static_cast<std::size_t>(r) * in;
    const double* wx = p.wx.data() + static_cast<std::size_t>(r) * in;
    for (int k = 0; k < in; ++k) {
      gwx[k] += d * t.x[k];
      if (!dx.empty()) dx[k] += d * wx[k];
    }
    double* gwh = grad.wh.data() + static_cast<std::size_t>(r) * hd;
    const double* wh = p.wh.data() + static_cast<std::size_t>(r) * hd;
    for (int k = 0; k < hd; ++k) {
      gwh[k] += d * t.h_prev[k];
      dh[k] += d * wh[k];
    }
  }
}

void check_sample(const ModelParams& params, const SequenceSample& s) {
  const ModelDims& d = params.dims();
  if (s.cf_dim != d.cf_dim || s.desc_dim != d.desc_dim || s.persons != d.persons) {
    std::ostringstream os;
    os << "sample dims (cf " << s.cf_dim << ", descriptor " << s.desc_dim << ", persons " << s.persons
       << ") do not match model (cf " << d.cf_dim << ", descriptor " << d.desc_dim << ", persons "
       << d.persons << ")";
    throw ShapeError(os.str());
  }
  const auto t = static_cast<std::size_t>(s.segments);
  if (s.cf.size() != t * s.persons * s.cf_dim || s.person_mask.size() != t * s.persons ||
      s.descriptor.size() != t * s.desc_dim || s.segment_mask.size() != t) {
    throw ShapeError("sample buffers do not match its declared segment count");
  }
  if (s.label >= d.classes) throw ShapeError("sample label outside the model's class range");
}

struct ForwardTrace {
  std::vector<std::vector<CellTrace>> sub;     // per person, per executed step
  std::vector<std::vector<int>> sub_segment;   // segment of each executed step
  std::vector<CellTrace> fusion;
  std::vector<int> fusion_segment;
  std::vector<double> h_final;
  std::vector<double> probs;
};

ForwardTrace run_forward(const ModelParams& params, const SequenceSample& s) {
  check_sample(params, s);
  const ModelDims& d = params.dims();
  const int hs = d.sub_hidden;
  const int hf = d.fusion_hidden;

  ForwardTrace tr;
  tr.sub.resize(d.persons);
  tr.sub_segment.resize(d.persons);
  std::vector<std::vector<double>> sub_h(d.persons, std::vector<double>(hs, 0.0));
  std::vector<std::vector<double>> sub_c(d.persons, std::vector<double>(hs, 0.0));
  std::vector<double> fh(hf, 0.0), fc(hf, 0.0);

  for (int t = 0; t < s.segments; ++t) {
    if (!s.segment_mask[t]) continue;
    CellTrace ft;
    ft.x.assign(d.fusion_input(), 0.0);
    for (int m = 0; m < d.persons; ++m) {
      if (!s.person_present(t, m)) continue;
      CellTrace st;
      auto x = s.person_features(t, m);
      st.x.assign(x.begin(), x.end());
      st.h_prev = sub_h[m];
      st.c_prev = sub_c[m];
      run_cell(params.sub_cell(m), st);
      sub_h[m] = st.h;
      sub_c[m] = st.c;
      std::copy(st.h.begin(), st.h.end(), ft.x.begin() + static_cast<std::ptrdiff_t>(m) * hs);
      tr.sub[m].push_back(std::move(st));
      tr.sub_segment[m].push_back(t);
    }
    auto desc = s.segment_descriptor(t);
    std::copy(desc.begin(), desc.end(), ft.x.begin() + static_cast<std::ptrdiff_t>(d.persons) * hs);
    ft.h_prev = fh;
    ft.c_prev = fc;
    run_cell(params.fusion_cell(), ft);
    fh = ft.h;
    fc = ft.c;
    tr.fusion.push_back(std::move(ft));
    tr.fusion_segment.push_back(t);
  }
  tr.h_final = fh;

  auto w = params.out_weight();
  auto b = params.out_bias();
  std::vector<double> logits(d.classes);
  for (int k = 0; k < d.classes; ++k) {
    double z = b[k];
    for (int u = 0; u < hf; ++u) z += w[static_cast<std::size_t>(k) * hf + u] * fh[u];
    logits[k] = z;
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  tr.probs.resize(d.classes);
  for (int k = 0; k < d.classes; ++k) {
    tr.probs[k] = std::exp(logits[k] - mx);
    total += tr.probs[k];
  }
  for (double& p : tr.probs) p /= total;
  return tr;
}

double l2_penalty(const ModelParams& params, double l2) {
  if (l2 == 0.0) return 0.0;
  double s = 0.0;
  for (double w : params.values()) s += w * w;
  return 0.5 * l2 * s;
}

double sample_loss(const std::vector<double>& probs, int label) {
  return -std::log(std::max(probs[label], std::numeric_limits<double>::min()));
}

}  // namespace

ModelParams::ModelParams(const ModelDims& dims) : dims_(dims) {
  if (dims.cf_dim < 1 || dims.desc_dim < 0 || dims.persons < 1 || dims.sub_hidden < 1 ||
      dims.fusion_hidden < 1 || dims.classes < 2) {
    throw ShapeError("model dimensions must be positive and classes >= 2");
  }
  std::size_t offset = 0;
  for (int i = 0; i < dims.sub_cells(); ++i) {
    CellLayout l{offset, dims.cf_dim, dims.sub_hidden};
    sub_.push_back(l);
    offset = l.end();
  }
  fusion_ = CellLayout{offset, dims.fusion_input(), dims.fusion_hidden};
  offset = fusion_.end();
  out_w_ = offset;
  out_b_ = out_w_ + static_cast<std::size_t>(dims.classes) * dims.fusion_hidden;
  data_.assign(out_b_ + dims.classes, 0.0);
}

template <typename T>
CellView<T> ModelParams::view(std::span<T> data, const CellLayout& l) {
  const std::size_t g = 4ULL * l.hidden_dim;
  return {data.subspan(l.wx(), g * l.input_dim), data.subspan(l.wh(), g * l.hidden_dim), data.subspan(l.b(), g),
          l.input_dim, l.hidden_dim};
}

CellView<double> ModelParams::sub_cell(int person) {
  return view(std::span<double>(data_), sub_[dims_.shared_sub ? 0 : person]);
}
CellView<const double> ModelParams::sub_cell(int person) const {
  return view(std::span<const double>(data_), sub_[dims_.shared_sub ? 0 : person]);
}
CellView<double> ModelParams::fusion_cell() { return view(std::span<double>(data_), fusion_); }
CellView<const double> ModelParams::fusion_cell() const { return view(std::span<const double>(data_), fusion_); }
std::span<double> ModelParams::out_weight() {
  return std::span<double>(data_).subspan(out_w_, out_b_ - out_w_);
}
std::span<const double> ModelParams::out_weight() const {
  return std::span<const double>(data_).subspan(out_w_, out_b_ - out_w_);
}
std::span<double> ModelParams::out_bias() { return std::span<double>(data_).subspan(out_b_); }
std::span<const double> ModelParams::out_bias() const { return std::span<const double>(data_).subspan(out_b_); }

std::string ModelParams::describe(std::size_t index) const {
  std::ostringstream os;
  auto cell_name = [&](const CellLayout& l, const std::string& name) {
    const int hd = l.hidden_dim;
    std::size_t local = 0;
    std::string part;
    int cols = 1;
    if (index < l.wh()) {
      part = "wx";
      local = index - l.wx();
      cols = l.input_dim;
    } else if (index < l.b()) {
      part = "wh";
      local = index - l.wh();
      cols = hd;
    } else {
      part = "b";
      local = index - l.b();
    }
    const std::size_t row = local / cols;
    const std::size_t col = local % cols;
    os << name << '.' << part << '.' << kGateNames[row / hd] << '[' << row % hd;
    if (part != "b") os << ',' << col;
    os << ']';
  };
  for (std::size_t i = 0; i < sub_.size(); ++i) {
    if (index >= sub_[i].offset && index < sub_[i].end()) {
      cell_name(sub_[i], "sub[" + std::to_string(i) + "]");
      return os.str();
    }
  }
  if (index >= fusion_.offset && index < fusion_.end()) {
    cell_name(fusion_, "fusion");
    return os.str();
  }
  if (index >= out_w_ && index < out_b_) {
    const std::size_t local = index - out_w_;
    os << "out.w[" << local / dims_.fusion_hidden << ',' << local % dims_.fusion_hidden << ']';
    return os.str();
  }
  os << "out.b[" << index - out_b_ << ']';
  return os.str();
}

std::vector<ModelParams::Range> ModelParams::gate_ranges(Gate gate) const {
  std::vector<Range> out;
  const auto g = static_cast<std::size_t>(gate);
  auto add = [&](const CellLayout& l) {
    const std::size_t hd = l.hidden_dim;
    out.push_back({l.wx() + g * hd * l.input_dim, l.wx() + (g + 1) * hd * l.input_dim});
    out.push_back({l.wh() + g * hd * hd, l.wh() + (g + 1) * hd * hd});
    out.push_back({l.b() + g * hd, l.b() + (g + 1) * hd});
  };
  for (const auto& l : sub_) add(l);
  add(fusion_);
  return out;
}

void ModelParams::init_uniform(Rng& rng, double range) {
  for (double& w : data_) w = rng.uniform(-range, range);
}

void ModelParams::init_normal(Rng& rng, double stddev) {
  for (double& w : data_) w = stddev * rng.normal();
}

SequenceSample::SequenceSample(int segments_, int persons_, int cf_dim_, int desc_dim_)
    : segments(segments_),
      persons(persons_),
      cf_dim(cf_dim_),
      desc_dim(desc_dim_),
      cf(static_cast<std::size_t>(segments_) * persons_ * cf_dim_, 0.0),
      person_mask(static_cast<std::size_t>(segments_) * persons_, 0),
      descriptor(static_cast<std::size_t>(segments_) * desc_dim_, 0.0),
      segment_mask(static_cast<std::size_t>(segments_), 0) {}

void SequenceSample::pad_to(int total_segments) {
  if (total_segments <= segments) return;
  segments = total_segments;
  const auto t = static_cast<std::size_t>(total_segments);
  cf.resize(t * persons * cf_dim, 0.0);
  person_mask.resize(t * persons, 0);
  descriptor.resize(t * desc_dim, 0.0);
  segment_mask.resize(t, 0);
}

CellState cell_step(const CellView<const double>& p, std::span<const double> x, std::span<const double> h,
                    std::span<const double> c) {
  check_cell_shapes(p, x.size(), h.size(), c.size());
  CellTrace t;
  t.x.assign(x.begin(), x.end());
  t.h_prev.assign(h.begin(), h.end());
  t.c_prev.assign(c.begin(), c.end());
  run_cell(p, t);
  return {std::move(t.h), std::move(t.c)};
}

std::vector<double> forward(const ModelParams& params, const SequenceSample& sample) {
  return run_forward(params, sample).probs;
}

int predict(const ModelParams& params, const SequenceSample& sample) {
  const auto probs = forward(params, sample);
  return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

double batch_loss(const ModelParams& params, std::span<const SequenceSample> batch, double l2) {
  if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
  double loss = 0.0;
  for (const auto& s : batch) loss += sample_loss(run_forward(params, s).probs, s.label);
  return loss / static_cast<double>(batch.size()) + l2_penalty(params, l2);
}

LossAndGrad loss_and_grad(const ModelParams& params, std::span<const SequenceSample> batch, double l2) {
  if (batch.empty()) throw std::invalid_argument("loss_and_grad: empty batch");
  const ModelDims& d = params.dims();
  const int hs = d.sub_hidden;
  const int hf = d.fusion_hidden;
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  LossAndGrad out{0.0, ModelParams(d)};
  ModelParams& grad = out.grad;

  for (const SequenceSample& s : batch) {
    if (s.label < 0) throw ShapeError("loss_and_grad: sample has no label");
    const ForwardTrace tr = run_forward(params, s);
    out.loss += sample_loss(tr.probs, s.label) * inv_b;

    std::vector<double> dlogits(tr.probs);
    dlogits[s.label] -= 1.0;
    for (double& v : dlogits) v *= inv_b;

    auto w = params.out_weight();
    auto gw = grad.out_weight();
    auto gb = grad.out_bias();
    std::vector<double> dh(hf, 0.0), dc(hf, 0.0);
    for (int k = 0; k < d.classes; ++k) {
      gb[k] += dlogits[k];
      for (int u = 0; u < hf; ++u) {
        gw[static_cast<std::size_t>(k) * hf + u] += dlogits[k] * tr.h_final[u];
        dh[u] += dlogits[k] * w[static_cast<std::size_t>(k) * hf + u];
      }
    }

    // Fusion cell, newest step first; keep dL/d(ff) per executed step.
    const std::size_t steps = tr.fusion.size();
    std::vector<std::vector<double>> dff(steps, std::vector<double>(d.fusion_input()));
    for (std::size_t k = steps; k-- > 0;) {
      backprop_cell(params.fusion_cell(), grad.fusion_cell(), tr.fusion[k], dh, dc, dff[k]);
    }

    // Map fusion steps back to segments, then run each sub-cell chain.
    std::vector<int> step_of_segment(s.segments, -1);
    for (std::size_t k = 0; k < steps; ++k) step_of_segment[tr.fusion_segment[k]] = static_cast<int>(k);
    for (int m = 0; m < d.persons; ++m) {
      std::vector<double> sdh(hs, 0.0), sdc(hs, 0.0);
      for (std::size_t k = tr.sub[m].size(); k-- > 0;) {
        const auto& from_ff = dff[step_of_segment[tr.sub_segment[m][k]]];
        for (int u = 0; u < hs; ++u) sdh[u] += from_ff[static_cast<std::size_t>(m) * hs + u];
        backprop_cell(params.sub_cell(m), grad.sub_cell(m), tr.sub[m][k], sdh, sdc, {});
      }
    }
  }

  if (l2 != 0.0) {
    out.loss += l2_penalty(params, l2);
    auto g = grad.values();
    auto p = params.values();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += l2 * p[i];
  }
  return out;
}

GradCheckReport grad_check(const ModelParams& params, std::span<const SequenceSample> batch,
                           const GradCheckOptions& options, const ModelParams* analytic) {
  ModelParams computed;
  if (analytic == nullptr) {
    computed = loss_and_grad(params, batch, options.l2).grad;
    analytic = &computed;
  }
  if (analytic->dims() != params.dims()) throw ShapeError("grad_check: gradient shape mismatch");

  GradCheckReport report;
  ModelParams probe = params;
  auto values = probe.values();
  const auto grads = analytic->values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + options.fd_step;
    const double up = batch_loss(probe, batch, options.l2);
    values[i] = saved - options.fd_step;
    const double down = batch_loss(probe, batch, options.l2);
    values[i] = saved;

    const double numeric = (up - down) / (2.0 * options.fd_step);
    const double scale = std::max(std::abs(numeric), std::abs(grads[i]));
    if (scale < options.skip_below) {
      ++report.skipped;
      continue;
    }
    ++report.checked;
    const double rel = std::abs(numeric - grads[i]) / scale;
    if (report.worst_name.empty() || rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
      report.worst_name = params.describe(i);
    }
  }
  return report;
}

}  // namespace ibpa

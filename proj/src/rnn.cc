#include "mdbt/rnn.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mdbt/error.h"
#include "mdbt/hash.h"
#include "mdbt/rng.h"

namespace mdbt {
namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Memory entries must stay strictly inside (0,1).
double memory_sigmoid(double x) {
  constexpr double lo = std::numeric_limits<double>::min();
  constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2;
  return std::clamp(sigmoid(x), lo, hi);
}

void axpy(size_t n, double a, const double* x, double* y) {
  for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double dot(size_t n, const double* x, const double* y) {
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

// y += M[:, offset + idx] * val for every sparse entry.
void add_sparse_columns(const Matrix& m, size_t offset, const SparseVector& v, double* y) {
  for (size_t k = 0; k < v.nnz(); ++k) axpy(m.rows(), v.value[k], m.col(offset + v.index[k]), y);
}

void check_finite(const SparseVector& v, const char* what) {
  for (double x : v.value) {
    if (!std::isfinite(x)) throw ValidationError(std::string("non-finite ") + what + " feature value");
  }
}

void validate_inputs(const SlotParams& params, const TurnFeatures& feats, const BeliefState& prev_belief,
                     const MemoryState& prev_memory) {
  const ModelDims& d = params.dims;
  if (feats.lexical.dim != d.lexical) {
    throw ValidationError("lexical feature dimension " + std::to_string(feats.lexical.dim) + " != model " +
                          std::to_string(d.lexical));
  }
  check_finite(feats.lexical, "lexical");
  for (const auto& g : feats.delex_groups) {
    if (g.dim != d.delex) {
      throw ValidationError("delexicalised feature dimension " + std::to_string(g.dim) + " != model " +
                            std::to_string(d.delex));
    }
    check_finite(g, "delexicalised");
  }
  if (feats.candidate_group.empty()) throw ValidationError("turn features without candidates");
  if (prev_belief.p.size() != feats.candidate_group.size()) {
    throw ValidationError("belief size " + std::to_string(prev_belief.p.size()) + " != candidates " +
                          std::to_string(feats.candidate_group.size()));
  }
  if (prev_memory.m.size() != d.memory) throw ValidationError("memory size mismatch");
}

}  // namespace

SlotParams::SlotParams(const ModelDims& d)
    : dims(d),
      w0(d.hidden, d.input()),
      w1(d.hidden, 0.0),
      b0(d.hidden, 0.0),
      wm0(d.memory, d.input()),
      wm1(d.memory, d.memory) {}

size_t SlotParams::parameter_count() const {
  size_t n = 0;
  for_each_array([&](const char*, std::span<const double> a) { n += a.size(); });
  return n;
}

std::string SlotParams::fingerprint() const {
  Fnv1a h;
  for_each_array([&](const char*, std::span<const double> a) { h.update(a.data(), a.size_bytes()); });
  return h.hex();
}

size_t BeliefState::argmax() const {
  size_t best = 0;
  for (size_t i = 1; i < p.size(); ++i) {
    if (p[i] > p[best]) best = i;
  }
  return best;
}

BeliefState initial_belief(size_t num_values) {
  BeliefState b;
  b.p.assign(num_values + 1, 0.0);
  b.p.back() = 1.0;
  return b;
}

MemoryState initial_memory(size_t memory_dim) { return {std::vector<double>(memory_dim, 0.5)}; }

std::vector<double> candidate_input(const ModelDims& d, const TurnFeatures& feats, const ForwardCache& cache,
                                    size_t candidate) {
  std::vector<double> x(d.input(), 0.0);
  for (size_t k = 0; k < feats.lexical.nnz(); ++k) x[feats.lexical.index[k]] = feats.lexical.value[k];
  const SparseVector& fd = feats.delex(candidate);
  for (size_t k = 0; k < fd.nnz(); ++k) x[d.delex_offset() + fd.index[k]] = fd.value[k];
  for (size_t j = 0; j < d.memory; ++j) x[d.memory_offset() + j] = cache.prev_memory.m[j];
  x[d.value_belief_column()] = cache.prev_belief.p[candidate];
  x[d.null_belief_column()] = cache.prev_belief.null();
  return x;
}

SlotParams init_params(const ModelDims& dims, uint64_t seed) {
  if (dims.hidden == 0 || dims.memory == 0) throw ValidationError("init_params: hidden and memory dims must be positive");
  SlotParams p(dims);
  Rng rng(derive_seed(seed, "init"));
  for (double& w : p.w0.data()) w = rng.uniform(-0.1, 0.1);
  for (double& w : p.w1) w = rng.uniform(-0.1, 0.1);
  for (double& w : p.wm0.data()) w = rng.uniform(-0.1, 0.1);
  for (double& w : p.wm1.data()) w = rng.uniform(-0.1, 0.1);
  return p;
}

TurnOutput forward_turn(const SlotParams& params, const TurnFeatures& feats, const BeliefState& prev_belief,
                        const MemoryState& prev_memory) {
  validate_inputs(params, feats, prev_belief, prev_memory);
  const ModelDims& d = params.dims;
  const size_t H = d.hidden, M = d.memory;
  const size_t n_cand = feats.candidate_group.size();
  const double p_null = prev_belief.null();

  // Pre-activation terms shared by all candidates.
  std::vector<double> base(params.b0);
  add_sparse_columns(params.w0, 0, feats.lexical, base.data());
  for (size_t j = 0; j < M; ++j) axpy(H, prev_memory.m[j], params.w0.col(d.memory_offset() + j), base.data());
  axpy(H, p_null, params.w0.col(d.null_belief_column()), base.data());

  std::vector<double> group_pre(feats.delex_groups.size() * H, 0.0);
  for (size_t u = 0; u < feats.delex_groups.size(); ++u) {
    add_sparse_columns(params.w0, d.delex_offset(), feats.delex_groups[u], group_pre.data() + u * H);
  }

  TurnOutput out;
  out.cache.prev_belief = prev_belief;
  out.cache.prev_memory = prev_memory;
  out.cache.hidden.assign(n_cand * H, 0.0);
  out.cache.scores.assign(n_cand, 0.0);
  const double* w_value = params.w0.col(d.value_belief_column());
  for (size_t c = 0; c < n_cand; ++c) {
    const double* gp = group_pre.data() + feats.candidate_group[c] * H;
    double* h = out.cache.hidden.data() + c * H;
    const double pv = prev_belief.p[c];
    for (size_t i = 0; i < H; ++i) h[i] = sigmoid(base[i] + gp[i] + w_value[i] * pv);
    out.cache.scores[c] = dot(H, params.w1.data(), h) + params.b1;
  }

  // Softmax over values and "no constraint", shifted by the max score.
  const auto& g = out.cache.scores;
  const double g_max = *std::max_element(g.begin(), g.end());
  out.belief.p.resize(n_cand);
  double z = 0.0;
  for (size_t c = 0; c < n_cand; ++c) z += (out.belief.p[c] = std::exp(g[c] - g_max));
  for (double& p : out.belief.p) p /= z;

  // Memory reads the null-candidate input.
  std::vector<double> zm(M, 0.0);
  add_sparse_columns(params.wm0, 0, feats.lexical, zm.data());
  add_sparse_columns(params.wm0, d.delex_offset(), feats.delex(feats.null_candidate()), zm.data());
  for (size_t j = 0; j < M; ++j) {
    axpy(M, prev_memory.m[j], params.wm0.col(d.memory_offset() + j), zm.data());
    axpy(M, prev_memory.m[j], params.wm1.col(j), zm.data());
  }
  axpy(M, p_null, params.wm0.col(d.value_belief_column()), zm.data());
  axpy(M, p_null, params.wm0.col(d.null_belief_column()), zm.data());
  out.memory.m.resize(M);
  for (size_t j = 0; j < M; ++j) out.memory.m[j] = memory_sigmoid(zm[j]);
  return out;
}

std::vector<TurnOutput> forward_dialog(const SlotParams& params, std::span<const TurnFeatures> turns,
                                       const BeliefState& init_belief, const MemoryState& init_memory) {
  std::vector<TurnOutput> out;
  out.reserve(turns.size());
  for (size_t t = 0; t < turns.size(); ++t) {
    const BeliefState& b = t ? out[t - 1].belief : init_belief;
    const MemoryState& m = t ? out[t - 1].memory : init_memory;
    out.push_back(forward_turn(params, turns[t], b, m));
  }
  return out;
}

std::vector<TurnOutput> forward_dialog(const SlotParams& params, std::span<const TurnFeatures> turns) {
  if (turns.empty()) return {};
  return forward_dialog(params, turns, initial_belief(turns[0].num_values()), initial_memory(params.dims.memory));
}

double dialog_loss(std::span<const BeliefState> trajectory, std::span<const int> gold) {
  if (trajectory.size() != gold.size()) throw ValidationError("dialog_loss: trajectory/gold length mismatch");
  double loss = 0.0;
  for (size_t t = 0; t < gold.size(); ++t) {
    loss -= std::log(std::max(trajectory[t].p.at(static_cast<size_t>(gold[t])), kProbabilityFloor));
  }
  return loss;
}

double dialog_loss(std::span<const TurnOutput> trajectory, std::span<const int> gold) {
  if (trajectory.size() != gold.size()) throw ValidationError("dialog_loss: trajectory/gold length mismatch");
  double loss = 0.0;
  for (size_t t = 0; t < gold.size(); ++t) {
    loss -= std::log(std::max(trajectory[t].belief.p.at(static_cast<size_t>(gold[t])), kProbabilityFloor));
  }
  return loss;
}

Gradients::Gradients(const ModelDims& dims) : g_(dims), active_(dims.input(), 0) {}

void Gradients::touch_all() {
  for (size_t j = 0; j < active_.size(); ++j) touch(j);
}

void Gradients::clear() {
  const size_t H = g_.dims.hidden, M = g_.dims.memory;
  for (uint32_t j : columns_) {
    std::fill_n(g_.w0.col(j), H, 0.0);
    std::fill_n(g_.wm0.col(j), M, 0.0);
    active_[j] = 0;
  }
  columns_.clear();
  std::fill(g_.w1.begin(), g_.w1.end(), 0.0);
  std::fill(g_.b0.begin(), g_.b0.end(), 0.0);
  g_.b1 = 0.0;
  std::fill(g_.wm1.data().begin(), g_.wm1.data().end(), 0.0);
}

double Gradients::squared_norm() const {
  const size_t H = g_.dims.hidden, M = g_.dims.memory;
  double s = 0.0;
  for (uint32_t j : columns_) s += dot(H, g_.w0.col(j), g_.w0.col(j)) + dot(M, g_.wm0.col(j), g_.wm0.col(j));
  s += dot(H, g_.w1.data(), g_.w1.data()) + dot(H, g_.b0.data(), g_.b0.data()) + g_.b1 * g_.b1;
  s += dot(g_.wm1.data().size(), g_.wm1.data().data(), g_.wm1.data().data());
  return s;
}

bool Gradients::all_finite() const { return std::isfinite(squared_norm()); }

void backward_dialog(const SlotParams& params, std::span<const TurnFeatures> turns,
                     std::span<const TurnOutput> trajectory, std::span<const int> gold, Gradients& out) {
  if (turns.size() != trajectory.size() || turns.size() != gold.size()) {
    throw ValidationError("backward_dialog: features/caches/gold length mismatch");
  }
  if (!(out.dims() == params.dims)) throw ValidationError("backward_dialog: gradient shape mismatch");
  if (turns.empty()) return;
  const ModelDims& d = params.dims;
  const size_t H = d.hidden, M = d.memory;
  SlotParams& g = out.values();
  const size_t vcol = d.value_belief_column(), ncol = d.null_belief_column();

  const size_t n_cand = turns[0].candidate_group.size();
  std::vector<double> dp_next(n_cand, 0.0), dm_next(M, 0.0);
  std::vector<double> dp_prev(n_cand), dm_prev(M);
  std::vector<double> dg(n_cand), dpre(H), shared_sum(H), group_sum, dz(M);

  for (size_t t = turns.size(); t-- > 0;) {
    const TurnFeatures& f = turns[t];
    const TurnOutput& o = trajectory[t];
    const auto& p = o.belief.p;
    const auto& pb = o.cache.prev_belief.p;
    const auto& pm = o.cache.prev_memory.m;
    const double p_null = pb.back();
    const size_t gold_c = static_cast<size_t>(gold[t]);
    if (f.candidate_group.size() != n_cand || gold_c >= n_cand) throw ValidationError("backward_dialog: bad candidate count or gold label");

    // dL/dg: softmax Jacobian applied to the gradient arriving from the
    // next turn's belief input, plus this turn's cross-entropy term.
    const double inner = dot(n_cand, p.data(), dp_next.data());
    for (size_t c = 0; c < n_cand; ++c) dg[c] = p[c] * (dp_next[c] - inner);
    if (p[gold_c] >= kProbabilityFloor) {
      for (size_t c = 0; c < n_cand; ++c) dg[c] += p[c];
      dg[gold_c] -= 1.0;
    }

    std::fill(dp_prev.begin(), dp_prev.end(), 0.0);
    std::fill(dm_prev.begin(), dm_prev.end(), 0.0);
    std::fill(shared_sum.begin(), shared_sum.end(), 0.0);
    group_sum.assign(f.delex_groups.size() * H, 0.0);

    double* gw_value = g.w0.col(vcol);
    const double* w_value = params.w0.col(vcol);
    for (size_t c = 0; c < n_cand; ++c) {
      const double* h = o.cache.hidden.data() + c * H;
      g.b1 += dg[c];
      axpy(H, dg[c], h, g.w1.data());
      for (size_t i = 0; i < H; ++i) dpre[i] = dg[c] * params.w1[i] * h[i] * (1.0 - h[i]);
      axpy(H, 1.0, dpre.data(), shared_sum.data());
      axpy(H, 1.0, dpre.data(), group_sum.data() + f.candidate_group[c] * H);
      axpy(H, pb[c], dpre.data(), gw_value);
      dp_prev[c] += dot(H, w_value, dpre.data());
    }
    out.touch(vcol);

    axpy(H, 1.0, shared_sum.data(), g.b0.data());
    for (size_t k = 0; k < f.lexical.nnz(); ++k) {
      const size_t j = f.lexical.index[k];
      out.touch(j);
      axpy(H, f.lexical.value[k], shared_sum.data(), g.w0.col(j));
    }
    for (size_t u = 0; u < f.delex_groups.size(); ++u) {
      const SparseVector& fd = f.delex_groups[u];
      for (size_t k = 0; k < fd.nnz(); ++k) {
        const size_t j = d.delex_offset() + fd.index[k];
        out.touch(j);
        axpy(H, fd.value[k], group_sum.data() + u * H, g.w0.col(j));
      }
    }
    for (size_t j = 0; j < M; ++j) {
      const size_t col = d.memory_offset() + j;
      out.touch(col);
      axpy(H, pm[j], shared_sum.data(), g.w0.col(col));
      dm_prev[j] += dot(H, params.w0.col(col), shared_sum.data());
    }
    out.touch(ncol);
    axpy(H, p_null, shared_sum.data(), g.w0.col(ncol));
    dp_prev.back() += dot(H, params.w0.col(ncol), shared_sum.data());

    // Memory update m' = sigmoid(Wm0 x_null + Wm1 m).
    const auto& m_new = o.memory.m;
    for (size_t j = 0; j < M; ++j) dz[j] = dm_next[j] * m_new[j] * (1.0 - m_new[j]);
    for (size_t k = 0; k < f.lexical.nnz(); ++k) axpy(M, f.lexical.value[k], dz.data(), g.wm0.col(f.lexical.index[k]));
    const SparseVector& fd_null = f.delex(f.null_candidate());
    for (size_t k = 0; k < fd_null.nnz(); ++k) {
      const size_t j = d.delex_offset() + fd_null.index[k];
      out.touch(j);
      axpy(M, fd_null.value[k], dz.data(), g.wm0.col(j));
    }
    for (size_t j = 0; j < M; ++j) {
      const size_t col = d.memory_offset() + j;
      axpy(M, pm[j], dz.data(), g.wm0.col(col));
      axpy(M, pm[j], dz.data(), g.wm1.col(j));
      dm_prev[j] += dot(M, params.wm0.col(col), dz.data()) + dot(M, params.wm1.col(j), dz.data());
    }
    axpy(M, p_null, dz.data(), g.wm0.col(vcol));
    axpy(M, p_null, dz.data(), g.wm0.col(ncol));
    dp_prev.back() += dot(M, params.wm0.col(vcol), dz.data()) + dot(M, params.wm0.col(ncol), dz.data());

    std::swap(dp_next, dp_prev);
    std::swap(dm_next, dm_prev);
  }
}

Gradients backward_dialog(const SlotParams& params, std::span<const TurnFeatures> turns,
                          std::span<const TurnOutput> trajectory, std::span<const int> gold) {
  Gradients g(params.dims);
  backward_dialog(params, turns, trajectory, gold, g);
  return g;
}

double sgd_step(SlotParams& params, const Gradients& grads, double lr, double clip_norm) {
  if (!(lr > 0.0) || !(clip_norm > 0.0)) throw ValidationError("sgd_step: lr and clip_norm must be positive");
  if (!(params.dims == grads.dims())) throw ValidationError("sgd_step: gradient shape mismatch");
  const double norm = std::sqrt(grads.squared_norm());
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient");
  const double step = norm > clip_norm ? lr * clip_norm / norm : lr;
  const SlotParams& g = grads.values();
  const size_t H = params.dims.hidden, M = params.dims.memory;
  for (uint32_t j : grads.touched_columns()) {
    axpy(H, -step, g.w0.col(j), params.w0.col(j));
    axpy(M, -step, g.wm0.col(j), params.wm0.col(j));
  }
  axpy(H, -step, g.w1.data(), params.w1.data());
  axpy(H, -step, g.b0.data(), params.b0.data());
  params.b1 -= step * g.b1;
  axpy(params.wm1.data().size(), -step, g.wm1.data().data(), params.wm1.data().data());
  return norm;
}

Gradients numeric_gradients(const SlotParams& params, std::span<const TurnFeatures> turns, std::span<const int> gold,
                            double eps) {
  Gradients out(params.dims);
  out.touch_all();
  SlotParams probe = params;
  std::vector<std::span<double>> probe_arrays, out_arrays;
  probe.for_each_array([&](const char*, std::span<double> a) { probe_arrays.push_back(a); });
  out.values().for_each_array([&](const char*, std::span<double> a) { out_arrays.push_back(a); });
  auto loss = [&] { return dialog_loss(std::span<const TurnOutput>(forward_dialog(probe, turns)), gold); };
  for (size_t a = 0; a < probe_arrays.size(); ++a) {
    for (size_t i = 0; i < probe_arrays[a].size(); ++i) {
      const double saved = probe_arrays[a][i];
      probe_arrays[a][i] = saved + eps;
      const double up = loss();
      probe_arrays[a][i] = saved - eps;
      const double down = loss();
      probe_arrays[a][i] = saved;
      out_arrays[a][i] = (up - down) / (2.0 * eps);
    }
  }
  return out;
}

double max_relative_error(const Gradients& analytic, const Gradients& numeric) {
  if (!(analytic.dims() == numeric.dims())) throw ValidationError("max_relative_error: shape mismatch");
  std::vector<std::span<const double>> a, n;
  analytic.values().for_each_array([&](const char*, std::span<const double> s) { a.push_back(s); });
  numeric.values().for_each_array([&](const char*, std::span<const double> s) { n.push_back(s); });
  double worst = 0.0;
  for (size_t k = 0; k < a.size(); ++k) {
    for (size_t i = 0; i < a[k].size(); ++i) {
      const double denom = std::max({std::abs(a[k][i]), std::abs(n[k][i]), kGradientCheckFloor});
      worst = std::max(worst, std::abs(a[k][i] - n[k][i]) / denom);
    }
  }
  return worst;
}

double check_gradients(const SlotParams& params, std::span<const TurnFeatures> turns, std::span<const int> gold,
                       double eps) {
  if (turns.empty()) return 0.0;
  const auto traj = forward_dialog(params, turns);
  const Gradients analytic = backward_dialog(params, turns, traj, gold);
  return max_relative_error(analytic, numeric_gradients(params, turns, gold, eps));
}

}  // namespace mdbt

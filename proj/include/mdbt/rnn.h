#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mdbt/features.h"

namespace mdbt {

// Candidate input layout: x_v = f_l ++ f_d(v) ++ m ++ p_v ++ p_null.
struct ModelDims {
  size_t lexical = 0;
  size_t delex = 0;
  size_t hidden = 0;
  size_t memory = 0;

  size_t input() const { return lexical + delex + memory + 2; }
  size_t delex_offset() const { return lexical; }
  size_t memory_offset() const { return lexical + delex; }
  size_t value_belief_column() const { return lexical + delex + memory; }
  size_t null_belief_column() const { return lexical + delex + memory + 1; }

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

// Dense column-major matrix. Sparse inputs touch whole columns, so columns
// are the contiguous unit.
class Matrix {
 public:
  Matrix() = default;
  Matrix(size_t rows, size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  size_t rows() const { return rows_; }
  size_t cols() const { return cols_; }
  double& operator()(size_t r, size_t c) { return data_[c * rows_ + r]; }
  double operator()(size_t r, size_t c) const { return data_[c * rows_ + r]; }
  double* col(size_t c) { return data_.data() + c * rows_; }
  const double* col(size_t c) const { return data_.data() + c * rows_; }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

// Weights of one slot tracker (or the single tied copy):
//   g_v = w1 . sigmoid(W0 x_v + b0) + b1
//   m'  = sigmoid(Wm0 x_null + Wm1 m)
struct SlotParams {
  ModelDims dims;
  Matrix w0;               // hidden x input
  std::vector<double> w1;  // hidden
  std::vector<double> b0;  // hidden
  double b1 = 0.0;
  Matrix wm0;              // memory x input
  Matrix wm1;              // memory x memory

  explicit SlotParams(const ModelDims& d = {});

  // Visits (name, storage) for every parameter array in a fixed order.
  template <typename F>
  void for_each_array(F&& f) {
    f("w0", std::span<double>(w0.data()));
    f("w1", std::span<double>(w1));
    f("b0", std::span<double>(b0));
    f("b1", std::span<double>(&b1, 1));
    f("wm0", std::span<double>(wm0.data()));
    f("wm1", std::span<double>(wm1.data()));
  }
  template <typename F>
  void for_each_array(F&& f) const {
    f("w0", std::span<const double>(w0.data()));
    f("w1", std::span<const double>(w1));
    f("b0", std::span<const double>(b0));
    f("b1", std::span<const double>(&b1, 1));
    f("wm0", std::span<const double>(wm0.data()));
    f("wm1", std::span<const double>(wm1.data()));
  }

  size_t parameter_count() const;
  std::string fingerprint() const;  // FNV-1a over the raw doubles

  friend bool operator==(const SlotParams&, const SlotParams&) = default;
};

// p[0..|V|-1] are the slot values, p.back() is "no constraint".
struct BeliefState {
  std::vector<double> p;

  size_t num_values() const { return p.size() - 1; }
  double null() const { return p.back(); }
  size_t argmax() const;  // first maximum in value order, null last

  friend bool operator==(const BeliefState&, const BeliefState&) = default;
};

struct MemoryState {
  std::vector<double> m;
  friend bool operator==(const MemoryState&, const MemoryState&) = default;
};

BeliefState initial_belief(size_t num_values);  // all mass on "no constraint"
MemoryState initial_memory(size_t memory_dim);   // sigmoid(0) everywhere

struct ForwardCache {
  BeliefState prev_belief;
  MemoryState prev_memory;
  std::vector<double> hidden;  // candidates x hidden, row-major, post-sigmoid
  std::vector<double> scores;  // g per candidate, null last
};

struct TurnOutput {
  BeliefState belief;
  MemoryState memory;
  ForwardCache cache;
};

// Dense x_v for candidate c, rebuilt from the cache (tests and audits).
std::vector<double> candidate_input(const ModelDims& dims, const TurnFeatures& feats, const ForwardCache& cache,
                                    size_t candidate);

// Uniform [-0.1, 0.1] weights, zero biases.
SlotParams init_params(const ModelDims& dims, uint64_t seed);

TurnOutput forward_turn(const SlotParams& params, const TurnFeatures& feats, const BeliefState& prev_belief,
                        const MemoryState& prev_memory);

std::vector<TurnOutput> forward_dialog(const SlotParams& params, std::span<const TurnFeatures> turns);
std::vector<TurnOutput> forward_dialog(const SlotParams& params, std::span<const TurnFeatures> turns,
                                       const BeliefState& init_belief, const MemoryState& init_memory);

inline constexpr double kProbabilityFloor = 1e-12;

// sum_t -log max(p_t[gold_t], 1e-12).
double dialog_loss(std::span<const TurnOutput> trajectory, std::span<const int> gold);
double dialog_loss(std::span<const BeliefState> trajectory, std::span<const int> gold);

// Gradient buffers shaped like SlotParams. Only input columns that a
// backward pass touched are tracked, so clearing and updating cost scales
// with the active features instead of the vocabulary.
class Gradients {
 public:
  explicit Gradients(const ModelDims& dims);

  SlotParams& values() { return g_; }
  const SlotParams& values() const { return g_; }
  const ModelDims& dims() const { return g_.dims; }

  void touch(size_t column) {
    if (!active_[column]) {
      active_[column] = 1;
      columns_.push_back(static_cast<uint32_t>(column));
    }
  }
  void touch_all();
  const std::vector<uint32_t>& touched_columns() const { return columns_; }

  void clear();
  double squared_norm() const;
  bool all_finite() const;

 private:
  SlotParams g_;
  std::vector<uint8_t> active_;
  std::vector<uint32_t> columns_;
};

// Exact gradients of dialog_loss through both recurrences (memory and the
// previous-belief inputs). Accumulates into `out`.
void backward_dialog(const SlotParams& params, std::span<const TurnFeatures> turns,
                     std::span<const TurnOutput> trajectory, std::span<const int> gold, Gradients& out);
Gradients backward_dialog(const SlotParams& params, std::span<const TurnFeatures> turns,
                          std::span<const TurnOutput> trajectory, std::span<const int> gold);

// params -= lr * g, with g rescaled to clip_norm when its L2 norm exceeds it.
// Returns the unclipped norm. Throws NumericError on non-finite gradients.
double sgd_step(SlotParams& params, const Gradients& grads, double lr, double clip_norm);

// Central differences of dialog_loss over every parameter.
Gradients numeric_gradients(const SlotParams& params, std::span<const TurnFeatures> turns, std::span<const int> gold,
                            double eps);

// max_i |a_i - n_i| / max(|a_i|, |n_i|, kGradientCheckFloor)
inline constexpr double kGradientCheckFloor = 1e-6;
double max_relative_error(const Gradients& analytic, const Gradients& numeric);

// BPTT vs central differences; 0 for an empty dialog.
double check_gradients(const SlotParams& params, std::span<const TurnFeatures> turns, std::span<const int> gold,
                       double eps);

}  // namespace mdbt

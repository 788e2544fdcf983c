#pragma once

#include <Eigen/Dense>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "edgetune/common.hpp"

namespace edgetune {

template <typename S>
class Tape;

template <typename S>
using MatrixRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using VectorX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// Dense row-major tensor with value semantics (copies share the buffer; ops
// never mutate their inputs). A tensor optionally carries a handle into a
// Tape, in which case ops consuming it record backward nodes. Without a
// handle it participates in forward computation only.
template <typename S>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<i64> shape)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<S>>(shape_numel(shape_), S(0))) {}

  Tensor(std::vector<i64> shape, std::vector<S> values)
      : shape_(std::move(shape)), data_(std::make_shared<std::vector<S>>(std::move(values))) {
    if (shape_numel(shape_) != static_cast<i64>(data_->size()))
      throw ShapeError("tensor data length " + std::to_string(data_->size()) +
                       " does not match shape " + shape_str(shape_));
  }

  static Tensor zeros(std::vector<i64> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<i64> shape, S v) {
    Tensor t(std::move(shape));
    for (S& x : *t.data_) x = v;
    return t;
  }

  static Tensor ones(std::vector<i64> shape) { return full(std::move(shape), S(1)); }

  static Tensor scalar(S v) { return Tensor({}, {v}); }

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }

  const std::vector<i64>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  i64 dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  i64 numel() const { return data_ ? static_cast<i64>(data_->size()) : 0; }
  bool defined() const { return static_cast<bool>(data_); }

  // 2-D accessors (rows = product of all but the last dimension)
  i64 rows() const {
    if (shape_.empty()) return 1;
    i64 r = 1;
    for (std::size_t i = 0; i + 1 < shape_.size(); ++i) r *= shape_[i];
    return r;
  }
  i64 cols() const { return shape_.empty() ? 1 : shape_.back(); }

  std::span<const S> data() const { return {data_->data(), data_->size()}; }
  std::span<S> mutable_data() { return {data_->data(), data_->size()}; }

  S value() const {
    if (numel() != 1) throw ContractError("value() requires a one-element tensor, got " + shape_str(shape_));
    return (*data_)[0];
  }

  S at(i64 i) const { return (*data_)[static_cast<std::size_t>(i)]; }
  S at(i64 r, i64 c) const { return (*data_)[static_cast<std::size_t>(r * cols() + c)]; }

  // Eigen views over the flat storage
  Eigen::Map<const MatrixRM<S>> mat() const { return {data_->data(), rows(), cols()}; }
  Eigen::Map<const MatrixRM<S>> mat(i64 r, i64 c) const {
    if (r * c != numel()) throw ShapeError("mat(" + std::to_string(r) + "," + std::to_string(c) + ") on " + shape_str(shape_));
    return {data_->data(), r, c};
  }
  Eigen::Map<MatrixRM<S>> mat_mut() { return {data_->data(), rows(), cols()}; }
  Eigen::Map<const VectorX<S>> vec() const { return {data_->data(), numel()}; }
  Eigen::Map<VectorX<S>> vec_mut() { return {data_->data(), numel()}; }

  // reshape copies (v1 has no views)
  Tensor reshaped(std::vector<i64> shape) const {
    if (shape_numel(shape) != numel())
      throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Tensor(std::move(shape), std::vector<S>(data_->begin(), data_->end()));
  }

  Tensor clone() const { return Tensor(shape_, std::vector<S>(data_->begin(), data_->end())); }

  bool same_values(const Tensor& o) const {
    if (shape_ != o.shape_) return false;
    for (i64 i = 0; i < numel(); ++i)
      if ((*data_)[static_cast<std::size_t>(i)] != (*o.data_)[static_cast<std::size_t>(i)]) return false;
    return true;
  }

  // tape attachment
  Tape<S>* tape() const { return tape_; }
  int node() const { return node_; }
  bool on_tape() const { return tape_ != nullptr && node_ >= 0; }
  void attach(Tape<S>* t, int node) {
    tape_ = t;
    node_ = node;
  }
  void detach() {
    tape_ = nullptr;
    node_ = -1;
  }

 private:
  std::vector<i64> shape_;
  std::shared_ptr<std::vector<S>> data_;
  Tape<S>* tape_ = nullptr;
  int node_ = -1;
};

}  // namespace edgetune

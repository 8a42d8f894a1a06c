#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "wflab/error.hpp"

namespace wflab {

template <class T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    v.assign(static_cast<size_t>(count(shape)), T(0));
  }
  Tensor(std::vector<int> s, std::vector<T> values) : shape(std::move(s)), v(std::move(values)) {
    if (v.size() != static_cast<size_t>(count(shape)))
      throw DataError("Tensor: value count does not match shape");
  }

  static long count(const std::vector<int>& s) {
    long n = 1;
    for (int d : s) n *= d;
    return n;
  }

  long size() const { return static_cast<long>(v.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  // [B,C,L] indexing
  T& at3(int b, int c, int l) {
    return v[(static_cast<size_t>(b) * shape[1] + c) * static_cast<size_t>(shape[2]) + l];
  }
  const T& at3(int b, int c, int l) const {
    return v[(static_cast<size_t>(b) * shape[1] + c) * static_cast<size_t>(shape[2]) + l];
  }
  // [B,F] indexing
  T& at2(int b, int f) { return v[static_cast<size_t>(b) * shape[1] + f]; }
  const T& at2(int b, int f) const { return v[static_cast<size_t>(b) * shape[1] + f]; }
};

// Named learnable (or tracked) array. Running statistics are carried as
// non-trainable params so checkpoints capture them.
template <class T>
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool trainable = true;

  Param(std::string n, std::vector<int> s, bool train = true)
      : name(std::move(n)), shape(std::move(s)), trainable(train) {
    auto n_elems = static_cast<size_t>(Tensor<T>::count(shape));
    value.assign(n_elems, T(0));
    grad.assign(n_elems, T(0));
  }

  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

}  // namespace wflab

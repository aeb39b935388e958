// Copyright 2026 The deepfactor Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "deepfactor/field.hpp"

namespace dmf {

// Weights (W_1, ..., W_N) of a deep linear factorisation; layers[0] is W_1
// and acts first on the input.
template <FieldScalar S>
struct LayerStack {
  std::vector<Mat<S>> layers;

  LayerStack() = default;
  explicit LayerStack(std::vector<Mat<S>> ws) : layers(std::move(ws)) {}

  static LayerStack zeros(Eigen::Index d, std::size_t n) {
    return LayerStack(std::vector<Mat<S>>(n, Mat<S>::Zero(d, d)));
  }
  static LayerStack identities(Eigen::Index d, std::size_t n) {
    return LayerStack(std::vector<Mat<S>>(n, Mat<S>::Identity(d, d)));
  }

  std::size_t depth() const { return layers.size(); }
  Eigen::Index dim() const { return layers.empty() ? 0 : layers.front().rows(); }

  // 1-based access matching W_j.
  const Mat<S>& w(std::size_t j) const { return layers[j - 1]; }
  Mat<S>& w(std::size_t j) { return layers[j - 1]; }

  bool finite() const {
    for (const auto& m : layers) {
      if (!m.allFinite()) return false;
    }
    return true;
  }

  void validate() const {
    if (layers.size() < 2) throw Error(Errc::DimMismatch, "LayerStack: need at least two layers");
    const Eigen::Index d = dim();
    for (const auto& m : layers) {
      if (m.rows() != d || m.cols() != d || d == 0) {
        throw Error(Errc::DimMismatch, "LayerStack: layers must all be d x d");
      }
    }
    if (!finite()) throw Error(Errc::NonFinite, "LayerStack: non-finite entries");
  }

  // Elementwise a += scale * b, used by the integrators.
  LayerStack& axpy(double scale, const std::vector<Mat<S>>& b) {
    for (std::size_t j = 0; j < layers.size(); ++j) layers[j] += scale * b[j];
    return *this;
  }

  bool operator==(const LayerStack& other) const {
    if (layers.size() != other.layers.size()) return false;
    for (std::size_t j = 0; j < layers.size(); ++j) {
      if (layers[j].rows() != other.layers[j].rows() || layers[j] != other.layers[j]) return false;
    }
    return true;
  }
};

}  // namespace dmf

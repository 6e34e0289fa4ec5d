// Copyright 2026 uttenc authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef UTTENC_MODULE_HPP_
#define UTTENC_MODULE_HPP_

#include <string>
#include <vector>

#include "uttenc/tensor.hpp"

namespace uttenc {

/// A learnable tensor with a stable name.
template <typename Scalar>
struct Parameter {
  std::string name;
  Tensor<Scalar> tensor;
  bool weight_decay = true;
};

/// Non-learned state saved alongside parameters (running statistics).
template <typename Scalar>
struct Buffer {
  std::string name;
  Scalar* data = nullptr;
  Shape shape;
};

template <typename Scalar>
struct ParameterSet {
  std::vector<Parameter<Scalar>> params;
  std::vector<Buffer<Scalar>> buffers;

  void add(std::string name, const Tensor<Scalar>& t, bool decay) {
    params.push_back({std::move(name), t, decay});
  }
  void add_buffer(std::string name, ArrayX<Scalar>& data) {
    buffers.push_back({std::move(name), data.data(), Shape{data.size()}});
  }
  void add_buffer(std::string name, RowMatrix<Scalar>& data) {
    buffers.push_back({std::move(name), data.data(), Shape{data.rows(), data.cols()}});
  }
  Index count() const {
    Index n = 0;
    for (const auto& p : params) n += p.tensor.size();
    return n;
  }
};

}  // namespace uttenc

#endif  // UTTENC_MODULE_HPP_

/*
 * chase-seg: semi-supervised multi-phase segmentation toolkit
 *
 * Copyright 2026 The chase-seg Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "core/tensor.hpp"

#include "core/error.hpp"

namespace chase {

Tensor& Tensor::operator+=(const Tensor& o) {
  CHASE_REQUIRE(same_shape(o), "tensor shape mismatch in +=");
  for (std::size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data) v *= s;
  return *this;
}

void accumulate(Tensor& dst, const Tensor& src, double scale) {
  if (src.empty()) return;
  if (dst.empty()) {
    dst = Tensor(src.c, src.h, src.w);
  }
  CHASE_REQUIRE(dst.same_shape(src), "tensor shape mismatch in accumulate");
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += scale * src.data[i];
}

}  // namespace chase

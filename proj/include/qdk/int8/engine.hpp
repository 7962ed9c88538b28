// Copyright 2026 The QDK Authors. All Rights Reserved.
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

#ifndef QDK_INT8_ENGINE_HPP_
#define QDK_INT8_ENGINE_HPP_

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

#include "qdk/error.hpp"
#include "qdk/int8/kernels.hpp"
#include "qdk/int8/qmodel.hpp"
#include "qdk/tensor.hpp"

namespace qdk {

// Runs one already-quantized sample [1, C, H, W] through every layer.
inline QuantizedTensor quantized_forward_sample(const QuantizedModel& qm, QuantizedTensor x) {
  for (const QuantizedLayer& l : qm.layers) {
    if (!(x.qp == l.input_qp)) {
      throw IntegrityError(std::string(to_string(l.kind)) +
                           ": input quantization parameters do not match the chain");
    }
    x = run_quantized_layer(x, l);
  }
  return x;
}

// Float images in, float logits out. The input is quantized once with the
// model's input parameters; everything in between is integer arithmetic.
// Samples are independent, so the result does not depend on `threads`.
inline Tensor quantized_forward(const QuantizedModel& qm, const Tensor& input, int threads = 1) {
  const ModelMeta& m = qm.meta;
  if (input.rank() != 4 || input.dim(1) != m.in_channels || input.dim(2) != m.in_h ||
      input.dim(3) != m.in_w) {
    throw DimensionError("input " + input.shape().ToString() + " does not match model input");
  }
  const int n = input.dim(0), classes = m.num_classes;
  const std::size_t sample = static_cast<std::size_t>(m.in_channels) * m.in_h * m.in_w;
  Tensor logits(Shape{n, classes});

  auto run_range = [&](int begin, int end) {
    for (int s = begin; s < end; ++s) {
      QuantizedTensor x(Shape{1, m.in_channels, m.in_h, m.in_w}, qm.input_qp);
      for (std::size_t i = 0; i < sample; ++i)
        x.data[i] = static_cast<std::uint8_t>(quantize(input[s * sample + i], qm.input_qp));
      const QuantizedTensor y = quantized_forward_sample(qm, std::move(x));
      for (int c = 0; c < classes; ++c)
        logits[static_cast<std::size_t>(s) * classes + c] =
            static_cast<float>(dequantize(y.data[c], y.qp));
    }
  };

  threads = std::clamp(threads, 1, std::max(1, n));
  if (threads == 1) {
    run_range(0, n);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    const int chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const int b = t * chunk, e = std::min(n, b + chunk);
      pool.emplace_back([&, t, b, e] {
        try {
          run_range(b, e);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& err : errors)
      if (err) std::rethrow_exception(err);
  }
  return logits;
}

}  // namespace qdk

#endif  // QDK_INT8_ENGINE_HPP_

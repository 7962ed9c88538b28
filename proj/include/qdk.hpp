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


// Umbrella header.

#ifndef QDK_QDK_HPP_
#define QDK_QDK_HPP_

#include "qdk/error.hpp"
#include "qdk/tensor.hpp"
#include "qdk/nn/layer.hpp"
#include "qdk/nn/forward.hpp"
#include "qdk/nn/loss.hpp"
#include "qdk/nn/optim.hpp"
#include "qdk/nn/models.hpp"
#include "qdk/quant/scheme.hpp"
#include "qdk/quant/fuse.hpp"
#include "qdk/quant/convert.hpp"
#include "qdk/int8/qmodel.hpp"
#include "qdk/int8/kernels.hpp"
#include "qdk/int8/engine.hpp"
#include "qdk/distill/kd.hpp"
#include "qdk/distill/train.hpp"
#include "qdk/data/dataset.hpp"
#include "qdk/data/augment.hpp"
#include "qdk/data/sampler.hpp"
#include "qdk/data/idx.hpp"
#include "qdk/io/model_io.hpp"
#include "qdk/metrics.hpp"

#endif  // QDK_QDK_HPP_

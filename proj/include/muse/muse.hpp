// Copyright 2026 The muse Authors. All Rights Reserved.
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

#include "muse/config.hpp"
#include "muse/cond_norm.hpp"
#include "muse/dataset.hpp"
#include "muse/error.hpp"
#include "muse/experiment.hpp"
#include "muse/gradcheck.hpp"
#include "muse/image.hpp"
#include "muse/model.hpp"
#include "muse/ops.hpp"
#include "muse/retrieval.hpp"
#include "muse/rng.hpp"
#include "muse/tensor.hpp"
#include "muse/trainer.hpp"
#include "muse/weather.hpp"

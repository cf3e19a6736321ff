// SPDX-License-Identifier: Apache-2.0
//
// Umbrella include for the whole library.

#pragma once

#include "advseg/common.hpp"
#include "advseg/labels.hpp"
#include "advseg/image.hpp"
#include "advseg/png_io.hpp"
#include "advseg/dataset.hpp"
#include "advseg/scenegen.hpp"
#include "advseg/tensor.hpp"
#include "advseg/layers.hpp"
#include "advseg/model.hpp"
#include "advseg/losses.hpp"
#include "advseg/optim.hpp"
#include "advseg/training.hpp"
#include "advseg/eval.hpp"

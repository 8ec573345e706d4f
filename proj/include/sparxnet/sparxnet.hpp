#pragma once

// Umbrella header.

#include "sparxnet/baselines.hpp"
#include "sparxnet/bounds.hpp"
#include "sparxnet/data.hpp"
#include "sparxnet/error.hpp"
#include "sparxnet/evalmetrics.hpp"
#include "sparxnet/io.hpp"
#include "sparxnet/model.hpp"
#include "sparxnet/nncore.hpp"
#include "sparxnet/rng.hpp"
#include "sparxnet/serialize.hpp"
#include "sparxnet/train.hpp"

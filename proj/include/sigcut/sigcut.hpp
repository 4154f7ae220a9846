#pragma once

// Umbrella header for the signed cut decomposition library.

#include "sigcut/decompose.hpp"
#include "sigcut/dense_tensor.hpp"
#include "sigcut/gram.hpp"
#include "sigcut/io.hpp"
#include "sigcut/kernels.hpp"
#include "sigcut/metrics.hpp"
#include "sigcut/rng.hpp"
#include "sigcut/search.hpp"
#include "sigcut/sign_vector.hpp"

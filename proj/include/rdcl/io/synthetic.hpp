#pragma once

#include <cstdint>

#include "rdcl/core/rng.hpp"
#include "rdcl/core/tensor.hpp"

namespace rdcl::io {

/// Procedural RGB test image in [0,1]: a smooth colour gradient background,
/// overlapping flat and shaded shapes with sharp edges, and mild
/// fine-grained texture. Fully determined by the generator state.
Tensor synthetic_image(int height, int width, Rng& rng);

}  // namespace rdcl::io

#pragma once

#include "illcond/models/autoencoder.hpp"

namespace illcond::models {

/// Rewrite layer `layer_index`'s weight through its SVD with the `count`
/// smallest singular values replaced by `sigma_floor`; every other singular
/// triple is kept. count may not exceed min(rows, cols).
AutoencoderModel inject_ill_conditioning(const AutoencoderModel& model, std::size_t layer_index,
                                         double sigma_floor, std::size_t count);

}  // namespace illcond::models

#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "illcond/models/autoencoder.hpp"

namespace illcond::models {

/// Text model format, version 1:
///
///     illcond-model 1
///     layers <n>
///     latent_index <k>
///     variational <0|1>
///     beta <value>
///     layer <i> out <rows> in <cols> activation <name>
///     weight <rows*cols values, row-major>
///     bias <rows values>
///     ... one layer/weight/bias triple per layer ...
///     end
///
/// Numbers use the shortest decimal form that round-trips to the same
/// double, so save/load is bit-exact.
std::string format_model(const AutoencoderModel& model);

/// Throws ParseError (with byte offset) on malformed text and
/// ValidationError when the parsed model breaks an invariant.
AutoencoderModel parse_model(std::string_view text);

void save_model(const AutoencoderModel& model, const std::filesystem::path& path);
AutoencoderModel load_model(const std::filesystem::path& path);

/// Shortest round-trip decimal representation of a double.
std::string format_double(double v);

}  // namespace illcond::models

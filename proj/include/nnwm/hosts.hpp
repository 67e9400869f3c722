#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nnwm/model.hpp"

namespace nnwm {

// Desk-scale host presets. All conv layers are 3x3, zero-padded, stride 1;
// weights use He fan-in initialization from the seed, biases start at zero.
//
//   toy-mlp:    dense(32) relu dense(C) head; no conv layer, no embed target.
//   small-cnn:  conv(16) relu conv(16) relu pool(2) dense(C) head;
//               embeds in the second conv (M = 3*3*16 = 144).
//   mini-wide:  three conv groups of widths 16/32/64 with a pool after each
//               group; the embeddable second conv of each group flattens to
//               M = 144 / 288 / 576. Default embed layer is the first group's
//               second conv.
enum class HostPreset { toy_mlp, small_cnn, mini_wide };

HostPreset host_preset_from_string(const std::string& s);
const char* host_preset_name(HostPreset preset);

HostModel build_host(HostPreset preset, std::uint64_t seed,
                     const std::vector<std::size_t>& input_shape = {8, 8, 3},
                     std::size_t classes = 10);

// The embeddable conv layer indices of a preset model, smallest M first.
std::vector<std::size_t> embeddable_layers(const HostModel& model);

// Random tiny host for gradient checking: varying conv/relu/pool/dense mix,
// always with a conv embed target, small enough for O(#params) loss
// evaluations.
HostModel sample_check_host(std::uint64_t seed);

}  // namespace nnwm

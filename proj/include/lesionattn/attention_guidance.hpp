#pragma once

// Soft attention guidance: lesion masks are softened to [rho, 1] and the
// attention map is pulled toward them through a cosine alignment loss.

#include <filesystem>

#include "lesionattn/types.hpp"

namespace lesionattn::guidance {

/// Real-valued mask with background at rho and lesion at 1.
struct SoftMask {
  Grid<double> values;
  double rho = 0.0;
};

/// Non-negative spatial map; entries sum to one for maps produced by the
/// model, but the loss itself is scale invariant.
using AttentionMap = Grid<double>;

/// rho + (1 - rho) * mask, elementwise. Throws when rho is outside [0,1].
SoftMask soften_mask(const LesionMask& mask, double rho);

/// Cosine between flattened target and attention. Throws on shape mismatch
/// or a zero-norm argument.
double cosine_alignment(const SoftMask& target, const AttentionMap& attn);

/// 1 - cosine_alignment.
double attention_loss(const SoftMask& target, const AttentionMap& attn);

/// d(loss)/d(attn), closed form:
///   -( t / (|t||a|) - (t.a) a / (|t||a|^3) ).
Grid<double> attention_loss_gradient(const SoftMask& target, const AttentionMap& attn);

/// Checks non-negativity and unit mass within tol.
bool is_distribution(const AttentionMap& attn, double tol = 1e-6);

/// Downsamples (or upsamples) a mask to rows x cols by area averaging, then
/// re-binarizes at 0.5.
LesionMask resize_mask(const LesionMask& mask, int rows, int cols);

/// Loads a single-channel image; pixel > 127 marks lesion.
LesionMask load_mask(const std::filesystem::path& path);

/// Writes a mask as an 8-bit single-channel PNG (lesion = 255).
void save_mask(const LesionMask& mask, const std::filesystem::path& path);

}  // namespace lesionattn::guidance

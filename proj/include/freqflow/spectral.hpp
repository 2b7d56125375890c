#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "freqflow/tensor.hpp"

// Unnormalised DCT-II analysis of action chunks and the frequency-domain
// similarity used by the consistency losses.
//
// For a length-H signal v the coefficients are
//     F(v)_k = sum_{n=0}^{H-1} v(n) * cos((pi/H) * (n + 1/2) * k),  k = 0..H-1,
// applied independently per action dimension of an (H x D) chunk. The
// transform is a fixed linear map; its adjoint is the transpose, so it is
// exactly differentiable on the tape (it lowers to a matmul with a cached
// constant matrix).

namespace fq::spectral {

enum class SimMode { none, spatial, freq_low, freq_high, freq_full, freq_adaptive };

SimMode parse_sim_mode(const std::string& name);
const char* sim_mode_name(SimMode mode);

// Band split point: coefficients k < cutoff are "low". Default ceil(H/4).
size_t default_band_cutoff(size_t H);

struct SimSpec {
    SimMode mode = SimMode::freq_adaptive;
    size_t band_cutoff = 0;  // 0 -> default_band_cutoff(H)
    bool squared = false;    // experimental: compare squared norms instead
};

// Plain-value 1-d transforms.
std::vector<double> dct2(const std::vector<double>& x);
std::vector<double> idct2(const std::vector<double>& f);

// Per-chunk transform, (H x D) -> (H x D), coefficient k in row k.
diff::Tensor dct2_chunk(diff::Tape& tape, const diff::Tensor& chunk);
diff::Tensor dct2_chunk_value(const diff::Tensor& chunk);  // no tape

// Batched transform over flattened chunks: rows of `batch` are (H*D) vectors
// laid out h-major; the H axis of every sample is transformed in one matmul.
diff::Tensor dct2_rows(diff::Tape& tape, const diff::Tensor& batch, size_t H, size_t D);

// Per-sample softmax (temperature 1) over the per-coefficient l2 differences
// of two coefficient batches (B x H*D). Returned weights are plain values
// (B x H): the weighting is detached by construction and never carries
// gradient.
diff::Tensor adaptive_weights(const diff::Tensor& freq_r, const diff::Tensor& freq_s,
                              size_t H, size_t D);

// Per-sample similarity penalty between two velocity batches (B x H*D),
// returned as a length-B tape tensor. Differentiable through both inputs
// (detaching one branch is the caller's choice).
diff::Tensor sim_batch(diff::Tape& tape, const diff::Tensor& vr,
                       const diff::Tensor& vs, size_t H, size_t D,
                       const SimSpec& spec);

// Single-pair convenience: (H x D) chunks -> scalar.
diff::Tensor sim(diff::Tape& tape, const diff::Tensor& vr, const diff::Tensor& vs,
                 const SimSpec& spec);

}  // namespace fq::spectral

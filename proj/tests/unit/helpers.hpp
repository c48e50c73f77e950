#pragma once

#include <cmath>
#include <random>
#include <string>

#include "dcond/phonemes.hpp"
#include "dcond/types.hpp"

namespace dcond::test {

inline std::string source_path(const std::string& rel) { return std::string(DCOND_SOURCE_DIR) + "/" + rel; }

inline PhonemeSeq seq(std::string_view text) { return parse_phoneme_string(text); }

/// Random non-empty sequence without boundary SILs or adjacent SILs.
inline PhonemeSeq random_phonemes(std::mt19937_64& rng, int max_len) {
  std::uniform_int_distribution<int> len(1, max_len);
  std::uniform_int_distribution<int> ph(0, kNumPhonemes - 1);
  const int n = len(rng);
  PhonemeSeq out;
  for (int i = 0; i < n; ++i) {
    int p = ph(rng);
    const bool edge = i == 0 || i == n - 1;
    while (p == kSilIndex && (edge || out.back().is_sil())) p = ph(rng);
    out.push_back(Phoneme(p));
  }
  return out;
}

/// Random T x C log-posteriorgram.
inline MatrixD random_posteriorgram(std::mt19937_64& rng, int frames, int classes, double scale = 2.0) {
  std::normal_distribution<double> n(0.0, scale);
  MatrixD logits(frames, classes);
  for (int t = 0; t < frames; ++t)
    for (int c = 0; c < classes; ++c) logits(t, c) = n(rng);
  MatrixD out(frames, classes);
  for (int t = 0; t < frames; ++t) {
    const double m = logits.row(t).maxCoeff();
    const double lse = m + std::log((logits.row(t).array() - m).exp().sum());
    out.row(t) = logits.row(t).array() - lse;
  }
  return out;
}

}  // namespace dcond::test

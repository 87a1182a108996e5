// SPDX-License-Identifier: Apache-2.0
/**
 * @file   synth_task.cpp
 * @brief  Seeded motif-classification dataset.
 */
#include <numeric>

#include "specattn/error.hpp"
#include "specattn/harness.hpp"
#include "specattn/random.hpp"

namespace specattn {

namespace {

constexpr int kFirstBackgroundToken = 2 * static_cast<int>(kNumClasses);

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
}

std::vector<Example> generate(std::size_t count, std::size_t seq_len, Rng& rng) {
  std::vector<int> labels(count);
  for (std::size_t i = 0; i < count; ++i) labels[i] = static_cast<int>(i % kNumClasses);
  shuffle(labels, rng);

  const auto background = static_cast<std::uint64_t>(kVocabSize - kFirstBackgroundToken);
  std::vector<std::size_t> positions(seq_len);
  std::vector<Example> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    Example& ex = out[i];
    ex.label = labels[i];
    ex.tokens.resize(seq_len);
    for (int& t : ex.tokens) t = kFirstBackgroundToken + static_cast<int>(rng.index(background));

    // three distinct slots: motif pair then the distractor
    std::iota(positions.begin(), positions.end(), 0);
    for (std::size_t k = 0; k < 3; ++k)
      std::swap(positions[k], positions[k + rng.index(seq_len - k)]);
    const int other = (ex.label + 1 + static_cast<int>(rng.index(kNumClasses - 1))) %
                      static_cast<int>(kNumClasses);
    ex.tokens[positions[0]] = 2 * ex.label;
    ex.tokens[positions[1]] = 2 * ex.label + 1;
    ex.tokens[positions[2]] = 2 * other + static_cast<int>(rng.index(2));
  }
  return out;
}

}  // namespace

Dataset synth_task(std::uint64_t seed, std::size_t n_train, std::size_t n_eval,
                   std::size_t seq_len) {
  if (seq_len < 3) throw ConfigError("synth_task: sequences need at least 3 tokens");
  Rng train_rng(Rng::derive(seed, 1));
  Rng eval_rng(Rng::derive(seed, 2));
  Dataset d;
  d.train = generate(n_train, seq_len, train_rng);
  d.eval = generate(n_eval, seq_len, eval_rng);
  return d;
}

}  // namespace specattn

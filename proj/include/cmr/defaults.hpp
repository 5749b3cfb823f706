#pragma once

namespace cmr::defaults {

// Pipeline-wide constants. The CLI reads its flag defaults from here so the
// whole tree has a single source of truth.
inline constexpr int topics = 40;

// SGD schedule.
inline constexpr double base_learning_rate = 0.001;
inline constexpr double momentum = 0.9;
inline constexpr double lr_decay_factor = 0.1;
inline constexpr long long lr_decay_every = 200000;
inline constexpr int batch_size = 128;

// Corpus filtering.
inline constexpr int min_words = 50;
inline constexpr int min_df = 5;
inline constexpr double max_df_fraction = 0.5;
inline constexpr int max_vocab_size = 10000;

// Topic-model hyperparameters.
inline constexpr double beta = 0.01;
inline constexpr int lda_sweeps = 1000;
inline constexpr int infer_sweeps = 1000;
inline constexpr int infer_burn_in = 200;

inline constexpr double kl_epsilon = 1e-10;

inline double alpha_for(int k) { return 50.0 / static_cast<double>(k); }

}  // namespace cmr::defaults

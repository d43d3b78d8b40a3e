"""One recognition game, played by hand.

A game seats K guests, secretly marks one as the speaker, and hands out
that speaker's utterance embedding for every requested word.  After T
requests a guesser scores the guests and the episode pays 1 exactly when
the argmax lands on the target.
"""

import numpy as np

from isrlab import (GameConfig, SynthConfig, generate_synthetic, new_game,
                    step, terminal_reward, write_episode_trace)

corpus = generate_synthetic(SynthConfig(dimension=16, vocab_size=8,
                                        train_speakers=10, test_speakers=0,
                                        enrollments=4, seed=7))

# %% Deal a game
rng = np.random.default_rng(3)
state = new_game(corpus, GameConfig(n_guests=4, word_budget=3), rng)
print("guests:", state.guest_ids, "| secret target index:", state.target_index)

# %% Request three words; each step returns a fresh state
for word in (1, 5, 2):
    outcome = step(state, word, corpus)
    state = outcome.state
    print(f"turn {state.turn}: requested {corpus.vocab[word]!r}, "
          f"terminal={outcome.terminal}, reward={outcome.reward}")

# %% Score the guests by cosine between the mean utterance and each print
pooled = state.uttered_matrix().mean(axis=0)
scores = np.array([
    state.guest_prints[k] @ pooled
    / (np.linalg.norm(state.guest_prints[k]) * np.linalg.norm(pooled))
    for k in range(4)])
probs = np.exp(scores) / np.exp(scores).sum()
print("cosine-based guest probabilities:", np.round(probs, 3))
print("reward:", terminal_reward(state, probs))

# %% Dump the episode for inspection
write_episode_trace("episode_demo.jsonl", state)
print("trace written to episode_demo.jsonl (one record per turn)")

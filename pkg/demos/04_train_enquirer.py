"""Train the word-selection policy with PPO and measure its edge.

The enquirer sees the mean guest print and the utterances collected so
far (a biLSTM over the prefix, with a learned start token at turn zero)
and picks the next word.  Its only reward is whether the frozen guesser
identifies the speaker at the end of the episode.  On this corpus word
informativeness depends on the speaker, so a policy that adapts beats any
fixed or random word list.
"""

from isrlab import (GuesserTrainConfig, PpoConfig, SynthConfig, synthetic_split,
                    evaluate_enquirer, evaluate_guesser, train_enquirer,
                    train_guesser)

# %% A trained, frozen guesser is the reward model
train, test = synthetic_split(SynthConfig(seed=0))
guesser, _ = train_guesser(train, test, GuesserTrainConfig(
    n_games=120_000, valid_games=2000, eval_every=60, seed=0))
random_acc, _ = evaluate_guesser(guesser, test, 5, 3, "random", 5000, seed=9)
print(f"guesser with random words (held-out speakers): {random_acc:.3f}")

# %% PPO: clipped surrogate, entropy bonus, value baseline, GAE
config = PpoConfig(episodes=30_000, seed=0)
enquirer, curve = train_enquirer(guesser, train, config)
print("\nreward moving average along training:")
for row in curve[:: max(1, len(curve) // 10)]:
    print(f"  episode {row['episode']:>6d}  reward {row['moving_avg_reward']:.3f}  "
          f"entropy {row['entropy']:.2f}")

# %% Greedy evaluation on held-out speakers
result = evaluate_enquirer(enquirer, guesser, test, 5, 3, 5000, seed=9)
print(f"\nenquirer (greedy, no repeats): {result.success_rate:.3f} "
      f"vs random {random_acc:.3f} "
      f"({(result.success_rate - random_acc) * 100:+.1f} points)")
print("first three requested tuples:",
      [tuple(int(w) for w in t) for t in result.word_tuples[:3]])

enquirer.save("enquirer_demo.json")
print("checkpoint written to enquirer_demo.json")

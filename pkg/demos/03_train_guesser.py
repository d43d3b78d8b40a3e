"""Train the guesser and map out what it can and cannot do.

The guesser averages the guest prints into a context vector, attends over
the uttered embeddings with that context, and scores every guest against
the pooled utterance.  Training is plain cross-entropy on games with
uniformly random word sets.  Two sweeps reproduce its characteristic
behavior: more words help, more guests hurt.
"""

from isrlab import (GuesserTrainConfig, SynthConfig, synthetic_split,
                    cosine_nearest_print_accuracy, evaluate_guesser,
                    train_guesser)

# %% Desk-scale corpus and a short training run (larger runs only help)
train, test = synthetic_split(SynthConfig(seed=0))
config = GuesserTrainConfig(n_games=60_000, valid_games=2000, eval_every=20,
                            seed=0)
model, curve = train_guesser(train, test, config)
print("validation accuracy along training:")
for row in curve:
    print(f"  {row['games_seen']:>7d} games  loss {row['train_loss']:.3f}  "
          f"accuracy {row['valid_accuracy']:.3f}")

# %% Compare with a parameter-free yardstick
acc, err = evaluate_guesser(model, test, 5, 3, "random", 5000, seed=1)
oracle, _ = cosine_nearest_print_accuracy(test, 5, 3, 5000, seed=1)
print(f"\nheld-out accuracy {acc:.3f} +- {err:.3f}; "
      f"cosine nearest-print yardstick {oracle:.3f}")

# %% More words help...
print("\nword sweep (K=5):")
for budget in (1, 2, 3, 8, 20):
    acc, _ = evaluate_guesser(model, test, 5, budget, "random", 5000, seed=2)
    print(f"  T={budget:>2d}: {acc:.3f}")

# %% ...and more guests hurt
print("\nguest sweep (T=3):")
for guests in (2, 5, 10, 25, 50):
    acc, _ = evaluate_guesser(model, test, guests, 3, "random", 5000, seed=3)
    print(f"  K={guests:>2d}: {acc:.3f}")

model.save("guesser_demo.json")
print("\ncheckpoint written to guesser_demo.json")

"""Interactive speaker recognition game lab.

A guesser identifies a speaker among K voice prints from the embeddings of
words the speaker uttered; an enquirer policy, trained with PPO, picks
which words to request under a tight budget.  Corpora are synthetic or
loaded from a JSON Lines interchange format, and everything runs on plain
numpy with a fully checked hand-rolled gradient stack.
"""

from .corpus import (Corpus, CorpusFormatError, SynthConfig, corpus_fingerprint,
                     generate_synthetic, load_corpus, save_corpus, split_speakers,
                     synthetic_split)
from .enquirer import (EnquirerConfig, EnquirerModel, PpoConfig, RewardCollapse,
                       Trajectory, compute_gae, enquirer_forward, evaluate_enquirer,
                       ppo_update, sample_action, sample_actions, train_enquirer)
from .evaluation import (DiversityReport, HeuristicConfig, HeuristicResult,
                         SweepResult, cosine_nearest_print_accuracy, diversity_index,
                         guest_sweep, heuristic_baseline, jaccard, word_sweep)
from .game import (GameConfig, GameState, StepOutcome, new_game, step,
                   terminal_reward, write_episode_trace)
from .guesser import (GuesserConfig, GuesserModel, GuesserTrainConfig,
                      TrainingDiverged, evaluate_guesser, guesser_forward,
                      guesser_loss, train_guesser)

__version__ = "0.1.0"

__all__ = [
    "Corpus", "CorpusFormatError", "SynthConfig", "corpus_fingerprint",
    "generate_synthetic", "load_corpus", "save_corpus", "split_speakers",
    "synthetic_split",
    "GameConfig", "GameState", "StepOutcome", "new_game", "step",
    "terminal_reward", "write_episode_trace",
    "GuesserConfig", "GuesserModel", "GuesserTrainConfig", "TrainingDiverged",
    "evaluate_guesser", "guesser_forward", "guesser_loss", "train_guesser",
    "EnquirerConfig", "EnquirerModel", "PpoConfig", "RewardCollapse", "Trajectory",
    "compute_gae", "enquirer_forward", "evaluate_enquirer", "ppo_update",
    "sample_action", "sample_actions", "train_enquirer",
    "DiversityReport", "HeuristicConfig", "HeuristicResult", "SweepResult",
    "cosine_nearest_print_accuracy", "diversity_index", "guest_sweep",
    "heuristic_baseline", "jaccard", "word_sweep",
]

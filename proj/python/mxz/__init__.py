"""Game engines, descent self-play and a tournament harness."""

from ._core import (
    GameConfig,
    GameState,
    LearnConfig,
    UsageError,
    evaluate,
    play_match,
    search,
    selfplay_game,
    tournament,
    train,
    validate_record,
    wilson_interval,
)

__all__ = [
    "GameConfig",
    "GameState",
    "LearnConfig",
    "UsageError",
    "evaluate",
    "play_match",
    "search",
    "selfplay_game",
    "tournament",
    "train",
    "validate_record",
    "wilson_interval",
]

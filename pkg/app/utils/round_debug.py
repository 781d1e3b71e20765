"""Debug-only helpers for round and prediction inspection."""

from typing import Sequence


def print_round_debug(round_id: int, train_refs: Sequence[str], test_refs: Sequence[str], results) -> None:
    """Print a concise view of one protocol round."""
    print(f"\n[DEBUG] Round {round_id}")
    print(f"[DEBUG] Train refs: {len(train_refs)} | Test refs: {len(test_refs)} ({', '.join(test_refs)})")

    for item in results:
        per_class = " ".join(
            f"{cls}={s:.3f}/{k:.3f}" for cls, (s, k) in sorted(item.per_class.items())
        )
        print(
            f"[DEBUG]    {item.test_set}: srocc={item.srocc:.4f} "
            f"krocc={item.krocc:.4f} acc={item.accuracy:.4f}"
        )
        if per_class:
            print(f"[DEBUG]      {per_class}")


def print_prediction_debug(image: str, prediction, classes: Sequence[str]) -> None:
    """Print the class probabilities and per-class scores behind one Q."""
    print(f"\n[DEBUG] Prediction for {image}")
    for cls, p, q in zip(classes, prediction.probabilities, prediction.class_scores):
        print(f"[DEBUG]    {cls:<6} p={p:.4f} q={q:.3f} p*q={p * q:.3f}")
    print(f"[DEBUG]    Q={prediction.quality:.4f} hard_class={prediction.hard_class}")

"""One-seed full-scale probe for Instant-channel configs.

Usage: probe_full_instant.py [mode] [lr] [epochs] [regime] [alphabet]
"""

import sys
import time

sys.path.insert(0, "src")

from commgame.channel import ChannelSpec
from commgame.config import ExperimentConfig, TrainerConfig, WorldConfig
from commgame.experiment import evaluate_accuracy, noum, train


def main():
    mode = sys.argv[1] if len(sys.argv) > 1 else "quantized"
    lr = float(sys.argv[2]) if len(sys.argv) > 2 else 1e-5
    epochs = int(sys.argv[3]) if len(sys.argv) > 3 else 50
    regime = sys.argv[4] if len(sys.argv) > 4 else "infer_only"
    alphabet = int(sys.argv[5]) if len(sys.argv) > 5 else 10

    if mode == "gumbel_softmax":
        spec = ChannelSpec(mode=mode, architecture="instant", alphabet_size=100, word_length=100)
    else:
        spec = ChannelSpec(
            mode=mode,
            architecture="instant",
            alphabet_size=alphabet if mode == "quantized" else None,
            word_length=100,
            quantize_regime=regime,
        )
    cfg = ExperimentConfig(
        game="object_referential",
        world=WorldConfig(num_attributes=4, values_per_attribute=10),
        channel=spec,
        trainer=TrainerConfig(epochs=epochs, patience=epochs, batch_size=32, learning_rate=lr),
        eval_candidates=(2, 10, 100, 500, 1000, 2000, 5000, 10000),
        seeds=(1,),
    )
    t0 = time.perf_counter()

    def log(msg):
        print(f"[{time.perf_counter() - t0:7.1f}s] {msg}", flush=True)

    log(f"mode={mode} lr={lr} epochs={epochs} regime={regime} v={spec.alphabet_size}")
    result = train(cfg, seed=1, log=log)
    log(f"best epoch {result.best_epoch}, best val {result.best_val}")
    acc, errs = evaluate_accuracy(result.setup, cfg.eval_candidates)
    log(f"test accuracy: {acc}")
    if errs:
        log(f"eval errors: {errs}")
    try:
        log(f"NoUM: {noum(result.setup)}")
    except Exception as exc:
        log(f"NoUM: {exc}")


if __name__ == "__main__":
    main()

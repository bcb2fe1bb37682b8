import json
import logging
import tempfile
from pathlib import Path

from lambdaea.config import load_config
from lambdaea.kgdata import gen_synthetic_pair, load_kg_pair, save_kg_pair
from lambdaea.logging import configure_logging
from lambdaea.pipeline import Lambda, apply_runtime
from lambdaea.reports import plot_history


def main() -> None:
    # Configure lambdaea logging to DEBUG level for console output
    configure_logging(level=logging.DEBUG)

    config = load_config(
        overrides=[
            "synth.n_match=120",
            "synth.n_dang_src=40",
            "synth.n_dang_tgt=60",
            "synth.community_count=6",
            "synth.intra_edge_prob=0.3",
            "encoder.dim=16",
            "encoder.n_proxy=8",
            "encoder.dropout=0.0",
            "train.lr=0.01",
            "ipule.warmup_epochs=20",
            "align.align_epochs=50",
        ],
        seed=7,
    )
    apply_runtime(config)

    with tempfile.TemporaryDirectory() as tmp:
        data_dir = Path(tmp) / "synthetic"

        # Generate a pair, write it in the on-disk layout and read it back
        pair = gen_synthetic_pair(config.synth)
        save_kg_pair(pair, data_dir)
        pair = load_kg_pair(data_dir)
        print(f"Source: {pair.source.n_entities} entities, {len(pair.source)} triples")
        print(f"Target: {pair.target.n_entities} entities, {len(pair.target)} triples")
        print(f"True matchable ratio: {pair.matchable_ratio:.3f}")
        print()

        runner = Lambda(pair, config)
        detection = runner.detect()
        print("Detection:")
        print(json.dumps(detection.priors.to_dict(), indent=2))
        print(f"alignable={detection.alignable} converged={detection.converged}")
        print()

        if not detection.alignable:
            print("Pair judged not alignable; stopping here")
            return

        result = runner.align(detection)
        print(f"Aligned {len(result)} pairs; first five:")
        for src, tgt, score in result.pairs[:5]:
            print(f"  {src} -> {tgt} ({score:.4f})")
        print()

        report = runner.evaluate()
        print("Metrics:")
        print(json.dumps(report.to_dict(), indent=2))

        # Plots need the optional matplotlib group
        try:
            written = plot_history(detection.history, Path(tmp) / "plots")
            print(f"\nWrote {len(written)} plots")
        except ImportError as e:
            print(f"\nSkipping plots: {e}")


if __name__ == "__main__":
    main()

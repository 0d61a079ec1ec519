import csv
import random
from functools import lru_cache
from pathlib import Path

import pytest

from cmumo.molgraph import FragmentScoreTable
from cmumo.properties import PropertyRegistry

DATA = Path(__file__).parent / "data"


@lru_cache(maxsize=None)
def corpus_rows() -> tuple[dict, ...]:
    """Frozen drug-like corpus with reference counts, digests and SA scores."""
    with (DATA / "druglike_corpus.tsv").open(encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    names = ["smiles", "aromatic_atoms", "total_h", "morgan_r2_digest", "sa_score"]
    return tuple(dict(zip(names, row)) for row in csv.reader(lines, delimiter="\t"))


@lru_cache(maxsize=None)
def sa_reference_rows() -> tuple[tuple[str, float], ...]:
    out = []
    for line in (DATA / "sa_reference.tsv").read_text(encoding="utf-8").splitlines():
        if not line or line.startswith("#"):
            continue
        smi, score = line.split("\t")
        out.append((smi, float(score)))
    return tuple(out)


@lru_cache(maxsize=None)
def reference_fragment_table() -> FragmentScoreTable:
    return FragmentScoreTable.load(DATA / "fpscores_subset.tsv")


def shuffled(mol, rng: random.Random):
    perm = list(range(mol.num_atoms))
    rng.shuffle(perm)
    return mol.permuted(perm)


@pytest.fixture
def reg() -> PropertyRegistry:
    return PropertyRegistry.default()


@pytest.fixture
def corpus() -> tuple[dict, ...]:
    return corpus_rows()


def run_pipeline(config: Path, registry_name: str = "registry.json", modes=("eval_seen",)) -> list[int]:
    """calibrate, build, render, generate and evaluate through the CLI entry point."""
    from cmumo.cli import main

    out = config.parent / "out"
    codes = [main(["calibrate", "--config", str(config)])]
    reg = ["--registry", str(out / registry_name)]
    codes.append(main(["build", "--config", str(config), *reg]))
    for mode in modes:
        for verb in ("render", "generate", "evaluate"):
            codes.append(main([verb, "--config", str(config), "--mode", mode, *reg]))
    return codes

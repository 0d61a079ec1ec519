"""Regenerate the frozen reference data under tests/data.

Run with an interpreter that has RDKit installed and access to an RDKit
source checkout (for the SA_Score contrib and the bundled SMILES sets):

    python tools/freeze_reference_data.py --rdkit-src /path/to/rdkit

RDKit is used only here, as an independent oracle. The package itself never
imports it.
"""

from __future__ import annotations

import argparse
import gzip
import hashlib
import pickle
import random
import sys
from pathlib import Path

from rdkit import Chem, RDLogger
from rdkit.Chem import Crippen, Descriptors, Lipinski, rdFingerprintGenerator
from rdkit.Chem.EnumerateStereoisomers import EnumerateStereoisomers, StereoEnumerationOptions

RDLogger.DisableLog("rdApp.*")

ALLOWED = {"C", "N", "O", "S", "P", "F", "Cl", "Br", "I"}
CORPUS_SIZE = 600
SEED = 20240611


def morgan_digest(counts: dict[int, int]) -> str:
    text = ";".join(f"{k}:{v}" for k, v in sorted(counts.items()))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def drug_like(m) -> bool:
    if len(Chem.GetMolFrags(m)) != 1:
        return False
    if any(a.GetSymbol() not in ALLOWED for a in m.GetAtoms()):
        return False
    if not 10 <= m.GetNumHeavyAtoms() <= 50:
        return False
    if any(a.GetNumRadicalElectrons() for a in m.GetAtoms()):
        return False
    violations = sum([
        Descriptors.MolWt(m) > 500,
        Crippen.MolLogP(m) > 5,
        Lipinski.NumHDonors(m) > 5,
        Lipinski.NumHAcceptors(m) > 10,
    ])
    return violations <= 1


def read_smiles(path: Path, skip_header: bool = False):
    with path.open() as fh:
        if skip_header:
            next(fh)
        for line in fh:
            parts = line.split()
            if parts:
                yield parts[0]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rdkit-src", type=Path, required=True)
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parents[1] / "tests" / "data")
    args = ap.parse_args(argv)
    src = args.rdkit_src
    sa_dir = src / "Contrib" / "SA_Score"
    sys.path.insert(0, str(sa_dir))
    import sascorer  # noqa: E402

    sascorer.readFragmentScores(str(sa_dir / "fpscores.pkl.gz"))
    gen = rdFingerprintGenerator.GetMorganGenerator(radius=2)
    rng = random.Random(SEED)

    sources = [
        src / "Data" / "NCI" / "first_5K.smi",
        src / "Contrib" / "FreeWilson" / "data" / "CHEMBL2321810.smi",
    ]
    seen: set[str] = set()
    pool: list[str] = []
    for path in sources:
        for smi in read_smiles(path):
            m = Chem.MolFromSmiles(smi)
            if m is None or not drug_like(m):
                continue
            can = Chem.MolToSmiles(m)
            if can not in seen:
                seen.add(can)
                pool.append(can)
    rng.shuffle(pool)
    chosen = pool[:CORPUS_SIZE]

    # give part of the corpus explicit stereo so the canonical writer sees it
    opts = StereoEnumerationOptions(onlyUnassigned=True, unique=True, maxIsomers=8, rand=SEED)
    corpus = []
    for k, can in enumerate(chosen):
        m = Chem.MolFromSmiles(can)
        if k % 3 == 0:
            isomers = list(EnumerateStereoisomers(m, options=opts))
            if len(isomers) > 1:
                # round-trip so the reference values describe exactly what the file holds
                m = Chem.MolFromSmiles(Chem.MolToSmiles(isomers[rng.randrange(len(isomers))]))
        corpus.append(m)

    used_ids: set[int] = set()
    rows = []
    for m in corpus:
        counts = dict(gen.GetSparseCountFingerprint(m).GetNonzeroElements())
        used_ids.update(counts)
        rows.append((
            Chem.MolToSmiles(m, doRandom=True),
            sum(a.GetIsAromatic() for a in m.GetAtoms()),
            sum(a.GetTotalNumHs() for a in m.GetAtoms()),
            morgan_digest(counts),
            f"{sascorer.calculateScore(m):.6f}",
        ))
    with (args.out / "druglike_corpus.tsv").open("w") as fh:
        fh.write("# smiles\taromatic_atoms\ttotal_h\tmorgan_r2_digest\tsa_score\n")
        for row in rows:
            fh.write("\t".join(map(str, row)) + "\n")

    sa_rows = []
    for line in (sa_dir / "data" / "zim.100.txt").read_text().splitlines()[1:]:
        smi = line.split("\t")[0]
        m = Chem.MolFromSmiles(smi)
        if m is None:
            continue
        used_ids.update(gen.GetSparseCountFingerprint(m).GetNonzeroElements())
        sa_rows.append((smi, f"{sascorer.calculateScore(m):.6f}"))
    with (args.out / "sa_reference.tsv").open("w") as fh:
        fh.write("# smiles\tsa_score\n")
        for smi, score in sa_rows:
            fh.write(f"{smi}\t{score}\n")

    data = pickle.load(gzip.open(sa_dir / "fpscores.pkl.gz"))
    table = {}
    for row in data:
        for key in row[1:]:
            table[key] = float(row[0])
    with (args.out / "fpscores_subset.tsv").open("w") as fh:
        fh.write("# fragment contributions restricted to ids occurring in the reference sets\n")
        fh.write("#default -4\n")
        for key in sorted(used_ids):
            if key in table:
                fh.write(f"{key}\t{table[key]!r}\n")
    print(f"corpus {len(rows)}, sa reference {len(sa_rows)}, fragments {len(used_ids)}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

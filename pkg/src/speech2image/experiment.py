"""Experiment directory layout, seeding, and history CSV bookkeeping."""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch


@dataclass
class ExperimentDir:
    """A run directory. Allocation never reuses an existing path."""

    root: Path

    @classmethod
    def allocate(cls, base: str | Path, name: str) -> "ExperimentDir":
        base = Path(base)
        candidate = base / name
        suffix = 1
        while candidate.exists():
            candidate = base / f"{name}-{suffix}"
            suffix += 1
        candidate.mkdir(parents=True)
        return cls(root=candidate)

    @classmethod
    def open_existing(cls, path: str | Path) -> "ExperimentDir":
        path = Path(path)
        if not path.is_dir():
            raise FileNotFoundError(f"experiment directory not found: {path}")
        return cls(root=path)

    def write_config_echo(self, echo: dict[str, str]) -> Path:
        path = self.root / "config.ini"
        lines = []
        section = None
        for key in sorted(echo):
            sec, _, opt = key.partition(".")
            if sec != section:
                if section is not None:
                    lines.append("")
                lines.append(f"[{sec}]")
                section = sec
            lines.append(f"{opt} = {echo[key]}")
        path.write_text("\n".join(lines) + "\n")
        return path


class HistoryWriter:
    """Append-only CSV logger with a fixed column set.

    Floats are written with %.6f so reruns under the same seed produce
    byte-identical files.
    """

    def __init__(self, path: str | Path, columns: list[str], resume: bool = False):
        self.path = Path(path)
        self.columns = list(columns)
        if resume and self.path.is_file():
            with open(self.path, newline="") as fh:
                header = next(csv.reader(fh), None)
            if header != self.columns:
                raise ValueError(
                    f"{self.path}: existing history columns {header} do not match {self.columns}"
                )
            self._fh = open(self.path, "a", newline="")
            self._writer = csv.writer(self._fh)
        else:
            self._fh = open(self.path, "w", newline="")
            self._writer = csv.writer(self._fh)
            self._writer.writerow(self.columns)
            self._fh.flush()

    def write(self, row: dict) -> None:
        formatted = []
        for col in self.columns:
            value = row[col]
            if isinstance(value, float):
                formatted.append(f"{value:.6f}")
            else:
                formatted.append(str(value))
        self._writer.writerow(formatted)
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "HistoryWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def truncate_history(path: str | Path, max_step: int, step_column: str = "step") -> None:
    """Drop rows past ``max_step``.

    A crash between the last history row and the last checkpoint leaves a
    partial tail; trimming it lets a resumed run continue without gaps or
    duplicate steps.
    """
    path = Path(path)
    if not path.is_file():
        return
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return
    header = rows[0]
    col = header.index(step_column)
    kept = [r for r in rows[1:] if int(r[col]) <= max_step]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(kept)


def seed_everything(seed: int) -> np.random.Generator:
    """Seed torch and stdlib random, and return a dedicated numpy generator."""
    torch.manual_seed(seed)
    random.seed(seed)
    return np.random.default_rng(seed)


def capture_rng_state(np_rng: np.random.Generator) -> dict:
    return {
        "torch": torch.get_rng_state(),
        "numpy": np_rng.bit_generator.state,
        "python": random.getstate(),
    }


def restore_rng_state(state: dict, np_rng: np.random.Generator) -> None:
    torch.set_rng_state(state["torch"])
    np_rng.bit_generator.state = state["numpy"]
    random.setstate(state["python"])

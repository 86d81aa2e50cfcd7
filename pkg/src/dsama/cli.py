"""Command line pipeline: gen, label, train, compile, plan, eval, sweep, report.

Every stage reads an INI config (``--config``) whose keys can be overridden
with ``--section.key=value`` style flags (``--forest.T 20``). Artifacts go to
``[output] dir``::

    dataset.txt train.txt test.txt instances.txt     gen
    labeling.txt train_labeled.txt test_labeled.txt  label
    model/manifest.json model/a*_*.forest            train
    domain.pddl problems/p*.pddl compile.csv         compile
    plans/p*.plan plan.csv                           plan
    effects.csv preconditions.csv                    eval
    sweep.csv sweep/T*_D*.csv                        sweep
    report.txt                                       report

Exit codes: 0 success, 1 usage or config error, 2 stage failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import logging
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import compile as comp
from . import planner
from .dataset import (make_domain, make_instances, read_dataset, read_instances,
                      sample_transitions, split, write_dataset, write_instances, bits_to_str,
                      str_to_bits)
from .forest import ForestParams
from .formula import NegVar, Var, conj
from .labeler import Labeling, label_by_signature, label_capacity_bounded, tune_label_count
from .model import (evaluate_effects, evaluate_preconditions, learn, partition,
                    read_bundle, train_precondition, write_bundle, ActionModel)

log = logging.getLogger("dsama")

DEFAULTS = {
    "domain": {"name": "lightsout", "size": "3", "noise": "0.0"},
    "sampling": {"count": "5000", "seed": "0", "split": "0.9"},
    "labeling": {"mode": "ground-truth", "kind": "flip", "capacity": "16"},
    "forest": {"T": "20", "D": "25", "bag_fraction": "0.6666666666666666", "seed": "0",
               "validation_fraction": "0.2", "current_only": "false"},
    "compile": {"pu_adjusted_gate": "false", "flatten_cap": "100000",
                "flatten_seconds": "300", "max_pddl_bytes": "100000000"},
    "planner": {"algo": "bfs", "max_expanded": "1000000", "max_seconds": "60",
                "walk_lengths": "7,14", "per_length": "10", "seed": "0",
                "ground_truth": "false"},
    "sweep": {"T": "1,2,5,10,20,40,80", "D": "4,7,12,25,50,100", "workers": "1"},
    "output": {"dir": "out"},
}

LABEL_MODES = ("ground-truth", "signature", "capacity", "tuned")


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# config


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.replace(" ", "").split(",") if x]


@dataclass(frozen=True)
class ExperimentConfig:
    domain: str
    size: int
    noise: float
    count: int
    seed: int
    split: float
    label_mode: str
    label_kind: str
    capacity: int
    forest: ForestParams
    validation_fraction: float
    current_only: bool
    pu_adjusted_gate: bool
    flatten_cap: int
    flatten_seconds: float
    max_pddl_bytes: int
    algo: str
    max_expanded: int
    max_seconds: float
    walk_lengths: tuple
    per_length: int
    instance_seed: int
    ground_truth_domain: bool
    sweep_T: tuple
    sweep_D: tuple
    workers: int
    out: str

    @classmethod
    def from_parser(cls, cp: configparser.ConfigParser) -> "ExperimentConfig":
        def get(section, key, conv=str):
            raw = cp.get(section, key)
            try:
                return conv(raw)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: invalid value {raw!r}") from exc

        def boolean(section, key):
            try:
                return cp.getboolean(section, key)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: expected true/false") from exc

        mode = get("labeling", "mode")
        if mode not in LABEL_MODES:
            raise ConfigError(f"[labeling] mode: expected one of {', '.join(LABEL_MODES)}")
        algo = get("planner", "algo")
        if algo not in ("bfs", "astar_blind"):
            raise ConfigError("[planner] algo: expected bfs or astar_blind")
        try:
            forest = ForestParams(T=get("forest", "T", int), D=get("forest", "D", int),
                                  bag_fraction=get("forest", "bag_fraction", float),
                                  seed=get("forest", "seed", int))
        except ValueError as exc:
            raise ConfigError(f"[forest] {exc}") from exc
        cfg = cls(
            domain=get("domain", "name"), size=get("domain", "size", int),
            noise=get("domain", "noise", float),
            count=get("sampling", "count", int), seed=get("sampling", "seed", int),
            split=get("sampling", "split", float),
            label_mode=mode, label_kind=get("labeling", "kind"),
            capacity=get("labeling", "capacity", int),
            forest=forest,
            validation_fraction=get("forest", "validation_fraction", float),
            current_only=boolean("forest", "current_only"),
            pu_adjusted_gate=boolean("compile", "pu_adjusted_gate"),
            flatten_cap=get("compile", "flatten_cap", int),
            flatten_seconds=get("compile", "flatten_seconds", float),
            max_pddl_bytes=get("compile", "max_pddl_bytes", int),
            algo=algo, max_expanded=get("planner", "max_expanded", int),
            max_seconds=get("planner", "max_seconds", float),
            walk_lengths=tuple(get("planner", "walk_lengths", _int_list)),
            per_length=get("planner", "per_length", int),
            instance_seed=get("planner", "seed", int),
            ground_truth_domain=boolean("planner", "ground_truth"),
            sweep_T=tuple(get("sweep", "T", _int_list)),
            sweep_D=tuple(get("sweep", "D", _int_list)),
            workers=get("sweep", "workers", int),
            out=get("output", "dir"),
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        checks = [
            (self.domain in ("lightsout", "puzzle"), "[domain] name: expected lightsout or puzzle"),
            (self.size >= 1, "[domain] size: must be >= 1"),
            (0 <= self.noise < 0.5, "[domain] noise: must lie in [0, 0.5)"),
            (self.count >= 2, "[sampling] count: must be >= 2"),
            (0 < self.split < 1, "[sampling] split: must lie in (0, 1)"),
            (self.label_kind in ("flip", "setclear"), "[labeling] kind: expected flip or setclear"),
            (self.capacity >= 1, "[labeling] capacity: must be >= 1"),
            (0 <= self.validation_fraction < 1, "[forest] validation_fraction: must lie in [0, 1)"),
            (self.flatten_cap >= 1, "[compile] flatten_cap: must be >= 1"),
            (self.flatten_seconds > 0, "[compile] flatten_seconds: must be positive"),
            (self.max_pddl_bytes >= 1, "[compile] max_pddl_bytes: must be >= 1"),
            (self.max_expanded >= 1, "[planner] max_expanded: must be >= 1"),
            (self.max_seconds > 0, "[planner] max_seconds: must be positive"),
            (bool(self.walk_lengths) and min(self.walk_lengths) >= 1,
             "[planner] walk_lengths: positive integers required"),
            (self.per_length >= 1, "[planner] per_length: must be >= 1"),
            (bool(self.sweep_T) and min(self.sweep_T) >= 1, "[sweep] T: positive integers required"),
            (bool(self.sweep_D) and min(self.sweep_D) >= 1, "[sweep] D: positive integers required"),
            (self.workers >= 1, "[sweep] workers: must be >= 1"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        try:
            make_domain(self.domain, self.size)
        except ValueError as exc:
            raise ConfigError(f"[domain] {exc}") from exc


def load_config(path: str | None, overrides: dict | None = None) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keep T and D upper case
    cp.read_dict(DEFAULTS)
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        for section in cp.sections():
            if section not in DEFAULTS:
                raise ConfigError(f"{path}: unknown section [{section}]")
            for key in cp[section]:
                if key not in DEFAULTS[section]:
                    raise ConfigError(f"{path}: unknown key [{section}] {key}")
    for (section, key), value in (overrides or {}).items():
        cp.set(section, key, str(value))
    return cp


def dump_config(cp: configparser.ConfigParser) -> str:
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# helpers


def _path(cfg: ExperimentConfig, *parts) -> str:
    return os.path.join(cfg.out, *parts)


def _require(path: str) -> str:
    if not os.path.exists(path):
        raise StageError(f"missing prerequisite artifact: {path}")
    return path


def _write_csv(path: str, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read_csv(path: str) -> list[dict]:
    with open(_require(path), encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def _fmt(x: float) -> str:
    return "nan" if x != x else f"{x:.6f}"


def _oracle(cfg: ExperimentConfig):
    return make_domain(cfg.domain, cfg.size)


def _labeled(cfg: ExperimentConfig):
    """Labeled train/test sets and the labeling (None for ground-truth labels)."""
    if cfg.label_mode == "ground-truth":
        train = read_dataset(_require(_path(cfg, "train.txt")))
        test = read_dataset(_require(_path(cfg, "test.txt")))
        if train.labels is None or test.labels is None:
            raise StageError("ground-truth labeling needs labeled train/test files")
        return train, test, None
    train = read_dataset(_require(_path(cfg, "train_labeled.txt")))
    test = read_dataset(_require(_path(cfg, "test_labeled.txt")))
    return train, test, read_labeling(_require(_path(cfg, "labeling.txt")))


def write_labeling(labeling: Labeling, path: str) -> None:
    """``kind=<k> A=<n>`` header then one ``set clear`` centroid row per label."""
    lines = [f"kind={labeling.kind} A={labeling.A}"]
    for c in labeling.centroids:
        lines.append(bits_to_str(c[0]) + " " + bits_to_str(c[1]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_labeling(path: str, assignment=None) -> Labeling:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    head = dict(p.split("=", 1) for p in lines[0].split())
    cent = np.array([[str_to_bits(p) for p in ln.split()] for ln in lines[1:] if ln.strip()],
                    dtype=bool)
    if len(cent) != int(head["A"]):
        raise StageError(f"{path}: expected {head['A']} centroids, found {len(cent)}")
    if assignment is None:
        assignment = np.zeros(0, dtype=np.int64)
    return Labeling(np.asarray(assignment), cent, head["kind"])


def _goal_formula(goal) -> object:
    return conj(*[Var(k) if b else NegVar(k) for k, b in enumerate(goal)])


# ---------------------------------------------------------------------------
# stages


def stage_gen(cfg: ExperimentConfig) -> None:
    os.makedirs(cfg.out, exist_ok=True)
    domain = _oracle(cfg)
    ds = sample_transitions(domain, cfg.count, seed=cfg.seed, noise=cfg.noise)
    train, test = split(ds, cfg.split, seed=cfg.seed)
    write_dataset(ds, _path(cfg, "dataset.txt"))
    write_dataset(train, _path(cfg, "train.txt"))
    write_dataset(test, _path(cfg, "test.txt"))
    inst = make_instances(domain, cfg.walk_lengths, cfg.per_length, seed=cfg.instance_seed)
    write_instances(inst, _path(cfg, "instances.txt"))
    log.info("gen: %d transitions (%d train / %d test), %d instances",
             len(ds), len(train), len(test), len(inst))


def stage_label(cfg: ExperimentConfig) -> None:
    train = read_dataset(_require(_path(cfg, "train.txt")))
    test = read_dataset(_require(_path(cfg, "test.txt")))
    if cfg.label_mode == "ground-truth":
        log.info("label: ground-truth labels are used as they are")
        return
    if cfg.label_mode == "signature":
        labeling = label_by_signature(train, cfg.label_kind)
    elif cfg.label_mode == "capacity":
        labeling = label_capacity_bounded(train, cfg.capacity, cfg.label_kind)
    else:
        labeling = tune_label_count(train, cfg.label_kind).labeling
    write_labeling(labeling, _path(cfg, "labeling.txt"))
    write_dataset(labeling.apply_to(train), _path(cfg, "train_labeled.txt"))
    write_dataset(test.with_labels(labeling.assign(test), labeling.A),
                  _path(cfg, "test_labeled.txt"))
    log.info("label: %d labels (%s, %s)", labeling.A, cfg.label_mode, cfg.label_kind)


def stage_train(cfg: ExperimentConfig) -> None:
    train, _, _ = _labeled(cfg)
    models = learn(train, cfg.forest, validation_fraction=cfg.validation_fraction,
                   current_only=cfg.current_only, compile=False)
    write_bundle(models, cfg.forest, _path(cfg, "model"),
                 extra={"validation_fraction": cfg.validation_fraction})
    log.info("train: %d actions, T=%d D=%d", len(models), cfg.forest.T, cfg.forest.D)


def _load_models(cfg: ExperimentConfig):
    _require(_path(cfg, "model", "manifest.json"))
    models, _, _ = read_bundle(_path(cfg, "model"), pu_adjusted_gate=cfg.pu_adjusted_gate)
    return models


def stage_compile(cfg: ExperimentConfig) -> None:
    models = _load_models(cfg)
    size = comp.domain_size(models)
    emitted = size <= cfg.max_pddl_bytes
    if emitted:
        with open(_path(cfg, "domain.pddl"), "w", encoding="utf-8", newline="\n") as fh:
            comp.write_domain(models, fh)
    elif os.path.exists(_path(cfg, "domain.pddl")):
        os.remove(_path(cfg, "domain.pddl"))
    os.makedirs(_path(cfg, "problems"), exist_ok=True)
    instances = read_instances(_require(_path(cfg, "instances.txt")))
    for i, inst in enumerate(instances):
        with open(_path(cfg, "problems", f"p{i:02d}.pddl"), "w", encoding="utf-8",
                  newline="\n") as fh:
            fh.write(comp.emit_problem(inst, problem_name=f"p{i:02d}"))
    comp.compile_metrics_csv(models, _path(cfg, "compile_actions.csv"))
    fr = comp.flatten_domain(models, cfg.flatten_cap, cfg.flatten_seconds)
    if fr.timed_out:
        flat = "timeout"
    elif fr.cap_exceeded:
        flat = f">={fr.exceeded.count_lower_bound}"
    else:
        flat = fr.total
    _write_csv(_path(cfg, "compile.csv"),
               ["T", "D", "actions", "bytes", "emitted", "flatten_cap", "flatten_terms",
                "flatten_cap_exceeded", "flatten_timed_out"],
               [[cfg.forest.T, cfg.forest.D, len(models), size, int(emitted), cfg.flatten_cap,
                 flat, int(fr.cap_exceeded), int(fr.timed_out)]])
    log.info("compile: %d bytes (%s), flatten %s", size,
             "written" if emitted else "over max_pddl_bytes, not written", flat)


def _plan_task(cfg: ExperimentConfig):
    """(actions, source) for the plan stage, or (None, reason) if no domain file."""
    if cfg.ground_truth_domain:
        text = planner.ground_truth_domain_pddl(_oracle(cfg))
        with open(_path(cfg, "ground_truth_domain.pddl"), "w", encoding="utf-8",
                  newline="\n") as fh:
            fh.write(text)
        return planner.parse_domain(text)[0], "ground_truth"
    path = _path(cfg, "domain.pddl")
    if not os.path.exists(path):
        _require(_path(cfg, "compile.csv"))
        return None, "domain not emitted: size over max_pddl_bytes"
    with open(path, encoding="utf-8") as fh:
        return planner.parse_domain(fh.read())[0], "learned"


def stage_plan(cfg: ExperimentConfig) -> None:
    instances = read_instances(_require(_path(cfg, "instances.txt")))
    actions, source = _plan_task(cfg)
    oracle = _oracle(cfg)
    os.makedirs(_path(cfg, "plans"), exist_ok=True)
    rows = []
    for i, inst in enumerate(instances):
        if actions is None:
            res = planner.SearchResult("resource_exhausted", limit="max_pddl_bytes")
        else:
            if source == "ground_truth":
                text = comp.emit_problem(inst, problem_name=f"p{i:02d}")
            else:
                with open(_require(_path(cfg, "problems", f"p{i:02d}.pddl")),
                          encoding="utf-8") as fh:
                    text = fh.read()
            init, goal = planner.parse_problem(text, oracle.width)
            res = planner.search(actions, init, goal, algo=cfg.algo,
                                 max_expanded=cfg.max_expanded, max_seconds=cfg.max_seconds)
        if res.plan is not None:
            v = planner.validate(res.plan, inst, oracle, actions)
            valid, violation = int(v.valid), ("" if v.first_violation is None
                                              else v.first_violation)
        else:
            valid, violation = "", ""
        with open(_path(cfg, "plans", f"p{i:02d}.plan"), "w", encoding="utf-8",
                  newline="\n") as fh:
            fh.write(planner.format_plan(res))
        rows.append([i, inst.walk_length, res.outcome, res.limit or "",
                     "" if res.plan is None else len(res.plan), valid, violation,
                     res.expanded, res.generated])
    _write_csv(_path(cfg, "plan.csv"),
               ["instance", "walk_length", "outcome", "limit", "plan_length", "valid",
                "first_violation", "expanded", "generated"], rows)
    log.info("plan (%s): %s", source, failure_summary(rows))


def failure_summary(rows) -> str:
    """Counts per outcome, with found plans split by oracle validity."""
    counts: dict[str, int] = {}
    for r in rows:
        outcome = r[2]
        if outcome == "plan":
            outcome = "plan_valid" if r[5] == 1 else "plan_invalid"
        elif r[3]:
            outcome = f"{outcome}({r[3]})"
        counts[outcome] = counts.get(outcome, 0) + 1
    return " ".join(f"{k}={v}" for k, v in sorted(counts.items()))


def stage_eval(cfg: ExperimentConfig) -> None:
    train, test, labeling = _labeled(cfg)
    oracle = _oracle(cfg)
    models = _load_models(cfg)
    rows = [[cfg.domain, cfg.size, cfg.forest.T, cfg.forest.D, mode,
             _fmt(evaluate_effects(models, test, mode))] for mode in ("vote", "formula")]
    _write_csv(_path(cfg, "effects.csv"), ["domain", "size", "T", "D", "mode", "accuracy"], rows)
    # ablation: same forests settings, precondition on the current state only
    ablation = []
    for p in partition(train):
        forest, c = train_precondition(p, cfg.forest, cfg.validation_fraction, current_only=True)
        ablation.append(ActionModel(p.action, p.width, [], forest, c, current_only=True))
    prows = []
    for name, ms in (("both", models), ("current", ablation)):
        r = evaluate_preconditions(ms, test, oracle, labeling)
        prows.append([cfg.domain, cfg.size, cfg.forest.T, cfg.forest.D, name, _fmt(r.recall),
                      _fmt(r.specificity), _fmt(r.f), r.tp, r.fn, r.tn, r.fp, int(r.degenerate)])
    _write_csv(_path(cfg, "preconditions.csv"),
               ["domain", "size", "T", "D", "input", "recall", "specificity", "f",
                "tp", "fn", "tn", "fp", "degenerate"], prows)
    log.info("eval: effect accuracy %s, precondition F %s / %s (current only)",
             rows[0][-1], prows[0][7], prows[1][7])


def sweep_cell(args) -> list:
    """Train and measure one (T, D) cell; returns a sweep.csv row."""
    train, test, params, vf, pu_gate = args
    models = learn(train, params, validation_fraction=vf, pu_adjusted_gate=pu_gate)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        acc = evaluate_effects(models, test)
    return [params.T, params.D, _fmt(acc), comp.domain_size(models)]


def stage_sweep(cfg: ExperimentConfig) -> None:
    train, test, _ = _labeled(cfg)
    os.makedirs(_path(cfg, "sweep"), exist_ok=True)
    jobs = [(train, test, cfg.forest.with_(T=T, D=D), cfg.validation_fraction,
             cfg.pu_adjusted_gate) for T in cfg.sweep_T for D in cfg.sweep_D]
    header = ["T", "D", "accuracy", "bytes"]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            rows = list(ex.map(sweep_cell, jobs))
    else:
        rows = [sweep_cell(j) for j in jobs]
    for row in rows:
        _write_csv(_path(cfg, "sweep", f"T{row[0]}_D{row[1]}.csv"), header, [row])
    _write_csv(_path(cfg, "sweep.csv"), header, rows)
    log.info("sweep: %d cells", len(rows))


# ---------------------------------------------------------------------------
# report


def _table(header, rows) -> str:
    cells = [list(map(str, header))] + [list(map(str, r)) for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _human_bytes(n: int) -> str:
    for unit in ("", "K", "M", "G", "T", "P"):
        if n < 1000:
            return f"{n:.0f}{unit}" if unit == "" or n >= 10 else f"{n:.1f}{unit}"
        n /= 1000
    return f"{n:.0f}E"


def _pct(text: str) -> str:
    x = float(text)
    return "nan" if x != x else f"{100 * x:.1f}%"


def _flatten_cell(r) -> str:
    if r["flatten_timed_out"] == "1":
        return "timeout"
    if r["flatten_cap_exceeded"] == "1":
        return f"cap {r['flatten_cap']} exceeded ({r['flatten_terms']})"
    return r["flatten_terms"]


def render_report(out: str) -> str:
    parts = []
    p = os.path.join(out, "effects.csv")
    if os.path.exists(p):
        rows = _read_csv(p)
        parts.append("Effect accuracy (bits correctly predicted)\n" + _table(
            ["domain", "size", "T", "D", "mode", "accuracy"],
            [[r["domain"], r["size"], r["T"], r["D"], r["mode"], _pct(r["accuracy"])]
             for r in rows]))
    p = os.path.join(out, "preconditions.csv")
    if os.path.exists(p):
        rows = _read_csv(p)
        parts.append("Precondition accuracy\n" + _table(
            ["domain", "size", "input", "recall", "specificity", "F"],
            [[r["domain"], r["size"], "(z0;z1)" if r["input"] == "both" else "z0 only",
              _pct(r["recall"]), _pct(r["specificity"]), _pct(r["f"])] for r in rows]))
    p = os.path.join(out, "sweep.csv")
    if os.path.exists(p):
        rows = _read_csv(p)
        Ts = sorted({int(r["T"]) for r in rows})
        Ds = sorted({int(r["D"]) for r in rows})
        cell = {(int(r["T"]), int(r["D"])): r for r in rows}
        acc = [[T] + [_pct(cell[T, D]["accuracy"]) if (T, D) in cell else "-" for D in Ds]
               for T in Ts]
        size = [[T] + [_human_bytes(int(cell[T, D]["bytes"])) if (T, D) in cell else "-"
                       for D in Ds] for T in Ts]
        parts.append("Effect accuracy by (T, D)\n" + _table(["T \\ D"] + Ds, acc))
        parts.append("PDDL domain size by (T, D)\n" + _table(["T \\ D"] + Ds, size))
    p = os.path.join(out, "compile.csv")
    if os.path.exists(p):
        rows = _read_csv(p)
        parts.append("Compiled domain\n" + _table(
            ["T", "D", "actions", "bytes", "written", "flattened actions"],
            [[r["T"], r["D"], r["actions"], _human_bytes(int(r["bytes"])),
              "yes" if r["emitted"] == "1" else "no (over limit)",
              _flatten_cell(r)] for r in rows]))
    p = os.path.join(out, "plan.csv")
    if os.path.exists(p):
        rows = _read_csv(p)
        parts.append("Planning\n" + _table(
            ["instance", "walk", "outcome", "limit", "length", "valid", "expanded"],
            [[r["instance"], r["walk_length"], r["outcome"], r["limit"] or "-",
              r["plan_length"] or "-", r["valid"] or "-", r["expanded"]] for r in rows])
            + "\nfailure modes: " + failure_summary(
                [[r["instance"], r["walk_length"], r["outcome"], r["limit"], r["plan_length"],
                  int(r["valid"]) if r["valid"] else ""] for r in rows]))
    if not parts:
        raise StageError(f"no metrics CSVs found in {out}")
    return "\n\n".join(parts) + "\n"


def stage_report(cfg: ExperimentConfig) -> None:
    text = render_report(cfg.out)
    with open(_path(cfg, "report.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    sys.stdout.write(text)


STAGES = {
    "gen": stage_gen,
    "label": stage_label,
    "train": stage_train,
    "compile": stage_compile,
    "plan": stage_plan,
    "eval": stage_eval,
    "sweep": stage_sweep,
    "report": stage_report,
}


# ---------------------------------------------------------------------------
# argument parsing


def _flag(section: str, key: str) -> str:
    return f"--{section}.{key}"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dsama", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES:
        sp = sub.add_parser(name)
        sp.add_argument("--config", "-c", help="INI config file")
        sp.add_argument("--out", help="output directory (same as --output.dir)")
        sp.add_argument("-v", "--verbose", action="store_true")
        for section, keys in DEFAULTS.items():
            for key in keys:
                sp.add_argument(_flag(section, key), dest=f"{section}.{key}", default=None,
                                metavar="VALUE")
        # short forms for the common ones
        sp.add_argument("--domain", dest="domain.name", default=None, help=argparse.SUPPRESS)
        sp.add_argument("--n", dest="domain.size", default=None, help=argparse.SUPPRESS)
        sp.add_argument("--count", dest="sampling.count", default=None, help=argparse.SUPPRESS)
        sp.add_argument("--seed", dest="sampling.seed", default=None, help=argparse.SUPPRESS)
        sp.add_argument("--T", dest="forest.T", default=None, help=argparse.SUPPRESS)
        sp.add_argument("--D", dest="forest.D", default=None, help=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    overrides = {}
    for dest, value in vars(args).items():
        if "." in dest and value is not None:
            overrides[tuple(dest.split(".", 1))] = value
    if args.out is not None:
        overrides[("output", "dir")] = args.out
    try:
        cfg = ExperimentConfig.from_parser(load_config(args.config, overrides))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        STAGES[args.command](cfg)
    except (StageError, FileNotFoundError, ValueError, planner.PddlSyntaxError) as exc:
        print(f"{args.command} failed: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""Command-line pipeline.

Stages communicate through files (alphabet JSON, model files, matrix
JSON, PAN-format outputs) so ensemble members can run as independent
processes:

    prep     build the shared alphabet for a collection
    train    train one ensemble member
    score    cross-entropy matrix of one member against the problem texts
    combine  sum raw matrices across members
    cluster  normalize, build affinities, emit clustering + ranking
    eval     score emitted outputs against truth files
    baseline zero-effort outputs and the random-MAP calibration
    report   threshold-sweep table (coward / best / fixed per problem)
    pipeline all of the above in one go
    synth    write a synthetic corpus for smoke tests and demos
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .affinity import (
    EntropyMatrix,
    ensemble_sum,
    normalize_by_controls,
    rank_links,
    score_all,
    to_affinity,
)
from .clustering import (
    STRATEGIES,
    ClusterinessConfig,
    clusteriness_threshold,
    cluster_problem,
    cowardly,
    find_anchors,
)
from .corpus import assemble, load_collection, load_controls
from .errors import (
    AuthorclustError,
    DegenerateAnchorsError,
    MissingTruthError,
    NoControlsError,
    NoTrueLinksError,
)
from .metrics import (
    ScoreReport,
    bcubed,
    load_clustering,
    load_ranking,
    map_score,
    random_map_baseline,
    save_clustering,
    save_ranking,
    zero_effort_baseline,
)
from .mhrnn import Hyperparameters, init_model, load_model, save_model, train
from .synthdata import write_synthetic_collection
from .textprep import (
    RARE_WORD_TOKEN,
    Alphabet,
    build_alphabet,
    load_equivalences,
    normalize,
)

CONTROL_PREFIX = "controls/"
DEFAULT_MIN_FREQUENCY = 1e-4

# Ensemble patterns mirroring the published per-language meta-parameter
# variation: (hidden, psn, leak, overfit, direction, df_threshold).
# Leak is a fraction of the head count, resolved at assembly time.
ENSEMBLE_PATTERNS = {
    "nl": [(299, 0.5, "1/(2N)", 4, "forward", None),
           (159, 0.3, "1/(3N)", 2, "forward", None),
           (139, 0.3, "1/(2N)", 4, "reverse", 0.005),
           (99, 0.5, "1/(2N)", 3, "forward", 0.01),
           (139, 0.3, "1/(2N)", 5, "reverse", None)],
    "en": [(299, 0.5, "1/(2N)", 4, "forward", None),
           (139, 0.3, "1/(2N)", 5, "reverse", None),
           (239, 1.0, "1/(3N)", 2, "reverse", 0.005),
           (139, 0.3, "1/(2N)", 5, "forward", 0.01),
           (159, 0.5, "1/(2N)", 2, "forward", None)],
    "gr": [(299, 0.3, "1/(2N)", 3, "forward", 0.005),
           (279, 0.5, "1/(2N)", 4, "forward", None),
           (159, 0.3, "1/(3N)", 5, "reverse", None),
           (159, 1.0, "1/(2N)", 3, "forward", 0.005),
           (139, 0.3, "1/(2N)", 5, "reverse", None)],
}

_LEAK_FRACTION = re.compile(r"^1/\((\d+)N\)$")


def resolve_leak(spec, n_heads: int) -> float:
    """A leak may be a plain probability or "1/(kN)" with N the number
    of softmax heads."""
    if isinstance(spec, str):
        m = _LEAK_FRACTION.match(spec.replace(" ", ""))
        if not m:
            raise ValueError(f"cannot parse leak spec {spec!r}")
        return 1.0 / (int(m.group(1)) * n_heads)
    return float(spec)


def derived_seed(base: int, *path: int) -> int:
    return int(np.random.SeedSequence([base, *path]).generate_state(1)[0])


def alphabet_sha256(alphabet: Alphabet) -> str:
    return hashlib.sha256(alphabet.to_json().encode("utf-8")).hexdigest()


def default_ensemble(language: str, members: int, scale: float) -> list[dict]:
    pattern = ENSEMBLE_PATTERNS.get(language, ENSEMBLE_PATTERNS["nl"])
    out = []
    for i in range(members):
        hidden, psn, leak, overfit, direction, df = pattern[i % len(pattern)]
        out.append({"hidden_size": max(8, round(hidden * scale)),
                    "psn": psn, "leak": leak, "overfit_epochs": overfit,
                    "direction": direction, "df_threshold": df})
    return out


def corpus_scale(total_chars: int) -> float:
    """Shrink the published hidden sizes proportionally on small corpora."""
    return min(1.0, max(0.05, total_chars / 4_000_000))


# --- shared stage helpers -------------------------------------------------


def load_inputs(args):
    problems, docs = load_collection(args.corpus)
    controls = []
    if args.controls:
        count = args.control_count
        if count is None:
            count = len(list(Path(args.controls).glob("*.txt")))
        controls = load_controls(args.controls, count, seed=args.seed)
    return problems, docs, controls


def pick_language(args, problems) -> str:
    if getattr(args, "language", None):
        return args.language
    return problems[0].language if problems else "en"


def build_alphabet_for(docs, controls, language, min_frequency,
                       with_mask_token, equivalences=None):
    extra = [RARE_WORD_TOKEN] if with_mask_token else []
    normalized = [normalize(d.raw, language=language,
                            equivalences=equivalences, source_id=d.doc_id)
                  for d in list(docs) + list(controls)]
    return build_alphabet(normalized, min_frequency, language_tag=language,
                          extra_tokens=extra)


def member_hyper(member: dict, n_heads: int, base_seed: int,
                 index: int) -> Hyperparameters:
    cfg = dict(member)
    cfg["leak"] = resolve_leak(cfg.get("leak", 0.0), n_heads)
    cfg.setdefault("seed", derived_seed(base_seed, index))
    return Hyperparameters(**cfg)


def train_and_score_member(corpus_dir, controls_dir, control_count,
                           base_seed, language, min_frequency,
                           with_mask_token, member_cfg, index,
                           model_path, matrix_path, log_path,
                           equivalences_path=None):
    """Worker for one ensemble member: assemble, train, score, persist.
    Runs in a separate process under --jobs > 1, so takes only plain
    values and communicates through files."""
    equivalences = (load_equivalences(equivalences_path)
                    if equivalences_path else None)
    problems, docs = load_collection(corpus_dir)
    controls = []
    if controls_dir:
        count = control_count
        if count is None:
            count = len(list(Path(controls_dir).glob("*.txt")))
        controls = load_controls(controls_dir, count, seed=base_seed)
    alphabet = build_alphabet_for(docs, controls, language, min_frequency,
                                  with_mask_token, equivalences)
    hyper = member_hyper(member_cfg, len(docs) + len(controls), base_seed,
                         index)
    ts = assemble(problems, docs, controls, alphabet,
                  df_threshold=hyper.df_threshold,
                  reverse=hyper.direction == "reverse",
                  equivalences=equivalences)
    model = init_model(len(alphabet), ts.n_heads, hyper)
    model.alphabet_hash = alphabet_sha256(alphabet)
    _, val_log = train(model, ts)
    save_model(model, model_path)

    n_problem = ts.n_heads - len(ts.controls)
    head_ids = [d.doc_id for d in ts.documents]
    matrix = score_all(model, ts.documents[:n_problem], head_ids)
    matrix.save(matrix_path)
    with open(log_path, "w", encoding="utf-8") as f:
        json.dump({"member": index, "hyper": asdict(hyper),
                   "val_log": val_log, "model": str(model_path),
                   "matrix": str(matrix_path)}, f, indent=1)
    return {"member": index, "hyper": asdict(hyper), "val_log": val_log,
            "model": str(model_path), "matrix": str(matrix_path)}


def problem_outputs(matrix: EntropyMatrix, problem, config, strategy=None,
                    clusteriness=None):
    """Affinity, ranked links and partition for one problem, keyed by the
    problem's own filenames."""
    control_heads = {i for i, h in enumerate(matrix.head_ids)
                     if h.startswith(CONTROL_PREFIX)}
    if not control_heads:
        raise NoControlsError(
            "matrix has no control heads; run with --controls")
    head_of = {h: i for i, h in enumerate(matrix.head_ids)}
    normalized = normalize_by_controls(matrix, control_heads, problem,
                                       head_of)
    local = [problem.doc_names.get(d, d) for d in problem.doc_ids]
    aff = to_affinity(normalized, local)
    if strategy or clusteriness is not None:
        base_strategy, base_c = config.lookup(problem.language, problem.genre)
        config = ClusterinessConfig(entries=[{
            "language": "*", "genre": "*",
            "strategy": strategy or base_strategy,
            "c": base_c if clusteriness is None else clusteriness}])
    partition = cluster_problem(aff, config, problem.language, problem.genre)
    links = rank_links(aff) if aff.n >= 2 else None
    return aff, links, partition


def write_problem_outputs(out_dir: Path, problem, links, partition):
    pdir = out_dir / problem.problem_id
    pdir.mkdir(parents=True, exist_ok=True)
    save_clustering(partition, pdir / "clustering.json")
    if links is not None:
        save_ranking(links, pdir / "ranking.json")
    else:
        (pdir / "ranking.json").write_text("[]\n", encoding="utf-8")


def truth_for(truth_dir, problem):
    path = Path(truth_dir) / problem.problem_id / "clustering.json"
    if not path.is_file():
        raise MissingTruthError(f"no truth file {path}")
    return load_clustering(path)


def clusteriness_config(args) -> ClusterinessConfig:
    if getattr(args, "clusteriness", None):
        return ClusterinessConfig.load(args.clusteriness)
    return ClusterinessConfig()


# --- subcommands ----------------------------------------------------------


def cmd_synth(args):
    paths = write_synthetic_collection(
        args.out, n_authors=args.authors, docs_per_author=args.docs_per_author,
        doc_chars=args.chars, n_controls=args.control_count or 8,
        seed=args.seed, spread=args.spread)
    print(json.dumps({k: str(v) for k, v in paths.items() if k != "clusters"},
                     indent=1))
    return 0


def cmd_prep(args):
    problems, docs, controls = load_inputs(args)
    language = pick_language(args, problems)
    equivalences = (load_equivalences(args.equivalences)
                    if args.equivalences else None)
    alphabet = build_alphabet_for(docs, controls, language,
                                  args.min_frequency, args.mask_token,
                                  equivalences)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    alphabet.save(out / "alphabet.json")
    print(f"alphabet: {len(alphabet)} symbols -> {out / 'alphabet.json'}")
    return 0


def _single_member_cfg(args) -> dict:
    if args.hyper:
        with open(args.hyper, encoding="utf-8") as f:
            cfg = json.load(f)
    else:
        cfg = {}
    for key, value in (("hidden_size", args.hidden), ("psn", args.psn),
                       ("leak", args.leak), ("overfit_epochs", args.overfit),
                       ("df_threshold", args.df_threshold),
                       ("bptt_window", args.bptt),
                       ("learning_rate", args.learning_rate),
                       ("max_epochs", args.max_epochs)):
        if value is not None:
            cfg[key] = value
    if args.reverse:
        cfg["direction"] = "reverse"
    return cfg


def cmd_train(args):
    problems, docs, _ = load_inputs(args)
    language = pick_language(args, problems)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = _single_member_cfg(args)
    result = train_and_score_member(
        args.corpus, args.controls, args.control_count, args.seed, language,
        args.min_frequency, cfg.get("df_threshold") is not None, cfg,
        args.member, out / f"member{args.member:02d}.mhrnn",
        out / f"member{args.member:02d}-matrix.json",
        out / f"member{args.member:02d}-log.json",
        equivalences_path=args.equivalences)
    print(f"trained member {args.member}: {len(result['val_log'])} epochs, "
          f"final validation {result['val_log'][-1]:.4f} bits/char")
    return 0


def cmd_score(args):
    problems, docs, controls = load_inputs(args)
    model = load_model(args.model)
    alphabet = Alphabet.load(args.alphabet)
    hyper = model.hyper
    equivalences = (load_equivalences(args.equivalences)
                    if args.equivalences else None)
    ts = assemble(problems, docs, controls, alphabet,
                  df_threshold=hyper.df_threshold,
                  reverse=hyper.direction == "reverse",
                  equivalences=equivalences)
    n_problem = ts.n_heads - len(ts.controls)
    matrix = score_all(model, ts.documents[:n_problem],
                       [d.doc_id for d in ts.documents])
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    matrix.save(args.out)
    print(f"matrix {matrix.values.shape} -> {args.out}")
    return 0


def cmd_combine(args):
    matrices = [EntropyMatrix.load(p) for p in args.matrices]
    total = ensemble_sum(matrices)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    total.save(args.out)
    print(f"summed {len(matrices)} matrices -> {args.out}")
    return 0


def cmd_cluster(args):
    problems, _ = load_collection(args.corpus)
    matrix = EntropyMatrix.load(args.matrix)
    config = clusteriness_config(args)
    out = Path(args.out)
    for problem in problems:
        _, links, partition = problem_outputs(
            matrix, problem, config, args.strategy, args.c)
        write_problem_outputs(out, problem, links, partition)
        print(f"{problem.problem_id}: {len(partition)} clusters")
    return 0


def cmd_eval(args):
    problems, _ = load_collection(args.corpus)
    reports = []
    for problem in problems:
        truth = truth_for(args.truth, problem)
        pdir = Path(args.out) / problem.problem_id
        pred = load_clustering(pdir / "clustering.json")
        links = load_ranking(pdir / "ranking.json")
        p, r, f = bcubed(pred, truth)
        try:
            ap = map_score(links, truth)
        except NoTrueLinksError:
            ap = None
        reports.append(ScoreReport(problem_id=problem.problem_id,
                                   bcubed_precision=p, bcubed_recall=r,
                                   bcubed_f=f, map=ap))
    path = Path(args.out) / "eval.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["problem", "F(BCubed)", "R-BCubed", "P-BCubed",
                         "MAP"])
        for s in reports:
            writer.writerow([s.problem_id, s.bcubed_f, s.bcubed_recall,
                             s.bcubed_precision,
                             "" if s.map is None else s.map])
    for s in reports:
        print(f"{s.problem_id} F={s.bcubed_f:.4f} R={s.bcubed_recall:.4f} "
              f"P={s.bcubed_precision:.4f} "
              f"MAP={'n/a' if s.map is None else f'{s.map:.4f}'}")
    print(f"-> {path}")
    return 0


def cmd_baseline(args):
    problems, _ = load_collection(args.corpus)
    out = Path(args.out)
    rows = []
    for problem in problems:
        local = [problem.doc_names[d] for d in problem.doc_ids]
        partition, links = zero_effort_baseline(local,
                                                derived_seed(args.seed, 0))
        write_problem_outputs(out, problem, links, partition)
        row = [problem.problem_id]
        if args.truth:
            truth = truth_for(args.truth, problem)
            _, _, f = bcubed(partition, truth)
            try:
                mean, _ = random_map_baseline(truth, len(local),
                                              args.shuffles, args.seed)
            except NoTrueLinksError:
                mean = None
            row += [f, "" if mean is None else mean]
        rows.append(row)
    if args.truth:
        with open(out / "baseline.csv", "w", newline="",
                  encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["problem", "coward", "random MAP"])
            writer.writerows(rows)
    for row in rows:
        print(" ".join(str(x) for x in row))
    return 0


def sweep_best(aff, truth_local, strategy, config_c):
    """Best F over the clusteriness grid (plus the cowardly endpoint) and
    the largest c achieving it."""
    ids = aff.doc_ids
    coward_f = bcubed(cowardly(ids), truth_local)[2]
    best_f, best_c = coward_f, None
    try:
        anchors = find_anchors(aff, strategy)
    except DegenerateAnchorsError:
        return coward_f, best_c, coward_f
    fixed_f = None
    fn = STRATEGIES[strategy]
    for c in np.round(np.linspace(0.0, 1.0, 101), 2):
        t = clusteriness_threshold(anchors, float(c))
        f = bcubed(fn(aff, t), truth_local)[2]
        if c == round(config_c, 2):
            fixed_f = f
        if f >= best_f:
            best_f, best_c = f, float(c)
    if fixed_f is None:
        t = clusteriness_threshold(anchors, config_c)
        fixed_f = bcubed(fn(aff, t), truth_local)[2]
    return best_f, best_c, fixed_f


def cmd_report(args):
    problems, _ = load_collection(args.corpus)
    matrix = EntropyMatrix.load(args.matrix)
    config = clusteriness_config(args)
    rows = []
    for problem in problems:
        truth = truth_for(args.truth, problem)
        aff, links, _ = problem_outputs(matrix, problem, config)
        try:
            ap = map_score(links, truth) if links else None
        except NoTrueLinksError:
            ap = None
        strategy, c_f = config.lookup(problem.language, problem.genre)
        coward_f = bcubed(cowardly(aff.doc_ids), truth)[2]
        best_f, c_b, fixed_f = sweep_best(aff, truth, strategy, c_f)
        rows.append([f"{problem.language} {problem.genre}",
                     problem.problem_id,
                     "" if ap is None else f"{ap:.3f}",
                     f"{coward_f:.3f}", f"{best_f:.3f}",
                     "" if c_b is None else f"{c_b:.2f}",
                     f"{best_f - coward_f:.3f}",
                     f"{fixed_f:.3f}", f"{c_f:.2f}",
                     f"{fixed_f - coward_f:.3f}"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "report.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["Lang/genre", "problem", "MAP", "coward", "best",
                         "c_b", "diff", "fixed", "c_f", "diff"])
        writer.writerows(rows)
    for row in rows:
        print(" ".join(str(x) for x in row))
    print(f"-> {path}")
    return 0


def cmd_pipeline(args):
    started = time.time()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run_cfg = {}
    if args.config:
        with open(args.config, encoding="utf-8") as f:
            run_cfg = json.load(f)
    # explicit flags beat the config file, which beats built-in defaults
    if args.seed is None:
        args.seed = run_cfg.get("seed", 0)
    if args.control_count is None:
        args.control_count = run_cfg.get("control_count")
    cfg_clusteriness = run_cfg.get("clusteriness")
    if args.clusteriness is not None:
        config = ClusterinessConfig.load(args.clusteriness)
    elif isinstance(cfg_clusteriness, str):
        config = ClusterinessConfig.load(cfg_clusteriness)
    elif isinstance(cfg_clusteriness, dict):
        config = ClusterinessConfig(entries=cfg_clusteriness["entries"])
    else:
        config = ClusterinessConfig()

    problems, docs, controls = load_inputs(args)
    language = run_cfg.get("language") or pick_language(args, problems)
    min_frequency = run_cfg.get("min_frequency", args.min_frequency)

    members = run_cfg.get("ensemble")
    if members is None and "members" in run_cfg:
        # a previous run's manifest works as a config: replay its
        # resolved hyperparameters exactly
        members = [m["hyper"] for m in run_cfg["members"]]
    if members is None:
        total_chars = sum(len(d.raw) for d in docs + controls)
        scale = args.scale if args.scale else corpus_scale(total_chars)
        members = default_ensemble(language, args.members, scale)
    if args.df_threshold is not None:
        for m in members:
            m["df_threshold"] = args.df_threshold
    if args.reverse:
        for m in members:
            m["direction"] = "reverse"
    with_mask = any(m.get("df_threshold") is not None for m in members)
    equivalences = (load_equivalences(args.equivalences)
                    if args.equivalences else None)

    alphabet = build_alphabet_for(docs, controls, language, min_frequency,
                                  with_mask, equivalences)
    alphabet.save(out / "alphabet.json")

    jobs = []
    for i, member in enumerate(members):
        jobs.append((args.corpus, args.controls, args.control_count,
                     args.seed, language, min_frequency, with_mask, member, i,
                     str(out / f"member{i:02d}.mhrnn"),
                     str(out / f"member{i:02d}-matrix.json"),
                     str(out / f"member{i:02d}-log.json"),
                     args.equivalences))
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_member_job, jobs))
    else:
        results = [_member_job(j) for j in jobs]

    combined = ensemble_sum([EntropyMatrix.load(r["matrix"])
                             for r in results])
    combined.save(out / "matrix.json")

    config.save(out / "clusteriness.json")
    for problem in problems:
        _, links, partition = problem_outputs(
            combined, problem, config, args.strategy, args.c)
        write_problem_outputs(out, problem, links, partition)

    manifest = {
        "version": __version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "elapsed_seconds": round(time.time() - started, 3),
        "corpus": str(args.corpus),
        "controls": str(args.controls) if args.controls else None,
        "control_count": args.control_count,
        "language": language,
        "seed": args.seed,
        "min_frequency": min_frequency,
        "equivalences": args.equivalences,
        "alphabet_sha256": alphabet_sha256(alphabet),
        "alphabet_size": len(alphabet),
        "clusteriness": {"config": args.clusteriness,
                         "strategy_override": args.strategy,
                         "c_override": args.c,
                         "entries": config.entries},
        "members": results,
        "problems": [p.problem_id for p in problems],
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=1)

    if args.truth:
        eval_args = argparse.Namespace(corpus=args.corpus, out=str(out),
                                       truth=args.truth)
        cmd_eval(eval_args)
        report_args = argparse.Namespace(
            corpus=args.corpus, matrix=str(out / "matrix.json"),
            truth=args.truth, out=str(out),
            clusteriness=str(out / "clusteriness.json"))
        cmd_report(report_args)
    print(f"pipeline complete in {time.time() - started:.1f}s -> {out}")
    return 0


def _member_job(payload):
    return train_and_score_member(*payload)


# --- argument parsing -----------------------------------------------------


def _add_corpus_args(p, controls=True):
    p.add_argument("--corpus", required=True, help="collection root")
    if controls:
        p.add_argument("--controls", default=None, help="control text dir")
        p.add_argument("--control-count", type=int, default=None,
                       help="controls to sample (default: all)")
    p.add_argument("--language", default=None,
                   help="language tag (default: from collection.json)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--min-frequency", type=float,
                   default=DEFAULT_MIN_FREQUENCY,
                   help="alphabet frequency threshold")
    p.add_argument("--equivalences", default=None,
                   help="character-equivalence config JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="authorclust",
        description="Authorship clustering with a multi-headed character RNN")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic test corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--authors", type=int, default=4)
    p.add_argument("--docs-per-author", type=int, default=6)
    p.add_argument("--chars", type=int, default=2000)
    p.add_argument("--control-count", type=int, default=8)
    p.add_argument("--spread", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("prep", help="build the shared alphabet")
    _add_corpus_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--mask-token", action="store_true",
                   help="force the rare-word token into the alphabet")
    p.set_defaults(fn=cmd_prep)

    p = sub.add_parser("train", help="train one ensemble member")
    _add_corpus_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--member", type=int, default=0)
    p.add_argument("--hyper", default=None, help="hyperparameter JSON file")
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--psn", type=float, default=None)
    p.add_argument("--leak", default=None)
    p.add_argument("--overfit", type=int, default=None)
    p.add_argument("--bptt", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--max-epochs", type=int, default=None)
    p.add_argument("--df-threshold", type=float, default=None)
    p.add_argument("--reverse", action="store_true")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("score", help="score one model against the corpus")
    _add_corpus_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--alphabet", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_score)

    p = sub.add_parser("combine", help="sum member matrices")
    p.add_argument("--matrices", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_combine)

    p = sub.add_parser("cluster", help="matrices to clusterings + rankings")
    p.add_argument("--corpus", required=True)
    p.add_argument("--matrix", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--clusteriness", default=None,
                   help="clusteriness config JSON")
    p.add_argument("--strategy", choices=sorted(STRATEGIES), default=None)
    p.add_argument("--c", type=float, default=None,
                   help="override clusteriness coefficient")
    p.set_defaults(fn=cmd_cluster)

    p = sub.add_parser("eval", help="score outputs against truth")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="pipeline output dir")
    p.add_argument("--truth", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("baseline", help="zero-effort baseline outputs")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--truth", default=None)
    p.add_argument("--shuffles", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_baseline)

    p = sub.add_parser("report", help="threshold-sweep report vs truth")
    p.add_argument("--corpus", required=True)
    p.add_argument("--matrix", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--clusteriness", default=None)
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("pipeline", help="run everything end to end")
    _add_corpus_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, help="run config JSON")
    p.add_argument("--members", type=int, default=5)
    p.add_argument("--scale", type=float, default=None,
                   help="hidden-size scale (default: by corpus size)")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--truth", default=None)
    p.add_argument("--clusteriness", default=None)
    p.add_argument("--strategy", choices=sorted(STRATEGIES), default=None)
    p.add_argument("--c", type=float, default=None)
    p.add_argument("--df-threshold", type=float, default=None)
    p.add_argument("--reverse", action="store_true")
    p.set_defaults(fn=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "seed", None) is None and args.command != "pipeline":
        args.seed = 0
    try:
        return args.fn(args)
    except AuthorclustError as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)},
                  sys.stderr)
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Run configuration, command dispatch, and on-disk serialization.

Configs are flat INI files with exactly five sections.  Unknown sections
or keys are hard errors; values are validated field by field so error
messages name the offending key.

    [model]
    type = kp | obukhov | mixed | tree
    lambda = 2.0
    n_shells = 16               # kp / obukhov / mixed
    alpha = 1.0                 # mixed only
    beta = -0.5                 # mixed only
    d = 2                       # tree only
    depth = 4                   # tree only
    variant = branched_kp       # tree only (or branched_obukhov)

    [datum]
    type = unit_mode | explicit | random
    mode = 0                    # unit_mode: shell (or tree node) index
    amplitude = 1.0             # unit_mode, optional
    values = 1.0, 0.0, 0.25     # explicit: one value per mode
    s = 2.0                     # random (shell models only)
    delta = 0.1                 # random, optional
    seed = 0                    # random, optional

    [integration]
    t_end = 10.0                # required
    rel_tol = 1e-10
    abs_tol = 1e-12
    dt_init = 1e-4
    dt_min = 1e-14
    blowup_threshold = 1e8
    sample_interval = 0.01      # default t_end / 1000

    [output]
    dir = out
    formats = csv

    [diagnostics]
    sobolev_indices = 1.5, 2.5  # extra h{s} columns in diag.csv
    invariant_checks = on
    wavefront_levels = 6..16    # feeds event detection; a..b or list

Every section except [integration] may be omitted when the defaults
suffice ([model] and [datum] are required).  The `hs` column of
diag.csv uses s = 2 unless the datum is random, in which case it uses
the datum's own s.

Emitted files use shortest round-trip decimal for floats, so state.csv
reproduces the in-memory samples bit-exactly when parsed back.  The
manifest's config hash covers the effective section.key=value pairs
(sorted), making it immune to comment and whitespace reshuffling.
Thread counts are an execution detail and never appear in outputs;
repeated runs of the same config are byte-identical except for the
manifest's wall_time_seconds field.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import enum
import hashlib
import json
import math
import os
import re
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .branched_tree import TreeParams, TreeState, TreeVariant, picard_time, tree_sobolev_norm
from .diagnostics import InvariantReport, SobolevSpec, check_invariants, sobolev_norm, sup_scaled, wavefront_report
from .ensemble import EnsembleSummary, RandomDatumSpec, run_ensemble, sample_initial_datum
from .errors import CascadeError, NoEvents, ParseError, ValidationError
from .integrator import IntegrationConfig, Trajectory, integrate
from .model_core import ModelParams, ShellState

ENV_THREADS = "DYADIC_CASCADE_THREADS"

_SECTION_KEYS: dict[str, frozenset[str]] = {
    "model": frozenset({"type", "lambda", "n_shells", "alpha", "beta", "d", "depth", "variant"}),
    "datum": frozenset({"type", "mode", "amplitude", "values", "s", "delta", "seed"}),
    "integration": frozenset(
        {"t_end", "rel_tol", "abs_tol", "dt_init", "dt_min", "blowup_threshold", "sample_interval"}
    ),
    "diagnostics": frozenset({"sobolev_indices", "invariant_checks", "wavefront_levels"}),
    "output": frozenset({"dir", "formats"}),
}

_MODEL_KEYS = {
    "kp": frozenset({"type", "lambda", "n_shells"}),
    "obukhov": frozenset({"type", "lambda", "n_shells"}),
    "mixed": frozenset({"type", "lambda", "n_shells", "alpha", "beta"}),
    "tree": frozenset({"type", "lambda", "d", "depth", "variant"}),
}

_DATUM_KEYS = {
    "unit_mode": frozenset({"type", "mode", "amplitude"}),
    "explicit": frozenset({"type", "values"}),
    "random": frozenset({"type", "s", "delta", "seed"}),
}


class DatumKind(enum.Enum):
    UNIT_MODE = "unit_mode"
    EXPLICIT = "explicit"
    RANDOM = "random"


@dataclass(frozen=True)
class DatumConfig:
    """One of three datum sources; exactly the fields for its kind are set."""

    kind: DatumKind
    mode: int = 0
    amplitude: float = 1.0
    values: tuple[float, ...] | None = None
    random: RandomDatumSpec | None = None


@dataclass(frozen=True)
class DiagnosticsConfig:
    sobolev_indices: tuple[float, ...] = ()
    invariant_checks: bool = True
    wavefront_levels: frozenset[int] = frozenset()
    hs: float = 2.0


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "."
    formats: tuple[str, ...] = ("csv",)


@dataclass(frozen=True)
class RunConfig:
    """Fully validated run description plus the raw pairs it came from."""

    model: ModelParams | TreeParams
    datum: DatumConfig
    integration: IntegrationConfig
    diagnostics: DiagnosticsConfig
    output: OutputConfig
    pairs: dict[str, dict[str, str]]


@dataclass(frozen=True)
class RunManifest:
    """Reproducibility record written next to the data files.

    config_hash is a sha256 over the sorted effective section.key=value
    lines, so it is stable across platforms, comment edits, whitespace,
    and key reordering, and changes whenever any value changes.
    """

    command: str
    config: dict[str, dict[str, str]]
    config_hash: str
    seeds: tuple[int, ...]
    termination: str
    wall_time_seconds: float
    artifact_version: str
    files: tuple[str, ...] = ()
    sha256: tuple[tuple[str, str], ...] = ()

    def to_json(self) -> str:
        d = dataclasses.asdict(self)
        d["seeds"] = list(self.seeds)
        d["files"] = list(self.files)
        d["sha256"] = {name: h for name, h in self.sha256}
        return json.dumps(d, sort_keys=True, indent=2) + "\n"


# --- config text handling ---------------------------------------------


def _line_of(text: str, section: str, key: str | None = None) -> int | None:
    """Best-effort line number of a section header or of a key inside it."""
    in_section = False
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"\[([^]]*)\]", line)
        if m:
            if key is None and m.group(1) == section:
                return ln
            in_section = m.group(1) == section
            continue
        if key is not None and in_section and re.match(rf"{re.escape(key)}\s*[=:]", line):
            return ln
    return None


def _where(text: str, section: str, key: str | None = None) -> str:
    ln = _line_of(text, section, key)
    return f"line {ln}: " if ln is not None else ""


def _read_pairs(text: str) -> dict[str, dict[str, str]]:
    """Parse INI text into {section: {key: value}}, rejecting unknowns."""
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    cp.optionxform = str  # keys are case-sensitive
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ParseError(str(e)) from e
    if cp.defaults():
        raise ParseError(_where(text, "DEFAULT") + "unknown section [DEFAULT]")
    pairs: dict[str, dict[str, str]] = {}
    for section in cp.sections():
        if section not in _SECTION_KEYS:
            raise ParseError(_where(text, section) + f"unknown section [{section}]")
        allowed = _SECTION_KEYS[section]
        sec: dict[str, str] = {}
        for key in cp.options(section):
            if key not in allowed:
                raise ParseError(_where(text, section, key) + f"unknown key '{key}' in [{section}]")
            # collapse internal whitespace so hashing and re-serialization
            # are immune to line continuations and alignment spaces
            sec[key] = " ".join(cp.get(section, key).split())
        pairs[section] = sec
    return pairs


def semantic_config_hash(pairs: dict[str, dict[str, str]]) -> str:
    """Hash of the sorted section.key=value lines, minus [output].

    The output location is plumbing, not science: two runs that differ
    only in where their files land share a hash, so the manifest can be
    used to recognise reruns of the same experiment.
    """
    lines = sorted(
        f"{sec}.{key}={val}"
        for sec, kv in pairs.items()
        if sec != "output"
        for key, val in kv.items()
    )
    return "sha256:" + hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()


def _need(pairs: dict[str, dict[str, str]], section: str, key: str) -> str:
    try:
        return pairs[section][key]
    except KeyError:
        raise ValidationError(key, f"missing required key '{key}' in [{section}]") from None


def _as_float(key: str, raw: str) -> float:
    try:
        v = float(raw)
    except ValueError:
        raise ValidationError(key, f"'{raw}' is not a number") from None
    if not math.isfinite(v):
        raise ValidationError(key, f"'{raw}' is not finite")
    return v


def _as_int(key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ValidationError(key, f"'{raw}' is not an integer") from None


def _as_bool(key: str, raw: str) -> bool:
    low = raw.lower()
    if low in ("on", "true", "yes", "1"):
        return True
    if low in ("off", "false", "no", "0"):
        return False
    raise ValidationError(key, f"'{raw}' is not on/off")


def _as_float_list(key: str, raw: str) -> tuple[float, ...]:
    toks = [t for t in re.split(r"[,\s]+", raw.strip()) if t]
    return tuple(_as_float(key, t) for t in toks)


def _as_level_set(key: str, raw: str) -> frozenset[int]:
    """Comma list of levels; 'a..b' expands to the inclusive range."""
    out: set[int] = set()
    for tok in (t for t in re.split(r"[,\s]+", raw.strip()) if t):
        if ".." in tok:
            lo_s, _, hi_s = tok.partition("..")
            lo, hi = _as_int(key, lo_s), _as_int(key, hi_s)
            if lo > hi:
                raise ValidationError(key, f"empty range '{tok}'")
            out.update(range(lo, hi + 1))
        else:
            out.add(_as_int(key, tok))
    return frozenset(out)


def _reject_extra(pairs: dict[str, dict[str, str]], section: str, allowed: frozenset[str], context: str) -> None:
    for key in pairs.get(section, {}):
        if key not in allowed:
            raise ValidationError(key, f"key '{key}' does not apply to {context}")


def _parse_model(pairs: dict[str, dict[str, str]]) -> ModelParams | TreeParams:
    kind = _need(pairs, "model", "type").lower()
    if kind not in _MODEL_KEYS:
        raise ValidationError("type", f"unknown model type '{kind}'")
    _reject_extra(pairs, "model", _MODEL_KEYS[kind], f"model type '{kind}'")
    lam = _as_float("lambda", _need(pairs, "model", "lambda"))
    if not lam > 1.0:
        raise ValidationError("lambda", f"lambda must be > 1, got {lam}")
    if kind == "tree":
        d = _as_int("d", _need(pairs, "model", "d"))
        depth = _as_int("depth", _need(pairs, "model", "depth"))
        var_raw = _need(pairs, "model", "variant").lower()
        try:
            variant = TreeVariant(var_raw)
        except ValueError:
            raise ValidationError("variant", f"unknown variant '{var_raw}'") from None
        if d < 1:
            raise ValidationError("d", f"d must be >= 1, got {d}")
        if depth < 1:
            raise ValidationError("depth", f"depth must be >= 1, got {depth}")
        return TreeParams(lam=lam, d=d, depth=depth, variant=variant)
    n = _as_int("n_shells", _need(pairs, "model", "n_shells"))
    if n < 2:
        raise ValidationError("n_shells", f"n_shells must be >= 2, got {n}")
    if kind == "kp":
        alpha, beta = 1.0, 0.0
    elif kind == "obukhov":
        alpha, beta = 0.0, 1.0
    else:
        alpha = _as_float("alpha", _need(pairs, "model", "alpha"))
        beta = _as_float("beta", _need(pairs, "model", "beta"))
        if alpha == 0.0 and beta == 0.0:
            raise ValidationError("alpha", "alpha and beta cannot both be zero")
    return ModelParams(lam=lam, alpha=alpha, beta=beta, n_shells=n)


def _parse_datum(pairs: dict[str, dict[str, str]], model: ModelParams | TreeParams) -> DatumConfig:
    kind_raw = _need(pairs, "datum", "type").lower()
    try:
        kind = DatumKind(kind_raw)
    except ValueError:
        raise ValidationError("type", f"unknown datum type '{kind_raw}'") from None
    _reject_extra(pairs, "datum", _DATUM_KEYS[kind.value], f"datum type '{kind.value}'")
    size = model.node_count if isinstance(model, TreeParams) else model.n_shells
    sec = pairs.get("datum", {})
    if kind is DatumKind.UNIT_MODE:
        mode = _as_int("mode", _need(pairs, "datum", "mode"))
        if not 0 <= mode < size:
            raise ValidationError("mode", f"mode {mode} outside [0, {size})")
        amp = _as_float("amplitude", sec.get("amplitude", "1.0"))
        return DatumConfig(kind=kind, mode=mode, amplitude=amp)
    if kind is DatumKind.EXPLICIT:
        values = _as_float_list("values", _need(pairs, "datum", "values"))
        if len(values) != size:
            raise ValidationError("values", f"expected {size} values, got {len(values)}")
        return DatumConfig(kind=kind, values=values)
    if isinstance(model, TreeParams):
        raise ValidationError("type", "random datum is only defined for shell models")
    s = _as_float("s", _need(pairs, "datum", "s"))
    if not s > 1.0:
        raise ValidationError("s", f"s must be > 1, got {s}")
    delta = _as_float("delta", sec.get("delta", "0.1"))
    if not delta > 0.0:
        raise ValidationError("delta", f"delta must be > 0, got {delta}")
    seed = _as_int("seed", sec.get("seed", "0"))
    if not 0 <= seed < 2**64:
        raise ValidationError("seed", f"seed {seed} outside [0, 2**64)")
    spec = RandomDatumSpec(s=s, n_shells=model.n_shells, seed=seed, delta=delta)
    return DatumConfig(kind=kind, random=spec)


def _parse_integration(
    pairs: dict[str, dict[str, str]], wavefront: frozenset[int]
) -> IntegrationConfig:
    sec = pairs.get("integration", {})
    t_end = _as_float("t_end", _need(pairs, "integration", "t_end"))
    if not t_end > 0.0:
        raise ValidationError("t_end", f"t_end must be > 0, got {t_end}")
    kw: dict[str, float] = {}
    for key in ("rel_tol", "abs_tol", "dt_init", "dt_min", "blowup_threshold", "sample_interval"):
        if key in sec:
            v = _as_float(key, sec[key])
            if not v > 0.0:
                raise ValidationError(key, f"{key} must be > 0, got {v}")
            kw[key] = v
    try:
        return IntegrationConfig(t_end=t_end, event_levels=wavefront, **kw)
    except CascadeError as e:  # cross-field violations keep the field name
        for key in ("dt_min", "dt_init", "sample_interval", "rel_tol", "abs_tol"):
            if key in str(e):
                raise ValidationError(key, str(e)) from None
        raise ValidationError("t_end", str(e)) from None


def _parse_diagnostics(
    pairs: dict[str, dict[str, str]], model: ModelParams | TreeParams, datum: DatumConfig
) -> DiagnosticsConfig:
    sec = pairs.get("diagnostics", {})
    indices = _as_float_list("sobolev_indices", sec.get("sobolev_indices", ""))
    for r in indices:
        if r < 0.0:
            raise ValidationError("sobolev_indices", f"index {r} is negative")
    checks = _as_bool("invariant_checks", sec.get("invariant_checks", "on"))
    levels = _as_level_set("wavefront_levels", sec.get("wavefront_levels", ""))
    if levels:
        if isinstance(model, TreeParams):
            raise ValidationError("wavefront_levels", "wavefront tracking applies to shell models only")
        bad = [j for j in levels if not 0 <= j < model.n_shells]
        if bad:
            raise ValidationError("wavefront_levels", f"levels {sorted(bad)} outside [0, {model.n_shells})")
    hs = datum.random.s if datum.random is not None else 2.0
    return DiagnosticsConfig(
        sobolev_indices=indices, invariant_checks=checks, wavefront_levels=levels, hs=hs
    )


def _parse_output(pairs: dict[str, dict[str, str]]) -> OutputConfig:
    sec = pairs.get("output", {})
    out_dir = sec.get("dir", ".")
    formats = tuple(t for t in re.split(r"[,\s]+", sec.get("formats", "csv").strip()) if t)
    for f in formats:
        if f != "csv":
            raise ValidationError("formats", f"unsupported format '{f}'")
    if not formats:
        raise ValidationError("formats", "no formats given")
    return OutputConfig(dir=out_dir, formats=formats)


def parse_config(text: str) -> RunConfig:
    """Parse and validate config text; raises ParseError or ValidationError."""
    pairs = _read_pairs(text)
    model = _parse_model(pairs)
    datum = _parse_datum(pairs, model)
    diagnostics = _parse_diagnostics(pairs, model, datum)
    integration = _parse_integration(pairs, diagnostics.wavefront_levels)
    output = _parse_output(pairs)
    return RunConfig(
        model=model,
        datum=datum,
        integration=integration,
        diagnostics=diagnostics,
        output=output,
        pairs=pairs,
    )


def _merge_overrides(text: str, overrides: list[tuple[str, str, str]]) -> dict[str, dict[str, str]]:
    pairs = _read_pairs(text)
    for section, key, value in overrides:
        if section not in _SECTION_KEYS:
            raise ParseError(f"unknown section [{section}] in override")
        if key not in _SECTION_KEYS[section]:
            raise ParseError(f"unknown key '{key}' in override [{section}]")
        pairs.setdefault(section, {})[key] = value
    return pairs


def _pairs_to_text(pairs: dict[str, dict[str, str]]) -> str:
    chunks = []
    for section in sorted(pairs):
        body = "".join(f"{k} = {v}\n" for k, v in sorted(pairs[section].items()))
        chunks.append(f"[{section}]\n{body}")
    return "\n".join(chunks)


def _materialize_datum(cfg: RunConfig) -> ShellState | TreeState:
    model = cfg.model
    size = model.node_count if isinstance(model, TreeParams) else model.n_shells
    d = cfg.datum
    if d.kind is DatumKind.RANDOM:
        assert d.random is not None
        return sample_initial_datum(d.random, model.lam)
    u = np.zeros(size)
    if d.kind is DatumKind.UNIT_MODE:
        u[d.mode] = d.amplitude
    else:
        assert d.values is not None
        u[:] = d.values
    if isinstance(model, TreeParams):
        return TreeState(u=u, d=model.d)
    return ShellState(u=u)


# --- serialization -----------------------------------------------------


def _fmt(x: float) -> str:
    """Shortest decimal that round-trips binary64."""
    return repr(float(x))


def _write_text(path: str, text: str) -> str:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def _sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _norm_column_name(r: float) -> str:
    return "h" + _fmt(r)


def _state_csv(traj: Trajectory) -> str:
    n = traj.us.shape[1]
    header = "t," + ",".join(f"u{j}" for j in range(n))
    rows = [header]
    for i in range(traj.n_samples):
        rows.append(_fmt(traj.ts[i]) + "," + ",".join(_fmt(v) for v in traj.us[i]))
    return "\n".join(rows) + "\n"


def _diag_csv(traj: Trajectory, reports: DiagnosticsConfig) -> str:
    p = traj.params
    lam = p.lam
    extra = []
    seen = {1.0, reports.hs}
    for r in reports.sobolev_indices:
        if r not in seen:
            extra.append(r)
            seen.add(r)
    header = "t,energy,h1,hs,sup_scaled,argmax_j" + "".join("," + _norm_column_name(r) for r in extra)
    rows = [header]
    tree = isinstance(p, TreeParams)
    if tree:
        w_sup = lam ** p.levels.astype(np.float64)

        def norms(state, r):
            return tree_sobolev_norm(state, lam, r)

    else:
        spec_h1 = SobolevSpec(lam=lam, s=1.0)
        spec_hs = SobolevSpec(lam=lam, s=reports.hs)
        extra_specs = [SobolevSpec(lam=lam, s=r) for r in extra]
    for i in range(traj.n_samples):
        state = traj.state_at(i)
        energy = state.energy()
        if tree:
            h1 = norms(state, 1.0)
            hs = norms(state, reports.hs)
            scaled = w_sup * traj.us[i]
            k = int(np.argmax(scaled))  # first index wins ties
            sup, arg = float(scaled[k]), k
            extras = [norms(state, r) for r in extra]
        else:
            h1 = sobolev_norm(state, spec_h1)
            hs = sobolev_norm(state, spec_hs)
            sup, arg = sup_scaled(state, lam)
            extras = [sobolev_norm(state, sp) for sp in extra_specs]
        row = [_fmt(traj.ts[i]), _fmt(energy), _fmt(h1), _fmt(hs), _fmt(sup), str(arg)]
        row.extend(_fmt(v) for v in extras)
        rows.append(",".join(row))
    return "\n".join(rows) + "\n"


def _events_csv(traj: Trajectory) -> str:
    rows = ["j,t_j"]
    rows.extend(f"{ev.level},{_fmt(ev.t)}" for ev in traj.events)
    return "\n".join(rows) + "\n"


def emit_timeseries(
    traj: Trajectory,
    reports: DiagnosticsConfig | None,
    out_dir: str,
    manifest: RunManifest | None = None,
    extra_files: tuple[str, ...] = (),
) -> list[str]:
    """Write state.csv, diag.csv, events.csv, and a manifest into out_dir.

    Returns the list of file names written.  extra_files names files
    already present in out_dir that should be listed and hashed in the
    manifest alongside the three data files.
    """
    if reports is None:
        reports = DiagnosticsConfig()
    os.makedirs(out_dir, exist_ok=True)
    written = []
    _write_text(os.path.join(out_dir, "state.csv"), _state_csv(traj))
    written.append("state.csv")
    _write_text(os.path.join(out_dir, "diag.csv"), _diag_csv(traj, reports))
    written.append("diag.csv")
    _write_text(os.path.join(out_dir, "events.csv"), _events_csv(traj))
    written.append("events.csv")
    hashed = sorted(written + list(extra_files))
    sha = tuple((name, _sha256_file(os.path.join(out_dir, name))) for name in hashed)
    if manifest is None:
        manifest = RunManifest(
            command="emit_timeseries",
            config={},
            config_hash=semantic_config_hash({}),
            seeds=(),
            termination=traj.termination.value,
            wall_time_seconds=traj.stats.wall_time,
            artifact_version=__version__,
        )
    manifest = dataclasses.replace(manifest, files=tuple(hashed) + ("manifest.json",), sha256=sha)
    _write_text(os.path.join(out_dir, "manifest.json"), manifest.to_json())
    written = hashed + ["manifest.json"]
    return written


def load_state_csv(path: str) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of the state.csv writer; returns (ts, us) bit-exactly."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln]
    rows = [[float(tok) for tok in ln.split(",")] for ln in lines[1:]]
    arr = np.array(rows, dtype=np.float64).reshape(len(rows), -1)
    return arr[:, 0].copy(), arr[:, 1:].copy()


def load_events_csv(path: str) -> list[tuple[int, float]]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln]
    return [(int(a), float(b)) for a, b in (ln.split(",") for ln in lines[1:])]


def _invariant_json(rep: InvariantReport) -> dict:
    return {
        "passed": rep.passed,
        "checks": [
            {
                "name": c.name,
                "status": c.status.value,
                "worst": c.worst,
                "tol": c.tol,
                "where": c.where,
            }
            for c in rep.checks
        ],
    }


def _wavefront_json(traj: Trajectory, lam: float) -> dict | None:
    try:
        rep = wavefront_report(traj, lam)
    except NoEvents:
        return None
    return {
        "levels": list(rep.levels),
        "times": list(rep.times),
        "deltas": list(rep.deltas),
        "ratios": list(rep.ratios),
        "median_ratio": rep.median_ratio,
        "blowup_estimate": rep.blowup_estimate,
    }


# --- dispatch ----------------------------------------------------------


def _resolve_threads(flag: int | None) -> int:
    if flag is not None:
        if flag < 1:
            raise ValidationError("threads", f"threads must be >= 1, got {flag}")
        return flag
    env = os.environ.get(ENV_THREADS)
    if env is not None:
        try:
            n = int(env)
        except ValueError:
            raise ValidationError("threads", f"{ENV_THREADS}='{env}' is not an integer") from None
        if n < 1:
            raise ValidationError("threads", f"{ENV_THREADS} must be >= 1, got {n}")
        return n
    return os.cpu_count() or 1


def _split_override(spec: str) -> tuple[str, str, str]:
    head, sep, value = spec.partition("=")
    if not sep:
        raise ParseError(f"override '{spec}' is not section.key=value")
    section, dot, key = head.strip().partition(".")
    if not dot or not section or not key:
        raise ParseError(f"override '{spec}' is not section.key=value")
    return section, key.strip(), value.strip()


def _load_config(ns: argparse.Namespace) -> RunConfig:
    if ns.config is None:
        raise ParseError("--config is required for this command")
    with open(ns.config, encoding="utf-8") as fh:
        text = fh.read()
    overrides = [_split_override(s) for s in ns.set or []]
    if ns.seed is not None:
        overrides.append(("datum", "seed", str(ns.seed)))
    if ns.out is not None:
        overrides.append(("output", "dir", ns.out))
    pairs = _merge_overrides(text, overrides)
    return parse_config(_pairs_to_text(pairs))


def _run_seeds(cfg: RunConfig) -> tuple[int, ...]:
    if cfg.datum.random is not None:
        return (cfg.datum.random.seed,)
    return ()


def _simulate_like(ns: argparse.Namespace, want_tree: bool) -> int:
    cfg = _load_config(ns)
    is_tree = isinstance(cfg.model, TreeParams)
    if is_tree != want_tree:
        need = "tree" if want_tree else "kp, obukhov, or mixed"
        raise ValidationError("type", f"this command requires a model of type {need}")
    t0 = time.perf_counter()
    datum = _materialize_datum(cfg)
    traj = integrate(cfg.model, datum, cfg.integration)
    report: dict = {}
    rc = 0
    # a threshold crossing at t=0 leaves a single sample, too short to check
    if cfg.diagnostics.invariant_checks and traj.n_samples >= 2:
        inv = check_invariants(traj, cfg.model)
        report["invariants"] = _invariant_json(inv)
        if not inv.passed:
            rc = 1
    if cfg.diagnostics.wavefront_levels:
        report["wavefront"] = _wavefront_json(traj, cfg.model.lam)
    out_dir = cfg.output.dir
    os.makedirs(out_dir, exist_ok=True)
    extra: tuple[str, ...] = ()
    if report:
        _write_text(os.path.join(out_dir, "report.json"), json.dumps(report, sort_keys=True, indent=2) + "\n")
        extra = ("report.json",)
    manifest = RunManifest(
        command="tree" if want_tree else "simulate",
        config=cfg.pairs,
        config_hash=semantic_config_hash(cfg.pairs),
        seeds=_run_seeds(cfg),
        termination=traj.termination.value,
        wall_time_seconds=time.perf_counter() - t0,
        artifact_version=__version__,
    )
    emit_timeseries(traj, cfg.diagnostics, out_dir, manifest=manifest, extra_files=extra)
    print(f"termination: {traj.termination.value}  t_final: {_fmt(traj.ts[-1])}  samples: {traj.n_samples}")
    if rc:
        print("invariant check failed; see report.json", file=sys.stderr)
    return rc


def _cmd_simulate(ns: argparse.Namespace) -> int:
    return _simulate_like(ns, want_tree=False)


def _cmd_tree(ns: argparse.Namespace) -> int:
    return _simulate_like(ns, want_tree=True)


def _ensemble_csv(summary: EnsembleSummary) -> str:
    rows = ["seed,norm_hs_initial,sup_norm_hr,final_mode0_fraction,termination,nonfinite"]
    for rec in summary.records:
        rows.append(
            f"{rec.seed},{_fmt(rec.norm_hs_initial)},{_fmt(rec.sup_norm_hr)},"
            f"{_fmt(rec.final_mode0_fraction)},{rec.termination.value},{int(rec.nonfinite)}"
        )
    return "\n".join(rows) + "\n"


def _cmd_ensemble(ns: argparse.Namespace) -> int:
    cfg = _load_config(ns)
    if isinstance(cfg.model, TreeParams):
        raise ValidationError("type", "ensembles run on shell models only")
    if cfg.datum.random is None:
        raise ValidationError("type", "ensembles need a random datum")
    threads = _resolve_threads(ns.threads)
    t0 = time.perf_counter()
    summary = run_ensemble(cfg.model, cfg.datum.random, ns.n_runs, cfg.integration, ns.r, threads=threads)
    out_dir = cfg.output.dir
    os.makedirs(out_dir, exist_ok=True)
    _write_text(os.path.join(out_dir, "ensemble.csv"), _ensemble_csv(summary))
    agg = {
        "n_runs": summary.n_runs,
        "r": summary.r,
        "sup_norm_hr_max": summary.sup_norm_hr_max,
        "sup_norm_hr_median": summary.sup_norm_hr_median,
        "sup_norm_hr_q90": summary.sup_norm_hr_q90,
        "n_reached_t_end": summary.n_reached_t_end,
        "n_blowup": summary.n_blowup,
        "n_underflow": summary.n_underflow,
    }
    _write_text(os.path.join(out_dir, "summary.json"), json.dumps(agg, sort_keys=True, indent=2) + "\n")
    term = (
        f"reached_t_end={summary.n_reached_t_end},blowup_threshold={summary.n_blowup},"
        f"step_underflow={summary.n_underflow}"
    )
    files = sorted(["ensemble.csv", "summary.json"])
    sha = tuple((name, _sha256_file(os.path.join(out_dir, name))) for name in files)
    manifest = RunManifest(
        command="ensemble",
        config=cfg.pairs,
        config_hash=semantic_config_hash(cfg.pairs),
        seeds=(cfg.datum.random.seed,),
        termination=term,
        wall_time_seconds=time.perf_counter() - t0,
        artifact_version=__version__,
        files=tuple(files) + ("manifest.json",),
        sha256=sha,
    )
    _write_text(os.path.join(out_dir, "manifest.json"), manifest.to_json())
    print(f"runs: {summary.n_runs}  {term}  sup_hr_max: {_fmt(summary.sup_norm_hr_max)}")
    return 0


def _cmd_picard(ns: argparse.Namespace) -> int:
    print(repr(picard_time(ns.norm, ns.d, ns.lam, ns.s)))
    return 0


def _cmd_verify(ns: argparse.Namespace) -> int:
    from . import selfcheck

    failures = selfcheck.run_suite(corrupt_rhs=ns.corrupt_rhs, emit=print)
    return 1 if failures else 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dyadic-cascade",
        description="Numerical laboratory for dyadic shell models of the Euler equations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="path to the run config file")
        p.add_argument("--out", help="output directory (overrides [output] dir)")
        p.add_argument("--seed", type=int, help="override [datum] seed")
        p.add_argument(
            "--set",
            action="append",
            metavar="SECTION.KEY=VALUE",
            help="override any config key; repeatable",
        )

    p_sim = sub.add_parser("simulate", help="integrate one shell-model trajectory")
    add_run_flags(p_sim)
    p_ens = sub.add_parser("ensemble", help="batch of runs over consecutive seeds")
    add_run_flags(p_ens)
    p_ens.add_argument("--n-runs", type=int, required=True, help="number of ensemble members")
    p_ens.add_argument("--r", type=float, required=True, help="Sobolev index tracked per run")
    p_ens.add_argument("--threads", type=int, help=f"worker threads (default: {ENV_THREADS} or all cores)")
    p_tree = sub.add_parser("tree", help="integrate one branched-tree trajectory")
    add_run_flags(p_tree)
    p_pic = sub.add_parser("picard", help="print the local-existence horizon T_max")
    p_pic.add_argument("--norm", type=float, required=True, help="initial H^s norm")
    p_pic.add_argument("--d", type=int, required=True, help="branching factor")
    p_pic.add_argument("--lambda", dest="lam", type=float, required=True, help="scale ratio")
    p_pic.add_argument("--s", type=float, required=True, help="Sobolev index (>= 1)")
    p_ver = sub.add_parser("verify", help="run the built-in invariant suite")
    p_ver.add_argument("--corrupt-rhs", action="store_true", help=argparse.SUPPRESS)
    return parser


def dispatch(argv: list[str]) -> int:
    """Run one subcommand; returns 0 on success, 1 on invariant failure, 2 on config errors."""
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 2
    try:
        return {
            "simulate": _cmd_simulate,
            "ensemble": _cmd_ensemble,
            "tree": _cmd_tree,
            "picard": _cmd_picard,
            "verify": _cmd_verify,
        }[ns.command](ns)
    except (CascadeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()

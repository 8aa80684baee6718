"""Line-oriented text format for tabular POMDPs.

Example::

    # two-state toy
    discount: 0.95
    states: left right          # a count or a list of labels
    actions: 2
    observations: hear-left hear-right
    start: 0.5 0.5              # optional, uniform by default
    terminal:                   # optional state list
    T: 0 left left 1.0          # a s s' p
    O: 0 left hear-left 0.85    # a s' o p
    R: left 0 -1                # s a r

Indices and labels are interchangeable wherever a state, action or
observation is expected.  Entries that are never given are zero; a later
line for the same entry overwrites an earlier one.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from erpbvi.errors import ParseError
from erpbvi.model import TabularPomdp

_HEADER_KEYS = ("discount", "states", "actions", "observations", "start", "terminal")


def _space(value: str, lineno: int) -> tuple[int, tuple | None]:
    toks = value.split()
    if len(toks) == 1 and toks[0].isdigit():
        n = int(toks[0])
        if n <= 0:
            raise ParseError("space size must be positive", lineno)
        return n, None
    if not toks:
        raise ParseError("empty space declaration", lineno)
    if len(set(toks)) != len(toks):
        raise ParseError("duplicate labels", lineno)
    return len(toks), tuple(toks)


def _index(tok: str, n: int, labels, kind: str, lineno: int) -> int:
    if labels is not None and tok in labels:
        return labels.index(tok)
    try:
        i = int(tok)
    except ValueError:
        raise ParseError(f"unknown {kind} {tok!r}", lineno) from None
    if not 0 <= i < n:
        raise ParseError(f"{kind} index {i} out of range [0, {n})", lineno)
    return i


def _number(tok: str, lineno: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise ParseError(f"expected a number, got {tok!r}", lineno) from None


def parse_model_text(text: str) -> TabularPomdp:
    header: dict = {}
    body = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise ParseError(f"expected 'key: value', got {line!r}", lineno)
        key, value = (part.strip() for part in line.split(":", 1))
        if key in ("T", "O", "R"):
            body.append((lineno, key, value.split()))
        elif key in _HEADER_KEYS:
            if key in header:
                raise ParseError(f"duplicate {key!r} declaration", lineno)
            header[key] = (lineno, value)
        else:
            raise ParseError(f"unknown key {key!r}", lineno)

    for key in ("discount", "states", "actions", "observations"):
        if key not in header:
            raise ParseError(f"missing {key!r} declaration")
    discount = _number(header["discount"][1], header["discount"][0])
    S, s_lab = _space(header["states"][1], header["states"][0])
    A, a_lab = _space(header["actions"][1], header["actions"][0])
    O, o_lab = _space(header["observations"][1], header["observations"][0])

    b0 = None
    if "start" in header:
        ln, value = header["start"]
        toks = value.split()
        if len(toks) != S:
            raise ParseError(f"start belief needs {S} entries, got {len(toks)}", ln)
        b0 = np.array([_number(t, ln) for t in toks])
    terminal = set()
    if "terminal" in header:
        ln, value = header["terminal"]
        terminal = {_index(t, S, s_lab, "state", ln) for t in value.split()}

    T = np.zeros((S, A, S))
    Z = np.zeros((A, S, O))
    R = np.zeros((S, A))
    for ln, key, toks in body:
        want = 3 if key == "R" else 4
        if len(toks) != want:
            raise ParseError(f"{key} line needs {want} fields, got {len(toks)}", ln)
        if key == "T":
            a = _index(toks[0], A, a_lab, "action", ln)
            s = _index(toks[1], S, s_lab, "state", ln)
            s2 = _index(toks[2], S, s_lab, "state", ln)
            T[s, a, s2] = _number(toks[3], ln)
        elif key == "O":
            a = _index(toks[0], A, a_lab, "action", ln)
            s2 = _index(toks[1], S, s_lab, "state", ln)
            o = _index(toks[2], O, o_lab, "observation", ln)
            Z[a, s2, o] = _number(toks[3], ln)
        else:
            s = _index(toks[0], S, s_lab, "state", ln)
            a = _index(toks[1], A, a_lab, "action", ln)
            R[s, a] = _number(toks[2], ln)

    return TabularPomdp(T, Z, R, discount, terminal, b0, s_lab, a_lab, o_lab)


def parse_model_file(path) -> TabularPomdp:
    return parse_model_text(Path(path).read_text())


def _names(labels, n: int) -> list:
    return list(labels) if labels is not None else [str(i) for i in range(n)]


def export_model_text(model: TabularPomdp) -> str:
    """Inverse of ``parse_model_text``; only nonzero entries are written."""
    S, A, O = model.n_states, model.n_actions, model.n_observations
    s_n = _names(model.state_labels, S)
    a_n = _names(model.action_labels, A)
    o_n = _names(model.observation_labels, O)

    def space(labels, n):
        return " ".join(labels) if labels is not None else str(n)

    lines = [
        f"discount: {model.discount!r}",
        f"states: {space(model.state_labels, S)}",
        f"actions: {space(model.action_labels, A)}",
        f"observations: {space(model.observation_labels, O)}",
        "start: " + " ".join(repr(float(x)) for x in model.initial_belief),
    ]
    if model.terminal_states:
        lines.append("terminal: " + " ".join(s_n[s] for s in sorted(model.terminal_states)))
    for s, a, s2 in zip(*np.nonzero(model.transition)):
        lines.append(f"T: {a_n[a]} {s_n[s]} {s_n[s2]} {float(model.transition[s, a, s2])!r}")
    for a, s2, o in zip(*np.nonzero(model.observation)):
        lines.append(f"O: {a_n[a]} {s_n[s2]} {o_n[o]} {float(model.observation[a, s2, o])!r}")
    for s, a in zip(*np.nonzero(model.reward)):
        lines.append(f"R: {s_n[s]} {a_n[a]} {float(model.reward[s, a])!r}")
    return "\n".join(lines) + "\n"


def write_model_file(model: TabularPomdp, path) -> None:
    Path(path).write_text(export_model_text(model))

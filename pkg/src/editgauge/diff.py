"""Line- and token-level diffing on top of Myers' O(ND) algorithm.

Both levels share one engine. Lines are compared exactly (a trailing CR is
dropped first); tokens are compared as plain strings. Inside every run of
changes deletions are emitted before insertions, which makes the script
canonical and independent of the backtracking order.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

KEEP = "="
ADD = "+"
DEL = "-"


@dataclass(frozen=True)
class Hunk:
    removed_lines: tuple[str, ...]
    added_lines: tuple[str, ...]
    old_start: int
    new_start: int


@dataclass(frozen=True)
class Alignment:
    """Edit script turning one token sequence into another."""

    ops: tuple[tuple[str, str], ...]

    def old(self) -> list[str]:
        return [tok for label, tok in self.ops if label != ADD]

    def new(self) -> list[str]:
        return [tok for label, tok in self.ops if label != DEL]

    @property
    def cost(self) -> int:
        return sum(1 for label, _ in self.ops if label != KEEP)

    @property
    def labels(self) -> str:
        return "".join(label for label, _ in self.ops)

    @property
    def tokens(self) -> list[str]:
        return [tok for _, tok in self.ops]


def _myers_path(a: Sequence[Hashable], b: Sequence[Hashable]) -> list[str]:
    n, m = len(a), len(b)
    if n == 0:
        return [ADD] * m
    if m == 0:
        return [DEL] * n
    max_d = n + m
    offset = max_d + 1
    v = [0] * (2 * max_d + 3)
    # trace[d] holds v[k] for k in [-d-1, d+1] as it was before step d
    trace: list[list[int]] = []
    done = False
    for d in range(max_d + 1):
        trace.append(v[offset - d - 1: offset + d + 2])
        for k in range(-d, d + 1, 2):
            if k == -d or (k != d and v[offset + k - 1] < v[offset + k + 1]):
                x = v[offset + k + 1]
            else:
                x = v[offset + k - 1] + 1
            y = x - k
            while x < n and y < m and a[x] == b[y]:
                x += 1
                y += 1
            v[offset + k] = x
            if x >= n and y >= m:
                done = True
                break
        if done:
            break

    path: list[str] = []
    x, y = n, m
    for d in range(len(trace) - 1, -1, -1):
        snap = trace[d]

        def at(k: int, snap=snap, d=d) -> int:
            return snap[k + d + 1]

        k = x - y
        if k == -d or (k != d and at(k - 1) < at(k + 1)):
            prev_k = k + 1
        else:
            prev_k = k - 1
        prev_x = at(prev_k)
        prev_y = prev_x - prev_k
        while x > prev_x and y > prev_y:
            path.append(KEEP)
            x -= 1
            y -= 1
        if d > 0:
            path.append(ADD if x == prev_x else DEL)
        x, y = prev_x, prev_y
    path.reverse()
    return path


def _canonical(path: list[str]) -> list[str]:
    """Reorder every maximal run of changes so deletions come first."""
    out: list[str] = []
    i = 0
    while i < len(path):
        if path[i] == KEEP:
            out.append(KEEP)
            i += 1
            continue
        j = i
        while j < len(path) and path[j] != KEEP:
            j += 1
        run = path[i:j]
        n_del = run.count(DEL)
        out.extend([DEL] * n_del + [ADD] * (len(run) - n_del))
        i = j
    return out


def edit_path(a: Sequence[Hashable], b: Sequence[Hashable]) -> list[str]:
    """Minimal edit path over {KEEP, ADD, DEL} from ``a`` to ``b``."""
    lo = 0
    hi_a, hi_b = len(a), len(b)
    while lo < hi_a and lo < hi_b and a[lo] == b[lo]:
        lo += 1
    while hi_a > lo and hi_b > lo and a[hi_a - 1] == b[hi_b - 1]:
        hi_a -= 1
        hi_b -= 1
    middle = _myers_path(a[lo:hi_a], b[lo:hi_b])
    return [KEEP] * lo + _canonical(middle) + [KEEP] * (len(a) - hi_a)


_SWAP = {KEEP: KEEP, ADD: DEL, DEL: ADD}


def _kept(a: Sequence, path: list[str]) -> list:
    out, i = [], 0
    for label in path:
        if label == KEEP:
            out.append(a[i])
        if label != ADD:
            i += 1
    return out


def symmetric_path(a: Sequence[str], b: Sequence[str]) -> list[str]:
    """Like ``edit_path`` but independent of argument order.

    When several longest common subsequences exist, Myers' tie rule picks
    different ones for (a, b) and (b, a). Running it both ways and keeping the
    path whose kept tokens compare smaller makes swapping the inputs simply
    swap the Add and Del tokens.
    """
    fwd = edit_path(a, b)
    back = _canonical([_SWAP[label] for label in edit_path(b, a)])
    if fwd == back:
        return fwd
    return min(fwd, back, key=lambda p: _kept(a, p))


def token_diff(old_tokens: Sequence[str], new_tokens: Sequence[str]) -> Alignment:
    path = symmetric_path(list(old_tokens), list(new_tokens))
    ops = []
    i = j = 0
    for label in path:
        if label == KEEP:
            ops.append((KEEP, old_tokens[i]))
            i += 1
            j += 1
        elif label == DEL:
            ops.append((DEL, old_tokens[i]))
            i += 1
        else:
            ops.append((ADD, new_tokens[j]))
            j += 1
    return Alignment(tuple(ops))


def apply_alignment(old_tokens: Sequence[str], alignment: Alignment) -> list[str]:
    """Replay ``alignment`` on ``old_tokens``; raises if they disagree."""
    out = []
    i = 0
    for label, tok in alignment.ops:
        if label == ADD:
            out.append(tok)
            continue
        if i >= len(old_tokens) or old_tokens[i] != tok:
            raise ValueError(f"alignment does not match old sequence at position {i}")
        if label == KEEP:
            out.append(tok)
        i += 1
    if i != len(old_tokens):
        raise ValueError("alignment does not consume the whole old sequence")
    return out


def split_lines(text: str) -> list[str]:
    """Split text into lines the way a line-oriented diff sees them."""
    if not text:
        return []
    lines = text.split("\n")
    if text.endswith("\n"):
        lines.pop()
    return [_strip_cr(line) for line in lines]


def _strip_cr(line: str) -> str:
    return line[:-1] if line.endswith("\r") else line


def line_diff(old_lines: Sequence[str], new_lines: Sequence[str]) -> list[Hunk]:
    """Zero-context hunks of a minimal line diff."""
    old = [_strip_cr(line) for line in old_lines]
    new = [_strip_cr(line) for line in new_lines]
    # interning lines to ints keeps comparisons cheap on long pages
    ids: dict[str, int] = {}
    a = [ids.setdefault(line, len(ids)) for line in old]
    b = [ids.setdefault(line, len(ids)) for line in new]
    path = edit_path(a, b)

    hunks = []
    i = j = 0
    k = 0
    while k < len(path):
        if path[k] == KEEP:
            i += 1
            j += 1
            k += 1
            continue
        start_i, start_j = i, j
        removed, added = [], []
        while k < len(path) and path[k] != KEEP:
            if path[k] == DEL:
                removed.append(old[i])
                i += 1
            else:
                added.append(new[j])
                j += 1
            k += 1
        hunks.append(Hunk(tuple(removed), tuple(added), start_i, start_j))
    return hunks

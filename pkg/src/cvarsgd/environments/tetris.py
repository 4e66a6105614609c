"""Placement-action Tetris with a softmax policy over board features.

An action places the current piece with a chosen rotation in a chosen
column; the piece drops straight down. Clearing 1, 2, 3 or 4 lines at once
scores ``scores[0..3]``. An episode ends when the current piece has no legal
placement or after ``step_cap`` placements. Pieces are drawn i.i.d. from the
configured set.

The board is a vector of column bitmasks (bit ``r`` of ``cols[c]`` is row
``r`` of column ``c``, row 0 is the floor). Rollouts run in numba; each
episode reseeds the generator from its own seed so a batch is reproducible
from the caller's ``Generator``.

Features of a placement (evaluated on the board after line clears):

* ``landing_height``: row of the piece's centre when it lands
* ``rows_cleared``: lines removed by this placement
* ``holes``: empty cells with an occupied cell somewhere above them
* ``column_heights``: mean column height
* ``board_wells``: well cells, i.e. empty cells above a column's top whose
  left and right neighbours are both occupied (walls count as occupied)
* ``bias``: constant 1
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba as nb
import numpy as np

from ..models import ScoredBatch, StochasticModel, as_theta

FEATURE_NAMES = ("landing_height", "rows_cleared", "holes", "column_heights",
                 "board_wells", "bias")

# cells as (row, col) in the spawn orientation
TETROMINOES = {
    "I": ((0, 0), (0, 1), (0, 2), (0, 3)),
    "O": ((0, 0), (0, 1), (1, 0), (1, 1)),
    "T": ((0, 0), (0, 1), (0, 2), (1, 1)),
    "S": ((0, 0), (0, 1), (1, 1), (1, 2)),
    "Z": ((1, 0), (1, 1), (0, 1), (0, 2)),
    "L": ((0, 0), (0, 1), (0, 2), (1, 2)),
    "J": ((0, 0), (0, 1), (0, 2), (1, 0)),
}

MAX_ORIENT = 4


def _normalize(cells):
    r0 = min(r for r, _ in cells)
    c0 = min(c for _, c in cells)
    return tuple(sorted((r - r0, c - c0) for r, c in cells))


def rotations(name: str) -> list[tuple]:
    """Distinct orientations of a tetromino, normalized to the origin."""
    cells = _normalize(TETROMINOES[name])
    seen = []
    for _ in range(4):
        if cells not in seen:
            seen.append(cells)
        cells = _normalize([(c, -r) for r, c in cells])
    return seen


@dataclass(frozen=True)
class TetrisConfig:
    width: int = 6
    height: int = 12
    pieces: tuple = ("I", "O", "L", "S")
    scores: tuple = (1.0, 4.0, 8.0, 16.0)
    step_cap: int = 300
    features: tuple = FEATURE_NAMES
    eta: float = 0.0

    def __post_init__(self):
        if self.width < 4 or self.height < 6:
            raise ValueError("board must be at least 4 wide and 6 high")
        if self.width > 30:
            raise ValueError("board wider than 30 columns is not supported")
        if len(self.scores) != 4:
            raise ValueError("scores must list the value of 1, 2, 3 and 4 line clears")
        if not self.pieces or any(p not in TETROMINOES for p in self.pieces):
            raise ValueError(f"pieces must be a non-empty subset of {sorted(TETROMINOES)}")
        if len(set(self.pieces)) != len(self.pieces):
            raise ValueError("duplicate piece names")
        if not self.features or any(f not in FEATURE_NAMES for f in self.features):
            raise ValueError(f"features must be a subset of {FEATURE_NAMES}")
        if self.step_cap < 1:
            raise ValueError("step_cap must be >= 1")
        if self.eta < 0:
            raise ValueError("eta must be non-negative")


@dataclass(frozen=True)
class PieceTables:
    """Orientation tables indexed ``[piece, orientation]``."""

    n_orient: np.ndarray
    widths: np.ndarray
    heights: np.ndarray
    bottoms: np.ndarray
    cols: np.ndarray

    @classmethod
    def build(cls, pieces) -> "PieceTables":
        P = len(pieces)
        n_orient = np.zeros(P, np.int64)
        widths = np.zeros((P, MAX_ORIENT), np.int64)
        heights = np.zeros((P, MAX_ORIENT), np.int64)
        bottoms = np.zeros((P, MAX_ORIENT, 4), np.int64)
        cols = np.zeros((P, MAX_ORIENT, 4), np.int64)
        for p, name in enumerate(pieces):
            orients = rotations(name)
            n_orient[p] = len(orients)
            for o, cells in enumerate(orients):
                widths[p, o] = max(c for _, c in cells) + 1
                heights[p, o] = max(r for r, _ in cells) + 1
                for dx in range(widths[p, o]):
                    bottoms[p, o, dx] = min(r for r, c in cells if c == dx)
                for r, c in cells:
                    cols[p, o, c] |= 1 << r
        return cls(n_orient, widths, heights, bottoms, cols)


# --------------------------------------------------------------------------
# compiled core
#
# The board is stored column-wise: ``cols[c]`` has bit ``r`` set when row
# ``r`` of column ``c`` is occupied (row 0 is the floor).


@nb.njit(cache=True)
def _popcount(x):
    x = x - ((x >> 1) & 0x5555555555555555)
    x = (x & 0x3333333333333333) + ((x >> 2) & 0x3333333333333333)
    x = (x + (x >> 4)) & 0x0F0F0F0F0F0F0F0F
    return (x * 0x0101010101010101) >> 56 & 0xFF


@nb.njit(cache=True)
def _height(col):
    h = 0
    while col >> h:
        h += 1
    return h


@nb.njit(cache=True)
def _place(cols, W, H, p, o, c0, widths, pheights, bottoms, pcols, out):
    """Drop piece ``(p, o)`` with its left edge at ``c0``.

    Writes the post-clear board to ``out`` and returns ``(landing_row, lines)``,
    or ``(-1, 0)`` when the piece does not fit.
    """
    w = widths[p, o]
    if c0 + w > W:
        return -1, 0
    y = 0
    for dx in range(w):
        v = _height(cols[c0 + dx]) - bottoms[p, o, dx]
        if v > y:
            y = v
    if y + pheights[p, o] > H:
        return -1, 0
    for c in range(W):
        out[c] = cols[c]
    for dx in range(w):
        out[c0 + dx] |= pcols[p, o, dx] << y
    full = (1 << H) - 1
    for c in range(W):
        full &= out[c]
    if full == 0:
        return y, 0
    lines = _popcount(full)
    for c in range(W):
        src = out[c]
        dst = 0
        j = 0
        for r in range(H):
            if (full >> r) & 1:
                continue
            if (src >> r) & 1:
                dst |= 1 << j
            j += 1
        out[c] = dst
    return y, lines


@nb.njit(cache=True)
def _board_features(cols, W, H, land_row, piece_h, lines, out):
    wall = (1 << H) - 1
    holes = 0
    total = 0
    wells = 0
    for c in range(W):
        h = _height(cols[c])
        total += h
        holes += h - _popcount(cols[c])
        left = wall if c == 0 else cols[c - 1]
        right = wall if c == W - 1 else cols[c + 1]
        wells += _popcount((left & right) >> h)
    out[0] = land_row + 0.5 * (piece_h - 1)
    out[1] = lines
    out[2] = holes
    out[3] = total / W
    out[4] = wells
    out[5] = 1.0


@nb.njit(cache=True)
def _well_cells(cols, W, H, c, h):
    wall = (1 << H) - 1
    left = wall if c == 0 else cols[c - 1]
    right = wall if c == W - 1 else cols[c + 1]
    return _popcount((left & right) >> h)


@nb.njit(cache=True)
def _candidates(cols, W, H, p, widths, pheights, bottoms, pcols, n_orient,
                tmp, boards, feats, opts, lines_out, theta, sel, logits):
    """Enumerate legal placements of piece ``p``; returns their count.

    Without a line clear only the piece's columns change, so holes, heights
    and wells are updated from per-column values of the current board.
    """
    hgt = np.empty(W, np.int64)
    gaps = np.empty(W, np.int64)
    well = np.empty(W, np.int64)
    tot_h = 0
    tot_gaps = 0
    tot_well = 0
    for c in range(W):
        hgt[c] = _height(cols[c])
        gaps[c] = hgt[c] - _popcount(cols[c])
        tot_h += hgt[c]
        tot_gaps += gaps[c]
    for c in range(W):
        well[c] = _well_cells(cols, W, H, c, hgt[c])
        tot_well += well[c]
    n = 0
    for o in range(n_orient[p]):
        w = widths[p, o]
        for c0 in range(W - w + 1):
            y, lines = _place(cols, W, H, p, o, c0, widths, pheights, bottoms, pcols, tmp)
            if y < 0:
                continue
            f = feats[n]
            if lines > 0:
                _board_features(tmp, W, H, y, pheights[p, o], lines, f)
            else:
                th = tot_h
                tg = tot_gaps
                for c in range(c0, c0 + w):
                    h2 = _height(tmp[c])
                    th += h2 - hgt[c]
                    tg += h2 - _popcount(tmp[c]) - gaps[c]
                tw = tot_well
                lo = c0 - 1 if c0 > 0 else 0
                hi = c0 + w if c0 + w < W else W - 1
                for c in range(lo, hi + 1):
                    h2 = hgt[c] if (c < c0 or c >= c0 + w) else _height(tmp[c])
                    tw += _well_cells(tmp, W, H, c, h2) - well[c]
                f[0] = y + 0.5 * (pheights[p, o] - 1)
                f[1] = 0.0
                f[2] = tg
                f[3] = th / W
                f[4] = tw
                f[5] = 1.0
            for c in range(W):
                boards[n, c] = tmp[c]
            opts[n, 0] = o
            opts[n, 1] = c0
            lines_out[n] = lines
            z = 0.0
            for j in range(sel.size):
                z += f[sel[j]] * theta[j]
            logits[n] = z
            n += 1
    return n


@nb.njit(cache=True, nogil=True)
def _rollouts(seeds, theta, sel, W, H, piece_count, widths, pheights, bottoms,
              pcols, n_orient, scores, step_cap):
    n_ep = seeds.size
    k = sel.size
    max_opts = MAX_ORIENT * W
    totals = np.zeros(n_ep)
    score_out = np.zeros((n_ep, k))
    lengths = np.zeros(n_ep, np.int64)
    cleared = np.zeros((n_ep, 4), np.int64)
    cols = np.zeros(W, np.int64)
    tmp = np.zeros(W, np.int64)
    boards = np.zeros((max_opts, W), np.int64)
    feats = np.zeros((max_opts, 6))
    opts = np.zeros((max_opts, 2), np.int64)
    lines_out = np.zeros(max_opts, np.int64)
    logits = np.zeros(max_opts)
    probs = np.zeros(max_opts)
    for e in range(n_ep):
        np.random.seed(seeds[e])
        for c in range(W):
            cols[c] = 0
        total = 0.0
        steps = 0
        while steps < step_cap:
            p = np.random.randint(0, piece_count)
            n = _candidates(cols, W, H, p, widths, pheights, bottoms, pcols,
                            n_orient, tmp, boards, feats, opts, lines_out,
                            theta, sel, logits)
            if n == 0:
                break
            m = logits[0]
            for i in range(1, n):
                if logits[i] > m:
                    m = logits[i]
            z = 0.0
            for i in range(n):
                probs[i] = np.exp(logits[i] - m)
                z += probs[i]
            u = np.random.random() * z
            acc = 0.0
            choice = n - 1
            for i in range(n):
                acc += probs[i]
                if u < acc:
                    choice = i
                    break
            for j in range(k):
                mean_f = 0.0
                for i in range(n):
                    mean_f += probs[i] * feats[i, sel[j]]
                score_out[e, j] += feats[choice, sel[j]] - mean_f / z
            for c in range(W):
                cols[c] = boards[choice, c]
            lines = lines_out[choice]
            if lines > 0:
                total += scores[lines - 1]
                cleared[e, lines - 1] += 1
            steps += 1
        totals[e] = total
        lengths[e] = steps
    return totals, score_out, lengths, cleared


# --------------------------------------------------------------------------
# Python-side helpers


def board_from_strings(rows_top_down: list[str]) -> np.ndarray:
    """Column bitmasks from text rows, top row first; ``#`` marks an occupied cell."""
    H = len(rows_top_down)
    W = max(len(line) for line in rows_top_down)
    cols = np.zeros(W, np.int64)
    for i, line in enumerate(rows_top_down):
        r = H - 1 - i
        for c, ch in enumerate(line):
            if ch == "#":
                cols[c] |= 1 << r
    return cols


def board_to_grid(cols, height: int) -> np.ndarray:
    """Boolean ``(height, width)`` grid, row 0 at the bottom."""
    cols = np.asarray(cols, dtype=np.int64)
    return np.array([[(int(c) >> r) & 1 == 1 for c in cols] for r in range(height)])


def well_cells(cols, height: int) -> np.ndarray:
    """Per-column count of well cells on a column-bitmask board."""
    cols = np.asarray(cols, dtype=np.int64)
    W = cols.size
    return np.array([_well_cells(cols, W, height, c, _height(cols[c])) for c in range(W)])


@dataclass(frozen=True)
class Placement:
    rotation: int
    column: int


@dataclass(frozen=True)
class TetrisEnv:
    config: TetrisConfig
    tables: PieceTables = field(repr=False)

    @property
    def feature_index(self) -> np.ndarray:
        return np.array([FEATURE_NAMES.index(f) for f in self.config.features], np.int64)

    @property
    def k(self) -> int:
        return len(self.config.features)

    def piece_index(self, name: str) -> int:
        return self.config.pieces.index(name)

    def empty_board(self) -> np.ndarray:
        return np.zeros(self.config.width, np.int64)

    def _drop(self, board, p, placement):
        cfg, t = self.config, self.tables
        board = np.asarray(board, dtype=np.int64)
        if board.shape != (cfg.width,):
            raise ValueError(f"board must hold {cfg.width} columns")
        out = np.zeros(cfg.width, np.int64)
        if not 0 <= placement.rotation < t.n_orient[p] or placement.column < 0:
            return -1, 0, out
        y, lines = _place(board, cfg.width, cfg.height, p, placement.rotation,
                          placement.column, t.widths, t.heights, t.bottoms, t.cols, out)
        return y, lines, out

    def legal_placements(self, board, piece: str) -> list[Placement]:
        p = self.piece_index(piece)
        out = []
        for o in range(self.tables.n_orient[p]):
            for c in range(self.config.width):
                if self._drop(board, p, Placement(o, c))[0] >= 0:
                    out.append(Placement(o, c))
        return out

    def place(self, board, piece: str, placement: Placement):
        """Returns ``(new_board, lines_cleared, reward, all_six_features)``."""
        cfg = self.config
        p = self.piece_index(piece)
        y, lines, out = self._drop(board, p, placement)
        if y < 0:
            raise ValueError(f"illegal placement {placement} for piece {piece}")
        feats = np.zeros(6)
        _board_features(out, cfg.width, cfg.height, y,
                        self.tables.heights[p, placement.rotation], lines, feats)
        reward = cfg.scores[lines - 1] if lines else 0.0
        return out, lines, reward, feats

    def features(self, board, piece: str, placement: Placement) -> np.ndarray:
        """Configured feature subset for ``placement`` on ``board``."""
        return self.place(board, piece, placement)[3][self.feature_index]


def build_tetris(config: TetrisConfig | None = None) -> TetrisEnv:
    config = config or TetrisConfig()
    return TetrisEnv(config, PieceTables.build(config.pieces))


def tetris_features(env: TetrisEnv, board, piece: str, placement: Placement) -> np.ndarray:
    return env.features(board, piece, placement)


@dataclass(frozen=True)
class EpisodeStats:
    lengths: np.ndarray
    lines: np.ndarray


class TetrisModel(StochasticModel):
    """Total game score under the softmax placement policy at ``theta``."""

    def __init__(self, env: TetrisEnv):
        self.env = env

    @property
    def k(self) -> int:
        return self.env.k

    @property
    def support_bound(self) -> float:
        cfg = self.env.config
        return float(cfg.step_cap * max(cfg.scores) + cfg.eta)

    def sample(self, theta, n, rng):
        cfg = self.env.config
        t = self.env.tables
        theta = as_theta(theta, self.k)
        seeds = rng.integers(0, 2**31 - 1, size=n, dtype=np.int64)
        totals, scores, lengths, cleared = _rollouts(
            seeds, theta, self.env.feature_index, cfg.width, cfg.height,
            len(cfg.pieces), t.widths, t.heights, t.bottoms, t.cols, t.n_orient,
            np.asarray(cfg.scores, dtype=np.float64), cfg.step_cap)
        if cfg.eta > 0:
            totals = totals + cfg.eta * rng.uniform(-1.0, 1.0, n)
        return ScoredBatch(rewards=totals, scores=scores, x=cleared.astype(np.float64),
                           y=EpisodeStats(lengths, cleared))

"""Locating singular-value degeneracies of two-parameter matrix fields.

A degeneracy (two singular values coalescing, or the smallest one
vanishing) of a smooth complex symmetric field A(x, y) is generically an
isolated point in the plane.  Transporting a Takagi factorization smoothly
once around a closed loop multiplies each column of U by +1 or -1: the
columns of a coalescing pair flip together, a vanishing smallest singular
value flips the last column, and loops enclosing nothing flip nothing.
Reading those signs box by box over a grid turns degeneracy location into
a robust counting problem, with no need to ever factorize at a degeneracy.

The grid scanner walks each box boundary counter-clockwise from its
lower-left corner.  Interior edges are shared by two boxes, so the smooth
transport along every grid edge is computed once, in a fixed sweep
direction (left-to-right, bottom-to-top), from a fresh factorization at
the edge start; box loops are then assembled from the cached transports,
re-aligning column signs where the incoming factors match the cached ones
and falling back to a direct continuation where they do not.  Boxes whose
boundary runs too close to a degeneracy are inconclusive and, like boxes
with composite flip patterns, are refined into four sub-boxes.
"""

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field, replace
from pathlib import Path

import numpy as np

from .continuation import COMPLETED, ContinuationControls, continue_path
from .errors import DegenerateInput, InconclusiveLoop
from .takagi_core import TakagiPair, takagi_factor

SCHEMA_VERSION = 1

KIND_NONE = "none"
KIND_COALESCENCE = "coalescence"
KIND_RANK_LOSS = "rank_loss"
KIND_COMPOSITE = "composite"
KIND_INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class MatrixField:
    """A two-parameter field of complex symmetric matrices on a rectangle.

    ``func(x, y)`` must return an n x n complex symmetric array for every
    point of ``domain = (x0, x1, y0, y1)``.  Keep ``func`` a module-level
    callable or a dataclass instance if the scan is to run with worker
    processes.
    """

    func: object
    domain: tuple
    n: int

    def __call__(self, x, y):
        return self.func(x, y)


@dataclass(frozen=True)
class _Translate:
    base: object
    dx: float
    dy: float

    def __call__(self, x, y):
        return self.base(x - self.dx, y - self.dy)


def translate_field(field, dx, dy):
    """The same field with every feature moved by (dx, dy)."""
    return MatrixField(_Translate(field.func, dx, dy), field.domain, field.n)


def _rank_loss_func(x, y):
    return np.array([[complex(x, y)]])


def _coalescence_func(x, y):
    return np.array([[1.0 + x, y], [y, 1.0 - x]], dtype=complex)


def rank_loss_demo_field(domain=(-1.0, 1.0, -1.0, 1.0)):
    """1x1 field x + iy: rank drops exactly at the origin."""
    return MatrixField(_rank_loss_func, tuple(domain), 1)


def coalescence_demo_field(domain=(-1.0, 1.0, -1.0, 1.0)):
    """Real 2x2 field [[1+x, y], [y, 1-x]]: singular values meet at the origin."""
    return MatrixField(_coalescence_func, tuple(domain), 2)


@dataclass(frozen=True)
class _PolylinePath:
    """Arclength parametrization of a field restricted to a polyline."""

    field: object
    points: tuple
    fractions: tuple

    def __call__(self, t):
        t = min(max(t, 0.0), 1.0)
        idx = int(np.searchsorted(self.fractions, t, side="right")) - 1
        idx = min(idx, len(self.points) - 2)
        f0, f1 = self.fractions[idx], self.fractions[idx + 1]
        w = 0.0 if f1 == f0 else (t - f0) / (f1 - f0)
        x0, y0 = self.points[idx]
        x1, y1 = self.points[idx + 1]
        return self.field(x0 + w * (x1 - x0), y0 + w * (y1 - y0))


def polyline_path(field, vertices):
    """Field values along a polyline, parametrized by arclength on [0, 1]."""
    pts = [tuple(map(float, p)) for p in vertices]
    if len(pts) < 2:
        raise ValueError("polyline needs at least two vertices")
    seg = np.array([np.hypot(b[0] - a[0], b[1] - a[1]) for a, b in zip(pts, pts[1:])])
    total = float(seg.sum())
    if total <= 0.0:
        raise ValueError("polyline has zero length")
    fr = np.concatenate([[0.0], np.cumsum(seg) / total])
    fr[-1] = 1.0
    return _PolylinePath(field, tuple(pts), tuple(fr))


def close_loop(vertices):
    pts = [tuple(map(float, p)) for p in vertices]
    if pts[0] != pts[-1]:
        pts.append(pts[0])
    return pts


def circle_loop(cx, cy, radius, segments=64):
    """Counter-clockwise polygonal approximation of a circle."""
    ang = np.linspace(0.0, 2.0 * np.pi, segments + 1)
    return [(cx + radius * np.cos(a), cy + radius * np.sin(a)) for a in ang]


def box_loop(rect):
    """Counter-clockwise boundary of (x0, x1, y0, y1) from the lower-left corner."""
    x0, x1, y0, y1 = rect
    return [(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]


@dataclass(frozen=True)
class SignFlipVector:
    """Per-column signs after one loop, with overlap magnitudes as confidence."""

    z: np.ndarray
    confidence: np.ndarray


@dataclass(frozen=True)
class Classification:
    kind: str
    pair: int = 0  # 1-based index j of the coalescing pair (sigma_j, sigma_j+1)
    includes_rank_loss: bool = False


def loop_signature(field, loop, initial=None, controls=None, confidence_floor=0.9):
    """Column sign flips of the factorization transported once around a loop.

    Parameters
    ----------
    field : MatrixField or callable
    loop : sequence of (x, y)
        Closed polyline (closed automatically if needed); traversal order
        defines the loop, although the signs do not depend on it.
    initial : TakagiPair, optional
        Factorization at the first vertex; computed fresh when omitted.
    controls : ContinuationControls, optional
    confidence_floor : float
        Minimum per-column |Re <u_k(0), u_k(1)>| for a trusted reading.

    Raises
    ------
    InconclusiveLoop
        When continuation halts on the loop (degeneracy too close to the
        boundary) or some column overlap falls below the floor.
    """
    c = controls or ContinuationControls()
    pts = close_loop(loop)
    path = polyline_path(field, pts)
    if initial is None:
        try:
            initial = takagi_factor(path(0.0), tol_distinct=c.tol_distinct, backend=c.backend)
        except DegenerateInput as exc:
            raise InconclusiveLoop(
                InconclusiveLoop.NEAR_DEGENERACY_ON_BOUNDARY, f"loop start: {exc}"
            ) from exc
    result = continue_path(path, initial, c)
    if result.status != COMPLETED:
        raise InconclusiveLoop(
            InconclusiveLoop.NEAR_DEGENERACY_ON_BOUNDARY, f"halted at t={result.t_end:.4f}"
        )
    d = np.real(np.einsum("ij,ij->j", np.conj(initial.U), result.final.U))
    confidence = np.abs(d)
    if float(confidence.min()) < confidence_floor:
        raise InconclusiveLoop(
            InconclusiveLoop.LOW_CONFIDENCE, f"min overlap {confidence.min():.3f}"
        )
    z = np.where(d < 0.0, -1, 1).astype(int)
    return SignFlipVector(z, confidence)


def classify_flips(z):
    """Decode a trusted sign-flip vector into a degeneracy kind.

    No flips mean no enclosed degeneracy; exactly one flipped adjacent
    pair means that pair coalesced inside; exactly the last column means
    a rank loss.  Everything else is composite (several events in one
    loop); an odd number of flipped columns always betrays an odd number
    of enclosed rank losses, since pair flips cannot change parity.
    """
    z = np.asarray(z, dtype=int)
    n = z.shape[0]
    flips = np.nonzero(z < 0)[0]
    if flips.size == 0:
        return Classification(KIND_NONE)
    if flips.size == 1 and flips[0] == n - 1:
        return Classification(KIND_RANK_LOSS)
    if flips.size == 2 and flips[1] == flips[0] + 1:
        return Classification(KIND_COALESCENCE, pair=int(flips[0]) + 1)
    return Classification(KIND_COMPOSITE, includes_rank_loss=bool(flips.size % 2))


@dataclass(frozen=True)
class BoxEvent:
    """One classified grid box (only non-empty readings are recorded)."""

    i: int
    j: int
    depth: int
    rect: tuple
    kind: str
    pair: int = 0
    z: tuple = ()
    confidence: float = 0.0
    includes_rank_loss: bool = False
    reason: str = ""

    def to_dict(self):
        return {
            "i": self.i,
            "j": self.j,
            "depth": self.depth,
            "rect": list(self.rect),
            "kind": self.kind,
            "pair": self.pair,
            "z": list(self.z),
            "confidence": self.confidence,
            "includes_rank_loss": self.includes_rank_loss,
            "reason": self.reason,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            i=int(d["i"]),
            j=int(d["j"]),
            depth=int(d["depth"]),
            rect=tuple(d["rect"]),
            kind=d["kind"],
            pair=int(d["pair"]),
            z=tuple(int(v) for v in d["z"]),
            confidence=float(d["confidence"]),
            includes_rank_loss=bool(d["includes_rank_loss"]),
            reason=d.get("reason", ""),
        )


@dataclass(frozen=True)
class ScanOptions:
    """Scanner configuration: refinement depth, workers, reuse thresholds."""

    refine_depth: int = 1
    workers: int = 1
    edge_cache: bool = True
    confidence_floor: float = 0.9
    reuse_floor: float = 0.99
    controls: ContinuationControls = dc_field(default_factory=ContinuationControls)

    def to_dict(self):
        c = self.controls
        return {
            "refine_depth": self.refine_depth,
            "edge_cache": self.edge_cache,
            "confidence_floor": self.confidence_floor,
            "reuse_floor": self.reuse_floor,
            "controls": {
                "tolstep": c.tolstep,
                "h_init": c.h_init,
                "h_min": c.h_min,
                "h_max": c.h_max,
                "growth": c.growth,
                "tol_distinct": c.tol_distinct,
                "sign_floor": c.sign_floor,
                "backend": c.backend,
            },
        }


@dataclass
class ScanReport:
    """Aggregated result of one grid scan."""

    n: int
    m: int
    k: int
    domain: tuple
    events: list
    counts: dict
    options: dict
    complete: bool = True
    meta: dict = dc_field(default_factory=dict)

    def to_json_dict(self):
        return {
            "schema": SCHEMA_VERSION,
            "grid": {"m": self.m, "k": self.k, "domain": list(self.domain), "n": self.n},
            "counts": self.counts,
            "events": [e.to_dict() for e in self.events],
            "options": self.options,
            "complete": self.complete,
            "meta": self.meta,
        }

    def to_json(self):
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=1)

    def write_json(self, path):
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def from_json_dict(cls, d):
        g = d["grid"]
        return cls(
            n=int(g["n"]),
            m=int(g["m"]),
            k=int(g["k"]),
            domain=tuple(g["domain"]),
            events=[BoxEvent.from_dict(e) for e in d["events"]],
            counts=d["counts"],
            options=d.get("options", {}),
            complete=bool(d.get("complete", True)),
            meta=d.get("meta", {}),
        )

    @classmethod
    def read_json(cls, path):
        return cls.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def write_events_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("i,j,depth,x0,x1,y0,y1,kind,pair,confidence,includes_rank_loss,reason,z\n")
            for e in self.events:
                zs = "".join("+" if v > 0 else "-" for v in e.z)
                rect = ",".join(f"{v:.17g}" for v in e.rect)
                fh.write(
                    f"{e.i},{e.j},{e.depth},{rect},{e.kind},{e.pair},"
                    f"{e.confidence:.17g},{int(e.includes_rank_loss)},{e.reason},{zs}\n"
                )


def count_events(events, n):
    """Tallies per kind (and per coalescing pair) from a list of events."""
    counts = {
        "coalescence_per_pair": [0] * max(n - 1, 0),
        "rank_loss": 0,
        "composite": 0,
        "inconclusive": 0,
    }
    for e in events:
        if e.kind == KIND_COALESCENCE:
            counts["coalescence_per_pair"][e.pair - 1] += 1
        elif e.kind == KIND_RANK_LOSS:
            counts["rank_loss"] += 1
        elif e.kind == KIND_COMPOSITE:
            counts["composite"] += 1
        elif e.kind == KIND_INCONCLUSIVE:
            counts["inconclusive"] += 1
    return counts


# ---------------------------------------------------------------------------
# Edge transport machinery for the grid scan.

_EDGE_OK = "ok"
_EDGE_HALTED = "halted"
_EDGE_DEGENERATE = "degenerate_start"
_EDGE_ERROR = "field_error"

REASON_FIELD_ERROR = "field_evaluation_error"


@dataclass(frozen=True)
class _SegmentPath:
    field: object
    p0: tuple
    p1: tuple

    def __call__(self, t):
        x = self.p0[0] + t * (self.p1[0] - self.p0[0])
        y = self.p0[1] + t * (self.p1[1] - self.p0[1])
        return self.field(x, y)


def _edge_transport(field, p0, p1, controls):
    """Fresh factorization at p0 continued along the straight edge to p1.

    Field-evaluation failures are reported in the status, never raised:
    one broken box must not abort a scan.
    """
    try:
        pair0 = takagi_factor(
            field(p0[0], p0[1]), tol_distinct=controls.tol_distinct, backend=controls.backend
        )
    except DegenerateInput:
        return (_EDGE_DEGENERATE, None, None)
    except Exception:
        return (_EDGE_ERROR, None, None)
    try:
        res = continue_path(_SegmentPath(field, tuple(p0), tuple(p1)), pair0, controls)
    except Exception:
        return (_EDGE_ERROR, pair0, None)
    if res.status != COMPLETED:
        return (_EDGE_HALTED, pair0, None)
    return (_EDGE_OK, pair0, res.final)


_WORKER_FIELD = None
_WORKER_CONTROLS = None


def _init_edge_worker(field, controls):
    global _WORKER_FIELD, _WORKER_CONTROLS
    _WORKER_FIELD = field
    _WORKER_CONTROLS = controls


def _edge_task(points):
    return _edge_transport(_WORKER_FIELD, points[0], points[1], _WORKER_CONTROLS)


def _signs(d):
    z = np.ones_like(d)
    z[d < 0.0] = -1.0
    return z


def _match_quality(entry_pair, incoming_pair):
    d = np.real(np.einsum("ij,ij->j", np.conj(entry_pair.U), incoming_pair.U))
    return d, float(np.min(np.abs(d)))


class _GridGeometry:
    def __init__(self, domain, m, k):
        x0, x1, y0, y1 = domain
        self.xs = np.linspace(x0, x1, m + 1)
        self.ys = np.linspace(y0, y1, k + 1)
        self.m = m
        self.k = k

    def node(self, i, j):
        return (float(self.xs[i]), float(self.ys[j]))

    def rect(self, i, j):
        return (
            float(self.xs[i]),
            float(self.xs[i + 1]),
            float(self.ys[j]),
            float(self.ys[j + 1]),
        )


def _compose_box(field, geo, i, j, h_edges, v_edges, options):
    """Assemble one box loop from cached edge transports.

    Returns (kind-classified event or None, z, confidence).  The loop
    runs counter-clockwise: bottom and right edges in their sweep
    direction, top and left edges reversed (the cached end factors enter,
    the cached start factors leave).
    """
    controls = options.controls
    bottom = h_edges[(i, j)]
    right = v_edges[(i + 1, j)]
    top = h_edges[(i, j + 1)]
    left = v_edges[(i, j)]
    if bottom[1] is None:
        reason = (
            REASON_FIELD_ERROR
            if bottom[0] == _EDGE_ERROR
            else InconclusiveLoop.NEAR_DEGENERACY_ON_BOUNDARY
        )
        return (KIND_INCONCLUSIVE, reason, None, None)
    start_pair = bottom[1]  # fresh factorization at the box corner

    legs = (
        (bottom, True, geo.node(i, j), geo.node(i + 1, j)),
        (right, True, geo.node(i + 1, j), geo.node(i + 1, j + 1)),
        (top, False, geo.node(i + 1, j + 1), geo.node(i, j + 1)),
        (left, False, geo.node(i, j + 1), geo.node(i, j)),
    )
    pair = start_pair
    for edge, forward, p_from, p_to in legs:
        status, e_start, e_end = edge
        entry = e_start if forward else e_end
        exit_ = e_end if forward else e_start
        if options.edge_cache and status == _EDGE_OK and entry is not None:
            d, quality = _match_quality(entry, pair)
            if quality >= options.reuse_floor:
                pair = TakagiPair(exit_.U * _signs(d), exit_.S)
                continue
        # Cache miss or untrusted match: continue directly from our factors.
        try:
            res = continue_path(_SegmentPath(field, p_from, p_to), pair, controls)
        except Exception:
            return (KIND_INCONCLUSIVE, REASON_FIELD_ERROR, None, None)
        if res.status != COMPLETED:
            return (KIND_INCONCLUSIVE, InconclusiveLoop.NEAR_DEGENERACY_ON_BOUNDARY, None, None)
        pair = res.final

    d = np.real(np.einsum("ij,ij->j", np.conj(start_pair.U), pair.U))
    confidence = np.abs(d)
    if float(confidence.min()) < options.confidence_floor:
        return (KIND_INCONCLUSIVE, InconclusiveLoop.LOW_CONFIDENCE, None, None)
    z = np.where(d < 0.0, -1, 1).astype(int)
    return (None, None, z, confidence)


def _refine_controls(controls, depth):
    # Boxes under refinement sit close to degeneracies; lower the
    # degeneracy threshold so continuation can squeeze past them.
    tol = max(controls.tol_distinct * (0.01**depth), 1e-12)
    return replace(controls, tol_distinct=tol)


def _classify_box(field, i, j, depth, rect, options):
    """Loop signature + classification of one box, recursing on refinement."""
    controls = _refine_controls(options.controls, depth)
    try:
        sig = loop_signature(
            field,
            box_loop(rect),
            controls=controls,
            confidence_floor=options.confidence_floor,
        )
    except InconclusiveLoop as exc:
        return _maybe_refine(
            field,
            BoxEvent(i, j, depth, rect, KIND_INCONCLUSIVE, reason=exc.reason),
            options,
        )
    except Exception:
        return [BoxEvent(i, j, depth, rect, KIND_INCONCLUSIVE, reason=REASON_FIELD_ERROR)]
    cls = classify_flips(sig.z)
    if cls.kind == KIND_NONE:
        return []
    event = BoxEvent(
        i,
        j,
        depth,
        rect,
        cls.kind,
        pair=cls.pair,
        z=tuple(int(v) for v in sig.z),
        confidence=float(sig.confidence.min()),
        includes_rank_loss=cls.includes_rank_loss,
    )
    if cls.kind == KIND_COMPOSITE:
        return _maybe_refine(field, event, options)
    return [event]


def _maybe_refine(field, event, options):
    if event.depth >= options.refine_depth:
        return [event]
    x0, x1, y0, y1 = event.rect
    xm, ym = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    children = [
        (x0, xm, y0, ym),
        (xm, x1, y0, ym),
        (xm, x1, ym, y1),
        (x0, xm, ym, y1),
    ]
    out = []
    for rect in children:
        out.extend(_classify_box(field, event.i, event.j, event.depth + 1, rect, options))
    return out


def _box_event(field, geo, i, j, h_edges, v_edges, options):
    kind, reason, z, confidence = _compose_box(field, geo, i, j, h_edges, v_edges, options)
    rect = geo.rect(i, j)
    if kind == KIND_INCONCLUSIVE:
        return _maybe_refine(
            field, BoxEvent(i, j, 0, rect, KIND_INCONCLUSIVE, reason=reason), options
        )
    cls = classify_flips(z)
    if cls.kind == KIND_NONE:
        return []
    event = BoxEvent(
        i,
        j,
        0,
        rect,
        cls.kind,
        pair=cls.pair,
        z=tuple(int(v) for v in z),
        confidence=float(confidence.min()),
        includes_rank_loss=cls.includes_rank_loss,
    )
    if cls.kind == KIND_COMPOSITE:
        return _maybe_refine(field, event, options)
    return [event]


# ---------------------------------------------------------------------------
# Checkpointing: one JSON line per completed row of boxes.


def _job_header(field, m, k, options, meta):
    return {
        "schema": SCHEMA_VERSION,
        "grid": {"m": m, "k": k, "domain": list(field.domain), "n": field.n},
        "options": options.to_dict(),
        "meta": meta or {},
    }


def load_checkpoint(path, header):
    """Rows already completed in a checkpoint file matching ``header``.

    Returns {row_index: [BoxEvent, ...]}; an empty dict when the file does
    not exist.  A header mismatch raises ValueError: the checkpoint
    belongs to a different job.
    """
    path = Path(path)
    if not path.exists():
        return {}
    rows = {}
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        if not first.strip():
            return {}
        stored = json.loads(first)
        if stored != header:
            raise ValueError(f"checkpoint {path} belongs to a different scan job")
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            rows[int(rec["row"])] = [BoxEvent.from_dict(e) for e in rec["events"]]
    return rows


def grid_scan(field, m, k, options=None, checkpoint=None, stop_after_row=None, job_meta=None):
    """Classify every box of an m x k grid over ``field.domain``.

    Parameters
    ----------
    field : MatrixField
    m, k : int
        Boxes along x and y.
    options : ScanOptions, optional
    checkpoint : path, optional
        JSON-lines file; completed rows are appended as the scan runs and
        replayed on the next call, so an interrupted scan resumes at the
        first unfinished row with an identical final report.
    stop_after_row : int, optional
        Process only this many rows (operational chunking and tests);
        the returned report has ``complete=False``.
    job_meta : dict, optional
        Echoed into the report and checkpoint header untouched.

    Returns
    -------
    ScanReport
        Events in deterministic row-major order with per-kind counts;
        independent of worker count and of cache or resume state.
    """
    options = options or ScanOptions()
    geo = _GridGeometry(field.domain, m, k)
    header = _job_header(field, m, k, options, job_meta)
    done_rows = {}
    ck_fh = None
    if checkpoint is not None:
        done_rows = load_checkpoint(checkpoint, header)
        new_file = not Path(checkpoint).exists()
        ck_fh = open(checkpoint, "a", encoding="utf-8")
        if new_file:
            ck_fh.write(json.dumps(header, sort_keys=True) + "\n")
            ck_fh.flush()

    pool = None
    try:
        if options.workers > 1:
            pool = ProcessPoolExecutor(
                max_workers=options.workers,
                initializer=_init_edge_worker,
                initargs=(field, options.controls),
            )

        def run_edges(point_pairs):
            if not point_pairs:
                return []
            if pool is None:
                return [
                    _edge_transport(field, p0, p1, options.controls) for p0, p1 in point_pairs
                ]
            chunk = max(1, len(point_pairs) // (4 * options.workers))
            return list(pool.map(_edge_task, point_pairs, chunksize=chunk))

        events = []
        h_cache = {}  # (i, j) -> edge transport along node row j
        rows_done = 0
        for j in range(k):
            if stop_after_row is not None and rows_done >= stop_after_row:
                break
            if j in done_rows:
                events.extend(done_rows[j])
                rows_done += 1
                h_cache.clear()  # recomputed fresh below if a later row needs it
                continue
            todo = []
            if not all((i, j) in h_cache for i in range(m)):
                todo += [(("h", i, j), (geo.node(i, j), geo.node(i + 1, j))) for i in range(m)]
            todo += [(("h", i, j + 1), (geo.node(i, j + 1), geo.node(i + 1, j + 1))) for i in range(m)]
            todo += [(("v", i, j), (geo.node(i, j), geo.node(i, j + 1))) for i in range(m + 1)]
            results = run_edges([points for _, points in todo])
            v_edges = {}
            for (key, _), res in zip(todo, results):
                if key[0] == "h":
                    h_cache[(key[1], key[2])] = res
                else:
                    v_edges[(key[1], key[2])] = res
            row_events = []
            for i in range(m):
                row_events.extend(_box_event(field, geo, i, j, h_cache, v_edges, options))
            events.extend(row_events)
            rows_done += 1
            if ck_fh is not None:
                rec = {"row": j, "events": [e.to_dict() for e in row_events]}
                ck_fh.write(json.dumps(rec, sort_keys=True) + "\n")
                ck_fh.flush()
            # Only the upper node row is shared with the next box row.
            h_cache = {(i, jj): v for (i, jj), v in h_cache.items() if jj == j + 1}
    finally:
        if pool is not None:
            pool.shutdown()
        if ck_fh is not None:
            ck_fh.close()

    return ScanReport(
        n=field.n,
        m=m,
        k=k,
        domain=tuple(field.domain),
        events=events,
        counts=count_events(events, field.n),
        options=options.to_dict(),
        complete=rows_done == k,
        meta=job_meta or {},
    )

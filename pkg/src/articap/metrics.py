"""Evaluation metrics (MPJPE, MRRPE, AAE, V2V, PCD), protocol splits and reports.

Inputs are in meters and radians; errors come out in millimeters and degrees.
"""
import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CoverageError, DataError

PROTOCOLS = ("P1", "P2", "P3")
EGO_VIEW = 0
DEFAULT_ALPHAS = tuple(float(a) for a in range(1, 101))  # mm


def _pair(pred, gt):
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape:
        raise DataError(f"shape mismatch: {p.shape} vs {g.shape}")
    return p, g


def mpjpe(pred, gt):
    """Mean root-relative joint error in mm; root is joint 0. Accepts (J, 3) or (F, J, 3)."""
    p, g = _pair(pred, gt)
    if p.ndim < 2 or p.shape[-1] != 3:
        raise DataError("joints must be (..., J, 3)")
    err = (p - p[..., :1, :]) - (g - g[..., :1, :])
    return float(np.linalg.norm(err, axis=-1).mean() * 1000.0)


def mrrpe(root_a_gt, root_b_gt, root_a_pred, root_b_pred):
    """Error of the predicted a-to-b root offset, in mm (averaged over leading axes)."""
    d_gt = np.asarray(root_a_gt, dtype=np.float64) - np.asarray(root_b_gt, dtype=np.float64)
    d_pred = np.asarray(root_a_pred, dtype=np.float64) - np.asarray(root_b_pred, dtype=np.float64)
    return float(np.linalg.norm(d_gt - d_pred, axis=-1).mean() * 1000.0)


def aae(pred_omega, gt_omega):
    """Average absolute articulation error in degrees; no wrap-around."""
    p, g = _pair(np.atleast_1d(pred_omega), np.atleast_1d(gt_omega))
    return float(np.mean(np.abs(p - g)) * 180.0 / math.pi)


def v2v(pred_vertices, gt_vertices, pred_root, gt_root):
    """Root-relative mean vertex error in mm."""
    p, g = _pair(pred_vertices, gt_vertices)
    pr = np.asarray(pred_root, dtype=np.float64)[..., None, :]
    gr = np.asarray(gt_root, dtype=np.float64)[..., None, :]
    return float(np.linalg.norm((p - pr) - (g - gr), axis=-1).mean() * 1000.0)


def pcd(pred_field, gt_field, alphas=DEFAULT_ALPHAS):
    """Fraction of field entries whose absolute error is strictly below each alpha (mm)."""
    p = getattr(pred_field, "distances", pred_field)
    g = getattr(gt_field, "distances", gt_field)
    p, g = _pair(p, g)
    err = np.abs(p - g).ravel() * 1000.0
    if err.size == 0:
        raise DataError("empty fields")
    return [(float(a), float(np.mean(err < a))) for a in alphas]


# -- splits -------------------------------------------------------------------

@dataclass(frozen=True)
class SequenceMeta:
    sequence_id: str
    subject: str
    object: str
    views: tuple = tuple(range(9))  # 0 = egocentric, 1..8 allocentric

    def to_dict(self):
        return {"sequence_id": self.sequence_id, "subject": self.subject, "object": self.object,
                "views": list(self.views)}


def _eligible(meta, protocol):
    if protocol == "P2":
        return EGO_VIEW in meta.views
    return any(v != EGO_VIEW for v in meta.views)


def split_sequences(metas, protocol):
    """Assign every sequence to train/val/test (or ``excluded`` if it lacks the protocol's views).

    P1/P2 hold out, per object, the last sequence (by id) for test and the one
    before it for validation. P3 holds out whole subjects: in sorted order the
    last 2/9 go to test and the 1/9 before them to validation.
    """
    if protocol not in PROTOCOLS:
        raise DataError(f"unknown protocol {protocol!r}")
    ids = [m.sequence_id for m in metas]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate sequence ids")
    split = {"train": [], "val": [], "test": [], "excluded": []}
    usable = [m for m in metas if _eligible(m, protocol)]
    split["excluded"] = sorted(m.sequence_id for m in metas if not _eligible(m, protocol))

    if protocol in ("P1", "P2"):
        by_obj = {}
        for m in usable:
            by_obj.setdefault(m.object, []).append(m.sequence_id)
        for seqs in by_obj.values():
            seqs = sorted(seqs)
            if len(seqs) >= 3:
                split["test"].append(seqs[-1])
                split["val"].append(seqs[-2])
                split["train"] += seqs[:-2]
            elif len(seqs) == 2:
                split["test"].append(seqs[-1])
                split["train"].append(seqs[0])
            else:
                split["test"] += seqs
    else:
        subjects = sorted({m.subject for m in usable})
        n = len(subjects)
        n_test = max(1, round(2 * n / 9)) if n >= 1 else 0
        n_val = max(1, round(n / 9)) if n >= 3 else 0
        test_s = set(subjects[n - n_test:])
        val_s = set(subjects[n - n_test - n_val:n - n_test])
        for m in usable:
            key = "test" if m.subject in test_s else "val" if m.subject in val_s else "train"
            split[key].append(m.sequence_id)
    return {k: sorted(v) for k, v in split.items()}


# -- evaluation ---------------------------------------------------------------

@dataclass
class SequenceEval:
    """Per-frame quantities for one sequence, prediction or ground truth.

    Hands: (F, 21, 3) joints. Object: (F,) articulation, (F, Vt, 3) top and
    (F, Vb, 3) bottom vertices. Fields: name -> (F, V). Any of these may be None.
    """

    meta: SequenceMeta
    joints_left: np.ndarray = None
    joints_right: np.ndarray = None
    omega: np.ndarray = None
    verts_top: np.ndarray = None
    verts_bottom: np.ndarray = None
    fields: dict = None

    @property
    def frame_count(self):
        for a in (self.omega, self.joints_right, self.joints_left, self.verts_bottom):
            if a is not None:
                return len(a)
        return 0


@dataclass
class EvalReport:
    mpjpe_left: float = None
    mpjpe_right: float = None
    mrrpe_lr: float = None
    mrrpe_or: float = None
    aae: float = None
    v2v_top: float = None
    v2v_bottom: float = None
    pcd_curves: dict = field(default_factory=dict)
    frame_count: int = 0
    protocol: str = ""
    split: str = "test"
    per_object: dict = field(default_factory=dict)

    SCALARS = ("mpjpe_left", "mpjpe_right", "mrrpe_lr", "mrrpe_or", "aae", "v2v_top", "v2v_bottom")

    def to_dict(self):
        d = {"format": "articap-report"}
        d.update({k: getattr(self, k) for k in self.SCALARS})
        d["pcd_curves"] = {k: [[a, f] for a, f in v] for k, v in self.pcd_curves.items()}
        d.update(frame_count=self.frame_count, protocol=self.protocol, split=self.split)
        d["per_object"] = {k: v.to_dict() for k, v in sorted(self.per_object.items())}
        return d

    def to_table(self):
        """Aligned text table: MPJPE l/r, MRRPE l->r / o->r, AAE, V2V top/bottom."""
        def fmt(*xs):
            return " / ".join("-" if x is None else f"{x:.2f}" for x in xs)

        head = ("Split", "Object", "MPJPE [mm]", "MRRPE [mm]", "AAE [deg]", "V2V [mm]")
        rows = [(self.protocol, "all", fmt(self.mpjpe_left, self.mpjpe_right), fmt(self.mrrpe_lr, self.mrrpe_or),
                 fmt(self.aae), fmt(self.v2v_top, self.v2v_bottom))]
        for name, r in sorted(self.per_object.items()):
            rows.append((self.protocol, name, fmt(r.mpjpe_left, r.mpjpe_right), fmt(r.mrrpe_lr, r.mrrpe_or),
                         fmt(r.aae), fmt(r.v2v_top, r.v2v_bottom)))
        widths = [max(len(str(x)) for x in col) for col in zip(head, *rows)]
        line = lambda r: "  ".join(str(x).ljust(w) for x, w in zip(r, widths)).rstrip()
        return "\n".join([line(head), line(["-" * w for w in widths])] + [line(r) for r in rows]) + "\n"

    def pcd_csv(self, name):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["alpha_mm", "fraction"])
        for a, f in self.pcd_curves[name]:
            w.writerow([f"{a:g}", f"{f:.10g}"])
        return buf.getvalue()


def _check_coverage(gt, preds):
    gaps = []
    for g in gt:
        sid = g.meta.sequence_id
        p = preds.get(sid)
        if p is None:
            gaps.append((sid, "no prediction"))
        elif p.frame_count != g.frame_count:
            gaps.append((sid, f"{p.frame_count} of {g.frame_count} frames"))
    if gaps:
        raise CoverageError(gaps)


def _stack(seqs, attr):
    arrs = [getattr(s, attr) for s in seqs]
    if any(a is None for a in arrs) or not arrs:
        return None
    return arrs


def _frame_mean(per_seq_values, per_seq_counts):
    total = sum(per_seq_counts)
    return float(sum(v * n for v, n in zip(per_seq_values, per_seq_counts)) / total)


def _report(gt, preds, alphas):
    rep = EvalReport()
    counts = [g.frame_count for g in gt]
    rep.frame_count = sum(counts)
    P = [preds[g.meta.sequence_id] for g in gt]

    def each(fn, *attrs):
        vals = []
        for g, p in zip(gt, P):
            args = [getattr(x, a) for a in attrs for x in (p, g)]
            if any(a is None for a in args):
                return None
            vals.append(fn(*args))
        return _frame_mean(vals, counts)

    rep.mpjpe_left = each(mpjpe, "joints_left")
    rep.mpjpe_right = each(mpjpe, "joints_right")
    rep.aae = each(aae, "omega")

    def lr(pl, gl, pr, gr):
        return mrrpe(gl[:, 0], gr[:, 0], pl[:, 0], pr[:, 0])

    def orr(pb, gb, pr, gr):
        return mrrpe(gb.mean(axis=1), gr[:, 0], pb.mean(axis=1), pr[:, 0])

    rep.mrrpe_lr = each(lr, "joints_left", "joints_right")
    rep.mrrpe_or = each(orr, "verts_bottom", "joints_right")

    def vt(pt, gt_, pb, gb):
        return v2v(pt, gt_, pb.mean(axis=1), gb.mean(axis=1))

    def vb(pb, gb):
        return v2v(pb, gb, pb.mean(axis=1), gb.mean(axis=1))

    rep.v2v_top = each(vt, "verts_top", "verts_bottom")
    rep.v2v_bottom = each(vb, "verts_bottom")

    names = set.intersection(*[set(g.fields or {}) & set(p.fields or {}) for g, p in zip(gt, P)]) if gt else set()
    for name in sorted(names):
        pe = np.concatenate([np.asarray(p.fields[name]).ravel() for p in P])
        ge = np.concatenate([np.asarray(g.fields[name]).ravel() for g in gt])
        rep.pcd_curves[name] = pcd(pe, ge, alphas)
    return rep


def evaluate_split(gt_sequences, predictions, protocol, split="test", alphas=DEFAULT_ALPHAS):
    """Frame-averaged metrics over the protocol's split, with a per-object breakdown.

    ``predictions`` maps sequence id to :class:`SequenceEval`. Raises
    :class:`CoverageError` listing every sequence whose prediction is missing
    or has the wrong number of frames.
    """
    parts = split_sequences([g.meta for g in gt_sequences], protocol)
    chosen = set(parts[split])
    gt = [g for g in gt_sequences if g.meta.sequence_id in chosen]
    if not gt:
        raise DataError(f"protocol {protocol} has no {split} sequences")
    _check_coverage(gt, predictions)
    rep = _report(gt, predictions, alphas)
    rep.protocol, rep.split = protocol, split
    for obj in sorted({g.meta.object for g in gt}):
        sub = _report([g for g in gt if g.meta.object == obj], predictions, alphas)
        sub.protocol, sub.split, sub.pcd_curves = protocol, split, {}
        rep.per_object[obj] = sub
    return rep

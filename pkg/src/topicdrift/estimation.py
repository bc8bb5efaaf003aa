"""Susceptibility estimation by constrained least squares.

Three nested hypotheses are fit to the observed profile changes: a single
trend susceptibility shared by everyone (HP1), shared trend and neighbor
susceptibilities (HP2), and individual per-member parameters (HP3, plus the
HP3a variant in which negative raw parameters are nulled). All fits reduce to
scalar products accumulated over (member, topic, year) residual terms; the
per-member 2x2 systems are classified by the sign and feasibility of their
raw solutions and projected onto the feasible triangle accordingly.

Accumulation order is fixed (data order, folded chunk by chunk), so results
are bit-stable for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .profiles import DeviationGroup, Deviations

__all__ = [
    "EstimationError",
    "Gram",
    "FitResult",
    "CaseLabel",
    "AngleDiagnostics",
    "MemberFit",
    "fit_hp1",
    "fit_hp2",
    "fit_hp3",
    "fit_hp3_alpha",
    "hp3_unconstrained_aggregate",
    "angle_diagnostics",
    "case_census",
    "chi_sq_gradient",
    "CASE_NAMES",
]

# Scale-invariant numerical rank test for the per-member 2x2 system.
SINGULARITY_RTOL = 1e-12

CASE_NAMES = ("Ia", "Ib", "Ic", "II", "III", "IVa", "IVb", "V", "VIa", "VIb", "VIc")

_CHUNK = 256


class EstimationError(ValueError):
    """The deviation data cannot support the requested fit."""


@dataclass
class Gram:
    """Scalar products of one residual block.

    a11 = <<(dN)^2>>, a12 = <<dN dS>>, a22 = <<(dS)^2>>,
    b1 = <<dxi dN>>, b2 = <<dxi dS>>, c0 = <<dxi^2>>.
    """

    a11: float = 0.0
    a12: float = 0.0
    a22: float = 0.0
    b1: float = 0.0
    b2: float = 0.0
    c0: float = 0.0
    n_terms: int = 0

    def add_group(self, g: DeviationGroup) -> None:
        ds = g.d_trend
        dxi = g.d_xi
        self.a22 += float(ds @ ds)
        self.b2 += float(dxi @ ds)
        self.c0 += float(dxi @ dxi)
        self.n_terms += len(g.topics)
        if g.d_neigh is not None:
            dn = g.d_neigh
            self.a11 += float(dn @ dn)
            self.a12 += float(dn @ ds)
            self.b1 += float(dxi @ dn)

    def merge(self, other: "Gram") -> None:
        self.a11 += other.a11
        self.a12 += other.a12
        self.a22 += other.a22
        self.b1 += other.b1
        self.b2 += other.b2
        self.c0 += other.c0
        self.n_terms += other.n_terms

    def det(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a12

    def fro_sq(self) -> float:
        return self.a11 * self.a11 + 2.0 * self.a12 * self.a12 + self.a22 * self.a22

    def is_singular(self) -> bool:
        return abs(self.det()) < SINGULARITY_RTOL * self.fro_sq() or self.fro_sq() == 0.0

    def raw_solution(self) -> tuple[float, float]:
        det = self.det()
        x = (self.a22 * self.b1 - self.a12 * self.b2) / det
        xs = (self.a11 * self.b2 - self.a12 * self.b1) / det
        return x + 0.0, xs + 0.0  # normalize -0.0

    def chi_sq_at(self, x: float, xs: float) -> float:
        return (
            self.c0
            - 2.0 * (x * self.b1 + xs * self.b2)
            + x * x * self.a11
            + 2.0 * x * xs * self.a12
            + xs * xs * self.a22
        )

    def unconstrained_min(self) -> float:
        """Minimum chi^2 over the unconstrained parameters (well defined even
        for a singular system: the minimum over the regressor span)."""
        if self.is_singular():
            if self.a22 > 0.0:
                return self.c0 - self.b2 * self.b2 / self.a22
            if self.a11 > 0.0:
                return self.c0 - self.b1 * self.b1 / self.a11
            return self.c0
        x, xs = self.raw_solution()
        return self.c0 - (x * self.b1 + xs * self.b2)


@dataclass
class FitResult:
    hypothesis: str
    params: dict[str, float | None]
    chi_sq: float
    dof: int
    chi_sq_per_dof: float | None
    chi_sq_unconstrained: float
    n_terms: int
    projected: bool
    note: str | None = None

    def to_dict(self) -> dict:
        return {
            "hypothesis": self.hypothesis,
            "params": self.params,
            "chi_sq": self.chi_sq,
            "dof": self.dof,
            "chi_sq_per_dof": self.chi_sq_per_dof,
            "chi_sq_unconstrained": self.chi_sq_unconstrained,
            "n_terms": self.n_terms,
            "projected": self.projected,
            "note": self.note,
        }


@dataclass
class CaseLabel:
    """Feasibility case of one raw per-member solution (the taxonomy keys raw
    signs plus the singularity of the system; projection follows the case)."""

    case: str
    raw: tuple[float | None, float | None]
    projected: tuple[float | None, float]
    det_a: float


@dataclass
class AngleDiagnostics:
    """Cosines between the member's stacked dxi, dN and dS row vectors.

    alpha is the angle (dxi, dN), beta is (dxi, dS), gamma is (dN, dS).
    A negative raw neighbor susceptibility coincides with
    cos(alpha) < cos(beta) * cos(gamma).
    """

    cos_alpha: float | None
    cos_beta: float | None
    cos_gamma: float | None
    anticonform: bool | None


@dataclass
class MemberFit:
    member: str
    result: FitResult
    label: CaseLabel
    angles: AngleDiagnostics
    n_year_pairs: int


def _chunks(groups: Iterable[DeviationGroup]) -> Iterator[list[DeviationGroup]]:
    chunk: list[DeviationGroup] = []
    for g in groups:
        chunk.append(g)
        if len(chunk) >= _CHUNK:
            yield chunk
            chunk = []
    if chunk:
        yield chunk


def _accumulate(
    dev: Deviations, jobs: int, per_member: bool, neighbor_only: bool
):
    """Fold groups into Grams in fixed chunk order (worker-count independent)."""

    def fold_chunk(chunk: list[DeviationGroup]):
        total = Gram()
        members: dict[str, Gram] = {}
        pairs: dict[str, set[int]] = {}
        for g in chunk:
            if neighbor_only and g.d_neigh is None:
                continue
            total.add_group(g)
            if per_member:
                members.setdefault(g.member, Gram()).add_group(g)
                pairs.setdefault(g.member, set()).add(g.year)
        return total, members, pairs

    total = Gram()
    members: dict[str, Gram] = {}
    pairs: dict[str, set[int]] = {}

    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            partials = pool.map(fold_chunk, _chunks(dev.groups()))
            partial_list = list(partials)
    else:
        partial_list = [fold_chunk(c) for c in _chunks(dev.groups())]

    for part_total, part_members, part_pairs in partial_list:
        total.merge(part_total)
        for m, gram in part_members.items():
            members.setdefault(m, Gram()).merge(gram)
        for m, ys in part_pairs.items():
            pairs.setdefault(m, set()).update(ys)
    return total, members, pairs


def fit_hp1(dev: Deviations, jobs: int = 1) -> FitResult:
    """Single shared trend susceptibility, no neighbor influence."""
    gram, _, _ = _accumulate(dev, jobs, per_member=False, neighbor_only=False)
    if gram.n_terms == 0:
        raise EstimationError("no deviation rows to fit")
    dof = gram.n_terms - 1
    if gram.a22 == 0.0:
        return FitResult(
            "HP1", {"x_s0": None}, gram.c0, dof, gram.c0 / dof if dof > 0 else None,
            gram.c0, gram.n_terms, False, note="undetermined: trend deviations are all zero",
        )
    raw = gram.b2 / gram.a22
    clamped = min(max(raw, 0.0), 1.0)
    chi = gram.chi_sq_at(0.0, clamped)
    return FitResult(
        "HP1",
        {"x_s0": clamped},
        chi,
        dof,
        chi / dof if dof > 0 else None,
        gram.chi_sq_at(0.0, raw),
        gram.n_terms,
        projected=clamped != raw,
    )


def _project_triangle(gram: Gram) -> tuple[float, float]:
    """Closest feasible point to the unconstrained optimum in the chi^2 metric.

    Checks the three edges of {x >= 0, xs >= 0, x + xs <= 1}; each edge
    restriction is a one-dimensional quadratic with a closed-form minimizer.
    """
    candidates = []
    if gram.a22 > 0.0:
        candidates.append((0.0, min(max(gram.b2 / gram.a22, 0.0), 1.0)))
    else:
        candidates.append((0.0, 0.0))
    if gram.a11 > 0.0:
        candidates.append((min(max(gram.b1 / gram.a11, 0.0), 1.0), 0.0))
    else:
        candidates.append((0.0, 0.0))
    # edge x + xs = 1, parametrized by xs = s
    quad = gram.a11 - 2.0 * gram.a12 + gram.a22
    if quad > 0.0:
        s = (gram.b2 - gram.b1 + gram.a11 - gram.a12) / quad
        s = min(max(s, 0.0), 1.0)
    else:
        s = 0.5
    candidates.append((1.0 - s, s))
    return min(candidates, key=lambda c: gram.chi_sq_at(*c))


def fit_hp2(dev: Deviations, jobs: int = 1) -> FitResult:
    """Shared trend and neighbor susceptibilities from the global 2x2 system."""
    gram, _, _ = _accumulate(dev, jobs, per_member=False, neighbor_only=True)
    if gram.n_terms == 0:
        raise EstimationError("no deviation rows with neighbor deviations to fit")
    dof = gram.n_terms - 2
    if gram.is_singular():
        return FitResult(
            "HP2", {"x_mean": None, "x_trend": None}, gram.c0, dof, None,
            gram.unconstrained_min(), gram.n_terms, False,
            note="undetermined: neighbor and trend deviations are collinear",
        )
    raw_x, raw_xs = gram.raw_solution()
    feasible = raw_x >= 0.0 and raw_xs >= 0.0 and raw_x + raw_xs <= 1.0
    if feasible:
        x, xs = raw_x, raw_xs
    else:
        x, xs = _project_triangle(gram)
    chi = gram.chi_sq_at(x, xs)
    return FitResult(
        "HP2",
        {"x_mean": x, "x_trend": xs},
        chi,
        dof,
        chi / dof if dof > 0 else None,
        gram.unconstrained_min(),
        gram.n_terms,
        projected=not feasible,
    )


def _angles(gram: Gram) -> AngleDiagnostics:
    def cosine(dot: float, sq_a: float, sq_b: float) -> float | None:
        if sq_a <= 0.0 or sq_b <= 0.0:
            return None
        return min(max(dot / math.sqrt(sq_a * sq_b), -1.0), 1.0)

    cos_alpha = cosine(gram.b1, gram.c0, gram.a11)
    cos_beta = cosine(gram.b2, gram.c0, gram.a22)
    cos_gamma = cosine(gram.a12, gram.a11, gram.a22)
    anticonform = None
    if cos_alpha is not None and cos_beta is not None and cos_gamma is not None:
        anticonform = cos_alpha < cos_beta * cos_gamma
    return AngleDiagnostics(cos_alpha, cos_beta, cos_gamma, anticonform)


def _clamp01(v: float) -> float:
    return min(max(v, 0.0), 1.0)


def _classify(gram: Gram, paper_emulation: bool) -> tuple[CaseLabel, float]:
    """Case label plus the chi^2 at the projected parameters.

    Default projection re-solves the surviving parameter in closed form after
    clamping a negative one (the boundary minimizer); paper_emulation keeps
    the raw value for the surviving parameter instead.
    """
    det = gram.det()
    if gram.is_singular():
        xs_hat = gram.b2 / gram.a22 if gram.a22 > 0.0 else 0.0
        xs_hat += 0.0
        xs = _clamp01(xs_hat)
        if xs_hat > 0.0:
            case = "VIa"
        elif xs_hat == 0.0:
            case = "VIb"
        else:
            case = "VIc"
        return CaseLabel(case, (None, xs_hat), (None, xs), det), gram.chi_sq_at(0.0, xs)

    x_hat, xs_hat = gram.raw_solution()
    if x_hat < 0.0 and xs_hat < 0.0:
        case, x, xs = "V", 0.0, 0.0
    elif x_hat < 0.0:
        case = "III"
        x = 0.0
        xs = _clamp01(xs_hat if paper_emulation else (gram.b2 / gram.a22 if gram.a22 > 0.0 else 0.0))
    elif xs_hat < 0.0:
        if x_hat > 1.0:
            case, x, xs = "IVb", 1.0, 0.0
        else:
            case = "IVa"
            xs = 0.0
            x = _clamp01(x_hat if paper_emulation else (gram.b1 / gram.a11 if gram.a11 > 0.0 else 0.0))
    elif x_hat + xs_hat > 1.0:
        case = "II"
        total = x_hat + xs_hat
        x, xs = x_hat / total, xs_hat / total
    elif x_hat == 0.0 and xs_hat == 0.0:
        case, x, xs = "Ib", 0.0, 0.0
    elif xs_hat == 0.0:
        case, x, xs = "Ic", x_hat, 0.0
    else:
        case, x, xs = "Ia", x_hat, xs_hat
    return CaseLabel(case, (x_hat, xs_hat), (x, xs), det), gram.chi_sq_at(x, xs)


def fit_hp3(dev: Deviations, paper_emulation: bool = False, jobs: int = 1) -> list[MemberFit]:
    """Individual 2x2 fits per member, classified and projected case by case.

    Members with no neighbor-deviation rows cannot be fit and are absent from
    the result.
    """
    _, members, pairs = _accumulate(dev, jobs, per_member=True, neighbor_only=True)
    fits: list[MemberFit] = []
    for member in sorted(members):
        gram = members[member]
        label, chi = _classify(gram, paper_emulation)
        n_params = 1 if label.raw[0] is None else 2
        dof = gram.n_terms - n_params
        result = FitResult(
            "HP3",
            {"x_i": label.projected[0], "x_is": label.projected[1]},
            chi,
            dof,
            chi / dof if dof > 0 else None,
            gram.unconstrained_min(),
            gram.n_terms,
            projected=label.case not in ("Ia", "Ib", "Ic"),
        )
        fits.append(MemberFit(member, result, label, _angles(gram), len(pairs[member])))
    return fits


def hp3_unconstrained_aggregate(fits: list[MemberFit]) -> FitResult:
    """Table-style summary of the raw (pre-projection) individual fits.

    Parameter means run over members with a non-singular system; the chi^2 is
    the sum of the per-member unconstrained minima over all fitted members.
    """
    if not fits:
        raise EstimationError("no members were fit")
    det_ok = [f for f in fits if f.label.raw[0] is not None]
    chi = sum(f.result.chi_sq_unconstrained for f in fits)
    n_terms = sum(f.result.n_terms for f in fits)
    n_params = 2 * len(det_ok) + 1 * (len(fits) - len(det_ok))
    dof = n_terms - n_params
    x_mean = float(np.mean([f.label.raw[0] for f in det_ok])) if det_ok else None
    xs_mean = float(np.mean([f.label.raw[1] for f in det_ok])) if det_ok else None
    return FitResult(
        "HP3",
        {"x_mean": x_mean, "x_trend": xs_mean},
        chi,
        dof,
        chi / dof if dof > 0 else None,
        chi,
        n_terms,
        projected=False,
        note=f"raw means over {len(det_ok)} members with det != 0, of {len(fits)} fitted",
    )


def fit_hp3_alpha(
    dev: Deviations | None = None,
    fits: list[MemberFit] | None = None,
    paper_emulation: bool = False,
    jobs: int = 1,
) -> FitResult:
    """Individual fits with infeasible raw values projected (negatives nulled,
    over-unit sums rescaled); aggregates chi^2 and mean parameters."""
    if fits is None:
        if dev is None:
            raise EstimationError("fit_hp3_alpha needs deviations or member fits")
        fits = fit_hp3(dev, paper_emulation=paper_emulation, jobs=jobs)
    if not fits:
        raise EstimationError("no members were fit")
    det_ok = [f for f in fits if f.label.projected[0] is not None]
    chi = sum(f.result.chi_sq for f in fits)
    n_terms = sum(f.result.n_terms for f in fits)
    n_params = 2 * len(det_ok) + 1 * (len(fits) - len(det_ok))
    dof = n_terms - n_params
    x_mean = float(np.mean([f.label.projected[0] for f in det_ok])) if det_ok else None
    xs_mean = float(np.mean([f.label.projected[1] for f in det_ok])) if det_ok else None
    return FitResult(
        "HP3a",
        {"x_mean": x_mean, "x_trend": xs_mean},
        chi,
        dof,
        chi / dof if dof > 0 else None,
        sum(f.result.chi_sq_unconstrained for f in fits),
        n_terms,
        projected=True,
        note=f"projected means over {len(det_ok)} members with det != 0, of {len(fits)} fitted",
    )


def angle_diagnostics(dev: Deviations, member: str) -> AngleDiagnostics:
    """Cosine diagnostics for one member's stacked deviation rows."""
    gram = Gram()
    found = False
    for g in dev.groups():
        if g.member == member and g.d_neigh is not None:
            gram.add_group(g)
            found = True
    if not found:
        raise EstimationError(f"no neighbor-deviation rows for member {member!r}")
    return _angles(gram)


def case_census(fits: Iterable[MemberFit | CaseLabel | str]) -> dict[str, int]:
    """Occurrence counts per feasibility case, all cases always present."""
    census = {name: 0 for name in CASE_NAMES}
    for f in fits:
        case = f if isinstance(f, str) else (f.case if isinstance(f, CaseLabel) else f.label.case)
        census[case] += 1
    return census


def chi_sq_gradient(gram: Gram, x: float, xs: float) -> np.ndarray:
    """Analytic gradient of the quadratic chi^2 at (x, xs)."""
    return 2.0 * np.array(
        [
            gram.a11 * x + gram.a12 * xs - gram.b1,
            gram.a12 * x + gram.a22 * xs - gram.b2,
        ]
    )

"""Sparse multimode Fock-space kets and passive two-mode transforms.

A ket is a map from occupation tuples to complex amplitudes, tied to a
:class:`ModeLayout` that fixes the mode order. Everything here is immutable;
operations return new objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

UNITARY_TOL = 1e-12


class LayoutMismatchError(ValueError):
    pass


class CutoffError(ValueError):
    pass


@dataclass(frozen=True)
class ModeLayout:
    """Ordered mode labels plus the (ordinary, extraordinary) signal pairs.

    Labels ending in ``_o``/``_e`` mark the polarization. ``n_max`` is the
    per-mode photon cutoff.
    """

    modes: tuple[str, ...]
    pairs: tuple[tuple[str, str], ...] = ()
    n_max: int = 2

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "pairs", tuple(tuple(p) for p in self.pairs))
        if len(set(self.modes)) != len(self.modes):
            raise ValueError(f"duplicate mode labels in {self.modes}")
        if self.n_max < 0:
            raise ValueError("n_max must be non-negative")
        for pair in self.pairs:
            if len(pair) != 2:
                raise ValueError(f"pair {pair} must have two modes")
            for label in pair:
                if label not in self.modes:
                    raise ValueError(f"pair mode {label!r} not in layout")
            if sorted(lab[-2:] for lab in pair) != ["_e", "_o"]:
                raise ValueError(f"pair {pair} needs one ordinary and one extraordinary mode")

    def __len__(self):
        return len(self.modes)

    def index(self, label: str) -> int:
        try:
            return self.modes.index(label)
        except ValueError:
            raise KeyError(f"mode {label!r} not in layout {self.modes}") from None

    def occupation(self, counts: Mapping[str, int] | None = None) -> tuple[int, ...]:
        """Occupation tuple with the given per-mode counts, zero elsewhere."""
        occ = [0] * len(self.modes)
        for label, n in (counts or {}).items():
            occ[self.index(label)] = int(n)
        self.check_occupation(occ)
        return tuple(occ)

    def check_occupation(self, occ: Sequence[int]):
        if len(occ) != len(self.modes):
            raise ValueError(f"occupation {tuple(occ)} has wrong length for {len(self.modes)} modes")
        for n in occ:
            if n < 0:
                raise ValueError(f"negative occupation in {tuple(occ)}")
            if n > self.n_max:
                raise CutoffError(f"occupation {tuple(occ)} exceeds n_max={self.n_max}")

    def without(self, label: str) -> ModeLayout:
        """Layout with one mode removed; pairs touching it are dropped."""
        self.index(label)
        modes = tuple(m for m in self.modes if m != label)
        pairs = tuple(p for p in self.pairs if label not in p)
        return ModeLayout(modes, pairs, self.n_max)

    def signal_pair_indices(self) -> list[tuple[int, int]]:
        """(ordinary, extraordinary) index pairs, in pair order."""
        out = []
        for pair in self.pairs:
            o, e = sorted(pair, key=lambda lab: lab[-2:] != "_o")
            out.append((self.index(o), self.index(e)))
        return out


@dataclass(frozen=True)
class PureKet:
    layout: ModeLayout
    amplitudes: Mapping[tuple[int, ...], complex] = field(default_factory=dict)

    def __post_init__(self):
        amps = {}
        for occ, amp in dict(self.amplitudes).items():
            occ = tuple(int(n) for n in occ)
            self.layout.check_occupation(occ)
            amps[occ] = amps.get(occ, 0j) + complex(amp)
        object.__setattr__(self, "amplitudes", MappingProxyType(amps))

    def __reduce__(self):
        # the read-only mapping proxy is not picklable; rebuild from a plain dict
        return (PureKet, (self.layout, dict(self.amplitudes)))

    @classmethod
    def from_counts(cls, layout: ModeLayout, terms: Iterable[tuple[Mapping[str, int], complex]]) -> PureKet:
        """Build from ``[({"a_o": 1}, amp), ...]``; missing modes are vacuum."""
        amps: dict[tuple[int, ...], complex] = {}
        for counts, amp in terms:
            occ = layout.occupation(counts)
            amps[occ] = amps.get(occ, 0j) + complex(amp)
        return cls(layout, amps)

    @classmethod
    def vacuum(cls, layout: ModeLayout) -> PureKet:
        return cls(layout, {(0,) * len(layout): 1.0})

    def norm2(self) -> float:
        return float(sum(abs(a) ** 2 for a in self.amplitudes.values()))

    def normalized(self) -> PureKet:
        n2 = self.norm2()
        if n2 == 0:
            raise ZeroDivisionError("cannot normalize the zero ket")
        s = 1.0 / math.sqrt(n2)
        return PureKet(self.layout, {k: v * s for k, v in self.amplitudes.items()})

    def scaled(self, factor: complex) -> PureKet:
        return PureKet(self.layout, {k: v * factor for k, v in self.amplitudes.items()})

    def pruned(self, threshold: float) -> PureKet:
        """Drop amplitudes with magnitude below ``threshold``."""
        return PureKet(self.layout, {k: v for k, v in self.amplitudes.items() if abs(v) >= threshold})

    def amplitude(self, counts: Mapping[str, int] | tuple[int, ...]) -> complex:
        occ = counts if isinstance(counts, tuple) else self.layout.occupation(counts)
        return self.amplitudes.get(occ, 0j)

    def photon_number(self) -> set[int]:
        return {sum(occ) for occ, a in self.amplitudes.items() if a != 0}

    def max_pair_total(self) -> int:
        """Largest photon count carried by any signal pair."""
        best = 0
        idx = self.layout.signal_pair_indices()
        for occ, a in self.amplitudes.items():
            if a != 0:
                for o, e in idx:
                    best = max(best, occ[o] + occ[e])
        return best

    def __add__(self, other: PureKet) -> PureKet:
        _check_same_layout(self, other)
        amps = dict(self.amplitudes)
        for k, v in other.amplitudes.items():
            amps[k] = amps.get(k, 0j) + v
        return PureKet(self.layout, amps)

    def __sub__(self, other: PureKet) -> PureKet:
        return self + other.scaled(-1)

    def allclose(self, other: PureKet, atol: float = 1e-12) -> bool:
        _check_same_layout(self, other)
        keys = set(self.amplitudes) | set(other.amplitudes)
        return all(abs(self.amplitude(k) - other.amplitude(k)) <= atol for k in keys)


@dataclass(frozen=True)
class MixedEnsemble:
    """Probability-weighted list of normalized kets on a common layout."""

    components: tuple[tuple[float, PureKet], ...]

    def __post_init__(self):
        comps = tuple((float(w), k) for w, k in self.components)
        if not comps:
            raise ValueError("empty ensemble")
        layout = comps[0][1].layout
        for w, k in comps:
            if w < 0:
                raise ValueError(f"negative weight {w}")
            if k.layout != layout:
                raise LayoutMismatchError("ensemble components live on different layouts")
            if abs(k.norm2() - 1) > 1e-12:
                raise ValueError(f"component not normalized (norm2={k.norm2()})")
        total = sum(w for w, _ in comps)
        if abs(total - 1) > 1e-12:
            raise ValueError(f"weights sum to {total}, not 1")
        object.__setattr__(self, "components", comps)

    @classmethod
    def pure(cls, ket: PureKet) -> MixedEnsemble:
        return cls(((1.0, ket.normalized()),))

    @property
    def layout(self) -> ModeLayout:
        return self.components[0][1].layout

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.components])

    def density_element(self, bra_occ: tuple[int, ...], ket_occ: tuple[int, ...]) -> complex:
        """<bra_occ| rho |ket_occ>."""
        return sum(w * k.amplitude(bra_occ) * np.conj(k.amplitude(ket_occ)) for w, k in self.components)

    def max_pair_total(self) -> int:
        return max(k.max_pair_total() for _, k in self.components)


def _check_same_layout(a: PureKet, b: PureKet):
    if a.layout != b.layout:
        raise LayoutMismatchError(f"layouts differ: {a.layout.modes} vs {b.layout.modes}")


def inner_product(bra: PureKet, ket: PureKet) -> complex:
    """<bra|ket>, conjugate-linear in the first argument."""
    _check_same_layout(bra, ket)
    small, large = (bra, ket) if len(bra.amplitudes) <= len(ket.amplitudes) else (ket, bra)
    total = 0j
    for occ in small.amplitudes:
        if occ in large.amplitudes:
            total += np.conj(bra.amplitudes[occ]) * ket.amplitudes[occ]
    return complex(total)


def pair_transform(p, q, alpha, beta, gamma, delta):
    """Fock amplitudes of ``|p, q>`` under the creation-operator map

        a1^dag -> alpha a1^dag + beta a2^dag,   a2^dag -> gamma a1^dag + delta a2^dag.

    Returns ``{(n1, n2): amplitude}`` with n1 + n2 = p + q. The coefficients may
    be numpy arrays; amplitudes broadcast accordingly.
    """
    out = {}
    norm_in = math.sqrt(math.factorial(p) * math.factorial(q))
    for i in range(p + 1):
        for k in range(q + 1):
            n1 = i + k
            n2 = p + q - n1
            coeff = (
                math.comb(p, i) * math.comb(q, k)
                * alpha**i * beta ** (p - i) * gamma**k * delta ** (q - k)
                * math.sqrt(math.factorial(n1) * math.factorial(n2)) / norm_in
            )
            out[(n1, n2)] = out.get((n1, n2), 0) + coeff
    return out


def check_unitary(U, tol: float = UNITARY_TOL) -> np.ndarray:
    U = np.asarray(U, dtype=complex)
    if U.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got shape {U.shape}")
    if np.max(np.abs(U.conj().T @ U - np.eye(2))) > tol:
        raise ValueError("matrix is not unitary")
    return U


def apply_pair_unitary(state: PureKet, pair: tuple[str, str], U) -> PureKet:
    """Apply a passive 2x2 mode transform to ``pair`` of ``state``.

    Column k of ``U`` is the image of mode k's creation operator:
    ``a_k^dag -> sum_l U[l, k] a_l^dag``. Composition follows matrix order,
    i.e. applying U1 then U2 equals applying ``U2 @ U1``.
    """
    U = check_unitary(U)
    layout = state.layout
    i1, i2 = layout.index(pair[0]), layout.index(pair[1])
    if i1 == i2:
        raise ValueError("pair needs two distinct modes")
    alpha, beta, gamma, delta = U[0, 0], U[1, 0], U[0, 1], U[1, 1]
    amps: dict[tuple[int, ...], complex] = {}
    for occ, amp in state.amplitudes.items():
        for (n1, n2), c in pair_transform(occ[i1], occ[i2], alpha, beta, gamma, delta).items():
            if c == 0:
                continue
            if n1 > layout.n_max or n2 > layout.n_max:
                raise CutoffError(f"transform of {occ} on {pair} needs more than n_max={layout.n_max} photons")
            new = list(occ)
            new[i1], new[i2] = n1, n2
            key = tuple(new)
            amps[key] = amps.get(key, 0j) + amp * c
    return PureKet(layout, amps)


def project_mode_count(state: PureKet, mode: str, n: int) -> tuple[float, PureKet]:
    """Condition on ``n`` photons in ``mode`` and remove that mode.

    Returns the branch probability and the renormalized reduced ket. A
    zero-probability branch gives ``(0.0, empty ket)``.
    """
    layout = state.layout
    idx = layout.index(mode)
    reduced_layout = layout.without(mode)
    amps = {}
    for occ, amp in state.amplitudes.items():
        if occ[idx] == n:
            amps[occ[:idx] + occ[idx + 1:]] = amp
    reduced = PureKet(reduced_layout, amps)
    prob = reduced.norm2()
    if prob == 0:
        return 0.0, PureKet(reduced_layout, {})
    return prob, reduced.normalized()


# matrices for the optical elements in front of detector D2
WAVE_PLATE = np.array([[0, 1], [-1, 0]], dtype=complex)  # on (c_o, c_e): c_e -> c_o, c_o -> -c_e
PBS_45 = np.array([[1, 1], [-1, 1]], dtype=complex) / math.sqrt(2)  # on (d_o, d_e)


def dumps_ket(ket: PureKet) -> str:
    """Serialize a ket: layout header lines, then ``occupation TAB re TAB im``."""
    lines = [
        "# modes: " + " ".join(ket.layout.modes),
        "# pairs: " + " ".join(f"{o},{e}" for o, e in ket.layout.pairs),
        f"# n_max: {ket.layout.n_max}",
    ]
    for occ in sorted(ket.amplitudes):
        amp = ket.amplitudes[occ]
        lines.append(f"({','.join(map(str, occ))})\t{amp.real!r}\t{amp.imag!r}")
    return "\n".join(lines) + "\n"


def dumps_ensemble(ens: MixedEnsemble) -> str:
    parts = []
    for i, (w, k) in enumerate(ens.components):
        parts.append(f"# component {i} weight {w!r}\n" + dumps_ket(k))
    return "".join(parts)


def loads_ket(text: str) -> PureKet:
    return _parse_blocks(text)[0][1]


def loads_ensemble(text: str) -> MixedEnsemble:
    return MixedEnsemble(tuple(_parse_blocks(text)))


def _parse_blocks(text: str) -> list[tuple[float, PureKet]]:
    blocks: list[dict] = []
    cur: dict | None = None

    def start(weight=1.0):
        b = {"weight": weight, "modes": None, "pairs": (), "n_max": 2, "amps": {}}
        blocks.append(b)
        return b

    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(":")
            if key.startswith("component"):
                cur = start(float(key.split()[-1]))
            elif key == "modes":
                if cur is None or cur["modes"] is not None:
                    cur = start()
                cur["modes"] = tuple(value.split())
            elif key == "pairs":
                cur["pairs"] = tuple(tuple(p.split(",")) for p in value.split())
            elif key == "n_max":
                cur["n_max"] = int(value)
            continue
        if cur is None or cur["modes"] is None:
            raise ValueError("amplitude line before layout header")
        occ_s, re_s, im_s = line.split("\t")
        occ = tuple(int(v) for v in occ_s.strip("()").split(",") if v)
        cur["amps"][occ] = complex(float(re_s), float(im_s))
    out = []
    for b in blocks:
        layout = ModeLayout(b["modes"], b["pairs"], b["n_max"])
        out.append((b["weight"], PureKet(layout, b["amps"])))
    if not out:
        raise ValueError("no state found")
    return out

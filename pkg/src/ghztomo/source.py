"""Heralded GHZ source: type-II seed, two type-I splitters, D2 click, D1 veto."""

from __future__ import annotations

import cmath
import itertools
import math
from dataclasses import dataclass

from .fock import (
    PBS_45,
    WAVE_PLATE,
    MixedEnsemble,
    ModeLayout,
    PureKet,
    apply_pair_unitary,
    project_mode_count,
)

PUMP_MODES = ("f_e", "f_o", "g_o", "g_e")
SIGNAL_MODES = ("a_o", "a_e", "b_o", "b_e", "c_o", "c_e")
SIGNAL_PAIRS = (("a_o", "a_e"), ("b_o", "b_e"), ("c_o", "c_e"))
HERALD_PORTS = ("d_o", "d_e")

PUMP_LAYOUT = ModeLayout(PUMP_MODES)
FULL_LAYOUT = ModeLayout(PUMP_MODES + SIGNAL_MODES + ("d_o", "d_e"), SIGNAL_PAIRS)
SIGNAL_LAYOUT = ModeLayout(SIGNAL_MODES, SIGNAL_PAIRS)


class ZeroHeraldError(ValueError):
    """The requested heralding event has probability zero."""


@dataclass(frozen=True)
class CrystalParams:
    gamma: float = 0.1
    phi1: float = 0.0
    chi: float = 0.3 * math.pi
    phi_a: float = 0.0
    phi_b: float = 0.0
    eta1: float = 0.3
    eta2: float = 0.3
    herald_port: str = "d_o"

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        for name in ("eta1", "eta2"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.herald_port not in HERALD_PORTS:
            raise ValueError(f"herald_port must be one of {HERALD_PORTS}")

    @property
    def ghz_phase(self) -> float:
        """Relative phase of the GHZ component, reduced to [0, 2pi).

        The d_e port flips the sign of the heralded superposition.
        """
        extra = math.pi if self.herald_port == "d_e" else 0.0
        return (self.phi1 + self.phi_a + self.phi_b + extra) % (2 * math.pi)


@dataclass(frozen=True)
class HeraldedOutput:
    state: MixedEnsemble
    p_phi: float
    p_rho: float
    p1: float
    p2: float
    p3: float
    herald_port: str = "d_o"


def type2_state(gamma: float, phi1: float) -> PureKet:
    """Low-gain type-II output on (f_e, f_o, g_o, g_e), normalized."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    norm = 1 / math.sqrt(1 + 2 * gamma**2)
    terms = [({}, norm)]
    if gamma > 0:
        terms += [
            ({"f_e": 1, "g_o": 1}, norm * gamma),
            ({"f_o": 1, "g_e": 1}, norm * gamma * cmath.exp(1j * phi1)),
        ]
    return PureKet.from_counts(PUMP_LAYOUT, terms)


def _splitting_rules(chi, phi_a, phi_b):
    c, s = math.cos(chi), math.sin(chi)
    ea, eb = cmath.exp(1j * phi_a), cmath.exp(1j * phi_b)
    # pump photon -> [(created modes, amplitude)]
    return {
        "f_e": [({"f_e": 1}, c), ({"a_o": 1, "b_o": 1}, s)],
        "f_o": [({"f_o": 1}, c), ({"a_e": 1, "b_e": 1}, ea * s)],
        "g_o": [({"g_o": 1}, c), ({"c_e": 1, "d_e": 1}, s)],
        "g_e": [({"g_e": 1}, c), ({"c_o": 1, "d_o": 1}, eb * s)],
    }


def apply_type1_crystals(state: PureKet, chi: float, phi_a: float, phi_b: float) -> PureKet:
    """Closed-form action of crystals A and B on a pump ket.

    Valid when every branch carries at most one photon per pump mode; the
    result lives on :data:`FULL_LAYOUT`.
    """
    rules = _splitting_rules(chi, phi_a, phi_b)
    src = state.layout
    amps: dict[tuple[int, ...], complex] = {}
    for occ, amp in state.amplitudes.items():
        present = []
        for label, n in zip(src.modes, occ):
            if n > 1:
                raise ValueError(f"pump mode {label} carries {n} photons; closed form needs <= 1")
            if n == 1:
                if label not in rules:
                    raise ValueError(f"mode {label} is not a pump mode")
                present.append(label)
        for choice in itertools.product(*(rules[p] for p in present)):
            counts: dict[str, int] = {}
            a = amp
            for created, c in choice:
                a *= c
                for m, k in created.items():
                    counts[m] = counts.get(m, 0) + k
            if a == 0:
                continue
            key = FULL_LAYOUT.occupation(counts)
            amps[key] = amps.get(key, 0j) + a
    return PureKet(FULL_LAYOUT, amps)


def apply_herald_optics(state: PureKet) -> PureKet:
    """Wave plate on the c pair and 45-degree PBS on the d pair."""
    state = apply_pair_unitary(state, ("c_o", "c_e"), WAVE_PLATE)
    return apply_pair_unitary(state, ("d_o", "d_e"), PBS_45)


def _drop_vacuum_modes(state: PureKet, modes) -> PureKet:
    for m in modes:
        p, state = project_mode_count(state, m, 0)
        if abs(p - 1) > 1e-12:
            raise ValueError(f"mode {m} is not in vacuum after heralding (p0={p})")
    return state


def condition_on_D2(state: PureKet, eta2: float, port: str = "d_o",
                    optics_applied: bool = False) -> tuple[float, PureKet]:
    """Condition on one photon at the monitored PBS output.

    Returns the click probability (scaled by ``eta2``) and the normalized
    reduced ket on the f and signal modes.
    """
    if port not in HERALD_PORTS:
        raise ValueError(f"port must be one of {HERALD_PORTS}")
    if not optics_applied:
        state = apply_herald_optics(state)
    prob, phi = project_mode_count(state, port, 1)
    p_click = eta2 * prob
    if p_click == 0:
        raise ZeroHeraldError("D2 click probability is zero")
    other = "d_e" if port == "d_o" else "d_o"
    phi = _drop_vacuum_modes(phi, (other, "g_o", "g_e"))
    return p_click, phi


def condition_on_D1_no_click(phi: PureKet, eta1: float, p_phi: float = 1.0,
                             port: str = "d_o") -> HeraldedOutput:
    """Veto on D1 and trace out the f modes.

    A branch holding k photons in (f_e, f_o) survives with probability
    (1 - eta1)^k; each branch becomes one ensemble component.
    """
    ie, io = phi.layout.index("f_e"), phi.layout.index("f_o")
    if any(occ[ie] + occ[io] > 1 for occ, a in phi.amplitudes.items() if a != 0):
        raise ValueError("f modes carry more than one photon")
    branches = []
    p_survive = 0.0
    for fe, fo in ((0, 0), (1, 0), (0, 1)):
        p_e, ket = project_mode_count(phi, "f_e", fe)
        if p_e == 0:
            branches.append((0.0, None))
            continue
        p_o, ket = project_mode_count(ket, "f_o", fo)
        w = p_e * p_o * (1 - eta1) ** (fe + fo)
        p_survive += w
        branches.append((w, ket if w > 0 else None))
    if p_survive <= 0:
        raise ZeroHeraldError("D1 no-click probability is zero")
    weights = [w / p_survive for w, _ in branches]
    ensemble = MixedEnsemble(tuple((w, k) for w, (_, k) in zip(weights, branches) if w > 0))
    return HeraldedOutput(
        state=ensemble,
        p_phi=p_phi,
        p_rho=p_phi * p_survive,
        p1=weights[0],
        p2=weights[1],
        p3=weights[2],
        herald_port=port,
    )


def herald(params: CrystalParams) -> HeraldedOutput:
    """Full Fock-space pipeline from the pump to the heralded mixture."""
    ket = type2_state(params.gamma, params.phi1)
    ket = apply_type1_crystals(ket, params.chi, params.phi_a, params.phi_b)
    p_phi, phi = condition_on_D2(ket, params.eta2, params.herald_port)
    return condition_on_D1_no_click(phi, params.eta1, p_phi, params.herald_port)


# closed forms

def p_phi_closed(gamma: float, chi: float, eta2: float) -> float:
    return eta2 * gamma**2 * math.sin(chi) ** 2 / (1 + 2 * gamma**2)


def herald_weights(chi: float, eta1: float) -> tuple[float, float, float]:
    denom = 1 - eta1 * math.cos(chi) ** 2
    if denom <= 0:
        raise ZeroHeraldError("D1 no-click probability is zero")
    p1 = math.sin(chi) ** 2 / denom
    p2 = (1 - eta1) * math.cos(chi) ** 2 / (2 * denom)
    return p1, p2, p2


def ghz_ket(phase: float, layout: ModeLayout = SIGNAL_LAYOUT) -> PureKet:
    """(|ooo> - e^{i phase}|eee>)/sqrt2 on the three signal pairs."""
    r = 1 / math.sqrt(2)
    return PureKet.from_counts(layout, [
        ({"a_o": 1, "b_o": 1, "c_o": 1}, r),
        ({"a_e": 1, "b_e": 1, "c_e": 1}, -r * cmath.exp(1j * phase)),
    ])


def closed_form_output(params: CrystalParams) -> HeraldedOutput:
    """The heralded mixture written down directly, without the Fock pipeline."""
    p1, p2, p3 = herald_weights(params.chi, params.eta1)
    p_phi = p_phi_closed(params.gamma, params.chi, params.eta2)
    if p_phi == 0:
        raise ZeroHeraldError("D2 click probability is zero")
    comps = [
        (p1, ghz_ket(params.ghz_phase)),
        (p2, PureKet.from_counts(SIGNAL_LAYOUT, [({"c_o": 1}, 1.0)])),
        (p3, PureKet.from_counts(SIGNAL_LAYOUT, [({"c_e": 1}, 1.0)])),
    ]
    ens = MixedEnsemble(tuple((w, k) for w, k in comps if w > 0))
    return HeraldedOutput(
        state=ens,
        p_phi=p_phi,
        p_rho=p_phi * (1 - params.eta1 * math.cos(params.chi) ** 2),
        p1=p1, p2=p2, p3=p3,
        herald_port=params.herald_port,
    )

"""The five generators and the conjugation gadgets built from them.

F1 is a Morse-Smale map (repelling fixed point at 1/2, attracting at 0),
F2 a bump translation by 1/100, F3 an irrational rotation.  For each
index n the gadget search finds integer exponents so that

* F_tilde_n = F3^a F1^b F2 F1^-b F3^-a is supported inside
  I_n = [1/(2n+1), 1/(2n)] and translates an interval T_n by |T_n|/20;
* F_hat_n = F3^a' F1^b' carries (1/8, 7/8) affinely onto a tiny
  T'_n inside T_n with |T'_n| <= |T_n|/40.

F4 and F5 then encode one compactly supported pair (f_j, g_j) per slot j
as F_hat_j f_j F_hat_j^-1 on T'_j (identity elsewhere), and the
commutator word H = F_hat^-1 A B C F_hat reproduces [f_j, g_j] with an
exactly counted number of letters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    BumpTranslation,
    Compose,
    Diffeo,
    Identity,
    Interval,
    Power,
    Rotation,
    TwoFixedPointMap,
    c0_distance,
    commutator,
    compose,
    frac,
    support,
    validate_diffeo,
)
from .errors import (
    ConstructionError,
    PreconditionError,
    SearchExhaustedError,
    VerificationError,
)
from .words import Letter, Word, power_word

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

# strictness pad for interval containment during integer searches; absorbs
# the drift between k*alpha and k repeated float additions of alpha
_SEARCH_EPS = 1e-9


def build_F1(lam: float = 9.0 / 8.0) -> TwoFixedPointMap:
    """Two-fixed-point generator; lam in (1, 1.237) for a monotone gluing."""
    f1 = TwoFixedPointMap(lam)
    validate_diffeo(f1)
    return f1


def build_F2() -> BumpTranslation:
    """Identity outside (1/4, 3/4), exact translation by 1/100 on (2/5, 3/5)."""
    return BumpTranslation(0.25, 0.4, 0.6, 0.75, 0.01)


@dataclass
class GeneratorSet:
    F1: Diffeo
    F2: Diffeo
    F3: Diffeo
    F4: Diffeo
    F5: Diffeo
    alpha: float
    lam: float
    mu: float
    f45_report: dict = field(default_factory=dict)

    def as_dict(self):
        return {"F1": self.F1, "F2": self.F2, "F3": self.F3,
                "F4": self.F4, "F5": self.F5}


def build_generators(alpha: float = GOLDEN, lam: float = 9.0 / 8.0) -> GeneratorSet:
    """F1, F2, F3 with identity placeholders for F4, F5."""
    return GeneratorSet(
        F1=build_F1(lam),
        F2=build_F2(),
        F3=Rotation(alpha),
        F4=Identity(),
        F5=Identity(),
        alpha=float(alpha),
        lam=float(lam),
        mu=1.0 / float(lam),
    )


def interval_In(n: int) -> Interval:
    """[1/(2n+1), 1/(2n)], the home of gadget n."""
    if n < 1:
        raise PreconditionError(f"gadget index must be >= 1, got {n}")
    return Interval(1.0 / (2 * n + 1), 1.0 / (2 * n), left_open=False, right_open=False)


@dataclass
class Gadget:
    """All per-index data of the commutator construction."""

    n: int
    a: int                 # F3 exponent of F_tilde
    b: int                 # F1 exponent of F_tilde (negative)
    I_n: Interval
    T_n: Interval
    F_tilde: Diffeo
    tilde_word: Word
    translation: float     # |T_n|/20, the exact shift on T_n
    a_hat: int = 0
    b_hat: int = 0
    T_n_prime: Interval | None = None
    F_hat: Diffeo | None = None
    hat_word: Word | None = None
    aff_scale: float = 0.0   # F_hat restricted to (1/8,7/8): x -> aff_shift + aff_scale*x
    aff_shift: float = 0.0
    letters_k_prime: int = 0

    def to_json(self):
        return {
            "n": self.n, "a": self.a, "b": self.b,
            "a_hat": self.a_hat, "b_hat": self.b_hat,
            "I_n": self.I_n.to_json(), "T_n": self.T_n.to_json(),
            "T_n_prime": self.T_n_prime.to_json() if self.T_n_prime else None,
            "translation": self.translation,
            "aff_scale": self.aff_scale, "aff_shift": self.aff_shift,
            "letters_k_prime": self.letters_k_prime,
        }


def _shift_into(low_hi, target: Interval, alpha: float, cap: int, eps=_SEARCH_EPS):
    """Smallest k >= 0 so that (lo, hi) + {k alpha} (mod 1) fits strictly
    inside target; returns (k, shift) with shift possibly negative."""
    lo, hi = low_hi
    for k in range(cap + 1):
        s = frac(np.float64(k) * alpha)
        for cand in (s, s - 1.0):
            if lo + cand > target.left + eps and hi + cand < target.right - eps:
                return k, float(cand)
    raise SearchExhaustedError(
        f"no F3 exponent below cap {cap} places ({lo:.3g},{hi:.3g}) inside "
        f"({target.left:.3g},{target.right:.3g})")


def find_gadget(n: int, gens: GeneratorSet, cap: int = 10 ** 6,
                verify_tol: float = 1e-10, grid: int = 512) -> Gadget:
    """Search the exponents (a, b) and build F_tilde_n.

    b is the smallest-magnitude negative exponent contracting (1/4, 3/4)
    below 0.95 |I_n|; a the smallest rotation count landing the contracted
    interval inside int I_n.  The translation identity
    F_tilde(x) = x + |T_n|/20 on T_n is verified on a grid.
    """
    if n < 1:
        raise PreconditionError(f"gadget index must be >= 1, got {n}")
    lam, alpha = gens.lam, gens.alpha
    In = interval_In(n)

    k = 1
    while (lam ** -k) * 0.5 >= 0.95 * In.length:
        k += 1
        if k > cap:
            raise SearchExhaustedError("contraction exponent search exceeded cap")
    b = -k
    sigma = lam ** b

    hw = sigma * 0.25  # (1/4,3/4) contracts to halfwidth sigma/4 around 1/2
    a, shift = _shift_into((0.5 - hw, 0.5 + hw), In, alpha, cap)

    t_hw = sigma * 0.1  # (2/5,3/5) has halfwidth 1/10
    T_n = Interval(0.5 - t_hw + shift, 0.5 + t_hw + shift)
    translation = sigma / 100.0  # equals |T_n|/20 since |T_n| = sigma/5

    F_tilde = compose(Power(gens.F3, a), Power(gens.F1, b), gens.F2,
                      Power(gens.F1, -b), Power(gens.F3, -a))
    tilde_word = (power_word("F3", a) + power_word("F1", b) + Word([Letter("F2", 1)])
                  + power_word("F1", -b) + power_word("F3", -a))

    xs = T_n.grid(grid)
    err = np.max(np.abs(F_tilde.lift(xs) - xs - translation))
    if err > verify_tol:
        raise VerificationError(
            f"translation identity off by {err:.2e} on T_{n}", residual=float(err))
    gadget = Gadget(n=n, a=a, b=b, I_n=In, T_n=T_n, F_tilde=F_tilde,
                    tilde_word=tilde_word, translation=translation)
    return gadget


def find_hat(n: int, gadget: Gadget, gens: GeneratorSet, cap: int = 10 ** 6,
             affine_tol: float = 1e-11) -> Gadget:
    """Search (a_hat, b_hat) and attach F_hat_n = F3^a' F1^b' to the gadget.

    F_hat maps (1/8, 7/8) affinely onto T'_n inside T_n with
    |T'_n| <= |T_n|/40.
    """
    if gadget.n != n:
        raise PreconditionError("gadget index mismatch")
    lam, alpha = gens.lam, gens.alpha
    T_n = gadget.T_n

    k = 1
    while (lam ** -k) * 0.75 > T_n.length / 40.0:
        k += 1
        if k > cap:
            raise SearchExhaustedError("hat contraction exponent search exceeded cap")
    b_hat = -k
    sigma = lam ** b_hat

    hw = sigma * 0.375  # (1/8,7/8) has halfwidth 3/8
    a_hat, shift = _shift_into((0.5 - hw, 0.5 + hw), T_n, alpha, cap)
    T_prime = Interval(0.5 - hw + shift, 0.5 + hw + shift)

    F_hat = compose(Power(gens.F3, a_hat), Power(gens.F1, b_hat))
    hat_word = power_word("F3", a_hat) + power_word("F1", b_hat)

    aff_scale = sigma
    aff_shift = 0.5 * (1.0 - sigma) + shift

    xs = np.linspace(0.125, 0.875, 257)
    lifted = F_hat.lift(xs) - (aff_shift + aff_scale * xs)
    err = np.max(np.abs(lifted - np.round(lifted)))  # lift differs by the winding
    if err > affine_tol:
        raise VerificationError(f"F_hat not affine on (1/8,7/8): {err:.2e}",
                                residual=float(err))
    second = np.diff(F_hat.lift(xs), 2)
    if np.max(np.abs(second)) > affine_tol:
        raise VerificationError("F_hat second differences too large",
                                residual=float(np.max(np.abs(second))))

    gadget.a_hat = a_hat
    gadget.b_hat = b_hat
    gadget.T_n_prime = T_prime
    gadget.F_hat = F_hat
    gadget.hat_word = hat_word
    gadget.aff_scale = aff_scale
    gadget.aff_shift = aff_shift
    gadget.letters_k_prime = (2 * (a_hat + abs(b_hat))
                              + 6 * (2 * gadget.a + 2 * abs(gadget.b) + 1) + 8)
    return gadget


def build_gadget(n: int, gens: GeneratorSet, cap: int = 10 ** 6) -> Gadget:
    return find_hat(n, find_gadget(n, gens, cap), gens, cap)


class SlotConjugation(Diffeo):
    """F4/F5-style map: on each slot interval T'_j it acts as
    Aff_j o inner_j o Aff_j^-1 (Aff_j the affine part of F_hat_j restricted
    to (1/8, 7/8)); identity elsewhere.  Smooth as long as each inner map
    is compactly supported inside (1/8, 7/8)."""

    kind = "slot_conjugation"

    def __init__(self, slots):
        """slots: list of (interval, aff_shift, aff_scale, inner_diffeo)."""
        self.slots = sorted(slots, key=lambda s: s[0].left)
        for (i1, *_), (i2, *_) in zip(self.slots, self.slots[1:]):
            if i1.right > i2.left:
                raise ConstructionError("slot intervals overlap")
        self._lefts = np.array([s[0].left for s in self.slots])
        self._rights = np.array([s[0].right for s in self.slots])

    def _locate(self, xm):
        idx = np.searchsorted(self._lefts, xm, side="right") - 1
        valid = idx >= 0
        inside = np.zeros_like(valid)
        inside[valid] = xm[valid] < self._rights[idx[valid]]
        return idx, inside

    def lift(self, x):
        x = np.asarray(x, dtype=float)
        base = np.floor(x)
        xm = x - base
        out = xm.copy()
        if self.slots:
            idx, inside = self._locate(xm)
            for j in range(len(self.slots)):
                sel = inside & (idx == j)
                if not np.any(sel):
                    continue
                _, c, s, inner = self.slots[j]
                u = (xm[sel] - c) / s
                out[sel] = c + s * inner.lift(u)
        return base + out

    def deriv(self, x):
        xm = frac(np.asarray(x, dtype=float))
        out = np.ones_like(xm)
        if self.slots:
            idx, inside = self._locate(xm)
            for j in range(len(self.slots)):
                sel = inside & (idx == j)
                if not np.any(sel):
                    continue
                _, c, s, inner = self.slots[j]
                out[sel] = inner.deriv((xm[sel] - c) / s)
        return out

    def inverse_lift(self, y):
        y = np.asarray(y, dtype=float)
        base = np.floor(y)
        ym = y - base
        out = ym.copy()
        if self.slots:
            idx, inside = self._locate(ym)
            for j in range(len(self.slots)):
                sel = inside & (idx == j)
                if not np.any(sel):
                    continue
                _, c, s, inner = self.slots[j]
                u = (ym[sel] - c) / s
                out[sel] = c + s * inner.inverse_lift(u)
        return base + out

    def params_json(self):
        return {"slots": [
            {"interval": iv.to_json(), "shift": c, "scale": s, "inner": inner.to_json()}
            for iv, c, s, inner in self.slots]}

    @classmethod
    def from_json(cls, obj, flow_resolver=None):
        from .core import diffeo_from_json
        slots = [(Interval.from_json(rec["interval"]), rec["shift"], rec["scale"],
                  diffeo_from_json(rec["inner"], flow_resolver))
                 for rec in obj["slots"]]
        return cls(slots)


SUPPORT_GATE = Interval(1.0 / 7.0, 6.0 / 7.0)


def build_F45(pairs, gadgets, gens: GeneratorSet, c1_gate: float | None = 0.1,
              support_tol: float = 1e-10, grid: int = 4096) -> GeneratorSet:
    """Encode pairs (f_j, g_j) into F4, F5 through the gadget conjugations.

    Preconditions per pair: supported inside (1/7, 6/7); C^1 distance to the
    identity below ``c1_gate`` (pass None to record the norms without
    enforcing -- the flow-built pieces of the full pipeline have order-one
    derivative distortion, see the build report).
    """
    if len(pairs) > len(gadgets):
        raise PreconditionError(f"{len(pairs)} pairs but only {len(gadgets)} gadgets")
    x = np.arange(grid) / grid
    slots4, slots5, norms = [], [], []
    for j, (f_j, g_j) in enumerate(pairs):
        gadget = gadgets[j]
        if gadget.T_n_prime is None:
            raise PreconditionError(f"gadget {gadget.n} has no hat data")
        for name, h in (("f", f_j), ("g", g_j)):
            ok, overshoot = _support_ok(h, support_tol, grid)
            if not ok:
                raise PreconditionError(
                    f"pair {j}: {name} supported outside (1/7,6/7) by {overshoot:.2e}")
            c0 = float(np.max(np.abs(h.disp(x))))
            c1 = float(np.max(np.abs(h.deriv(x) - 1.0)))
            c2 = _c2_estimate(h, x)
            norms.append({"slot": gadgets[j].n, "piece": name,
                          "c0": c0, "c1": c1, "c2_fd": c2})
            if c1_gate is not None and c1 > c1_gate:
                raise PreconditionError(
                    f"pair {j}: {name} has C^1 distance {c1:.3g} > gate {c1_gate:g}")
        slots4.append((gadget.T_n_prime, gadget.aff_shift, gadget.aff_scale, f_j))
        slots5.append((gadget.T_n_prime, gadget.aff_shift, gadget.aff_scale, g_j))
    F4 = SlotConjugation(slots4)
    F5 = SlotConjugation(slots5)
    validate_diffeo(F4, grid)
    validate_diffeo(F5, grid)
    return GeneratorSet(F1=gens.F1, F2=gens.F2, F3=gens.F3, F4=F4, F5=F5,
                        alpha=gens.alpha, lam=gens.lam, mu=gens.mu,
                        f45_report={"pair_norms": norms, "c1_gate": c1_gate})


def _support_ok(h, tol, grid):
    pieces = support(h, tol, grid)
    overshoot = 0.0
    for piece in pieces:
        overshoot = max(overshoot, SUPPORT_GATE.left - piece.left,
                        piece.right - SUPPORT_GATE.right)
    return overshoot <= 0.0, overshoot


def _c2_estimate(h, x):
    d = h.deriv(x)
    step = x[1] - x[0]
    return float(np.max(np.abs((np.roll(d, -1) - np.roll(d, 1)) / (2 * step))))


@dataclass
class CommutatorBuild:
    H: Diffeo
    word: Word
    A: Diffeo
    B: Diffeo
    C: Diffeo
    residual: float | None = None


def commutator_word(n: int, gadget: Gadget, gens: GeneratorSet,
                    pair=None, verify_tol: float = 1e-8,
                    grid: int = 512) -> CommutatorBuild:
    """The word H = F_hat^-1 A B C F_hat realizing [f_n, g_n].

    A = F4 Ft F4^-1 Ft^-1, B = F5 Ft F5^-1 Ft^-1,
    C = F4^-1 F5^-1 Ft F5 F4 Ft^-1 (Ft = F_tilde_n).  If ``pair`` is
    given, the C^0 distance of H to [f, g] is measured on a grid and must
    stay below ``verify_tol``.
    """
    if gadget.F_hat is None:
        raise PreconditionError(f"gadget {n} lacks hat data; run find_hat first")
    if not isinstance(gens.F4, SlotConjugation):
        raise PreconditionError("F4/F5 not built; run build_F45 first")
    if not any(abs(iv.left - gadget.T_n_prime.left) < 1e-15 for iv, *_ in gens.F4.slots):
        raise PreconditionError(f"F4 does not encode slot {n}")

    F4, F5 = gens.F4, gens.F5
    Ft = gadget.F_tilde
    A = compose(F4, Ft, F4.inverse(), Ft.inverse())
    B = compose(F5, Ft, F5.inverse(), Ft.inverse())
    Cm = compose(F4.inverse(), F5.inverse(), Ft, F5, F4, Ft.inverse())
    H = compose(gadget.F_hat.inverse(), A, B, Cm, gadget.F_hat)

    wt = gadget.tilde_word
    wA = Word([Letter("F4", 1)]) + wt + Word([Letter("F4", -1)]) + wt.inverse()
    wB = Word([Letter("F5", 1)]) + wt + Word([Letter("F5", -1)]) + wt.inverse()
    wC = (Word([Letter("F4", -1), Letter("F5", -1)]) + wt
          + Word([Letter("F5", 1), Letter("F4", 1)]) + wt.inverse())
    word = gadget.hat_word.inverse() + wA + wB + wC + gadget.hat_word

    if len(word) != gadget.letters_k_prime:
        raise VerificationError(
            f"letter ledger mismatch: {len(word)} != {gadget.letters_k_prime}")

    residual = None
    if pair is not None:
        f, g = pair
        target = commutator(f, g)
        xs = np.arange(grid) / grid
        diff = np.abs(H.lift(xs) - target.lift(xs))
        residual = float(np.max(diff))
        if residual > verify_tol:
            raise VerificationError(
                f"H differs from [f,g] by {residual:.2e}", residual=residual,
                location=float(xs[int(np.argmax(diff))]))
    return CommutatorBuild(H=H, word=word, A=A, B=B, C=Cm, residual=residual)

"""Exact finite-window evaluation of the walk-environment generator.

The environment seen from the walker is a configuration xi in {0,1}^Z; its
generator acts on a local function f as

    L f(xi) = sum_y [f(xi^{y,y+1}) - f(xi)]
            + (1 - lam xi_0) [f(shift_+1 xi) + f(shift_-1 xi) - 2 f(xi)]

where xi^{y,y+1} exchanges sites y and y+1 and shift_k recentres the
configuration k sites to the right.  On a finite window of radius W only
bonds touching the support of f contribute to the exchange sum, and the two
shifts read one site past the support, so evaluating L f needs W >= r + 1
for a function of support radius r.  Anything that would read outside the
window raises InsufficientWindow rather than assuming zeros.

Two families of correctors are verified against closed forms:

  psi_n  = - sum_{k=1..n} sum_{|x|<=k-1} (xi_x - rho)
           with  L psi_n = (2 - lam xi_0)(2 xi_0 - xi_n - xi_{-n})

  phi_{n,l} = sum_{j=0..l-1} ((l-j)/l) sum_{|x|<=n+j} xi_x
           with  L phi_{n,l} = -(2 - lam xi_0)
                   (xi_n - avg(xi_{n+1..n+l}) + xi_{-n} - avg(xi_{-n-l..-n-1}))

The identity checks enumerate every configuration of the window exactly in
rational arithmetic, so a correct implementation returns a residual of
exactly zero, not merely a small one.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

Rational = Fraction

# Enumerating more than 2^25 window configurations is refused.
MAX_ENUM_BITS = 25


class InsufficientWindow(ValueError):
    def __init__(self, needed: int, got: int, what: str = "window radius"):
        super().__init__(f"{what} {got} too small, need >= {needed}")
        self.needed = needed
        self.got = got


class EnumerationBudgetExceeded(ValueError):
    pass


@dataclass(frozen=True)
class WindowConfiguration:
    """Occupancies xi_{-W..W} with the density rho carried as an exact rational."""

    radius: int
    values: tuple[int, ...]
    rho: Rational = Fraction(0)

    def __post_init__(self):
        if self.radius < 0 or len(self.values) != 2 * self.radius + 1:
            raise ValueError("values must have length 2*radius + 1")
        if any(v not in (0, 1) for v in self.values):
            raise ValueError("occupancies must be 0 or 1")

    def value(self, x: int) -> int:
        if abs(x) > self.radius:
            raise InsufficientWindow(abs(x), self.radius, "site read beyond radius")
        return self.values[x + self.radius]

    def swapped(self, y: int) -> "WindowConfiguration":
        """Exchange sites y and y+1 (both must lie in the window)."""
        if y < -self.radius or y + 1 > self.radius:
            raise InsufficientWindow(abs(y) + 1, self.radius, "swap beyond radius")
        i = y + self.radius
        vals = list(self.values)
        vals[i], vals[i + 1] = vals[i + 1], vals[i]
        return WindowConfiguration(self.radius, tuple(vals), self.rho)

    def shifted(self, k: int) -> "WindowConfiguration":
        """Recentre k sites to the right; the radius shrinks by |k|."""
        if abs(k) > self.radius:
            raise InsufficientWindow(abs(k), self.radius, "shift beyond radius")
        r = self.radius - abs(k)
        vals = tuple(self.values[x + k + self.radius] for x in range(-r, r + 1))
        return WindowConfiguration(r, vals, self.rho)


@dataclass(frozen=True)
class LocalFunction:
    """A function of finitely many coordinates, with a declared support radius.

    The evaluation rule may only read sites |x| <= support_radius; the
    declared radius may exceed the sites actually read (the correctors over-
    declare by one so that the identity right-hand sides stay inside it).
    """

    support_radius: int
    rule: Callable[[WindowConfiguration], Rational]
    name: str = ""

    def __call__(self, cfg: WindowConfiguration) -> Rational:
        if cfg.radius < self.support_radius:
            raise InsufficientWindow(self.support_radius, cfg.radius)
        return self.rule(cfg)


def apply_generator(
    f: LocalFunction, xi: WindowConfiguration, lam: Rational
) -> Rational:
    """Evaluate L f(xi) exactly.

    Needs xi.radius >= support_radius + 1: the boundary bonds pull one value
    from just outside the support and the shifts recentre by one site.
    """
    r = f.support_radius
    if xi.radius < r + 1:
        raise InsufficientWindow(r + 1, xi.radius)
    base = f(xi)
    total = base - base  # zero of the operand type
    for y in range(-r - 1, r + 1):
        if xi.value(y) != xi.value(y + 1):
            total += f(xi.swapped(y)) - base
    rate = 1 - lam * xi.value(0)
    total += rate * (f(xi.shifted(1)) + f(xi.shifted(-1)) - 2 * base)
    return total


@dataclass(frozen=True)
class CorrectorSpec:
    """Which corrector to build: kind 'psi' (needs n) or 'phi' (needs n, ell)."""

    kind: str
    n: int
    ell: int = 1

    def __post_init__(self):
        if self.kind not in ("psi", "phi"):
            raise ValueError(f"unknown corrector kind {self.kind!r}")
        if self.n < 1 or self.ell < 1:
            raise ValueError("n and ell must be positive")

    @property
    def support_radius(self) -> int:
        return self.n if self.kind == "psi" else self.n + self.ell

    @property
    def required_window(self) -> int:
        """Window radius needed to check the generator identity."""
        return self.support_radius + 1


def make_corrector(spec: CorrectorSpec) -> LocalFunction:
    if spec.kind == "psi":
        n = spec.n

        def rule(cfg: WindowConfiguration) -> Rational:
            # - sum_{k=1..n} sum_{|x|<=k-1} (xi_x - rho); the rho terms total
            # n^2 rho because the double sum has n^2 terms
            total = 0
            for k in range(1, n + 1):
                for x in range(-k + 1, k):
                    total += cfg.value(x)
            return -(total - n * n * cfg.rho)

        return LocalFunction(support_radius=n, rule=rule, name=f"psi_{n}")
    n, ell = spec.n, spec.ell

    def rule(cfg: WindowConfiguration) -> Rational:
        total = Fraction(0)
        for j in range(ell):
            weight = Fraction(ell - j, ell)
            total += weight * sum(cfg.value(x) for x in range(-n - j, n + j + 1))
        return total

    return LocalFunction(support_radius=n + ell, rule=rule, name=f"phi_{n}_{ell}")


def corrector_value(spec: CorrectorSpec, cfg: WindowConfiguration) -> Rational:
    """Evaluate the corrector; needs only the sites it actually reads."""
    read_radius = spec.n - 1 if spec.kind == "psi" else spec.n + spec.ell - 1
    if cfg.radius < read_radius:
        raise InsufficientWindow(read_radius, cfg.radius)
    return make_corrector(spec).rule(cfg)


def phi_value_weighted(spec: CorrectorSpec, cfg: WindowConfiguration) -> Rational:
    """phi via its weight rewrite a_k = sum_{j=k..l-1} (l-j)/l.

    Equals the defining nested sum identically; kept as an independent route
    for the equality tests.
    """
    if spec.kind != "phi":
        raise ValueError("weighted form only defined for phi")
    n, ell = spec.n, spec.ell
    a = [sum(Fraction(ell - j, ell) for j in range(k, ell)) for k in range(ell + 1)]
    total = a[0] * sum(cfg.value(x) for x in range(-n, n + 1))
    for k in range(1, ell):
        total += a[k] * (cfg.value(n + k) + cfg.value(-n - k))
    return total


def psi_shift_difference(n: int, cfg: WindowConfiguration) -> Rational:
    """Closed form of psi_n(xi) - psi_n(shift_+1 xi) = sum_{1..n} xi_k - sum_{-n+1..0} xi_k."""
    return sum(cfg.value(k) for k in range(1, n + 1)) - sum(
        cfg.value(k) for k in range(-n + 1, 1)
    )


# --- exhaustive identity checks ------------------------------------------
#
# Configurations of the influential sites are enumerated as bit masks.  For a
# function of support radius r both L f and the identity right-hand side
# depend only on sites |x| <= r + 1, so the enumeration runs over a window of
# radius r + 1; sites further out cannot change any residual (asserted by a
# randomized test in the suite).  The affine structure of the correctors
# (values are constant + sum of per-site weights) is exploited to tabulate f
# over all support patterns in one rational addition per pattern; the table
# is validated against the defining rule before use.


def _affine_table(f: LocalFunction, rho: Rational) -> list:
    r = f.support_radius
    m = 2 * r + 1
    zero = WindowConfiguration(r, (0,) * m, rho)
    c0 = f(zero)
    weights = []
    for i in range(m):
        vals = [0] * m
        vals[i] = 1
        weights.append(f(WindowConfiguration(r, tuple(vals), rho)) - c0)
    table = [c0] * (1 << m)
    for bits in range(1, 1 << m):
        low = (bits & -bits).bit_length() - 1
        table[bits] = table[bits & (bits - 1)] + weights[low]
    # the affine assumption must be checked, not trusted
    probe = range(1 << m) if m <= 11 else range(17, 1 << m, ((1 << m) // 97) or 1)
    for bits in probe:
        vals = tuple((bits >> i) & 1 for i in range(m))
        if f(WindowConfiguration(r, vals, rho)) != table[bits]:
            raise AssertionError(f"{f.name}: affine table disagrees with rule")
    return table


def _max_identity_residuals(
    f: LocalFunction,
    g_core: Callable[[int], Rational],
    sign: int,
    lams: Sequence[Rational],
    rho: Rational,
    exact: bool,
) -> list:
    """max over configurations of |L f + sign (2 - lam xi_0) g| per lam.

    g_core reads the right-hand-side factor g from the window bit mask.  The
    exchange sum S and shift bracket B of L f do not depend on lam, so one
    enumeration pass serves every lam in the grid.
    """
    r = f.support_radius
    R = r + 1
    width = 2 * R + 1
    sup_mask = (1 << (2 * r + 1)) - 1
    table = _affine_table(f, rho)
    if not exact:
        table = [float(v) for v in table]
        lams = [float(v) for v in lams]
    zero = table[0] - table[0]
    maxima = [zero] * len(lams)
    two = zero + 2
    for bits in range(1 << width):
        base_key = (bits >> 1) & sup_mask
        f_base = table[base_key]
        s_sum = zero
        for y in range(width - 1):
            if ((bits >> y) ^ (bits >> (y + 1))) & 1:
                swapped = bits ^ ((1 << y) | (1 << (y + 1)))
                s_sum += table[(swapped >> 1) & sup_mask] - f_base
        bracket = table[(bits >> 2) & sup_mask] + table[bits & sup_mask] - 2 * f_base
        g = g_core(bits)
        if not exact:
            g = float(g)
        if (bits >> R) & 1 == 0:
            res = abs(s_sum + bracket + sign * (two * g))
            for i in range(len(lams)):
                if res > maxima[i]:
                    maxima[i] = res
        else:
            for i, lam in enumerate(lams):
                res = abs(s_sum + (1 - lam) * bracket + sign * ((2 - lam) * g))
                if res > maxima[i]:
                    maxima[i] = res
    return maxima


def _check_window_and_budget(required: int, window: int) -> None:
    if window < required:
        raise InsufficientWindow(required, window)
    if 2 * window + 1 > MAX_ENUM_BITS:
        raise EnumerationBudgetExceeded(
            f"2W+1 = {2 * window + 1} exceeds the {MAX_ENUM_BITS}-bit budget"
        )


def check_psi_identity(
    n: int, lam, rho, window: int, exact: bool = True
) -> Rational:
    """Max |L psi_n - (2 - lam xi_0)(2 xi_0 - xi_n - xi_{-n})| over the window.

    Enumerates the influential sites |x| <= n+1; the value equals the maximum
    over all 2^(2W+1) configurations of any window W >= n+1.  The exact path
    returns a Fraction, and a correct implementation returns exactly 0.
    """
    spec = CorrectorSpec("psi", n)
    _check_window_and_budget(spec.required_window, window)
    lam = Fraction(lam)
    rho = Fraction(rho)
    f = make_corrector(spec)
    R = spec.support_radius + 1

    def g_core(bits: int) -> int:
        xi0 = (bits >> R) & 1
        return 2 * xi0 - ((bits >> (R + n)) & 1) - ((bits >> (R - n)) & 1)

    # residual = L psi - rhs, rhs = (2 - lam xi0) g
    return _max_identity_residuals(f, g_core, -1, [lam], rho, exact)[0]


def check_phi_identity(
    n: int, ell: int, lam, window: int, exact: bool = True
) -> Rational:
    """Max |L phi_{n,l} + (2 - lam xi_0)(xi_n - avg_r + xi_{-n} - avg_l)|.

    avg_r and avg_l are the averages over the l sites right of n and left of
    -n.  Enumerates sites |x| <= n+l+1, which carries the full dependence.
    """
    spec = CorrectorSpec("phi", n, ell)
    _check_window_and_budget(spec.required_window, window)
    lam = Fraction(lam)
    f = make_corrector(spec)
    R = spec.support_radius + 1
    right_mask = ((1 << ell) - 1) << (R + n + 1)
    left_mask = ((1 << ell) - 1) << (R - n - ell)

    def g_core(bits: int) -> Rational:
        xi_n = (bits >> (R + n)) & 1
        xi_mn = (bits >> (R - n)) & 1
        avg_r = Fraction((bits & right_mask).bit_count(), ell)
        avg_l = Fraction((bits & left_mask).bit_count(), ell)
        return xi_n - avg_r + xi_mn - avg_l

    # residual = L phi + rhs, rhs = (2 - lam xi0) g
    return _max_identity_residuals(f, g_core, +1, [lam], Fraction(0), exact)[0]


@dataclass(frozen=True)
class IdentityCase:
    """One row of a verification sweep."""

    identity: str
    n: int
    ell: int | None
    lam: Rational
    rho: Rational | None
    window: int
    residual: Rational | float | None
    status: str  # "ok" | "insufficient-window" | "budget-exceeded"

    @property
    def passed(self) -> bool:
        return self.status == "ok" and self.residual == 0


def sweep_identities(
    n_max: int,
    ell_max: int,
    window: int,
    lams: Sequence,
    rhos: Sequence,
    exact: bool = True,
) -> list[IdentityCase]:
    """Run both identity checks over the (n, ell, lam, rho) grids.

    Each case is enumerated over its minimal sufficient window; `window` caps
    the radius a case may require.  psi does not involve ell and phi does not
    involve rho, so those columns are left empty rather than duplicated.
    """
    if n_max < 1 or ell_max < 1:
        raise ValueError("n_max and ell_max must be >= 1")
    cases: list[IdentityCase] = []
    for n in range(1, n_max + 1):
        spec = CorrectorSpec("psi", n)
        for rho in rhos:
            try:
                _check_window_and_budget(spec.required_window, window)
                f = make_corrector(spec)
                R = spec.required_window

                def g_core(bits: int, R=R, n=n) -> int:
                    xi0 = (bits >> R) & 1
                    return 2 * xi0 - ((bits >> (R + n)) & 1) - ((bits >> (R - n)) & 1)

                res = _max_identity_residuals(
                    f, g_core, -1, [Fraction(v) for v in lams], Fraction(rho), exact
                )
                for lam, r_val in zip(lams, res):
                    cases.append(
                        IdentityCase("psi", n, None, lam, rho, spec.required_window,
                                     r_val, "ok")
                    )
            except InsufficientWindow:
                for lam in lams:
                    cases.append(
                        IdentityCase("psi", n, None, lam, rho, window, None,
                                     "insufficient-window")
                    )
            except EnumerationBudgetExceeded:
                for lam in lams:
                    cases.append(
                        IdentityCase("psi", n, None, lam, rho, window, None,
                                     "budget-exceeded")
                    )
    for n in range(1, n_max + 1):
        for ell in range(1, ell_max + 1):
            spec = CorrectorSpec("phi", n, ell)
            try:
                _check_window_and_budget(spec.required_window, window)
                f = make_corrector(spec)
                R = spec.required_window
                right_mask = ((1 << ell) - 1) << (R + n + 1)
                left_mask = ((1 << ell) - 1) << (R - n - ell)

                def g_core(bits: int, R=R, n=n, ell=ell,
                           right_mask=right_mask, left_mask=left_mask) -> Rational:
                    xi_n = (bits >> (R + n)) & 1
                    xi_mn = (bits >> (R - n)) & 1
                    return (
                        xi_n
                        - Fraction((bits & right_mask).bit_count(), ell)
                        + xi_mn
                        - Fraction((bits & left_mask).bit_count(), ell)
                    )

                res = _max_identity_residuals(
                    f, g_core, +1, [Fraction(v) for v in lams], Fraction(0), exact
                )
                for lam, r_val in zip(lams, res):
                    cases.append(
                        IdentityCase("phi", n, ell, lam, None,
                                     spec.required_window, r_val, "ok")
                    )
            except InsufficientWindow:
                for lam in lams:
                    cases.append(
                        IdentityCase("phi", n, ell, lam, None, window, None,
                                     "insufficient-window")
                    )
            except EnumerationBudgetExceeded:
                for lam in lams:
                    cases.append(
                        IdentityCase("phi", n, ell, lam, None, window, None,
                                     "budget-exceeded")
                    )
    return cases


@dataclass(frozen=True)
class IncrementBoundsResult:
    """Sampled verdicts for the corrector increment bounds."""

    samples: int
    swap_bound_ok: bool
    shift_bound_ok: bool
    psi_shift_exact: bool
    phi_sup_ok: bool
    worst_swap_sq: Rational
    worst_shift_sq: Rational


def check_increment_bounds(
    n: int,
    ell: int,
    window: int,
    samples: int,
    stream,
    rho=Fraction(1, 2),
) -> IncrementBoundsResult:
    """Sample configurations and verify the increment inequalities:

      (phi(xi^{x,x+1}) - phi(xi))^2 <= ell       over all support bonds,
      (phi(shift xi) - phi(xi))^2 <= (2 a_0)^2,
      psi(xi) - psi(shift_+1 xi) equals its closed form exactly,
      |phi(xi)| <= sum_j ((l-j)/l)(2n + 2j + 1).
    """
    phi_spec = CorrectorSpec("phi", n, ell)
    if window < phi_spec.required_window:
        raise InsufficientWindow(phi_spec.required_window, window)
    phi = make_corrector(phi_spec)
    psi = make_corrector(CorrectorSpec("psi", n))
    a0 = sum(Fraction(ell - j, ell) for j in range(ell))
    sup_phi = sum(Fraction(ell - j, ell) * (2 * n + 2 * j + 1) for j in range(ell))
    rho = Fraction(rho)
    m = 2 * window + 1
    swap_ok = shift_ok = psi_ok = sup_ok = True
    worst_swap = Fraction(0)
    worst_shift = Fraction(0)
    r = phi.support_radius
    for _ in range(samples):
        bits = stream.integers(0, 2, m)
        cfg = WindowConfiguration(window, tuple(int(b) for b in bits), rho)
        phi_base = phi(cfg)
        if abs(phi_base) > sup_phi:
            sup_ok = False
        for y in range(-r - 1, r + 1):
            d = phi(cfg.swapped(y)) - phi_base
            dsq = d * d
            worst_swap = max(worst_swap, dsq)
            if dsq > ell:
                swap_ok = False
        d_shift = phi(cfg.shifted(1)) - phi_base
        dsq = d_shift * d_shift
        worst_shift = max(worst_shift, dsq)
        if dsq > (2 * a0) ** 2:
            shift_ok = False
        if psi(cfg) - psi(cfg.shifted(1)) != psi_shift_difference(n, cfg):
            psi_ok = False
    return IncrementBoundsResult(
        samples=samples,
        swap_bound_ok=swap_ok,
        shift_bound_ok=shift_ok,
        psi_shift_exact=psi_ok,
        phi_sup_ok=sup_ok,
        worst_swap_sq=worst_swap,
        worst_shift_sq=worst_shift,
    )

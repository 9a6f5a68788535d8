"""Lattices of elementary sections and their invariants.

An elementary section of order alpha built from a flat multivalued vector
A is  es(A, alpha) = z^alpha exp(log z * (-N / 2 pi i)) A;  finite sums of
these with z-powers absorbed (z * es(A,a) = es(A,a+1)) represent germs of
moderate-growth sections.  A ``Lattice`` is the C{z}-module spanned by a
finite list of such sections; from it we compute graded V-pieces,
exponents, the two induced filtrations, global sections of the conjugate
glued bundle, and the connection invariants (h, Q, U, kappa U kappa).

Orders alpha are kept as exact Fractions in both scalar backends; only
the coefficient arithmetic changes.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field as dc_field
from fractions import Fraction

from . import linalg as la
from .core import (FlatModel, Filtration, InputError, Subspace,
                   convert_matrix, convert_model, eigenspace_split,
                   filtration_from_subspaces, intersection_form_from_polarizing)
from .report import Report
from .scalars import FloatField


class ResolutionError(RuntimeError):
    """A truncation window was too small to give a stable answer."""


# ---------------------------------------------------------------------------
# sections
# ---------------------------------------------------------------------------

class Section:
    """A finite sum of elementary sections in canonical form.

    terms: dict Fraction(alpha) -> coefficient vector (tuple of scalars).
    The canonical form merges equal orders and drops zero vectors, which
    realizes z * es(A, a) = es(A, a+1) implicitly: a section is stored by
    its orders alone, never with an explicit z-power.
    """

    __slots__ = ("field", "terms")

    def __init__(self, field, terms):
        self.field = field
        clean = {}
        for alpha, vec in terms.items() if isinstance(terms, dict) else terms:
            alpha = Fraction(alpha)
            vec = tuple(field.coerce(x) for x in vec)
            if alpha in clean:
                vec = tuple(a + b for a, b in zip(clean[alpha], vec))
            clean[alpha] = vec
        self.terms = {a: v for a, v in clean.items() if not _vec_zero(field, v)}

    def is_zero(self):
        return not self.terms

    def orders(self):
        return sorted(self.terms)

    @property
    def leading_order(self):
        if not self.terms:
            raise InputError("zero section has no leading order")
        return min(self.terms)

    def scale(self, c):
        return Section(self.field, {a: tuple(c * x for x in v)
                                    for a, v in self.terms.items()})

    def shift(self, k: int):
        """Multiply by z^k (k may be negative)."""
        return Section(self.field, {a + k: v for a, v in self.terms.items()})

    def add(self, other: "Section"):
        terms = list(self.terms.items()) + list(other.terms.items())
        return Section(self.field, terms)

    def sub(self, other: "Section"):
        return self.add(other.scale(self.field.from_int(-1)))

    def map_vectors(self, M):
        return Section(self.field, {a: tuple(la.matvec(M, list(v)))
                                    for a, v in self.terms.items()})

    def __repr__(self):
        parts = ", ".join(f"es(.,{a})" for a in self.orders())
        return f"Section[{parts}]"


def _vec_zero(field, v):
    if field.is_exact:
        return all(field.is_zero(x) for x in v)
    return all(abs(x) <= field.eps for x in v)


# ---------------------------------------------------------------------------
# model wrapper with the section calculus
# ---------------------------------------------------------------------------

class TerpModel:
    """FlatModel plus everything the elementary-section calculus needs."""

    def __init__(self, model: FlatModel):
        self.model = model
        self.field = model.field
        f = self.field
        self.mu = model.mu
        self.w = model.w
        # Nt = -N / (2 pi i); in the exact backend 1/(2 pi i) is 1/tau
        inv_tau = f.one / f.tau
        self.Nt = la.smul(f.zero - inv_tau, model.N)
        self.eigen = eigenspace_split(model)
        self._L = None
        self._expNhalf = la.nilpotent_exp(f, model.N,
                                          f.from_fraction(Fraction(-1, 2)))

    # -- eigen bookkeeping ----------------------------------------------------
    def block_of_order(self, alpha: Fraction) -> Subspace:
        """Eigenspace H_lambda with lambda = e^(-2 pi i alpha)."""
        target = (-Fraction(alpha)) % 1
        if self.field.is_exact:
            for turns, sp in self.eigen:
                if turns == target:
                    return sp
        else:
            tf = float(target)
            for turns, sp in self.eigen:
                d = abs(float(turns) - tf)
                if min(d, 1 - d) < 1e-6:
                    return sp
        return Subspace.zero(self.field, self.mu)

    def check_section(self, s: Section) -> bool:
        return all(self.block_of_order(a).contains_vector(list(v))
                   for a, v in s.terms.items())

    # -- operators --------------------------------------------------------------
    def nabla_zdz(self, s: Section) -> Section:
        """z nabla_dz termwise: es(A,a) -> a es(A,a) + es(Nt A, a)."""
        f = self.field
        out = []
        for a, v in s.terms.items():
            out.append((a, tuple(f.from_fraction(a) * x for x in v)))
            out.append((a, tuple(la.matvec(self.Nt, list(v)))))
        return Section(f, out)

    def tau_map(self, s: Section) -> Section:
        """tau(es(A, a)) = es(conj A, w - a), extended antilinearly."""
        f = self.field
        return Section(f, [(Fraction(self.w) - a,
                            tuple(self.model.conj_vector(list(v))))
                           for a, v in s.terms.items()])

    def intersection_L(self):
        if self._L is None:
            self._L = intersection_form_from_polarizing(self.model)
        return self._L

    def exp_pi_i(self, beta: Fraction):
        f = self.field
        if f.is_exact:
            return f.root_of_unity(Fraction(beta) / 2)
        return cmath.exp(1j * math.pi * float(beta))

    def pair_terms(self, A, alpha, B, beta):
        """P(es(A,alpha)(z), es(B,beta)(-z)) = coeff * z^(alpha+beta).

        Returns (alpha+beta, coeff); coeff is zero when alpha+beta is not
        an integer (Eq. 7.65-type orthogonality, exact by construction).
        The closed form is e^(i pi beta) L(A, e^(-N/2) B) with L recovered
        from S; the -z branch is transported in the positive direction.
        """
        f = self.field
        s = Fraction(alpha) + Fraction(beta)
        if s.denominator != 1:
            return s, f.zero
        L = self.intersection_L()
        vec = la.matvec(self._expNhalf, list(B))
        val = la._dot(list(A), la.matvec(L, vec))
        return s, self.exp_pi_i(beta) * val

    def pair_sections(self, s: Section, t: Section) -> dict:
        """P(s(z), t(-z)) collected by z-power. Returns {power: coeff}."""
        f = self.field
        out = {}
        for a, v in s.terms.items():
            for b, u in t.terms.items():
                power, coeff = self.pair_terms(v, a, u, b)
                if la._is_zero(f, coeff, _cscale(f, coeff)):
                    continue
                out[power] = out.get(power, f.zero) + coeff
        return {p: c for p, c in out.items()
                if not la._is_zero(f, c, _cscale(f, c))}

    def gamma_matrix(self, alpha: Fraction, r: float = 1.0):
        """G^(alpha) = sum_k Gamma^(k)(alpha)/k! (r Nt)^k as a float matrix.

        Gamma-derivative values are transcendental, so this always lives in
        the float backend; exact models are converted on the fly.
        """
        if Fraction(alpha) <= 0:
            raise InputError("gamma twist needs alpha > 0")
        ff = self.field if not self.field.is_exact else FloatField()
        Nt = self.Nt if not self.field.is_exact else \
            convert_matrix(self.field, ff, self.Nt)
        n = self.mu
        idx = la.nilpotency_index(ff, Nt)
        coeffs = []
        for k in range(idx):
            g = ff.gamma_value(float(Fraction(alpha)), k)
            coeffs.append(ff.coerce(g * (r ** k) / math.factorial(k)))
        return la.apply_series(ff, coeffs, Nt), ff


def _cscale(field, x):
    return 1.0 if field.is_exact else max(abs(x), 1.0)


# ---------------------------------------------------------------------------
# spec-level operations on single sections
# ---------------------------------------------------------------------------

def nabla_zdz(tm: TerpModel, s: Section) -> Section:
    return tm.nabla_zdz(s)


def tau(tm: TerpModel, s: Section) -> Section:
    return tm.tau_map(s)


def gamma_twist(tm: TerpModel, A, alpha, *, inverse=False):
    """Apply G^(alpha) (or its inverse) to a flat vector; float valued."""
    G, ff = tm.gamma_matrix(alpha)
    vec = [ff.coerce(tm.field.to_complex(x)) for x in A] \
        if tm.field.is_exact else [ff.coerce(x) for x in A]
    M = la.inverse(ff, G) if inverse else G
    return la.matvec(M, vec)


def fourier_laplace(tm: TerpModel, A, alpha):
    """FL(es(A, alpha-1)) = es(G^(alpha) A, alpha) for alpha > 0."""
    if Fraction(alpha) <= 0:
        raise InputError("Fourier-Laplace needs order alpha - 1 with alpha > 0")
    return gamma_twist(tm, A, alpha), Fraction(alpha)


def pairing_P(tm: TerpModel, A, alpha, B, beta):
    return tm.pair_terms(A, alpha, B, beta)


# ---------------------------------------------------------------------------
# lattices
# ---------------------------------------------------------------------------

class Lattice:
    """The C{z}-module generated by finitely many sections."""

    def __init__(self, tm: TerpModel, generators, *, validate=True):
        self.tm = tm
        self.field = tm.field
        gens = [g if isinstance(g, Section) else Section(tm.field, g)
                for g in generators]
        if any(g.is_zero() for g in gens):
            raise InputError("zero generator")
        self.gens = gens
        if validate:
            for g in gens:
                if not tm.check_section(g):
                    raise InputError(
                        "generator has a term outside its Ms-eigenspace")
        self._exponents = None
        self._graded_cache = {}

    # -- level bookkeeping ------------------------------------------------------
    def residues(self):
        res = {a % 1 for g in self.gens for a in g.terms}
        return sorted(res)

    def min_lead(self):
        return min(g.leading_order for g in self.gens)

    def levels_between(self, lo, hi):
        out = []
        for r in self.residues():
            m = math.ceil(lo - r)
            while r + m <= hi:
                if r + m >= lo:
                    out.append(r + Fraction(m))
                m += 1
        return sorted(set(out))

    # -- the graded V-piece ------------------------------------------------------
    def _membership_system(self, beta: Fraction):
        """Linear data for elements of L /\\ V^beta.

        Unknowns are coefficients c_(i,k) of z^k g_i with lead_i + k <= beta;
        rows force all components at levels < beta to vanish.  Returns
        (columns, kernel) where columns[j] maps a kernel combination to its
        level-beta component.
        """
        f = self.field
        unknowns = []       # (i, k)
        for i, g in enumerate(self.gens):
            k = 0
            while g.leading_order + k <= beta:
                unknowns.append((i, k))
                k += 1
        if not unknowns:
            return ([], []), []
        lowlevels = self.levels_between(self.min_lead(), beta - Fraction(1, 10 ** 9))
        lowlevels = [lv for lv in lowlevels if lv < beta]
        rows = []
        for lv in lowlevels:
            for coord in range(self.tm.mu):
                row = []
                for (i, k) in unknowns:
                    v = self.gens[i].terms.get(lv - k)
                    row.append(v[coord] if v is not None else f.zero)
                rows.append(row)
        if rows:
            kernel = la.nullspace(f, rows)
        else:
            kernel = [[f.one if j == t else f.zero for j in range(len(unknowns))]
                      for t in range(len(unknowns))]
        at_beta = []
        for (i, k) in unknowns:
            v = self.gens[i].terms.get(beta - k)
            at_beta.append(list(v) if v is not None else [f.zero] * self.tm.mu)
        return (unknowns, at_beta), kernel

    def graded_piece(self, beta) -> Subspace:
        """{A : es(A, beta) is the beta-graded part of some element of L}."""
        beta = Fraction(beta)
        if beta in self._graded_cache:
            return self._graded_cache[beta]
        (unk, at_beta), kernel = self._membership_system(beta)
        if not kernel:
            sp = Subspace.zero(self.field, self.tm.mu)
        else:
            vecs = []
            for combo in kernel:
                v = [self.field.zero] * self.tm.mu
                for c, col in zip(combo, at_beta):
                    if not la._is_zero(self.field, c, _cscale(self.field, c)):
                        v = [x + c * y for x, y in zip(v, col)]
                vecs.append(v)
            sp = Subspace(self.field, self.tm.mu, vecs)
        self._graded_cache[beta] = sp
        return sp

    # -- exponents ---------------------------------------------------------------
    def exponents(self):
        """The multiset alpha_1 <= ... <= alpha_mu of V-degrees (Eq. 7.70)."""
        if self._exponents is not None:
            return self._exponents
        mu = self.tm.mu
        out = []
        lead = self.min_lead()
        for r in self.residues():
            block_dim = self.tm.block_of_order(r).dim
            if block_dim == 0:
                raise InputError(
                    f"lattice has terms at residue {r} but Ms has no matching "
                    f"eigenvalue")
            m = math.ceil(lead - r) - 1
            prev = self.graded_piece(r + m).dim
            guard = 0
            while True:
                m += 1
                cur = self.graded_piece(r + m).dim
                for _ in range(cur - prev):
                    out.append(r + Fraction(m))
                if cur >= block_dim and cur == prev:
                    break
                prev = cur
                guard += 1
                if guard > 4 * mu + 8:
                    raise InputError("exponent scan did not stabilize; "
                                     "lattice not full rank at some V-degree")
        out.sort()
        if len(out) != mu:
            raise InputError(
                f"lattice is not full rank: found {len(out)} exponents for "
                f"rank {mu}")
        self._exponents = out
        return out

    # -- membership and module coordinates ----------------------------------------
    def reduce(self, s: Section, *, collect_constant=False):
        """Eliminate s against the lattice, level by level.

        Returns (remainder, fiber_coords); remainder is zero (up to levels
        above alpha_mu, which lie in z*L automatically) iff s is in L.
        fiber_coords accumulate the z^0 generator coefficients, i.e. the
        class of s in L / zL.
        """
        f = self.field
        exps = self.exponents()
        amax = exps[-1]
        cur = s
        coords = [f.zero] * len(self.gens)
        while not cur.is_zero() and cur.leading_order <= amax:
            beta = cur.leading_order
            (unk, at_beta), kernel = self._membership_system(beta)
            if not kernel:
                return cur, coords
            imgs = []
            for combo in kernel:
                v = [f.zero] * self.tm.mu
                for c, col in zip(combo, at_beta):
                    v = [x + c * y for x, y in zip(v, col)]
                imgs.append(v)
            target = list(cur.terms[beta])
            sol = la.solve(f, la.column_stack(imgs), target)
            if sol is None:
                return cur, coords
            # assemble the eliminating combination sum c_(i,k) z^k g_i
            coeffs = [f.zero] * len(unk)
            for x, combo in zip(sol, kernel):
                for j, c in enumerate(combo):
                    coeffs[j] = coeffs[j] + x * c
            elim = Section(f, {})
            for (i, k), c in zip(unk, coeffs):
                if la._is_zero(f, c, _cscale(f, c)):
                    continue
                elim = elim.add(self.gens[i].shift(k).scale(c))
                if k == 0:
                    coords[i] = coords[i] + c
            cur = cur.sub(elim)
            if not cur.is_zero() and cur.leading_order <= beta:
                raise RuntimeError("elimination failed to raise the order")
        return Section(f, {}), coords

    def contains(self, s: Section) -> bool:
        rem, _ = self.reduce(s)
        return rem.is_zero()

    def fiber_coordinates(self, s: Section):
        rem, coords = self.reduce(s)
        if not rem.is_zero():
            raise InputError("section is not in the lattice")
        return coords

    def equals_module(self, other: "Lattice") -> bool:
        return all(other.contains(g) for g in self.gens) and \
            all(self.contains(g) for g in other.gens)


# ---------------------------------------------------------------------------
# filtrations from a lattice and back
# ---------------------------------------------------------------------------

def filtrations_from_lattice(L: Lattice):
    """The filtration pair and exponents of a regular singular lattice.

    Returns (F, Ftilde, exponents, report).  F^p on the eigenspace of
    lambda = e^(-2 pi i a), a in (0,1], is the graded V-piece at level
    a + w - 1 - p.  Ftilde applies the inverse gamma twist blockwise; it
    equals F exactly when N = 0 and is produced over float scalars
    otherwise (gamma values are transcendental).
    """
    tm = L.tm
    f = tm.field
    w = tm.w
    exps = L.exponents()
    rep = Report("lattice-filtrations")

    # Eq. 7.71 exponent symmetry
    mu = tm.mu
    sym = all(exps[i] + exps[mu - 1 - i] == w for i in range(mu))
    rep.add("eq7.71-exponent-symmetry", sym,
            "alpha_i + alpha_(mu+1-i) = w")

    pvals = sorted({w + math.floor(-a) for a in exps})
    pmin, pmax = min(pvals), max(pvals)
    entries = {}
    nzero = _is_nzero(tm)
    blocks = []
    for turns, sp in tm.eigen:
        # alpha in (0,1] with e^(-2 pi i alpha) = lambda
        a = (-Fraction(turns)) % 1 if f.is_exact else None
        if f.is_exact:
            if a == 0:
                a = Fraction(1)
        else:
            a = Fraction(round((1 - float(turns)) % 1 * 10 ** 6), 10 ** 6)
            if a == 0:
                a = Fraction(1)
        blocks.append((a, sp))
    for p in range(pmin - 1, pmax + 2):
        cols = []
        for a, sp in blocks:
            piece = L.graded_piece(a + w - 1 - p)
            cols.extend(piece.cols)
        entries[p] = Subspace(f, mu, cols)
    F = filtration_from_subspaces(f, "dec", entries, mu)
    rep.add("F-exhaustive", F.check_exhaustive())
    rep.add("F-nested", F.check_nested())

    # Ftilde: inverse gamma twist per eigenblock
    if not nzero:
        ff = FloatField()
        entries_t = {}
        for p in range(pmin - 1, pmax + 2):
            cols = []
            for a, sp in blocks:
                piece = L.graded_piece(a + w - 1 - p)
                G, _ = tm.gamma_matrix(a)
                Ginv = la.inverse(ff, G)
                for c in piece.cols:
                    cc = [ff.coerce(f.to_complex(x)) for x in c] \
                        if f.is_exact else [ff.coerce(x) for x in c]
                    cols.append(la.matvec(Ginv, cc))
            entries_t[p] = Subspace(ff, mu, cols)
        Ft = filtration_from_subspaces(ff, "dec", entries_t, mu)
    else:
        Ft = F
    rep.extend(_lemma_7_10_report(tm, F, Ft), prefix="lemma7.10.")
    return F, Ft, exps, rep


def _is_nzero(tm: TerpModel):
    return all(la._is_zero(tm.field, x) for row in tm.model.N for x in row)


def _lemma_7_10_report(tm: TerpModel, F: Filtration, Ft) -> Report:
    """Dimension and orthogonality clauses 7.57-7.62 for the pair (F, Ftilde)."""
    f = tm.field
    rep = Report("lemma-7.10")
    w = tm.w
    # work blockwise with the model's eigen decomposition
    ok_dims_pair, ok_dims_unit, ok_orth_pair, ok_orth_unit = True, True, True, True
    same_dims = True
    ps = F.indices()
    ft_field = Ft.field
    for p in ps:
        if F.at(p).dim != Ft.at(p).dim:
            same_dims = False
    from .core import _find_block, _is_unit_turns
    for turns, sp in tm.eigen:
        unit = _is_unit_turns(f, turns)
        other = _find_block(f, tm.eigen, -turns)
        if other is None:
            ok_dims_pair = False
            continue
        for p in ps:
            d1 = F.at(p).intersect(sp).dim
            if unit:
                d2 = F.at(w + 1 - p).intersect(sp).dim
                if d1 + d2 != sp.dim:
                    ok_dims_unit = False
            else:
                d2 = F.at(w - p).intersect(other).dim
                if d1 + d2 != sp.dim:
                    ok_dims_pair = False
        # orthogonality uses Ftilde and S, evaluated in Ftilde's field
        Sf = tm.model.S if ft_field is f else convert_matrix(f, ft_field, tm.model.S)
        spf = sp if ft_field is f else _conv_sub(f, ft_field, sp)
        otherf = other if ft_field is f else _conv_sub(f, ft_field, other)
        for p in ps:
            A = Ft.at(p).intersect(spf)
            B = Ft.at((w + 1 - p) if unit else (w - p)).intersect(
                spf if unit else otherf)
            for u in A.cols:
                for v in B.cols:
                    val = la._dot(u, la.matvec(Sf, v))
                    if not la._is_zero(ft_field, val, _cscale(ft_field, val)):
                        if unit:
                            ok_orth_unit = False
                        else:
                            ok_orth_pair = False
    rep.add("eq7.57-same-dims", same_dims)
    rep.add("eq7.58-dim-pairing", ok_dims_pair)
    rep.add("eq7.59-dim-pairing-unit", ok_dims_unit)
    okN = all(F.at(p - 1).contains(F.at(p).image_under(tm.model.N)) for p in ps)
    rep.add("eq7.60-N-shift", okN)
    rep.add("eq7.61-orthogonality", ok_orth_pair)
    rep.add("eq7.62-orthogonality-unit", ok_orth_unit)
    return rep


def _conv_sub(f_from, f_to, sp: Subspace) -> Subspace:
    return Subspace(f_to, sp.dim_ambient,
                    [[f_to.coerce(f_from.to_complex(x)) for x in c]
                     for c in sp.cols])


def lattice_from_filtration(tm: TerpModel, F: Filtration, *,
                            require_pairing=True) -> Lattice:
    """The elementary-section lattice of a filtration (Eq. 7.74a).

    Generated by es(A, beta) for A in F^(w + floor(-beta)) of the matching
    eigenspace; one generator per basis vector of F^p mod F^(p+1) in each
    block suffices.
    """
    f = tm.field
    w = tm.w
    gens = []
    for turns, sp in tm.eigen:
        a = (-Fraction(turns)) % 1 if f.is_exact else \
            Fraction(round(((1 - float(turns)) % 1) * 10 ** 6), 10 ** 6)
        if a == 0:
            a = Fraction(1)
        ps = F.indices()
        for p in range(ps[0], ps[-1] + 1):
            beta = a + w - 1 - p
            cur = F.at(p).intersect(sp)
            nxt = F.at(p + 1).intersect(sp)
            from .hodge import _complement_in
            for v in _complement_in(f, cur, nxt):
                gens.append(Section(f, {beta: tuple(v)}))
    if not gens:
        raise InputError("filtration produced no generators")
    lat = Lattice(tm, gens)
    if require_pairing:
        _, _, _, rep = filtrations_from_lattice(lat)
        bad = [c.ident for c in rep.failing()
               if "7.61" in c.ident or "7.62" in c.ident or "7.71" in c.ident]
        if bad:
            raise InputError(f"filtration violates pairing properties: {bad}")
    return lat


# ---------------------------------------------------------------------------
# global sections of the tau-glued bundle
# ---------------------------------------------------------------------------

@dataclass
class GlobalBasis:
    sections: list
    trivial: bool
    defect: int
    fiber_matrix: list | None = None


def global_sections(L: Lattice, *, window: int | None = None,
                    _pad_extra: int = 0) -> GlobalBasis:
    """Solve {sigma in L, tau(sigma) in L} over a truncated section space.

    The solution space is complex-linear: tau(sigma) in L is equivalent to
    the (linear) condition that the order-reflected component vector of
    sigma lies in the conjugated span of L's truncations.  The bundle is
    fiberwise trivial iff the space has dimension mu and the solutions
    generate the z=0 fiber L/zL.
    """
    tm = L.tm
    f = L.field
    mu = tm.mu
    exps = L.exponents()
    a1, amu = exps[0], exps[-1]
    min_window = int(math.ceil(float(amu - a1)))
    if window is None:
        window = min_window + 2
    if window < min_window:
        raise InputError(f"window {window} below alpha_mu - alpha_1 = {min_window}")
    pad = Fraction(window - min_window, 2) + _pad_extra

    support = L.levels_between(a1 - pad, amu + pad)
    if not support:
        raise InputError("empty support window")
    cut = amu - 1  # membership is decided on components at levels <= alpha_mu - 1
    test_levels = L.levels_between(min(L.min_lead(), a1 - pad - 1), cut)
    level_index = {lv: i for i, lv in enumerate(test_levels)}
    bigdim = len(test_levels) * mu

    def embed(section: Section):
        vec = [f.zero] * bigdim
        for a, v in section.terms.items():
            if a in level_index:
                base = level_index[a] * mu
                for j in range(mu):
                    vec[base + j] = vec[base + j] + v[j]
            elif a < min(test_levels, default=a):
                raise RuntimeError("support below test window")
        return vec

    # span of truncated z^k g_i
    span_cols = []
    for g in L.gens:
        k = 0
        while g.leading_order + k <= cut:
            span_cols.append(embed(g.shift(k)))
            k += 1
    span = Subspace(f, bigdim, span_cols)

    # big-space conjugation: per-level K0 conj (levels map to themselves here)
    K0 = tm.model.K0
    bigK = la.zeros(f, bigdim, bigdim)
    for lv, i in level_index.items():
        for r in range(mu):
            for c in range(mu):
                bigK[i * mu + r][i * mu + c] = K0[r][c]
    span_conj = span.conjugate(bigK)

    # unknowns: A_gamma per support level, constrained to the eigenblock
    unknown_index = []
    for lv in support:
        for j in range(mu):
            unknown_index.append((lv, j))
    nunk = len(unknown_index)

    rows = []
    # eigenblock constraints: (Ms - lambda) A_gamma = 0
    for li, lv in enumerate(support):
        lam_turns = (-lv) % 1
        lam = f.root_of_unity(lam_turns) if f.is_exact else \
            f.coerce(cmath.exp(-2j * math.pi * float(lv)))
        Mlam = la.msub(tm.model.Ms, la.smul(lam, la.eye(f, mu)))
        base = li * mu
        for r in range(mu):
            row = [f.zero] * nunk
            for c in range(mu):
                row[base + c] = Mlam[r][c]
            rows.append(row)

    # sigma truncation in span: annihilator rows
    ann = _annihilator_rows(f, span)
    for phi in ann:
        row = [f.zero] * nunk
        for t, (lv, j) in enumerate(unknown_index):
            if lv in level_index:
                row[t] = phi[level_index[lv] * mu + j]
        rows.append(row)

    # reflected vector in conj(span): v2[delta] = sigma[w - delta]
    ann2 = _annihilator_rows(f, span_conj)
    for phi in ann2:
        row = [f.zero] * nunk
        for t, (lv, j) in enumerate(unknown_index):
            refl = Fraction(tm.w) - lv
            if refl in level_index:
                row[t] = phi[level_index[refl] * mu + j]
        rows.append(row)

    kernel = la.nullspace(f, rows) if rows else []
    sections = []
    for combo in kernel:
        terms = {}
        for t, (lv, j) in enumerate(unknown_index):
            c = combo[t]
            if la._is_zero(f, c, _cscale(f, c)):
                continue
            vec = list(terms.get(lv, [f.zero] * mu))
            vec[j] = vec[j] + c
            terms[lv] = tuple(vec)
        s = Section(f, terms)
        if not s.is_zero():
            sections.append(s)

    # stability under a larger window
    if _pad_extra == 0:
        again = global_sections(L, window=window, _pad_extra=1)
        if len(again.sections) != len(sections):
            raise ResolutionError(
                f"global-section count unstable under window growth "
                f"({len(sections)} vs {len(again.sections)}); enlarge the window")

    if len(sections) != mu:
        return GlobalBasis(sections, False, abs(mu - len(sections)))

    fiber = []
    for s in sections:
        rem, coords = L.reduce(s)
        if not rem.is_zero():
            return GlobalBasis(sections, False, mu)
        fiber.append(coords)
    fmat = la.column_stack(fiber)
    frank = la.rank(f, fmat)
    return GlobalBasis(sections, frank == mu, mu - frank, fmat)


def _annihilator_rows(field, sp: Subspace):
    """Functionals phi with phi^T v = 0 for all v in sp."""
    if sp.dim == 0:
        return [[field.one if i == j else field.zero for i in range(sp.dim_ambient)]
                for j in range(sp.dim_ambient)]
    rows = [list(c) for c in sp.cols]   # phi^T basis = nullspace of rows
    return la.nullspace(field, rows)


# ---------------------------------------------------------------------------
# connection invariants from a global basis
# ---------------------------------------------------------------------------

@dataclass
class CVData:
    h: list
    Q: list
    U: list
    kUk: list
    basis: list
    report: Report


def extract_cv(L: Lattice, basis: GlobalBasis | list) -> CVData:
    """Read off U, Q, kappa U kappa and h from a trivializing basis.

    Applies z nabla_dz to each basis section; the result must decompose
    over the basis with coefficients in span{1/z, 1, z} (pole of rank 1 at
    both ends).  h comes from the z-sesquilinear pairing against the
    tau-images of the basis.
    """
    tm = L.tm
    f = L.field
    mu = tm.mu
    secs = basis.sections if isinstance(basis, GlobalBasis) else list(basis)
    if isinstance(basis, GlobalBasis) and not basis.trivial:
        raise InputError("extract_cv needs a trivial (fiberwise) basis")
    if len(secs) != mu:
        raise InputError("basis size must equal the rank")

    # collect all levels appearing anywhere
    levels = sorted({a + k for s in secs for a in s.terms for k in (-1, 0, 1)} |
                    {a for s in secs for a in (tm.nabla_zdz(s)).terms})
    lvl_index = {lv: i for i, lv in enumerate(levels)}
    bigdim = len(levels) * mu

    def embed(section: Section, shift=0):
        vec = [f.zero] * bigdim
        for a, v in section.terms.items():
            key = a + shift
            if key not in lvl_index:
                raise InputError("unexpected level in the z-expansion")
            base = lvl_index[key] * mu
            for j in range(mu):
                vec[base + j] = vec[base + j] + v[j]
        return vec

    cols = []
    tags = []
    for i, s in enumerate(secs):
        for k in (-1, 0, 1):
            cols.append(embed(s, shift=k))
            tags.append((i, k))
    targets = [embed(tm.nabla_zdz(s)) for s in secs]

    A = la.column_stack(cols)
    rep = Report("extract-cv")
    U = la.zeros(f, mu, mu)
    Q = la.zeros(f, mu, mu)
    kUk = la.zeros(f, mu, mu)
    whalf = f.from_fraction(Fraction(tm.w, 2))
    ok = True
    for j, t in enumerate(targets):
        sol = la.solve(f, A, t)
        if sol is None:
            ok = False
            break
        for (i, k), c in zip(tags, sol):
            if k == -1:
                U[i][j] = c
            elif k == 0:
                Q[i][j] = -c
            else:
                kUk[i][j] = -c
    if not ok:
        raise InputError(
            "z nabla_dz does not close over {1/z, 1, z}: the lattice does "
            "not have a rank-1 pole in this basis")
    for i in range(mu):
        Q[i][i] = Q[i][i] + whalf
    rep.add("pole-rank-1", True, "z nabla closes over {1/z, 1, z}")

    # hermitian pairing h(s_i, s_j) = z^-w P(s_i(z), tau(s_j)(-z))
    h = la.zeros(f, mu, mu)
    ok_h = True
    for i, si in enumerate(secs):
        for j, sj in enumerate(secs):
            powers = tm.pair_sections(si, tm.tau_map(sj))
            for p, c in powers.items():
                if p == tm.w:
                    h[i][j] = c
                elif not la._is_zero(f, c, _cscale(f, c)):
                    ok_h = False
    rep.add("h-power-purity", ok_h,
            "pairing against tau-images is a multiple of z^w")
    # h block structure (Eq. 7.80): nonzero entries require matching
    # leading H(beta)-levels; recorded as a diagnostic only when violated
    herm = True
    for i in range(mu):
        for j in range(mu):
            d = h[i][j] - f.conjugate(h[j][i])
            if not la._is_zero(f, d, _cscale(f, h[i][j])):
                herm = False
    rep.add("h-hermitian", herm)
    return CVData(h, Q, U, kUk, secs, rep)


# ---------------------------------------------------------------------------
# the Euler flow
# ---------------------------------------------------------------------------

def flow(L: Lattice, rho) -> Lattice:
    """Transport the lattice along the Euler field by rho.

    Each generator sum c_j es(A_j, b_j) becomes
    sum c_j e^(-rho b_j) es(exp(rho N / 2 pi i) A_j, b_j), rescaled so the
    leading coefficient is 1 (a gauge choice; the module is what matters).
    Exact backends admit only single-term generators (the exponential
    prefactors cancel); anything else needs the float backend.
    """
    tm = L.tm
    f = L.field
    if f.is_exact:
        rho_f = Fraction(rho)
        G = la.nilpotent_exp(f, tm.model.N, f.from_fraction(rho_f) / f.tau)
        gens = []
        for g in L.gens:
            if len(g.terms) != 1:
                raise InputError(
                    "exact flow needs elementary (single-term) generators; "
                    "use the float backend for mixing lattices")
            gens.append(g.map_vectors(G))
        return Lattice(tm, gens, validate=False)
    rho_c = complex(rho)
    G = la.nilpotent_exp(f, tm.model.N, f.coerce(rho_c / (2j * math.pi)))
    gens = []
    for g in L.gens:
        lead = g.leading_order
        terms = []
        for a, v in g.terms.items():
            c = cmath.exp(-rho_c * float(a - lead))
            terms.append((a, tuple(c * x for x in la.matvec(G, list(v)))))
        gens.append(Section(f, terms))
    return Lattice(tm, gens, validate=False)


def binomial_series_coeff(j: int, k: int, n: int) -> Fraction:
    """b_(j,k,n) = (-1)^j C(k,j) / (n (n-1) ... (n-j+1))."""
    if not (0 <= j <= k <= n):
        raise InputError("need 0 <= j <= k <= n")
    den = 1
    for t in range(j):
        den *= (n - t)
    return Fraction((-1) ** j * math.comb(k, j), den if j > 0 else 1)


def rsplit_flow_sections(L: Lattice, jordan_records, rho):
    """The exact trivializing sections of an R-split elementary lattice.

    jordan_records: list of (vector, p, n, alpha_top) with alpha_top the
    order attached to p(a); for each 0 <= p(a)-p <= n(a) the section
    es(phi_(a,p), alpha(a,p)) with
    phi = exp(rho N / 2 pi i) sum_j b_(j,k,n) (-2 Re rho Nt)^j v_a.
    """
    tm = L.tm
    f = L.field
    if f.is_exact:
        rho_f = Fraction(rho)
        re_rho = rho_f
        G = la.nilpotent_exp(f, tm.model.N, f.from_fraction(rho_f) / f.tau)
        scal = f.from_fraction(-2 * re_rho)
    else:
        rho_c = complex(rho)
        re_rho = rho_c.real
        G = la.nilpotent_exp(f, tm.model.N, f.coerce(rho_c / (2j * math.pi)))
        scal = f.coerce(-2 * re_rho)
    M = la.smul(scal, tm.Nt)   # (Re rho / pi i) N = -2 Re rho Nt
    out = []
    for (vec, p_a, n_a, alpha_top) in jordan_records:
        for k in range(n_a + 1):
            p = p_a - k
            acc = [f.zero] * tm.mu
            P = la.eye(f, tm.mu)
            for j in range(k + 1):
                if j > 0:
                    P = la.matmul(P, M)
                b = f.from_fraction(binomial_series_coeff(j, k, n_a))
                img = la.matvec(P, list(vec))
                acc = [x + b * y for x, y in zip(acc, img)]
            phi = la.matvec(G, acc)
            alpha = alpha_top + k
            out.append(Section(f, {Fraction(alpha): tuple(phi)}))
    return out


def euler_asymptotics(L: Lattice, rho_grid, *, window=None,
                      jordan_records=None):
    """Run flow -> global sections -> CV extraction over a grid of rho.

    Returns a list of row dicts (re_rho, trivial, q_eigenvalues,
    h_signature) plus the CVData of the last trivial point.  Non-trivial
    grid points are reported, not fatal.
    """
    import numpy as np

    rows = []
    last = None
    for rho in rho_grid:
        Lr = flow(L, rho)
        try:
            basis = global_sections(Lr, window=window)
        except ResolutionError:
            exps = Lr.exponents()
            wider = int(math.ceil(float(exps[-1] - exps[0]))) + 6
            basis = global_sections(Lr, window=wider)
        row = {"re_rho": float(complex(rho).real), "trivial": basis.trivial}
        if basis.trivial:
            cv = extract_cv(Lr, basis)
            Qc = np.array(la.to_complex_mat(L.field, cv.Q), dtype=complex)
            hc = np.array(la.to_complex_mat(L.field, cv.h), dtype=complex)
            hc = (hc + hc.conjugate().T) / 2
            q_eig = sorted(np.linalg.eigvals(Qc).real.tolist())
            h_eig = np.linalg.eigvalsh(hc)
            row["q_eigenvalues"] = q_eig
            row["h_signature"] = (int((h_eig > 0).sum()), int((h_eig < 0).sum()))
            last = cv
        rows.append(row)
    return rows, last

"""Weight filtrations, Deligne splittings, PMHS checks, nilpotent orbits.

Conventions.  The weight filtration of a nilpotent endomorphism N centered
at weight w is the unique increasing filtration with N(W_l) <= W_{l-2} and
N^l : Gr_{w+l} -> Gr_{w-l} an isomorphism.  Graded pieces are handled by
fixing, once per filtration, a lift basis of every Gr_k; all maps between
graded pieces are matrices in those coordinates.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field as dc_field
from fractions import Fraction

from . import linalg as la
from .core import (FlatModel, Filtration, InputError, Subspace,
                   filtration_from_subspaces, _mat_is_zero, _vec_scale)
from .report import Report


# ---------------------------------------------------------------------------
# Jordan structure and the weight filtration
# ---------------------------------------------------------------------------

def jordan_chains(field, N):
    """Jordan chains of a nilpotent matrix.

    Returns a list of chains [v, Nv, ..., N^(s-1)v], ordered by block size
    descending then by echelon position, which makes the output
    deterministic for a fixed input basis.
    """
    n = len(N)
    r = la.nilpotency_index(field, N)
    kernels = [Subspace.zero(field, n)]
    P = la.eye(field, n)
    for j in range(1, r + 1):
        P = la.matmul(P, N) if j > 1 else [row[:] for row in N]
        kernels.append(Subspace(field, n, la.nullspace(field, P)))
    kernels.append(Subspace.full(field, n))  # K_{r+1}, for uniform indexing
    full = Subspace.full(field, n)
    while len(kernels) <= r + 1:
        kernels.append(full)

    chains = []
    for s in range(r, 0, -1):
        upper = kernels[s + 1] if s + 1 < len(kernels) else full
        mod_out = kernels[s - 1].sum(upper.image_under(N))
        tops = _complement_in(field, kernels[s], mod_out)
        for v in tops:
            chain = [v]
            for _ in range(s - 1):
                chain.append(la.matvec(N, chain[-1]))
            chains.append(chain)
    total = sum(len(c) for c in chains)
    if total != n:
        raise InputError("Jordan chain extraction failed (numerical rank?)")
    return chains


def _complement_in(field, V: Subspace, W: Subspace):
    """Vectors of V extending a basis of V /\\ W to V (possibly empty)."""
    inter = V.intersect(W)
    base = [list(c) for c in inter.cols]
    out = []
    for c in V.cols:
        trial = base + out + [list(c)]
        if la.rank(field, la.column_stack(trial)) == len(trial):
            out.append(list(c))
    return out


def weight_filtration(field, N, w: int) -> Filtration:
    """Lemma 7.1-style weight filtration of a nilpotent N, centered at w."""
    n = len(N)
    try:
        la.nilpotency_index(field, N)
    except ValueError:
        raise InputError("weight filtration needs a nilpotent input")
    chains = jordan_chains(field, N)
    weighted = []
    for chain in chains:
        s = len(chain)
        for j, vec in enumerate(chain):
            weighted.append((w + (s - 1) - 2 * j, vec))
    if weighted:
        levels = sorted({lvl for lvl, _ in weighted})
    else:
        levels = [w]
    entries = {}
    entries[levels[0] - 1] = Subspace.zero(field, n)
    for m in range(levels[0], levels[-1] + 1):
        vecs = [v for lvl, v in weighted if lvl <= m]
        entries[m] = Subspace(field, n, vecs)
    return filtration_from_subspaces(field, "inc", entries, n)


def weight_filtration_properties(field, N, w, W: Filtration) -> Report:
    """The two defining properties of Lemma 7.1(a), as a report."""
    rep = Report("weight-filtration")
    keys = W.indices()
    ok_shift = True
    for m in keys:
        img = W.at(m).image_under(N)
        if not W.at(m - 2).contains(img):
            ok_shift = False
    rep.add("N-shifts-by-2", ok_shift, "N(W_l) in W_(l-2)")
    graded = WeightGraded(field, W)
    ok_iso = True
    for l in range(0, max(abs(k - w) for k in keys) + 1):
        src, dst = w + l, w - l
        d1, d2 = graded.dim(src), graded.dim(dst)
        if d1 != d2:
            ok_iso = False
            continue
        if d1 == 0:
            continue
        M = graded.map_power(N, src, l)
        if la.rank(field, M) != d1:
            ok_iso = False
    rep.add("Nl-graded-isomorphism", ok_iso,
            "N^l : Gr_(w+l) -> Gr_(w-l) bijective")
    return rep


# ---------------------------------------------------------------------------
# graded pieces of an increasing filtration
# ---------------------------------------------------------------------------

class WeightGraded:
    """Coordinates on the graded pieces Gr_k = W_k / W_(k-1)."""

    def __init__(self, field, W: Filtration):
        self.field = field
        self.W = W
        self.n = W.dim_ambient
        self.lifts = {}
        keys = W.indices()
        lo, hi = keys[0], keys[-1]
        for k in range(lo, hi + 1):
            below = W.at(k - 1)
            here = W.at(k)
            self.lifts[k] = _complement_in(field, here, below)
        self.lo, self.hi = lo, hi

    def dim(self, k):
        return len(self.lifts.get(k, []))

    def project(self, k, vec):
        """Coordinates of [vec] in Gr_k; vec must lie in W_k."""
        L = self.lifts.get(k, [])
        below = self.W.at(k - 1)
        cols = [list(c) for c in L] + [list(c) for c in below.cols]
        if not cols:
            if all(la._is_zero(self.field, x, _vec_scale(self.field, vec)) for x in vec):
                return []
            raise InputError("vector not in W_k")
        sol = la.solve(self.field, la.column_stack(cols), list(vec))
        if sol is None:
            raise InputError("vector not in W_k")
        return sol[: len(L)]

    def lift(self, k, coords):
        L = self.lifts.get(k, [])
        v = [self.field.zero] * self.n
        for c, vec in zip(coords, L):
            v = [x + c * y for x, y in zip(v, vec)]
        return v

    def map_power(self, N, k, power):
        """Matrix of N^power : Gr_k -> Gr_(k - 2*power) in lift coordinates."""
        cols = []
        for vec in self.lifts.get(k, []):
            img = list(vec)
            for _ in range(power):
                img = la.matvec(N, img)
            cols.append(self.project(k - 2 * power, img))
        if not cols:
            return [[] for _ in range(self.dim(k - 2 * power))]
        return la.column_stack(cols)

    def conj_matrix(self, k, K0):
        """Matrix C with conj_Gr(x) = C conj(x) in Gr_k coordinates."""
        f = self.field
        cols = []
        for vec in self.lifts.get(k, []):
            cv = la.matvec(K0, [f.conjugate(x) for x in vec])
            cols.append(self.project(k, cv))
        return la.column_stack(cols) if cols else []

    def subspace_in_grade(self, k, space: Subspace):
        """Image of (space /\\ W_k) in Gr_k, as a coordinate Subspace."""
        inter = space.intersect(self.W.at(k))
        coords = [self.project(k, c) for c in inter.cols]
        return Subspace(self.field, self.dim(k), coords)


# ---------------------------------------------------------------------------
# primitive decomposition
# ---------------------------------------------------------------------------

def primitive_decomposition(field, N, w, W: Filtration, S):
    """Primitive pieces P_(w+l) and the induced forms S_l (Lemma 7.1 c,d).

    Returns (graded, prim, forms, report) where prim[l] is a Subspace in
    Gr_(w+l) coordinates and forms[l] the matrix of S_l on the lift basis.
    """
    graded = WeightGraded(field, W)
    rep = Report("primitive-decomposition")
    # sanity: W must be the weight filtration of N at w
    rep.extend(weight_filtration_properties(field, N, w, W))
    if not rep.passed:
        raise InputError("W is not the weight filtration of N")
    lmax = max(graded.hi - w, 0)
    prim = {}
    forms = {}
    for l in range(0, lmax + 1):
        k = w + l
        d = graded.dim(k)
        if d == 0:
            prim[l] = Subspace.zero(field, 0)
            forms[l] = []
            continue
        if graded.dim(k - 2 * (l + 1)) == 0:
            prim[l] = Subspace.full(field, d)
        else:
            M = graded.map_power(N, k, l + 1)
            prim[l] = Subspace(field, d, la.nullspace(field, M))
        # S_l(a, b) = S(lift a, N^l lift b) on Gr_(w+l)
        G = []
        for u in graded.lifts[k]:
            row = []
            for v in graded.lifts[k]:
                img = list(v)
                for _ in range(l):
                    img = la.matvec(N, img)
                row.append(la._dot(u, la.matvec(S, img)))
            G.append(row)
        forms[l] = G
        sign = (-1) ** (w + l)
        symm = la.mat_eq(field, G, la.smul(field.from_int(sign), la.transpose(G)),
                         _fscale(field, G))
        rep.add(f"S_{l}-symmetry", symm, f"(-1)^(w+l) symmetric, l={l}")
        nondeg = la.rank(field, G) == d
        rep.add(f"S_{l}-nondegenerate", nondeg)
    # Gr_(w+l) = sum_i N^i P_(w+l+2i), orthogonal for S_l
    decomp_ok, orth_ok = True, True
    for l in range(0, lmax + 1):
        k = w + l
        d = graded.dim(k)
        if d == 0:
            continue
        pieces = []
        i = 0
        while graded.dim(k + 2 * i) > 0 or i <= lmax:
            up = w + l + 2 * i
            if graded.dim(up) > 0 and (l + 2 * i) in prim and prim[l + 2 * i].dim > 0:
                Mdown = graded.map_power(N, up, i)
                cols = [la.matvec(Mdown, c) for c in prim[l + 2 * i].cols] if prim[l + 2 * i].dim else []
                pieces.append(Subspace(field, d, cols))
            i += 1
            if up > graded.hi:
                break
        total = Subspace.zero(field, d)
        dimsum = 0
        for pc in pieces:
            total = total.sum(pc)
            dimsum += pc.dim
        if total.dim != d or dimsum != d:
            decomp_ok = False
        G = forms[l]
        for a in range(len(pieces)):
            for b in range(len(pieces)):
                if a == b:
                    continue
                for u in pieces[a].cols:
                    for v in pieces[b].cols:
                        val = la._dot(u, la.matvec(G, v))
                        if not la._is_zero(field, val, _fscale(field, G)):
                            orth_ok = False
    rep.add("graded-primitive-decomposition", decomp_ok,
            "Gr_(w+l) = sum N^i P_(w+l+2i)")
    rep.add("primitive-orthogonality", orth_ok, "S_l-orthogonal for l >= 0")
    return graded, prim, forms, rep


def _fscale(field, M):
    if field.is_exact or not M or not M[0]:
        return 1.0
    return max((abs(x) for row in M for x in row), default=1.0)


# ---------------------------------------------------------------------------
# mixed Hodge data and the Deligne splitting
# ---------------------------------------------------------------------------

@dataclass
class MixedHodgeData:
    model: FlatModel
    F: Filtration

    def check_basic(self) -> Report:
        rep = Report("mixed-hodge-data")
        rep.add("F-nested", self.F.check_nested())
        rep.add("F-exhaustive", self.F.check_exhaustive())
        eye_ms = la.mat_eq(self.model.field, self.model.Ms,
                           la.eye(self.model.field, self.model.mu))
        if not eye_ms:
            ok = True
            for p in self.F.indices():
                sp = self.F.at(p)
                if not sp.sum(sp.image_under(self.model.Ms)).dim == sp.dim:
                    ok = False
            rep.add("F-Ms-invariant", ok)
        return rep


@dataclass
class DeligneSplitting:
    pieces: dict       # (p, q) -> Subspace (ambient coordinates)
    primitive: dict    # (p, q) -> Subspace
    r_split: bool
    report: Report


def deligne_splitting(data: MixedHodgeData, W: Filtration, N=None) -> DeligneSplitting:
    """Deligne's I^{p,q} and their primitive parts, with identity checks."""
    model, F = data.model, data.F
    f = model.field
    n = model.mu
    N = N if N is not None else model.N
    rep = Report("deligne-splitting")

    wkeys = W.indices()
    fkeys = F.indices()
    pmin, pmax = fkeys[0] - 1, fkeys[-1] + 1
    lmin, lmax = wkeys[0], wkeys[-1]

    def conj_F(q):
        return F.at(q).conjugate(model.K0)

    pieces = {}
    for p in range(pmin, pmax + 1):
        for q in range(lmin - pmax, lmax - pmin + 1):
            k = p + q
            if k < lmin or k > lmax:
                continue
            first = F.at(p).intersect(W.at(k))
            second = conj_F(q).intersect(W.at(k))
            acc = second
            j = 1
            while k - j - 1 >= lmin - 1:
                term = conj_F(q - j).intersect(W.at(k - j - 1))
                acc = acc.sum(term)
                j += 1
                if q - j < fkeys[0] and k - j - 1 < lmin:
                    break
            piece = first.intersect(acc)
            if piece.dim > 0:
                pieces[(p, q)] = piece

    direct = Subspace.zero(f, n)
    dimsum = 0
    for sp in pieces.values():
        direct = direct.sum(sp)
        dimsum += sp.dim
    if direct.dim != n or dimsum != n:
        raise InputError(
            f"not a mixed Hodge structure: sum of I^(p,q) has dimension "
            f"{direct.dim} (dims add to {dimsum}) of {n}")
    rep.add("direct-sum", True, "sum I^(p,q) = H")

    # 7.7: F^p = (+) I^(i,q), i >= p ;  W_l = (+) I^(p,q), p+q <= l
    okF = all(
        _sum_of(f, n, [sp for (i, q), sp in pieces.items() if i >= p]) == F.at(p)
        for p in range(pmin, pmax + 1))
    okW = all(
        _sum_of(f, n, [sp for (p, q), sp in pieces.items() if p + q <= l]) == W.at(l)
        for l in range(lmin, lmax + 1))
    rep.add("eq7.7-F-from-pieces", okF)
    rep.add("eq7.7-W-from-pieces", okW)

    # 7.8 first half: N(I^(p,q)) in I^(p-1,q-1)
    okN = True
    for (p, q), sp in pieces.items():
        img = sp.image_under(N)
        tgt = pieces.get((p - 1, q - 1), Subspace.zero(f, n))
        if not tgt.contains(img):
            okN = False
    rep.add("eq7.8-N-bidegree", okN, "N maps I^(p,q) to I^(p-1,q-1)")

    # primitive parts  I0^(p,q) = ker N^(p+q-w+1) on I^(p,q)
    w = model.w
    primitive = {}
    for (p, q), sp in pieces.items():
        l = p + q - w
        if l < 0:
            primitive[(p, q)] = Subspace.zero(f, n)
            continue
        P = la.matpow(f, N, l + 1)
        ker = Subspace(f, n, la.nullspace(f, P))
        primitive[(p, q)] = sp.intersect(ker)

    # 7.8 second half: I^(p,q) = (+)_j N^j I0^(p+j,q+j)
    ok_dec = True
    for (p, q), sp in pieces.items():
        acc = Subspace.zero(f, n)
        dsum = 0
        j = 0
        while (p + j, q + j) in pieces or j == 0:
            prim = primitive.get((p + j, q + j))
            if prim is not None and prim.dim > 0:
                Nj = la.matpow(f, N, j)
                img = prim.image_under(Nj)
                acc = acc.sum(img)
                dsum += img.dim
            j += 1
            if p + j > pmax:
                break
        if acc != sp or dsum != sp.dim:
            ok_dec = False
    rep.add("eq7.8-primitive-decomposition", ok_dec)

    # 7.9 / 7.10 orthogonality
    ok79 = True
    for (p, q), sp in pieces.items():
        for (r, s), sp2 in pieces.items():
            if (r, s) == (w - p, w - q):
                continue
            for u in sp.cols:
                for v in sp2.cols:
                    if not la._is_zero(f, model.pair(u, v), _fscale(f, model.S)):
                        ok79 = False
    rep.add("eq7.9-orthogonality", ok79)
    ok710 = True
    for (p, q), pr in primitive.items():
        for (r, s), pr2 in primitive.items():
            for i in range(0, max(p + q - w + 1, 0)):
                for j in range(0, max(r + s - w + 1, 0)):
                    if (r, s) == (q, p) and i + j == p + q - w:
                        continue
                    Ni = la.matpow(f, N, i)
                    Nj = la.matpow(f, N, j)
                    for u in pr.cols:
                        for v in pr2.cols:
                            val = model.pair(la.matvec(Ni, u), la.matvec(Nj, v))
                            if not la._is_zero(f, val, _fscale(f, model.S)):
                                ok710 = False
    rep.add("eq7.10-orthogonality", ok710)

    # 7.11 / 7.12 conjugation mod W, and the exact R-split predicate
    ok711, ok712, rsplit = True, True, True
    for (p, q), sp in pieces.items():
        cc = sp.conjugate(model.K0)
        tgt = pieces.get((q, p), Subspace.zero(f, n))
        if cc != tgt:
            rsplit = False
        low = W.at(p + q - 2)
        if not tgt.sum(low).contains(cc) or tgt.dim != sp.dim:
            ok711 = False
        ccp = primitive.get((p, q), Subspace.zero(f, n)).conjugate(model.K0)
        tgtp = primitive.get((q, p), Subspace.zero(f, n))
        if not tgtp.sum(low).contains(ccp) or tgtp.dim != primitive[(p, q)].dim:
            ok712 = False
    rep.add("eq7.11-conj-mod-W", ok711)
    rep.add("eq7.12-conj-mod-W-primitive", ok712)
    rep.add("r-split", rsplit, "I^(q,p) = conj(I^(p,q)) exactly", margin=None)

    return DeligneSplitting(pieces, primitive, rsplit, rep)


def _sum_of(field, n, spaces):
    acc = Subspace.zero(field, n)
    for sp in spaces:
        acc = acc.sum(sp)
    return acc


# ---------------------------------------------------------------------------
# PMHS verification
# ---------------------------------------------------------------------------

def check_pmhs(data: MixedHodgeData, N=None, *, positivity_margin=None) -> Report:
    """Verify the polarized mixed Hodge structure axioms clause by clause.

    N is the polarizing nilpotent (often minus the monodromy logarithm);
    defaults to data.model.N.  Positivity is decided in floating point with
    margin 10*eps; passes within the margin band are flagged 'marginal'.
    """
    model, F = data.model, data.F
    f = model.field
    w = model.w
    N = N if N is not None else model.N
    rep = Report("pmhs")
    rep.extend(data.check_basic())

    try:
        W = weight_filtration(f, N, w)
    except InputError as e:
        rep.add("weight-filtration", False, str(e))
        return rep
    graded = WeightGraded(f, W)

    # (a) pure Hodge structure of weight k on each Gr_k
    ok_pure = True
    for k in range(graded.lo, graded.hi + 1):
        d = graded.dim(k)
        if d == 0:
            continue
        Ck = graded.conj_matrix(k, model.K0)
        for p in range(F.indices()[0], F.indices()[-1] + 2):
            Fp = graded.subspace_in_grade(k, F.at(p))
            Fq = graded.subspace_in_grade(k, F.at(k + 1 - p))
            Fq_conj = Subspace(f, d, [la.matvec(Ck, [f.conjugate(x) for x in c])
                                      for c in Fq.cols])
            if Fp.dim + Fq_conj.dim != d or Fp.sum(Fq_conj).dim != d:
                ok_pure = False
    rep.add("a-pure-on-graded", ok_pure,
            "Gr_k = F^p Gr + conj(F^(k+1-p) Gr) for all p,k")

    # (b) N(F^p) in F^(p-1)
    ok_b = all(F.at(p - 1).contains(F.at(p).image_under(N))
               for p in F.indices())
    rep.add("b-N-shifts-F", ok_b, "N(F^p) in F^(p-1)")

    # (c) S(F^p, F^(w+1-p)) = 0
    ok_c = True
    for p in F.indices():
        A = F.at(p)
        B = F.at(w + 1 - p)
        for u in A.cols:
            for v in B.cols:
                if not la._is_zero(f, model.pair(u, v), _fscale(f, model.S)):
                    ok_c = False
    rep.add("c-S-isotropy", ok_c, "S(F^p, F^(w+1-p)) = 0")

    # (d) polarization of the primitive graded parts
    try:
        graded, prim, forms, prep = primitive_decomposition(f, N, w, W, model.S)
    except InputError as e:
        rep.add("d-primitive-setup", False, str(e))
        return rep
    margin = positivity_margin
    if margin is None:
        margin = 10 * getattr(f, "eps", 1e-12)
    ok_iso, ok_pos, marginal = True, True, False
    worst = math.inf
    lmax = max(graded.hi - w, 0)
    for l in range(0, lmax + 1):
        k = w + l
        d = graded.dim(k)
        if d == 0 or prim[l].dim == 0:
            continue
        G = forms[l]
        # S_l(F^p P, F^(w+l+1-p) P) = 0
        for p in range(F.indices()[0], F.indices()[-1] + 1):
            FpP = graded.subspace_in_grade(k, F.at(p)).intersect(prim[l])
            FqP = graded.subspace_in_grade(k, F.at(w + l + 1 - p)).intersect(prim[l])
            for u in FpP.cols:
                for v in FqP.cols:
                    if not la._is_zero(f, la._dot(u, la.matvec(G, v)),
                                       _fscale(f, G)):
                        ok_iso = False
        # positivity on the primitive (p, w+l-p) part
        Ck = graded.conj_matrix(k, model.K0)
        for p in range(F.indices()[0], F.indices()[-1] + 1):
            q = w + l - p
            FpP = graded.subspace_in_grade(k, F.at(p)).intersect(prim[l])
            FqP = graded.subspace_in_grade(k, F.at(q)).intersect(prim[l])
            FqPc = Subspace(f, d, [la.matvec(Ck, [f.conjugate(x) for x in c])
                                   for c in FqP.cols])
            part = FpP.intersect(FqPc)
            if part.dim == 0:
                continue
            lam_min = _positivity_eigen_min(f, G, Ck, part, p, q)
            worst = min(worst, lam_min)
            if lam_min <= -margin:
                ok_pos = False
            elif lam_min <= margin:
                marginal = True
    rep.extend(prep, prefix="d.")
    rep.add("d-Sl-isotropy", ok_iso)
    rep.add("d-positivity", ok_pos,
            "i^(p-q) S_l(a, conj a) > 0 on primitive parts",
            margin=None if worst is math.inf else float(worst),
            marginal=marginal)
    return rep


def _positivity_eigen_min(field, G, Ck, part: Subspace, p, q):
    """Smallest eigenvalue of the hermitian Gram i^(p-q) S_l(u, conj v)."""
    import numpy as np

    phase = 1j ** ((p - q) % 4)
    cols = part.cols
    m = len(cols)
    H = np.zeros((m, m), dtype=complex)
    Gc = np.array(la.to_complex_mat(field, G), dtype=complex)
    Ckc = np.array(la.to_complex_mat(field, Ck), dtype=complex) if Ck else np.zeros((0, 0))
    for i, u in enumerate(cols):
        uc = np.array([field.to_complex(x) for x in u])
        for j, v in enumerate(cols):
            vc = np.array([field.to_complex(x) for x in v])
            vbar = Ckc @ vc.conjugate()
            H[i, j] = phase * (uc @ (Gc @ vbar))
    H = (H + H.conjugate().T) / 2
    return float(np.linalg.eigvalsh(H).min().real)


def hodge_numbers(F: Filtration):
    keys = F.indices()
    return {p: F.at(p).dim - F.at(p + 1).dim for p in range(keys[0], keys[-1] + 1)}


# ---------------------------------------------------------------------------
# period domain membership
# ---------------------------------------------------------------------------

def in_dcheck(field, F: Filtration, ref_numbers: dict, S, w) -> bool:
    """Membership in the compact dual: dimension profile + S-isotropy."""
    nums = hodge_numbers(F)
    for p, h in ref_numbers.items():
        if h and nums.get(p, 0) != h:
            raise InputError(
                f"dimension profile mismatch at p={p}: {nums.get(p, 0)} != {h}")
    for p in F.indices():
        A, B = F.at(p), F.at(w + 1 - p)
        for u in A.cols:
            for v in B.cols:
                if not la._is_zero(field, la._dot(u, la.matvec(S, v)),
                                   _fscale(field, S)):
                    return False
    return True


def in_d(field, F: Filtration, ref_numbers: dict, S, K0, w,
         *, margin=None) -> bool:
    """Full polarized-period-domain membership (Eqs. 7.13-7.14 with 3.6)."""
    if not in_dcheck(field, F, ref_numbers, S, w):
        return False
    n = F.dim_ambient
    margin = margin if margin is not None else 10 * getattr(field, "eps", 1e-12)
    for p in F.indices():
        Fp = F.at(p)
        Fc = F.at(w + 1 - p).conjugate(K0)
        if Fp.dim + Fc.dim != n or Fp.sum(Fc).dim != n:
            return False
    # positivity on H^(p, w-p) = F^p /\ conj(F^(w-p))
    import numpy as np

    for p in F.indices():
        Hp = F.at(p).intersect(F.at(w - p).conjugate(K0))
        if Hp.dim == 0:
            continue
        phase = 1j ** ((2 * p - w) % 4)
        Sc = np.array(la.to_complex_mat(field, S), dtype=complex)
        K0c = np.array(la.to_complex_mat(field, K0), dtype=complex)
        cols = [np.array([field.to_complex(x) for x in c]) for c in Hp.cols]
        m = len(cols)
        H = np.zeros((m, m), dtype=complex)
        for i, u in enumerate(cols):
            for j, v in enumerate(cols):
                H[i, j] = phase * (u @ (Sc @ (K0c @ v.conjugate())))
        H = (H + H.conjugate().T) / 2
        scale = max(np.abs(H).max(), 1.0)
        if float(np.linalg.eigvalsh(H).min().real) <= margin * scale:
            return False
    return True


def translate_filtration(field, F: Filtration, M) -> Filtration:
    """Apply an invertible matrix to every step of F."""
    entries = {p: F.at(p).image_under(M) for p in F.indices()}
    return filtration_from_subspaces(field, F.direction, entries, F.dim_ambient)


def orbit_bound(field, F: Filtration, N, ref_numbers, S, K0, w, *,
                scan_min=0.01, scan_max=1e4, digits=3):
    """Least bound b on the scan grid with e^(zN) F in D for Im z > b.

    Scans a geometric grid, then bisects the transition to the requested
    number of decimal digits.  Always evaluated in floating point (z is a
    transcendental sample); exact inputs are converted first.  Returns
    (b, diagnostics) or (None, diag) when no sample passes.
    """
    if field.is_exact:
        from .core import convert_filtration, convert_matrix
        from .scalars import FloatField

        ff = FloatField()
        return orbit_bound(ff, convert_filtration(field, ff, F),
                           convert_matrix(field, ff, N), ref_numbers,
                           convert_matrix(field, ff, S),
                           convert_matrix(field, ff, K0), w,
                           scan_min=scan_min, scan_max=scan_max, digits=digits)
    if not in_dcheck(field, F, ref_numbers, S, w):
        raise InputError("filtration is not in the compact dual")
    for p in F.indices():
        if not F.at(p - 1).contains(F.at(p).image_under(N)):
            raise InputError("N does not shift the filtration")

    def member(y):
        E = la.nilpotent_exp(field, N, field.coerce(complex(0, y)))
        Fz = translate_filtration(field, F, E)
        return in_d(field, Fz, ref_numbers, S, K0, w)

    grid = []
    y = scan_min
    while y <= scan_max * (1 + 1e-12):
        grid.append(y)
        y *= 2
    status = [member(y) for y in grid]
    diag = {"grid": grid, "status": status}
    if not any(status):
        return None, diag
    first_pass = next(i for i, s in enumerate(status) if s)
    if not all(status[first_pass:]):
        # transition is not clean at grid resolution; report the last failure
        last_fail = max(i for i, s in enumerate(status) if not s)
        first_pass = last_fail + 1
        if first_pass >= len(grid):
            return None, diag
    if first_pass == 0:
        return grid[0], diag
    lo, hi = grid[first_pass - 1], grid[first_pass]
    tol = 10.0 ** (-digits)
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if member(mid):
            hi = mid
        else:
            lo = mid
    diag["bound"] = hi
    return hi, diag


# ---------------------------------------------------------------------------
# Jordan-Hodge bases and the det B growth exponent
# ---------------------------------------------------------------------------

@dataclass
class JordanHodgeRecord:
    vector: list
    p: int
    q: int
    n: int
    partner: int          # index k(a) of the conjugate-paired record
    turns: object = None  # Ms-eigenvalue rotation number, when relevant


@dataclass
class JordanHodgeBasis:
    field: object
    w: int
    records: list
    K0: list
    N: list

    def check(self) -> Report:
        f = self.field
        rep = Report("jordan-hodge-basis")
        ok_nil, ok_pairs = True, True
        dim = len(self.records[0].vector)
        all_vecs = []
        for a, rec in enumerate(self.records):
            v = rec.vector
            Pn = la.matpow(f, self.N, rec.n)
            Pn1 = la.matmul(Pn, self.N)
            if all(la._is_zero(f, x, _vec_scale(f, v)) for x in la.matvec(Pn, v)):
                ok_nil = False
            if not all(la._is_zero(f, x, _vec_scale(f, v)) for x in la.matvec(Pn1, v)):
                ok_nil = False
            k = rec.partner
            pr = self.records[k]
            if self.records[pr.partner] is not rec or pr.n != rec.n or \
                    pr.p != rec.q or pr.q != rec.p:
                ok_pairs = False
            for j in range(rec.n + 1):
                all_vecs.append(la.matvec(la.matpow(f, self.N, j), v))
        rep.add("eq7.19-nilpotency-degrees", ok_nil)
        rep.add("eq7.20-21-pairing", ok_pairs)
        rep.add("eq7.22-basis", la.rank(f, la.column_stack(all_vecs)) == dim
                if all_vecs else dim == 0)
        return rep


def jordan_hodge_basis(data: MixedHodgeData, N=None) -> JordanHodgeBasis:
    """Choose a basis of (+) I0^(p,q) with Eqs. 7.17-7.19.

    Greedy: echelon bases per primitive piece; the conjugate partner of a
    basis vector is the unique element of I0^(q,p) congruent to its
    conjugate modulo W_(p+q-2).
    """
    model = data.model
    f = model.field
    N = N if N is not None else model.N
    W = weight_filtration(f, N, model.w)
    dl = deligne_splitting(data, W, N)
    if not dl.report.passed:
        raise InputError("Deligne splitting failed; cannot build a Jordan-Hodge basis")
    records = []
    index_of = {}
    keys = sorted(dl.primitive, key=lambda pq: (-(pq[0] + pq[1]), -pq[0]))
    for (p, q) in keys:
        pr = dl.primitive[(p, q)]
        if pr.dim == 0:
            continue
        if (q, p) in index_of and p != q:
            continue  # filled when its partner was processed
        if p == q:
            base = _realify(f, model.K0, pr, W.at(p + q - 2))
            for v in base:
                idx = len(records)
                records.append(JordanHodgeRecord(v, p, q, p + q - model.w, idx))
                index_of.setdefault((p, q), []).append(idx)
        else:
            partner_piece = dl.primitive.get((q, p))
            for v in pr.cols:
                idx = len(records)
                records.append(JordanHodgeRecord(list(v), p, q, p + q - model.w, -1))
                index_of.setdefault((p, q), []).append(idx)
                vb = model.conj_vector(v)
                u = _reduce_mod(f, vb, partner_piece, W.at(p + q - 2))
                jdx = len(records)
                records.append(JordanHodgeRecord(u, q, p, p + q - model.w, idx))
                records[idx].partner = jdx
                index_of.setdefault((q, p), []).append(jdx)
    return JordanHodgeBasis(f, model.w, records, model.K0, N)


def _reduce_mod(field, vec, target: Subspace, low: Subspace):
    """The unique u in target with vec = u mod low."""
    cols = [list(c) for c in target.cols] + [list(c) for c in low.cols]
    sol = la.solve(field, la.column_stack(cols), list(vec))
    if sol is None:
        raise InputError("conjugate not congruent to the partner piece")
    u = [field.zero] * len(vec)
    for cvec, cc in zip(target.cols, sol[: target.dim]):
        u = [x + cc * y for x, y in zip(u, cvec)]
    return u


def _realify(field, K0, piece: Subspace, low: Subspace):
    """Basis of a conj-stable piece fixed by v -> reduce(conj v) mod low."""
    out = []
    half = field.from_fraction(Fraction(1, 2))
    i_scal = field.root_of_unity(Fraction(1, 4))
    for v in piece.cols:
        vb = _reduce_mod(field, la.matvec(K0, [field.conjugate(x) for x in v]),
                         piece, low)
        cand1 = [half * (x + y) for x, y in zip(v, vb)]
        if _independent(field, out + [cand1], piece):
            out.append(cand1)
        if len(out) == piece.dim:
            break
        cand2 = [half * (x - y) / i_scal for x, y in zip(v, vb)]
        if _independent(field, out + [cand2], piece):
            out.append(cand2)
        if len(out) == piece.dim:
            break
    if len(out) != piece.dim:
        raise InputError("failed to realify a conj-stable primitive piece")
    return out


def _independent(field, vecs, piece: Subspace):
    M = la.column_stack(vecs)
    return la.rank(field, M) == len(vecs)


def detb_exponent(basis: JordanHodgeBasis, p: int) -> int:
    """The predicted growth exponent c1 = sum (p(a)-p+1)(n(a)-p(a)+p)."""
    c1 = 0
    for rec in basis.records:
        d = rec.p - p
        if 0 <= d <= rec.n:
            c1 += (d + 1) * (rec.n - d)
    return c1


def detb_matrix(basis: JordanHodgeBasis, p: int, y: float):
    """The coefficient matrix B at z = iy, in the N^j v_a coordinates.

    Columns: the e^((z - conj z) N) N^j v_a spanning e^((z-zbar)N) F^p
    (Eq. 7.23) followed by the N^j conj(v_a) spanning conj(F^(w+1-p))
    (Eq. 7.24).  Rows: the basis N^j v_a (Eq. 7.22).
    """
    import numpy as np

    f = basis.field
    recs = basis.records
    Nc = np.array(la.to_complex_mat(f, basis.N), dtype=complex)
    K0c = np.array(la.to_complex_mat(f, basis.K0), dtype=complex)
    dim = len(recs[0].vector)

    base_vecs = []
    tags = []
    for a, rec in enumerate(recs):
        v = np.array([f.to_complex(x) for x in rec.vector])
        cur = v
        for j in range(rec.n + 1):
            base_vecs.append(cur)
            tags.append((a, j))
            cur = Nc @ cur
    Bmat = np.column_stack(base_vecs)
    Binv = np.linalg.inv(Bmat)

    cols = []
    s = 2j * y  # z - conj z at z = iy
    E = np.eye(dim, dtype=complex)
    Npow = np.eye(dim, dtype=complex)
    fact = 1.0
    for k in range(1, dim + 1):
        Npow = Npow @ Nc
        fact *= k
        if not Npow.any():
            break
        E = E + (s ** k / fact) * Npow
    for a, rec in enumerate(recs):
        v = np.array([f.to_complex(x) for x in rec.vector])
        cur = v
        for j in range(rec.p - p + 1):
            if j > 0:
                cur = Nc @ cur
            if rec.p - p < 0:
                break
            cols.append(E @ cur)
    w = basis.w
    for a, rec in enumerate(recs):
        vbar = K0c @ np.array([f.to_complex(x) for x in rec.vector]).conjugate()
        cur = vbar
        top = rec.q - (w + 1 - p)   # p(k(a)) - (w+1-p) with p(k(a)) = q(a)
        for j in range(top + 1):
            if j > 0:
                cur = Nc @ cur
            cols.append(cur)
    if len(cols) != dim:
        raise InputError(
            f"basis count mismatch building det B: {len(cols)} columns for "
            f"dimension {dim}")
    return Binv @ np.column_stack(cols)


def detb_slope(basis: JordanHodgeBasis, p: int, *, y_lo=1e3, y_hi=1e6,
               samples=12):
    """Fit the slope of log|det B| against log(2y); returns (slope, c1, rows)."""
    import numpy as np

    ys = np.exp(np.linspace(math.log(y_lo), math.log(y_hi), samples))
    rows = []
    for y in ys:
        B = detb_matrix(basis, p, float(y))
        sign, logdet = np.linalg.slogdet(B)
        if sign == 0:
            raise InputError("det B vanished during the slope fit")
        rows.append((float(y), float(logdet)))
    xs = np.array([math.log(2 * y) for y, _ in rows])
    vals = np.array([v for _, v in rows])
    slope = float(np.polyfit(xs, vals, 1)[0])
    return slope, detb_exponent(basis, p), rows

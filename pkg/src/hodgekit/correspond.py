"""Pointwise dictionary between polarized Hodge structures and CV data.

A polarized Hodge structure of weight w with a finite-order automorphism
is equivalent to the tuple (kappa, h, Q, U=0): the supersymmetric index Q
acts as alpha on the piece of H^(p,w-p) where the automorphism acts by
e^(2 pi i alpha) and floor(alpha + (w+1)/2) = p.  The translation and its
inverse are implemented verbatim, blockwise over eigenvalues.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction

from . import linalg as la
from .core import InputError, Subspace, Filtration, filtration_from_subspaces
from .report import Report


@dataclass
class PolarizedHSWithAut:
    """(conj, S, w) fragment, Hodge filtration F, automorphism A."""
    field: object
    w: int
    K0: list
    S: list
    F: Filtration
    A: list

    @property
    def dim(self):
        return self.F.dim_ambient

    def hodge_piece(self, p) -> Subspace:
        return self.F.at(p).intersect(
            self.F.at(self.w - p).conjugate(self.K0))

    def check(self, *, margin=1e-9) -> Report:
        f = self.field
        n = self.dim
        rep = Report("polarized-hs-with-aut")
        rep.add("F-nested", self.F.check_nested())
        rep.add("F-exhaustive", self.F.check_exhaustive())
        decomp = True
        for p in self.F.indices():
            Fp = self.F.at(p)
            Fc = self.F.at(self.w + 1 - p).conjugate(self.K0)
            if Fp.dim + Fc.dim != n or Fp.sum(Fc).dim != n:
                decomp = False
        rep.add("hodge-decomposition", decomp)
        iso = True
        for p in self.F.indices():
            for u in self.F.at(p).cols:
                for v in self.F.at(self.w + 1 - p).cols:
                    if not la._is_zero(f, la._dot(u, la.matvec(self.S, v)),
                                       _scale(f, self.S)):
                        iso = False
        rep.add("S-isotropy", iso)
        pos = _positive_on_pieces(self)
        rep.add("positivity", pos >= -abs(margin), margin=pos)
        ok_aut = True
        for p in self.F.indices():
            img = self.F.at(p).image_under(self.A)
            if img != self.F.at(p):
                ok_aut = False
        StA = la.matmul(la.transpose(self.A), la.matmul(self.S, self.A))
        ok_aut = ok_aut and la.mat_eq(f, StA, self.S, _scale(f, self.S))
        AK = la.matmul(self.A, self.K0)
        KA = la.matmul(self.K0, la.conj_mat(f, self.A))
        ok_aut = ok_aut and la.mat_eq(f, AK, KA, _scale(f, self.A))
        rep.add("automorphism-flat-compatible", ok_aut)
        return rep


@dataclass
class PointCV:
    """Pointwise CV data: antilinear kappa, hermitian h, index Q, U = 0."""
    field: object
    kappa: list
    h: list          # h(a, b) = a^T h conj(b)
    Q: list
    U: list

    @property
    def dim(self):
        return len(self.Q)

    def check(self) -> Report:
        f = self.field
        n = self.dim
        rep = Report("point-cv")
        KK = la.matmul(self.kappa, la.conj_mat(f, self.kappa))
        rep.add("kappa-involution", la.mat_eq(f, KK, la.eye(f, n)))
        # Q + kappa Q kappa = 0 with (kappa Q kappa)(v) = K conj(Q) conj(K) v
        KQK = la.matmul(self.kappa,
                        la.matmul(la.conj_mat(f, self.Q), la.conj_mat(f, self.kappa)))
        rep.add("eq2.58-Q-antireal", la.mat_eq(
            f, la.madd(self.Q, KQK), la.zeros(f, n, n), _scale(f, self.Q)))
        herm = la.mat_eq(f, self.h, la.transpose(la.conj_mat(f, self.h)),
                         _scale(f, self.h))
        rep.add("h-hermitian", herm)
        rep.add("h-nondegenerate",
                not la._is_zero(f, la.det(f, self.h), _scale(f, self.h)))
        # h(Qa, b) = h(a, Qb):  Q^T h = h conj(Q)
        lhs = la.matmul(la.transpose(self.Q), self.h)
        rhs = la.matmul(self.h, la.conj_mat(f, self.Q))
        rep.add("eq2.60-Q-hermitian", la.mat_eq(f, lhs, rhs, _scale(f, self.h)))
        rep.add("U-zero", la.mat_eq(f, self.U, la.zeros(f, n, n)))
        return rep

    def h_positive_definite(self, margin=1e-9) -> bool:
        import numpy as np

        H = np.array(la.to_complex_mat(self.field, self.h), dtype=complex)
        H = (H + H.conjugate().T) / 2
        return float(np.linalg.eigvalsh(H).min()) > margin


def _scale(field, M):
    if field.is_exact or not M:
        return 1.0
    return max((abs(x) for row in M for x in row), default=1.0)


def _positive_on_pieces(hs: PolarizedHSWithAut) -> float:
    import numpy as np

    f = hs.field
    worst = math.inf
    Sc = np.array(la.to_complex_mat(f, hs.S), dtype=complex)
    Kc = np.array(la.to_complex_mat(f, hs.K0), dtype=complex)
    for p in hs.F.indices():
        piece = hs.hodge_piece(p)
        if piece.dim == 0:
            continue
        phase = 1j ** ((2 * p - hs.w) % 4)
        cols = [np.array([f.to_complex(x) for x in c]) for c in piece.cols]
        m = len(cols)
        G = np.zeros((m, m), dtype=complex)
        for i, u in enumerate(cols):
            for j, v in enumerate(cols):
                G[i, j] = phase * (u @ (Sc @ (Kc @ v.conjugate())))
        G = (G + G.conjugate().T) / 2
        worst = min(worst, float(np.linalg.eigvalsh(G).min()))
    return worst if worst is not math.inf else 0.0


# ---------------------------------------------------------------------------
# eigenvalue bookkeeping for the automorphism / the index
# ---------------------------------------------------------------------------

def _aut_eigenvalues(field, A):
    """Eigenvalues of a semisimple unit-circle automorphism as rotation
    numbers (Fractions in the exact backend, floats otherwise)."""
    n = len(A)
    out = []
    if field.is_exact:
        for k in range(field.conductor):
            turns = Fraction(k, field.conductor)
            lam = field.root_of_unity(turns)
            ker = la.nullspace(field, la.msub(A, la.smul(lam, la.eye(field, n))))
            if ker:
                out.append((turns, Subspace(field, n, ker)))
    else:
        import numpy as np

        vals = np.linalg.eigvals(np.array(la.to_complex_mat(field, A), dtype=complex))
        reps = []
        for v in vals:
            if abs(abs(v) - 1) > 1e-6:
                raise InputError("automorphism eigenvalue off the unit circle")
            if not any(abs(v - r) < 1e-8 for r in reps):
                reps.append(v)
        for lam in sorted(reps, key=lambda z: (round(z.real, 9), round(z.imag, 9))):
            ker = la.nullspace(field, la.msub(A, la.smul(field.coerce(lam),
                                                         la.eye(field, n))))
            turns = (math.atan2(lam.imag, lam.real) / (2 * math.pi)) % 1.0
            out.append((turns, Subspace(field, n, ker)))
    if sum(sp.dim for _, sp in out) != n:
        raise InputError("automorphism is not semisimple")
    return out


def _alpha_in_window(turns, lo) -> Fraction | float:
    """The unique alpha with alpha = turns mod 1 and alpha in [lo, lo+1)."""
    if isinstance(turns, Fraction) and isinstance(lo, Fraction):
        k = math.ceil(lo - turns)
        a = turns + k
        if a >= lo + 1:
            a -= 1
        return a
    t, l = float(turns), float(lo)
    k = math.ceil(l - t - 1e-12)
    a = t + k
    if a >= l + 1 - 1e-12:
        a -= 1
    return a


# ---------------------------------------------------------------------------
# the two directions
# ---------------------------------------------------------------------------

def hs_to_cv(hs: PolarizedHSWithAut, *, split_sign=False) -> PointCV:
    """Polarized HS with automorphism -> pointwise CV data.

    Q acts as alpha on H^(p,w-p) /\\ ker(A - e^(2 pi i alpha)) where
    floor(alpha + (w+1)/2) = p.  The hypothesis excludes the eigenvalue
    (-1)^(w+1); split_sign applies the sign-flip preprocessing (negate A
    on that eigenspace) instead of refusing.
    """
    f = hs.field
    n = hs.dim
    w = hs.w
    A = [row[:] for row in hs.A]
    bad_turns = Fraction(w + 1, 2) % 1
    eig = _aut_eigenvalues(f, A)
    has_bad = any(_turns_eq(f, t, bad_turns) for t, _ in eig)
    if has_bad:
        if not split_sign:
            raise InputError(
                "automorphism has the excluded eigenvalue (-1)^(w+1); "
                "set split_sign to apply the sign-flip preprocessing")
        # negate A on the offending eigenspace
        P = _eigen_projector(f, eig, bad_turns, n)
        A = la.msub(A, la.smul(f.from_int(2), la.matmul(P, A)))
        eig = _aut_eigenvalues(f, A)

    Q = la.zeros(f, n, n)
    basis_cols = []
    alphas = []
    for turns, sp in eig:
        # alpha with e^(2 pi i alpha) = lambda: alpha = turns mod 1
        for p in hs.F.indices():
            piece = hs.hodge_piece(p).intersect(sp)
            if piece.dim == 0:
                continue
            lo = Fraction(p) - Fraction(w + 1, 2) if f.is_exact \
                else float(p) - (w + 1) / 2
            alpha = _alpha_in_window(turns if f.is_exact else float(turns), lo)
            for c in piece.cols:
                basis_cols.append(list(c))
                alphas.append(alpha)
    if len(basis_cols) != n:
        raise InputError("Hodge pieces do not decompose the automorphism"
                         " eigenspaces")
    B = la.column_stack(basis_cols)
    Binv = la.inverse(f, B)
    D = la.zeros(f, n, n)
    for i, a in enumerate(alphas):
        D[i][i] = f.from_fraction(a) if f.is_exact else f.coerce(a)
    Q = la.matmul(B, la.matmul(D, Binv))

    # h per Eqs. 3.8-3.9: h(a,b) = (-1)^p / (2 pi i)^w S(a, conj b)
    h = _assemble_h(f, hs, n)

    cv = PointCV(f, [row[:] for row in hs.K0], h, Q, la.zeros(f, n, n))
    rep = cv.check()
    if not rep.passed:
        raise InputError(f"constructed CV data violates invariants: "
                         f"{[c.ident for c in rep.failing()]}")
    # e^(2 pi i Q) = A
    if not _exp_q_equals(f, eig, Q, A):
        raise InputError("e^(2 pi i Q) != A")
    return cv


def _assemble_h(f, hs: PolarizedHSWithAut, n):
    """h(a,b) = (2 pi i)^(-w) S((-1)^p pi_p a, conj b), block diagonal."""
    tw = f.two_pi_i_power(-hs.w)
    cols, signs = [], []
    for p in hs.F.indices():
        piece = hs.hodge_piece(p)
        for c in piece.cols:
            cols.append(list(c))
            signs.append((-1) ** p)
    if len(cols) != n:
        raise InputError("Hodge decomposition incomplete")
    B = la.column_stack(cols)
    Binv = la.inverse(f, B)
    D = la.zeros(f, n, n)
    for i, s in enumerate(signs):
        D[i][i] = f.from_int(s)
    proj_signed = la.matmul(B, la.matmul(D, Binv))   # acts as (-1)^p on pieces
    SKbar = la.matmul(hs.S, hs.K0)
    # h(a,b) = tw * S(proj_signed a, K0 conj b): matrix tw * proj^T (S K0)
    return la.smul(tw, la.matmul(la.transpose(proj_signed), SKbar))


def _eigen_projector(f, eig, turns, n):
    cols, idx = [], []
    for t, sp in eig:
        for c in sp.cols:
            cols.append(list(c))
            idx.append(_turns_eq(f, t, turns))
    B = la.column_stack(cols)
    Binv = la.inverse(f, B)
    D = la.zeros(f, n, n)
    for i, flag in enumerate(idx):
        D[i][i] = f.one if flag else f.zero
    return la.matmul(B, la.matmul(D, Binv))


def _turns_eq(field, a, b):
    if field.is_exact:
        return Fraction(a) % 1 == Fraction(b) % 1
    d = abs(float(a) % 1.0 - float(b) % 1.0)
    return min(d, 1 - d) < 1e-6


def _exp_q_equals(f, eig, Q, A):
    """e^(2 pi i Q) = A, decided blockwise on Q eigenvectors."""
    n = len(Q)
    spec = q_spectrum(f, Q)
    for alpha, sp in spec:
        lam = f.root_of_unity(alpha) if f.is_exact else \
            f.coerce(cmath.exp(2j * math.pi * float(alpha)))
        for c in sp.cols:
            img = la.matvec(A, list(c))
            want = [lam * x for x in c]
            if not all(la._is_zero(f, a - b, _scale(f, A)) for a, b in zip(img, want)):
                return False
    return True


def q_spectrum(field, Q):
    """Eigen-decomposition of a semisimple Q with rational (or real)
    eigenvalues; exact backend finds rational roots of the
    characteristic polynomial."""
    n = len(Q)
    out = []
    if field.is_exact:
        for a in _rational_eigenvalues(field, Q):
            lam = field.from_fraction(a)
            ker = la.nullspace(field, la.msub(Q, la.smul(lam, la.eye(field, n))))
            if ker:
                out.append((a, Subspace(field, n, ker)))
    else:
        import numpy as np

        vals = np.linalg.eigvals(np.array(la.to_complex_mat(field, Q), dtype=complex))
        reps = []
        for v in vals:
            if abs(v.imag) > 1e-7:
                raise InputError("Q has a non-real eigenvalue")
            if not any(abs(v.real - r) < 1e-7 for r in reps):
                reps.append(v.real)
        for r in sorted(reps):
            ker = la.nullspace(field, la.msub(Q, la.smul(field.coerce(r),
                                                         la.eye(field, n))))
            out.append((r, Subspace(field, n, ker)))
    if sum(sp.dim for _, sp in out) != n:
        raise InputError("Q is not semisimple over the expected eigenvalues")
    return out


def _rational_eigenvalues(field, Q):
    """Rational roots of det(x - Q) via the rational root theorem."""
    n = len(Q)
    # Faddeev-LeVerrier for the characteristic polynomial, exactly
    coeffs = [field.one]  # leading
    Mk = la.zeros(field, n, n)
    I = la.eye(field, n)
    c = field.one
    M = la.zeros(field, n, n)
    for k in range(1, n + 1):
        M = la.matmul(Q, la.madd(M, la.smul(c, I))) if k > 1 else [row[:] for row in Q]
        tr = M[0][0]
        for i in range(1, n):
            tr = tr + M[i][i]
        c = -tr / field.from_int(k)
        coeffs.append(c)
    fracs = []
    for x in coeffs:
        fracs.append(x.as_fraction())
    den = 1
    for q in fracs:
        den = den * q.denominator // math.gcd(den, q.denominator)
    ints = [int(q * den) for q in fracs]   # ints[0] x^n + ... + ints[n]
    a0 = ints[-1]
    an = ints[0]
    roots = set()
    if a0 == 0:
        roots.add(Fraction(0))
        while ints[-1] == 0:
            ints = ints[:-1]
        a0 = ints[-1]
    for p in _divisors(abs(a0)):
        for q in _divisors(abs(an)):
            for cand in (Fraction(p, q), Fraction(-p, q)):
                val = Fraction(0)
                for c_int in ints:
                    val = val * cand + c_int
                if val == 0:
                    roots.add(cand)
    return sorted(roots)


def _divisors(m):
    if m == 0:
        return [1]
    out = []
    d = 1
    while d * d <= m:
        if m % d == 0:
            out.append(d)
            if d != m // d:
                out.append(m // d)
        d += 1
    return sorted(out)


def cv_to_hs(cv: PointCV, w: int) -> PolarizedHSWithAut:
    """Pointwise CV data with U = 0 and positive definite h -> polarized HS.

    Requires Q to have no eigenvalue in (w+1)/2 + Z.  The Hodge piece
    H^(p,w-p) collects the Q-eigenspaces with floor(alpha + (w+1)/2) = p;
    S inverts Eq. 3.9 and A = e^(2 pi i Q).
    """
    f = cv.field
    n = cv.dim
    rep = cv.check()
    if not rep.passed:
        raise InputError(f"CV invariants fail: {[c.ident for c in rep.failing()]}")
    if not cv.h_positive_definite():
        raise InputError("h must be positive definite")
    spec = q_spectrum(f, cv.Q)
    half = Fraction(w + 1, 2)
    pieces = {}
    for alpha, sp in spec:
        if f.is_exact:
            shifted = Fraction(alpha) + half
            if shifted.denominator == 1:
                raise InputError(
                    f"Q eigenvalue {alpha} lies in (w+1)/2 + Z; the "
                    f"correspondence refuses the boundary case")
            p = math.floor(shifted)
        else:
            shifted = float(alpha) + float(half)
            if abs(shifted - round(shifted)) < 1e-9:
                raise InputError("Q eigenvalue on the excluded boundary")
            p = math.floor(shifted)
        pieces.setdefault(p, []).extend([list(c) for c in sp.cols])

    ps = sorted(pieces)
    entries = {}
    for p in range(min(ps), max(ps) + 2):
        cols = []
        for p2 in ps:
            if p2 >= p:
                cols.extend(pieces[p2])
        entries[p] = Subspace(f, n, cols)
    F = filtration_from_subspaces(f, "dec", entries, n)

    # S from Eq. 3.31: S(a,b) = (2 pi i)^w (-1)^p h(a, conj b), a in H^(p,w-p)
    tw = f.two_pi_i_power(w)
    cols, signs = [], []
    for p in ps:
        for c in pieces[p]:
            cols.append(list(c))
            signs.append((-1) ** p)
    B = la.column_stack(cols)
    Binv = la.inverse(f, B)
    D = la.zeros(f, n, n)
    for i, s in enumerate(signs):
        D[i][i] = f.from_int(s)
    proj_signed = la.matmul(B, la.matmul(D, Binv))
    # h(a, conj b) as bilinear matrix: a^T h conj(conj b)... conj b = K conj(b)
    # S(a,b) = tw * (proj a)^T h conj(K conj(b)) = tw (proj a)^T h conj(K) b
    S = la.smul(tw, la.matmul(la.transpose(proj_signed),
                              la.matmul(cv.h, la.conj_mat(f, cv.kappa))))

    # A = e^(2 pi i Q) assembled blockwise
    A = la.zeros(f, n, n)
    cols2, lams = [], []
    for alpha, sp in spec:
        lam = f.root_of_unity(alpha) if f.is_exact else \
            f.coerce(cmath.exp(2j * math.pi * float(alpha)))
        for c in sp.cols:
            cols2.append(list(c))
            lams.append(lam)
    B2 = la.column_stack(cols2)
    B2inv = la.inverse(f, B2)
    D2 = la.zeros(f, n, n)
    for i, lam in enumerate(lams):
        D2[i][i] = lam
    A = la.matmul(B2, la.matmul(D2, B2inv))

    hs = PolarizedHSWithAut(f, w, [row[:] for row in cv.kappa], S, F, A)
    chk = hs.check()
    if not chk.passed:
        raise InputError(
            f"reconstructed HS fails: {[c.ident for c in chk.failing()]}")
    return hs


def split_by_weight(cv: PointCV, w: int):
    """Split pointwise CV data into HS of weight w and weight w-1.

    The weight-w part is the eigenspace of A = e^(2 pi i Q) with eigenvalue
    (-1)^w (trivial automorphism); the rest has weight w-1 and carries the
    automorphism (-1)^w A with eigenvalues != 1.
    """
    f = cv.field
    n = cv.dim
    rep = cv.check()
    if not rep.passed:
        raise InputError(f"CV invariants fail: {[c.ident for c in rep.failing()]}")
    if not cv.h_positive_definite():
        raise InputError("h must be positive definite")
    spec = q_spectrum(f, cv.Q)
    half_turns = Fraction(w, 2) % 1
    w_cols, rest_cols = [], []
    for alpha, sp in spec:
        in_w = _turns_eq(f, alpha, half_turns)
        (w_cols if in_w else rest_cols).extend([list(c) for c in sp.cols])

    def restrict(cols, weight):
        if not cols:
            return None
        B = la.column_stack(cols)
        # the subspaces are kappa-stable and h/Q-invariant
        Bplus = _left_inverse(f, B)
        sub_kappa = la.matmul(Bplus, la.matmul(cv.kappa, la.conj_mat(f, B)))
        sub_Q = la.matmul(Bplus, la.matmul(cv.Q, B))
        m = len(cols)
        sub_h = [[_h_entry(f, cv.h, cols[i], cols[j]) for j in range(m)]
                 for i in range(m)]
        sub = PointCV(f, sub_kappa, sub_h, sub_Q, la.zeros(f, m, m))
        return cv_to_hs(sub, weight), B

    out_w = restrict(w_cols, w)
    out_rest = restrict(rest_cols, w - 1)
    if out_rest is not None:
        hs, B = out_rest
        # automorphism adjustment: (-1)^w * A restricted
        hs.A = la.smul(f.from_int((-1) ** w), hs.A)
        # with the adjusted automorphism the full check must still pass
        if not hs.check().passed:
            raise InputError("weight w-1 part fails after sign adjustment")
        out_rest = (hs, B)
    return out_w, out_rest


def _h_entry(f, h, u, v):
    return la._dot(u, la.matvec(h, [f.conjugate(x) for x in v]))


def _left_inverse(field, B):
    """(B^T B)^-1 B^T over the field (columns independent)."""
    Bt = la.transpose(B)
    G = la.matmul(Bt, B)
    return la.matmul(la.inverse(field, G), Bt)


def recompose(part_w, part_rest, f, w) -> PointCV:
    """Inverse of split_by_weight: re-sum the two pieces to one PointCV."""
    pieces = [p for p in (part_w, part_rest) if p is not None]
    spaces = [B for _, B in pieces]
    n = sum(len(B[0]) for B in spaces)
    dim = len(spaces[0])
    cols = []
    for B in spaces:
        cols.extend(la.columns(B))
    Ball = la.column_stack(cols)
    Binv = la.inverse(f, Ball)
    # build each tensor blockwise, then conjugate back to ambient coordinates
    Qb = la.zeros(f, n, n)
    hb = la.zeros(f, n, n)
    kb = la.zeros(f, n, n)
    off = 0
    for (hs, B) in pieces:
        m = len(B[0])
        weight = hs.w
        cvp = hs_to_cv(_strip_aut_sign(hs, w), )
        for i in range(m):
            for j in range(m):
                Qb[off + i][off + j] = cvp.Q[i][j]
                hb[off + i][off + j] = cvp.h[i][j]
                kb[off + i][off + j] = cvp.kappa[i][j]
        off += m
    Q = la.matmul(Ball, la.matmul(Qb, Binv))
    kappa = la.matmul(Ball, la.matmul(kb, la.conj_mat(f, Binv)))
    # h transforms with conjugate-linear second slot
    h = la.matmul(la.transpose(_left_inverse(f, Ball)),
                  la.matmul(hb, la.conj_mat(f, _left_inverse(f, Ball))))
    # direct entrywise definition is safer: h(e_i, e_j)
    CinvT = la.transpose(Binv)
    h = la.matmul(CinvT, la.matmul(hb, la.conj_mat(f, Binv)))
    return PointCV(f, kappa, h, Q, la.zeros(f, n, n))


def _strip_aut_sign(hs: PolarizedHSWithAut, w_parent):
    """Undo the (-1)^w sign twist applied by split_by_weight on the
    weight w-1 part, so hs_to_cv sees the original block data."""
    if hs.w == w_parent:
        return hs
    f = hs.field
    A = la.smul(f.from_int((-1) ** w_parent), hs.A)
    return PolarizedHSWithAut(f, hs.w, hs.K0, hs.S, hs.F, A)

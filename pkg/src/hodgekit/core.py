"""Vector spaces with real structure, subspaces, filtrations, pairings.

The basic objects every other module computes on: a ``FlatModel`` packaging
the monodromy data (semisimple part, nilpotent logarithm, real structure,
polarizing form, weight), canonical ``Subspace`` values in reduced column
echelon form, and nested ``Filtration`` families.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from fractions import Fraction

from . import linalg as la
from .report import Report


class InputError(ValueError):
    """Bad user input (dimension mismatch, violated precondition)."""


class ModelError(ValueError):
    """A FlatModel invariant does not hold."""


# ---------------------------------------------------------------------------
# subspaces
# ---------------------------------------------------------------------------

class Subspace:
    """A subspace of an ambient coordinate space, spanned by basis columns.

    The basis is kept in reduced column echelon form, so two equal subspaces
    of an exact model have identical basis matrices.
    """

    def __init__(self, field, dim_ambient, columns_list, *, reduced=False):
        self.field = field
        self.dim_ambient = dim_ambient
        cols = [list(c) for c in columns_list]
        for c in cols:
            if len(c) != dim_ambient:
                raise InputError("column length does not match ambient dimension")
        if not reduced:
            cols = self._reduce(field, dim_ambient, cols)
        self.cols = cols

    @staticmethod
    def _reduce(field, n, cols):
        if not cols:
            return []
        if not field.is_exact:
            # normalize magnitudes first: rank decisions degrade badly when
            # columns mix wildly different scales (e.g. e^{zN} at large Im z)
            normed = []
            for c in cols:
                m = max(abs(x) for x in c)
                if m <= field.eps:
                    continue
                normed.append([x / m for x in c])
            cols = normed
            if not cols:
                return []
        rows = [list(r) for r in zip(*cols)]          # n x k
        R, pivots = la.rref(field, la.transpose(rows))
        return [list(R[i]) for i in range(len(pivots))]  # rows of R = basis vecs

    @classmethod
    def from_matrix(cls, field, M):
        """Span of the columns of M."""
        n = len(M)
        return cls(field, n, la.columns(M))

    @classmethod
    def full(cls, field, n):
        return cls(field, n, la.columns(la.eye(field, n)), reduced=True)

    @classmethod
    def zero(cls, field, n):
        return cls(field, n, [], reduced=True)

    @property
    def dim(self):
        return len(self.cols)

    def basis_matrix(self):
        """n x dim matrix whose columns span the subspace."""
        return la.column_stack(self.cols) if self.cols else [[] for _ in range(self.dim_ambient)]

    def contains_vector(self, v):
        if self.dim == 0:
            return all(la._is_zero(self.field, x, _vec_scale(self.field, v)) for x in v)
        A = la.column_stack(self.cols)
        return la.solve(self.field, A, list(v)) is not None

    def contains(self, other: "Subspace"):
        return all(self.contains_vector(c) for c in other.cols)

    def __eq__(self, other):
        if not isinstance(other, Subspace):
            return NotImplemented
        if self.dim_ambient != other.dim_ambient or self.dim != other.dim:
            return False
        if self.field.is_exact:
            return self.cols == other.cols
        return self.contains(other) and other.contains(self)

    def __repr__(self):
        return f"Subspace(dim {self.dim} of {self.dim_ambient})"

    # -- operations ------------------------------------------------------------
    def sum(self, other: "Subspace"):
        _check_ambient(self, other)
        return Subspace(self.field, self.dim_ambient, self.cols + other.cols)

    def intersect(self, other: "Subspace"):
        _check_ambient(self, other)
        if self.dim == 0 or other.dim == 0:
            return Subspace.zero(self.field, self.dim_ambient)
        A = la.column_stack(self.cols)
        B = la.column_stack([[-x for x in c] for c in other.cols])
        MM = [ra + rb for ra, rb in zip(A, B)]
        combos = la.nullspace(self.field, MM)
        vecs = [la.matvec(A, combo[: self.dim]) for combo in combos]
        return Subspace(self.field, self.dim_ambient, vecs)

    def image_under(self, M):
        if len(M[0]) != self.dim_ambient:
            raise InputError("matrix shape does not match ambient dimension")
        vecs = [la.matvec(M, c) for c in self.cols]
        return Subspace(self.field, len(M), vecs)

    def annihilator(self, pairing):
        """{x : pairing(a, x) = 0 for all a in self}; pairing as matrix S."""
        if len(pairing) != self.dim_ambient:
            raise InputError("pairing shape does not match ambient dimension")
        if self.dim == 0:
            return Subspace.full(self.field, self.dim_ambient)
        rows = [la.matvec(la.transpose(pairing), c) for c in self.cols]  # S^T a = row of a^T S
        basis = la.nullspace(self.field, rows)
        return Subspace(self.field, self.dim_ambient, basis)

    def conjugate(self, K0):
        """Image under the antilinear involution v -> K0 conj(v)."""
        f = self.field
        vecs = [la.matvec(K0, [f.conjugate(x) for x in c]) for c in self.cols]
        return Subspace(f, self.dim_ambient, vecs)


def _check_ambient(a: Subspace, b: Subspace):
    if a.dim_ambient != b.dim_ambient:
        raise InputError("ambient dimension mismatch")


def _vec_scale(field, v):
    if field.is_exact:
        return 1.0
    return max((abs(x) for x in v), default=1.0)


# ---------------------------------------------------------------------------
# filtrations
# ---------------------------------------------------------------------------

@dataclass
class Filtration:
    """A nested family of subspaces indexed by integers or rationals.

    direction 'dec': F^p decreasing in p (Hodge-type).
    direction 'inc': W_l increasing in l (weight-type).
    Outside the stored index range the filtration saturates at 0 / full.
    """

    direction: str
    entries: dict
    dim_ambient: int
    field: object

    def indices(self):
        return sorted(self.entries)

    def at(self, idx):
        keys = self.indices()
        if not keys:
            raise InputError("empty filtration")
        if self.direction == "dec":
            if idx <= keys[0]:
                return Subspace.full(self.field, self.dim_ambient)
            prev = None
            for k in keys:
                if k >= idx:
                    break
                prev = k
            if idx in self.entries:
                return self.entries[idx]
            if idx > keys[-1]:
                return Subspace.zero(self.field, self.dim_ambient)
            return self.entries[prev] if prev is not None else Subspace.full(self.field, self.dim_ambient)
        else:
            if idx >= keys[-1]:
                return Subspace.full(self.field, self.dim_ambient)
            if idx in self.entries:
                return self.entries[idx]
            if idx < keys[0]:
                return Subspace.zero(self.field, self.dim_ambient)
            below = [k for k in keys if k <= idx]
            return self.entries[below[-1]] if below else Subspace.zero(self.field, self.dim_ambient)

    def check_nested(self) -> bool:
        keys = self.indices()
        for a, b in zip(keys, keys[1:]):
            # decreasing: entry at a contains entry at b; increasing: converse
            big, small = ((a, b) if self.direction == "dec" else (b, a))
            if self.entries[small].dim > self.entries[big].dim:
                return False
            if not self.entries[big].contains(self.entries[small]):
                return False
        return True

    def check_exhaustive(self) -> bool:
        keys = self.indices()
        if not keys:
            return False
        lo, hi = keys[0], keys[-1]
        first, last = self.entries[lo], self.entries[hi]
        if self.direction == "dec":
            return first.dim == self.dim_ambient and last.dim >= 0
        return last.dim == self.dim_ambient

    def dims(self):
        return {k: self.entries[k].dim for k in self.indices()}


def filtration_from_subspaces(field, direction, pairs, dim_ambient):
    return Filtration(direction, dict(pairs), dim_ambient, field)


# ---------------------------------------------------------------------------
# the flat model
# ---------------------------------------------------------------------------

@dataclass
class FlatModel:
    """Monodromy data on the space of multivalued flat sections.

    Ms: semisimple part of the monodromy (unit-circle spectrum).
    N:  nilpotent logarithm of the unipotent part (a real matrix).
    K0: matrix of the antilinear involution v -> K0 conj(v); identity means
        "the coordinates are a real basis".
    S:  matrix of the polarizing form, S(a,b) = a^T S b.
    w:  the weight.
    """

    field: object
    mu: int
    w: int
    Ms: list
    N: list
    K0: list
    S: list
    eigendata: list = dc_field(default_factory=list)  # [(turns, Subspace)]

    def __post_init__(self):
        f = self.field
        self.Ms = la.mat(f, self.Ms)
        self.N = la.mat(f, self.N)
        self.K0 = la.mat(f, self.K0)
        self.S = la.mat(f, self.S)
        for M in (self.Ms, self.N, self.K0, self.S):
            if la.shape(M) != (self.mu, self.mu):
                raise InputError("model matrices must be mu x mu")

    # -- derived operators -----------------------------------------------------
    def monodromy(self):
        """M_mon = Ms * exp(N)."""
        return la.matmul(self.Ms, la.nilpotent_exp(self.field, self.N))

    def conj_vector(self, v):
        f = self.field
        return la.matvec(self.K0, [f.conjugate(x) for x in v])

    def pair(self, a, b):
        return la._dot(a, la.matvec(self.S, b))

    # -- validation --------------------------------------------------------------
    def validate(self) -> Report:
        f = self.field
        rep = Report("flat-model")
        try:
            idx = la.nilpotency_index(f, self.N)
            rep.add("N-nilpotent", True, f"index {idx}")
        except ValueError:
            rep.add("N-nilpotent", False, "N^mu != 0")
        comm = la.msub(la.matmul(self.Ms, self.N), la.matmul(self.N, self.Ms))
        rep.add("Ms-N-commute", _mat_is_zero(f, comm))
        try:
            eig = eigenspace_split(self)
            total = sum(sp.dim for _, sp in eig)
            rep.add("Ms-semisimple", total == self.mu,
                    f"eigenspace dims sum to {total} of {self.mu}")
        except ModelError as e:
            rep.add("Ms-semisimple", False, str(e))
            eig = []
        # conj is an involution
        KKbar = la.matmul(self.K0, la.conj_mat(f, self.K0))
        rep.add("conj-involution", la.mat_eq(f, KKbar, la.eye(f, self.mu)))
        # N real: conj . N . conj = N
        NK = la.matmul(self.K0, la.conj_mat(f, la.matmul(self.N, self.K0)))
        # (K0 conj) N (K0 conj) v = K0 conj(N K0) conj(v) -- compare matrices
        rep.add("N-real", la.mat_eq(f, la.matmul(self.K0, la.conj_mat(f, self.N)),
                                    la.matmul(self.N, self.K0)))
        rep.add("S-nondegenerate", not _is_zero_scalar(f, la.det(f, self.S)))
        NtS = la.matmul(la.transpose(self.N), self.S)
        SN = la.matmul(self.S, self.N)
        rep.add("S-infinitesimal-isometry", _mat_is_zero(f, la.madd(NtS, SN)),
                "S(Na,b) + S(a,Nb) = 0")
        Mmon = self.monodromy()
        MSM = la.matmul(la.transpose(Mmon), la.matmul(self.S, Mmon))
        rep.add("S-monodromy-invariant", la.mat_eq(f, MSM, self.S))
        # symmetry split: (-1)^(w-1) on non-unit eigenvalues, (-1)^w on lambda=1
        if eig:
            sym_ok = True
            for turns, sp in eig:
                unit = _is_unit_turns(f, turns)
                sign = (-1) ** self.w if unit else (-1) ** (self.w - 1)
                other = _find_block(f, eig, -turns)
                if other is None:
                    sym_ok = False
                    continue
                for u in sp.cols:
                    for v in other.cols:
                        lhs = self.pair(u, v)
                        rhs = self.pair(v, u)
                        if not _is_zero_scalar(f, lhs - f.from_int(sign) * rhs,
                                               _pair_scale(f, lhs, rhs)):
                            sym_ok = False
            rep.add("S-symmetry-blocks", sym_ok,
                    "(-1)^(w-1) on lambda != 1, (-1)^w on lambda = 1")
        # S real on the real points: conj(S(conj a, conj b)) = S(a,b)
        SK = la.matmul(la.transpose(self.K0), la.matmul(la.conj_mat(f, self.S), self.K0))
        rep.add("S-real-on-real-points", la.mat_eq(f, SK, self.S))
        return rep


def _mat_is_zero(field, M, scale=1.0):
    return all(la._is_zero(field, x, scale) for row in M for x in row)


def _is_unit_turns(field, turns) -> bool:
    if field.is_exact:
        return Fraction(turns) % 1 == 0
    d = float(turns) % 1.0
    return min(d, 1 - d) < 1e-9


def _find_block(field, eig, turns_target):
    """The eigenspace whose rotation number matches turns_target mod 1."""
    if field.is_exact:
        tt = Fraction(turns_target) % 1
        for t, sp in eig:
            if Fraction(t) % 1 == tt:
                return sp
        return None
    tt = float(turns_target) % 1.0
    for t, sp in eig:
        d = abs(float(t) % 1.0 - tt)
        if min(d, 1 - d) < 1e-6:
            return sp
    return None


def _is_zero_scalar(field, x, scale=1.0):
    return la._is_zero(field, x, scale)


def _pair_scale(field, *vals):
    if field.is_exact:
        return 1.0
    return max([abs(v) for v in vals] + [1.0])


# ---------------------------------------------------------------------------
# eigenspace decomposition of Ms
# ---------------------------------------------------------------------------

def eigenspace_split(model: FlatModel):
    """Decompose by Ms-eigenvalues.

    Returns a list of (turns, Subspace) with the eigenvalue lambda =
    e^(2 pi i turns); turns is a Fraction in [0,1) in the exact backend and
    a float in the float backend.  Raises ModelError when the eigenspaces
    do not fill the space (Ms not semisimple).
    """
    f = model.field
    if model.eigendata:
        return model.eigendata
    n = model.mu
    out = []
    if f.is_exact:
        for k in range(f.conductor):
            turns = Fraction(k, f.conductor)
            lam = f.root_of_unity(turns)
            M = la.msub(model.Ms, la.smul(lam, la.eye(f, n)))
            ker = la.nullspace(f, M)
            if ker:
                out.append((turns, Subspace(f, n, ker)))
    else:
        import numpy as np

        A = np.array(la.to_complex_mat(f, model.Ms), dtype=complex)
        vals = np.linalg.eigvals(A)
        reps: list[complex] = []
        for v in vals:
            if abs(abs(v) - 1.0) > 1e-6:
                raise ModelError(f"Ms eigenvalue {v} is not on the unit circle")
            if not any(abs(v - r) < 1e-8 for r in reps):
                reps.append(v)
        for lam in sorted(reps, key=lambda z: (round(z.real, 9), round(z.imag, 9))):
            M = la.msub(model.Ms, la.smul(lam, la.eye(f, n)))
            ker = la.nullspace(f, M)
            if not ker:
                raise ModelError("numerical eigenvalue clustering failed")
            turns = math.atan2(lam.imag, lam.real) / (2 * math.pi) % 1.0
            out.append((turns, Subspace(f, n, ker)))
    total = sum(sp.dim for _, sp in out)
    if total != n:
        raise ModelError(
            f"Ms is not semisimple: eigenspaces span {total} of {n} dimensions")
    model.eigendata = out
    return out


def unit_part(model: FlatModel) -> Subspace:
    for turns, sp in eigenspace_split(model):
        if turns == 0 or (not model.field.is_exact and abs(turns) < 1e-9):
            return sp
    return Subspace.zero(model.field, model.mu)


def nonunit_part(model: FlatModel) -> Subspace:
    f = model.field
    acc = Subspace.zero(f, model.mu)
    for turns, sp in eigenspace_split(model):
        if turns == 0 or (not f.is_exact and abs(turns) < 1e-9):
            continue
        acc = acc.sum(sp)
    return acc


# ---------------------------------------------------------------------------
# the polarizing form from a flat intersection-type pairing
# ---------------------------------------------------------------------------

def polarizing_form_from_intersection(field, Lmat, Mmon, N, K0, w):
    """Build S from the flat pairing L on a fiber.

    On the non-unit eigenvalue part:  S(a,b) = -(2 pi i)^w L(a, (M-1)^{-1} b);
    on the unit part:                 S(a,b) = -(2 pi i)^w L(a, T b)  with
    T = -(sum_{k>=1} N^{k-1}/k!)^{-1}, the invertible stand-in for
    -N/(M-1).  Returns (S, report); the report records the structural
    identities of the resulting form plus the preconditions on L.
    """
    n = len(Lmat)
    f = field
    rep = Report("polarizing-form")
    if _is_zero_scalar(f, la.det(f, Lmat)):
        raise InputError("intersection form L is degenerate")
    # L(a,b) = (-1)^w L(M b, a)   and   L(Ma, Mb) = L(a,b)
    MtLM = la.matmul(la.transpose(Mmon), la.matmul(Lmat, Mmon))
    ok_inv = la.mat_eq(f, MtLM, Lmat)
    LM = la.matmul(Lmat, Mmon)
    ok_twist = la.mat_eq(f, Lmat, la.smul(f.from_int((-1) ** w), la.transpose(LM)))
    if not (ok_inv and ok_twist):
        raise InputError("L does not satisfy the monodromy twist identities")
    rep.add("L-monodromy-invariant", ok_inv)
    rep.add("L-twist-symmetry", ok_twist)

    Ms = _semisimple_of(field, Mmon, N)
    model_tmp = FlatModel(f, n, w, Ms, N, K0, la.eye(f, n))
    T = _second_arg_operator(model_tmp, Mmon, invert=False)
    S = la.smul(-f.two_pi_i_power(w), la.matmul(Lmat, T))

    model = FlatModel(f, n, w, model_tmp.Ms, N, K0, S)
    rep.extend(model.validate(), prefix="S.")
    return S, rep, model


def _semisimple_of(field, Mmon, N):
    """Ms = Mmon * exp(-N)."""
    return la.matmul(Mmon, la.nilpotent_exp(field, la.smul(field.from_int(-1), N)))


def _second_arg_operator(model: FlatModel, Mmon, invert: bool):
    """Blockwise operator used in the S <-> L translation.

    forward (invert=False): (M-1)^{-1} on the non-unit part and
    -(sum N^{k-1}/k!)^{-1} on the unit part.  invert=True gives the inverse
    operator (used to reconstruct L from S).
    """
    f = model.field
    n = model.mu
    blocks = eigenspace_split(model)
    cols_all = []
    vecs_all = []
    idx_n = la.nilpotency_index(f, model.N)
    M1 = la.msub(Mmon, la.eye(f, n))
    for turns, sp in blocks:
        unit = turns == 0 or (not f.is_exact and abs(float(turns)) < 1e-9)
        if unit:
            coeffs = [f.from_fraction(Fraction(1, la._factorial(k + 1)))
                      for k in range(max(idx_n, 1))]
            A = la.apply_series(f, coeffs, model.N)      # sum_{k>=1} N^(k-1)/k!
            op = la.smul(f.from_int(-1), la.inverse(f, A))
            if invert:
                op = la.inverse(f, op)
            for c in sp.cols:
                vecs_all.append(la.matvec(op, c))
                cols_all.append(c)
        elif invert:
            for c in sp.cols:
                vecs_all.append(la.matvec(M1, c))
                cols_all.append(c)
        else:
            for c in sp.cols:
                sol = la.solve(f, M1, c)
                if sol is None:
                    raise InputError("Mmon - id not invertible off the unit part")
                vecs_all.append(sol)
                cols_all.append(c)
    # assemble the operator in ambient coordinates: op * P = V
    P = la.column_stack(cols_all)
    V = la.column_stack(vecs_all)
    return la.matmul(V, la.inverse(f, P))


def intersection_form_from_polarizing(model: FlatModel):
    """Invert the S construction: recover the matrix of L from S."""
    f = model.field
    Mmon = model.monodromy()
    Tinv = _second_arg_operator(model, Mmon, invert=True)
    # S = -(tau)^w L T  =>  L = -(tau)^{-w} S T^{-1}
    return la.smul(-f.two_pi_i_power(-model.w), la.matmul(model.S, Tinv))


# ---------------------------------------------------------------------------
# exact -> float conversion (the only allowed direction)
# ---------------------------------------------------------------------------

def convert_matrix(field_from, field_to, M):
    return [[field_to.coerce(field_from.to_complex(x)) for x in row] for row in M]


def convert_subspace(field_from, field_to, sp: Subspace) -> Subspace:
    cols = [[field_to.coerce(field_from.to_complex(x)) for x in c] for c in sp.cols]
    return Subspace(field_to, sp.dim_ambient, cols)


def convert_filtration(field_from, field_to, F: Filtration) -> Filtration:
    entries = {k: convert_subspace(field_from, field_to, F.entries[k])
               for k in F.entries}
    return Filtration(F.direction, entries, F.dim_ambient, field_to)


def convert_model(model: FlatModel, field_to) -> FlatModel:
    f = model.field
    return FlatModel(field_to, model.mu, model.w,
                     convert_matrix(f, field_to, model.Ms),
                     convert_matrix(f, field_to, model.N),
                     convert_matrix(f, field_to, model.K0),
                     convert_matrix(f, field_to, model.S))

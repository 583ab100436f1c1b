# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""GMP-backed kernel; a drop-in replacement for ``_pykernel.KMap``.

Nodes live in arrays of ``mpq_t``. Values cross the Python boundary as
:class:`fractions.Fraction`, built without re-normalizing since GMP keeps
every rational canonical.
"""

from cpython.mem cimport PyMem_Free, PyMem_Malloc, PyMem_Realloc

from fractions import Fraction

from ..errors import PieceBudgetExceeded

BACKEND = "gmp"

HULL_CONVERGED = 0
HULL_OVERLAP = 1
HULL_UNCONVERGED = 2


cdef extern from "gmp.h":
    ctypedef struct __mpz_struct:
        pass
    ctypedef struct __mpq_struct:
        pass
    ctypedef __mpz_struct *mpz_ptr
    ctypedef __mpq_struct *mpq_ptr
    ctypedef __mpq_struct mpq_t[1]

    void mpq_init(mpq_ptr)
    void mpq_clear(mpq_ptr)
    void mpq_set(mpq_ptr, mpq_ptr)
    void mpq_add(mpq_ptr, mpq_ptr, mpq_ptr)
    void mpq_sub(mpq_ptr, mpq_ptr, mpq_ptr)
    void mpq_mul(mpq_ptr, mpq_ptr, mpq_ptr)
    void mpq_div(mpq_ptr, mpq_ptr, mpq_ptr)
    void mpq_set_si(mpq_ptr, long, unsigned long)
    void mpq_canonicalize(mpq_ptr)
    int mpq_cmp(mpq_ptr, mpq_ptr)
    int mpq_equal(mpq_ptr, mpq_ptr)
    int mpq_sgn(mpq_ptr)
    mpz_ptr mpq_numref(mpq_ptr)
    mpz_ptr mpq_denref(mpq_ptr)

    void mpz_set_si(mpz_ptr, long)
    long mpz_get_si(mpz_ptr)
    int mpz_fits_slong_p(mpz_ptr)
    int mpz_sgn(mpz_ptr)
    void mpz_neg(mpz_ptr, mpz_ptr)
    size_t mpz_sizeinbase(mpz_ptr, int)
    void mpz_import(mpz_ptr, size_t, int, size_t, int, size_t, const void *)
    void *mpz_export(void *, size_t *, int, size_t, int, size_t, mpz_ptr)


# -- conversions ----------------------------------------------------------------

cdef object _new = object.__new__


cdef int _set_z(mpz_ptr z, object n) except -1:
    cdef long v
    cdef bytes b
    try:
        v = n
        mpz_set_si(z, v)
        return 0
    except OverflowError:
        pass
    neg = n < 0
    if neg:
        n = -n
    b = n.to_bytes((n.bit_length() + 7) // 8, "little")
    mpz_import(z, len(b), -1, 1, 0, 0, <const char *>b)
    if neg:
        mpz_neg(z, z)
    return 0


cdef object _get_z(mpz_ptr z):
    cdef size_t count
    cdef char *buf
    if mpz_fits_slong_p(z):
        return mpz_get_si(z)
    count = (mpz_sizeinbase(z, 2) + 7) // 8
    buf = <char *>PyMem_Malloc(count)
    if buf == NULL:
        raise MemoryError()
    try:
        mpz_export(buf, &count, -1, 1, 0, 0, z)
        r = int.from_bytes(buf[:count], "little")
    finally:
        PyMem_Free(buf)
    return -r if mpz_sgn(z) < 0 else r


cdef int _set_q(mpq_ptr q, object x) except -1:
    if type(x) is not Fraction:
        x = Fraction(x)
    _set_z(mpq_numref(q), x.numerator)
    _set_z(mpq_denref(q), x.denominator)
    return 0


cdef object _get_q(mpq_ptr q):
    f = _new(Fraction)
    f._numerator = _get_z(mpq_numref(q))
    f._denominator = _get_z(mpq_denref(q))
    return f


# -- growable rational vector ---------------------------------------------------

cdef class QVec:
    cdef mpq_t *d
    cdef Py_ssize_t n, cap

    def __cinit__(self, Py_ssize_t cap=8):
        cdef Py_ssize_t i
        if cap < 2:
            cap = 2
        self.d = <mpq_t *>PyMem_Malloc(cap * sizeof(mpq_t))
        if self.d == NULL:
            raise MemoryError()
        for i in range(cap):
            mpq_init(self.d[i])
        self.n = 0
        self.cap = cap

    def __dealloc__(self):
        cdef Py_ssize_t i
        if self.d != NULL:
            for i in range(self.cap):
                mpq_clear(self.d[i])
            PyMem_Free(self.d)

    cdef mpq_ptr push(self) except NULL:
        cdef Py_ssize_t i, newcap
        cdef mpq_t *nd
        if self.n == self.cap:
            newcap = 2 * self.cap
            nd = <mpq_t *>PyMem_Realloc(self.d, newcap * sizeof(mpq_t))
            if nd == NULL:
                raise MemoryError()
            self.d = nd
            for i in range(self.cap, newcap):
                mpq_init(self.d[i])
            self.cap = newcap
        self.n += 1
        return self.d[self.n - 1]

    cdef list tolist(self, Py_ssize_t lo=0, Py_ssize_t hi=-1):
        cdef Py_ssize_t i
        if hi < 0:
            hi = self.n
        return [_get_q(self.d[i]) for i in range(lo, hi)]


cdef Py_ssize_t _bisect_right(QVec a, mpq_ptr y):
    """First index with ``a[i] > y``."""
    cdef Py_ssize_t lo = 0, hi = a.n, mid
    while lo < hi:
        mid = (lo + hi) // 2
        if mpq_cmp(y, a.d[mid]) < 0:
            hi = mid
        else:
            lo = mid + 1
    return lo


cdef Py_ssize_t _bisect_left(QVec a, mpq_ptr y):
    """First index with ``a[i] >= y``."""
    cdef Py_ssize_t lo = 0, hi = a.n, mid
    while lo < hi:
        mid = (lo + hi) // 2
        if mpq_cmp(a.d[mid], y) < 0:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef class _Scratch:
    """Temporaries owned by one method call."""
    cdef mpq_t a, b, c, d, e, f

    def __cinit__(self):
        mpq_init(self.f)
        mpq_init(self.a)
        mpq_init(self.b)
        mpq_init(self.c)
        mpq_init(self.d)
        mpq_init(self.e)

    def __dealloc__(self):
        mpq_clear(self.f)
        mpq_clear(self.a)
        mpq_clear(self.b)
        mpq_clear(self.c)
        mpq_clear(self.d)
        mpq_clear(self.e)


cdef int _qdiv(mpq_ptr out, mpq_ptr a, mpq_ptr b) except -1:
    # GMP aborts the process on division by zero; raise like Fraction does
    if mpq_sgn(b) == 0:
        raise ZeroDivisionError("division by zero in an exact kernel operation")
    mpq_div(out, a, b)
    return 0


cdef int _affine(mpq_ptr out, mpq_ptr x, mpq_ptr x0, mpq_ptr x1,
                 mpq_ptr v0, mpq_ptr v1, mpq_ptr t1, mpq_ptr t2) except -1:
    # out = v0 + (v1 - v0) * (x - x0) / (x1 - x0)
    mpq_sub(t1, v1, v0)
    mpq_sub(t2, x, x0)
    mpq_mul(t1, t1, t2)
    mpq_sub(t2, x1, x0)
    _qdiv(t1, t1, t2)
    mpq_add(out, v0, t1)
    return 0


cdef QVec _qvec_of(object items):
    items = list(items)
    cdef QVec v = QVec(len(items))
    for it in items:
        _set_q(v.push(), it)
    return v


cdef class KMap:
    """Continuous piecewise-affine function given by its nodes."""

    cdef QVec X, V

    def __init__(self, breakpoints, values):
        self.X = _qvec_of(breakpoints)
        self.V = _qvec_of(values)
        if self.X.n != self.V.n or self.X.n < 2:
            raise ValueError("need matching node lists of length >= 2")

    @staticmethod
    cdef KMap _wrap(QVec X, QVec V):
        cdef KMap k = KMap.__new__(KMap)
        k.X = X
        k.V = V
        return k

    def __reduce__(self):
        return (KMap, (self.breakpoints(), self.values()))

    def breakpoints(self):
        return self.X.tolist()

    def values(self):
        return self.V.tolist()

    @property
    def npieces(self):
        return self.X.n - 1

    @property
    def lo(self):
        return _get_q(self.X.d[0])

    @property
    def hi(self):
        return _get_q(self.X.d[self.X.n - 1])

    cdef int _eval(self, mpq_ptr out, mpq_ptr x, mpq_ptr t1, mpq_ptr t2) except -1:
        cdef Py_ssize_t n = self.X.n, i
        cdef mpq_t *xs = self.X.d
        cdef mpq_t *vs = self.V.d
        if mpq_cmp(x, xs[0]) < 0 or mpq_cmp(x, xs[n - 1]) > 0:
            raise ValueError(f"{_get_q(x)} outside [{_get_q(xs[0])}, {_get_q(xs[n - 1])}]")
        i = _bisect_right(self.X, x) - 1
        if i > n - 2:
            i = n - 2
        if mpq_equal(x, xs[i]):
            mpq_set(out, vs[i])
        else:
            _affine(out, x, xs[i], xs[i + 1], vs[i], vs[i + 1], t1, t2)
        return 0

    def evaluate(self, x):
        cdef _Scratch s = _Scratch()
        _set_q(s.a, x)
        self._eval(s.b, s.a, s.c, s.d)
        return _get_q(s.b)

    def slope(self, Py_ssize_t i):
        cdef _Scratch s = _Scratch()
        if not 0 <= i < self.X.n - 1:
            raise IndexError(i)
        mpq_sub(s.a, self.V.d[i + 1], self.V.d[i])
        mpq_sub(s.b, self.X.d[i + 1], self.X.d[i])
        _qdiv(s.a, s.a, s.b)
        return _get_q(s.a)

    cdef int _image(self, mpq_ptr mn, mpq_ptr mx, mpq_ptr lo, mpq_ptr hi,
                    mpq_ptr t1, mpq_ptr t2) except -1:
        cdef Py_ssize_t i, first, last
        self._eval(mn, lo, t1, t2)
        self._eval(mx, hi, t1, t2)
        if mpq_cmp(mn, mx) > 0:
            mpq_set(t1, mn)
            mpq_set(mn, mx)
            mpq_set(mx, t1)
        first = _bisect_right(self.X, lo)
        last = _bisect_left(self.X, hi)
        for i in range(first, last):
            if mpq_cmp(self.V.d[i], mn) < 0:
                mpq_set(mn, self.V.d[i])
            elif mpq_cmp(self.V.d[i], mx) > 0:
                mpq_set(mx, self.V.d[i])
        return 0

    def image(self, lo, hi):
        """Exact image ``[min, max]`` of the closed interval ``[lo, hi]``."""
        cdef _Scratch s = _Scratch()
        _set_q(s.a, lo)
        _set_q(s.b, hi)
        self._image(s.c, s.d, s.a, s.b, s.e, s.f)
        return _get_q(s.c), _get_q(s.d)

    def restrict(self, lo, hi):
        cdef _Scratch s = _Scratch()
        cdef Py_ssize_t i, first, last
        _set_q(s.a, lo)
        _set_q(s.b, hi)
        first = _bisect_right(self.X, s.a)
        last = _bisect_left(self.X, s.b)
        cdef QVec X = QVec(last - first + 2)
        cdef QVec V = QVec(last - first + 2)
        mpq_set(X.push(), s.a)
        self._eval(V.push(), s.a, s.c, s.d)
        for i in range(first, last):
            mpq_set(X.push(), self.X.d[i])
            mpq_set(V.push(), self.V.d[i])
        mpq_set(X.push(), s.b)
        self._eval(V.push(), s.b, s.c, s.d)
        return KMap._wrap(X, V)

    def compose(self, KMap inner, lo, hi, budget):
        """``self ∘ inner`` on ``[lo, hi]`` with collinear pieces merged."""
        cdef _Scratch s = _Scratch()
        cdef Py_ssize_t i, j, k, first, last, jlo, jhi, m
        cdef Py_ssize_t limit = -1, cap = -1
        cdef mpq_ptr x0
        cdef mpq_ptr x1
        cdef mpq_ptr y0
        cdef mpq_ptr y1
        if budget is not None:
            limit = budget
            cap = 8 * limit + 16
        _set_q(s.a, lo)
        _set_q(s.b, hi)
        first = _bisect_right(inner.X, s.a)
        last = _bisect_left(inner.X, s.b)
        m = last - first + 2
        cdef QVec N = QVec(m)
        cdef QVec G = QVec(m)
        mpq_set(N.push(), s.a)
        inner._eval(G.push(), s.a, s.c, s.d)
        for i in range(first, last):
            mpq_set(N.push(), inner.X.d[i])
            mpq_set(G.push(), inner.V.d[i])
        mpq_set(N.push(), s.b)
        inner._eval(G.push(), s.b, s.c, s.d)

        cdef QVec OX = QVec(2 * m)
        cdef QVec OV = QVec(2 * m)
        mpq_set(OX.push(), N.d[0])
        self._eval(OV.push(), G.d[0], s.c, s.d)
        for k in range(m - 1):
            x0 = N.d[k]
            x1 = N.d[k + 1]
            y0 = G.d[k]
            y1 = G.d[k + 1]
            if mpq_equal(y0, y1):
                raise ZeroDivisionError("inner map is constant on a piece")
            # scale = (x1 - x0) / (y1 - y0) kept in s.e
            mpq_sub(s.e, x1, x0)
            mpq_sub(s.c, y1, y0)
            _qdiv(s.e, s.e, s.c)
            if mpq_cmp(y0, y1) < 0:
                jlo = _bisect_right(self.X, y0)
                jhi = _bisect_left(self.X, y1)
                for j in range(jlo, jhi):
                    self._node(OX, OV, j, x0, y0, s)
            else:
                jlo = _bisect_right(self.X, y1)
                jhi = _bisect_left(self.X, y0)
                for j in range(jhi - 1, jlo - 1, -1):
                    self._node(OX, OV, j, x0, y0, s)
            mpq_set(OX.push(), x1)
            self._eval(OV.push(), y1, s.c, s.d)
            if cap >= 0 and OX.n - 1 > cap:
                raise PieceBudgetExceeded(
                    f"composition needs more than {budget} pieces",
                    pieces=OX.n - 1, budget=budget)
        cdef KMap out = _merged(OX, OV, s)
        if limit >= 0 and out.X.n - 1 > limit:
            raise PieceBudgetExceeded(
                f"composition needs more than {budget} pieces",
                pieces=out.X.n - 1, budget=budget)
        return out

    cdef int _node(self, QVec OX, QVec OV, Py_ssize_t j, mpq_ptr x0, mpq_ptr y0,
                   _Scratch s) except -1:
        cdef mpq_ptr p = OX.push()
        mpq_sub(s.d, self.X.d[j], y0)
        mpq_mul(s.d, s.d, s.e)
        mpq_add(p, x0, s.d)
        mpq_set(OV.push(), self.V.d[j])
        return 0

    def fixed_points(self):
        """Isolated solutions of ``f(x) = x`` and slope-1 diagonal segments."""
        cdef _Scratch s = _Scratch()
        cdef Py_ssize_t i, n = self.X.n
        cdef mpq_t *xs = self.X.d
        cdef mpq_t *vs = self.V.d
        pts = []
        segs = []
        cdef QVec last = QVec(2)
        cdef bint have_last = False
        mpq_set_si(s.e, 1, 1)
        for i in range(n - 1):
            mpq_sub(s.a, vs[i + 1], vs[i])
            mpq_sub(s.b, xs[i + 1], xs[i])
            _qdiv(s.a, s.a, s.b)
            if mpq_equal(s.a, s.e):
                if mpq_equal(vs[i], xs[i]):
                    # wraparound is off, so no negative indexing here
                    if segs and segs[len(segs) - 1][1] == _get_q(xs[i]):
                        segs[len(segs) - 1] = (segs[len(segs) - 1][0], _get_q(xs[i + 1]))
                    else:
                        segs.append((_get_q(xs[i]), _get_q(xs[i + 1])))
                continue
            # x = (v0 - a x0) / (1 - a)
            mpq_mul(s.b, s.a, xs[i])
            mpq_sub(s.b, vs[i], s.b)
            mpq_sub(s.c, s.e, s.a)
            _qdiv(s.b, s.b, s.c)
            if mpq_cmp(xs[i], s.b) <= 0 and mpq_cmp(s.b, xs[i + 1]) <= 0:
                if not have_last or not mpq_equal(last.d[0], s.b):
                    pts.append(_get_q(s.b))
                    if not have_last:
                        last.push()
                        have_last = True
                    mpq_set(last.d[0], s.b)
        if segs:
            pts = [p for p in pts if not any(a <= p <= b for a, b in segs)]
        return pts, segs

    def preimages(self, y):
        cdef _Scratch s = _Scratch()
        cdef Py_ssize_t i, n = self.X.n
        cdef mpq_t *xs = self.X.d
        cdef mpq_t *vs = self.V.d
        cdef mpq_ptr lo
        cdef mpq_ptr hi
        cdef bint have = False
        out = []
        _set_q(s.a, y)
        for i in range(n - 1):
            if mpq_cmp(vs[i], vs[i + 1]) <= 0:
                lo = &vs[i][0]
                hi = &vs[i + 1][0]
            else:
                lo = &vs[i + 1][0]
                hi = &vs[i][0]
            if mpq_cmp(lo, s.a) <= 0 and mpq_cmp(s.a, hi) <= 0:
                # x = x0 + (y - v0) (x1 - x0) / (v1 - v0)
                _affine(s.b, s.a, vs[i], vs[i + 1], xs[i], xs[i + 1], s.c, s.d)
                if not have or not mpq_equal(s.e, s.b):
                    out.append(_get_q(s.b))
                    mpq_set(s.e, s.b)
                    have = True
        return out

    def hull_cycle(self, slots, points, Py_ssize_t q, Py_ssize_t max_rounds):
        """Smallest family ``J_0..J_{q-1}`` with seed points and ``f(J_k) ⊆ J_{k+1}``.

        Same contract as the reference kernel: ``(status, intervals, prev0)``.
        """
        cdef _Scratch s = _Scratch()
        cdef QVec L = QVec(q)
        cdef QVec H = QVec(q)
        cdef QVec P = QVec(2)
        cdef Py_ssize_t k, m, r
        cdef bint changed, have_prev = False
        cdef char *present = <char *>PyMem_Malloc(q if q > 0 else 1)
        if present == NULL:
            raise MemoryError()
        try:
            for k in range(q):
                L.push()
                H.push()
                present[k] = 0
            P.push()
            P.push()
            for k, p in zip(slots, points):
                if not 0 <= k < q:
                    raise IndexError(f"slot {k} outside 0..{q - 1}")
                _set_q(s.a, p)
                if not present[k]:
                    mpq_set(L.d[k], s.a)
                    mpq_set(H.d[k], s.a)
                    present[k] = 1
                else:
                    if mpq_cmp(s.a, L.d[k]) < 0:
                        mpq_set(L.d[k], s.a)
                    if mpq_cmp(s.a, H.d[k]) > 0:
                        mpq_set(H.d[k], s.a)
                if _overlaps(L, H, present, q, k):
                    return HULL_OVERLAP, _intervals(L, H, present, q), None
            for r in range(max_rounds):
                changed = False
                have_prev = present[0]
                if have_prev:
                    mpq_set(P.d[0], L.d[0])
                    mpq_set(P.d[1], H.d[0])
                for k in range(q):
                    if not present[k]:
                        continue
                    self._image(s.a, s.b, L.d[k], H.d[k], s.c, s.d)
                    m = (k + 1) % q
                    if not present[m]:
                        mpq_set(L.d[m], s.a)
                        mpq_set(H.d[m], s.b)
                        present[m] = 1
                    elif mpq_cmp(s.a, L.d[m]) < 0 or mpq_cmp(s.b, H.d[m]) > 0:
                        if mpq_cmp(s.a, L.d[m]) < 0:
                            mpq_set(L.d[m], s.a)
                        if mpq_cmp(s.b, H.d[m]) > 0:
                            mpq_set(H.d[m], s.b)
                    else:
                        continue
                    changed = True
                    if _overlaps(L, H, present, q, m):
                        return HULL_OVERLAP, _intervals(L, H, present, q), _prev(P, have_prev)
                if not changed:
                    return HULL_CONVERGED, _intervals(L, H, present, q), _prev(P, have_prev)
            if max_rounds == 0:
                have_prev = present[0]
                if have_prev:
                    mpq_set(P.d[0], L.d[0])
                    mpq_set(P.d[1], H.d[0])
            return HULL_UNCONVERGED, _intervals(L, H, present, q), _prev(P, have_prev)
        finally:
            PyMem_Free(present)


cdef KMap _merged(QVec xs, QVec vs, _Scratch s):
    cdef Py_ssize_t i, n = xs.n
    if n <= 2:
        return KMap._wrap(xs, vs)
    cdef QVec OX = QVec(n)
    cdef QVec OV = QVec(n)
    mpq_set(OX.push(), xs.d[0])
    mpq_set(OV.push(), vs.d[0])
    for i in range(1, n - 1):
        # (v1 - v0)(x2 - x1) == (v2 - v1)(x1 - x0) with (x0, v0) the last kept node
        mpq_sub(s.a, vs.d[i], OV.d[OV.n - 1])
        mpq_sub(s.b, xs.d[i + 1], xs.d[i])
        mpq_mul(s.a, s.a, s.b)
        mpq_sub(s.c, vs.d[i + 1], vs.d[i])
        mpq_sub(s.d, xs.d[i], OX.d[OX.n - 1])
        mpq_mul(s.c, s.c, s.d)
        if mpq_equal(s.a, s.c):
            continue
        mpq_set(OX.push(), xs.d[i])
        mpq_set(OV.push(), vs.d[i])
    mpq_set(OX.push(), xs.d[n - 1])
    mpq_set(OV.push(), vs.d[n - 1])
    return KMap._wrap(OX, OV)


cdef bint _overlaps(QVec L, QVec H, char *present, Py_ssize_t q, Py_ssize_t m):
    cdef Py_ssize_t k
    for k in range(q):
        if k == m or not present[k]:
            continue
        if not (mpq_cmp(H.d[m], L.d[k]) < 0 or mpq_cmp(H.d[k], L.d[m]) < 0):
            return True
    return False


cdef list _intervals(QVec L, QVec H, char *present, Py_ssize_t q):
    cdef Py_ssize_t k
    return [(_get_q(L.d[k]), _get_q(H.d[k])) if present[k] else None for k in range(q)]


cdef object _prev(QVec P, bint have):
    return (_get_q(P.d[0]), _get_q(P.d[1])) if have else None

"""Small prime-power finite fields GF(p^n), elements encoded as integers.

An element ``c_0 + c_1 x + ... + c_{n-1} x^{n-1}`` is stored as the integer
``sum c_i p^i``.  Multiplication reduces modulo a primitive polynomial found
by exhaustive search, so ``x`` itself generates the multiplicative group.
Only meant for the tiny fields needed by the Singer construction.
"""

from functools import lru_cache
from itertools import product

from sympy import factorint

__all__ = ["PrimeField", "ExtensionField", "prime_power"]


def prime_power(q):
    """Return ``(p, e)`` with ``q == p**e`` or raise ``ValueError``."""
    q = int(q)
    if q < 2:
        raise ValueError(f"{q} is not a prime power")
    factors = factorint(q)
    if len(factors) != 1:
        raise ValueError(f"{q} is not a prime power")
    ((p, e),) = factors.items()
    return int(p), int(e)


class ExtensionField:
    """GF(p^n) with a primitive defining polynomial."""

    def __init__(self, p, n):
        self.p = int(p)
        self.n = int(n)
        self.order = self.p ** self.n
        self.modulus = _primitive_polynomial(self.p, self.n)

    # coefficient vectors, lowest degree first
    def _vec(self, a):
        out = []
        for _ in range(self.n):
            a, r = divmod(a, self.p)
            out.append(r)
        return out

    def _int(self, v):
        a = 0
        for c in reversed(v):
            a = a * self.p + (c % self.p)
        return a

    def add(self, a, b):
        return self._int([x + y for x, y in zip(self._vec(a), self._vec(b))])

    def mul(self, a, b):
        return self._int(_polymulmod(self._vec(a), self._vec(b), self.modulus, self.p))

    def power(self, a, k):
        result = 1
        while k:
            if k & 1:
                result = self.mul(result, a)
            a = self.mul(a, a)
            k >>= 1
        return result

    @property
    def generator(self):
        # the class of x; primitive by construction (needs n >= 2)
        return self.p if self.n > 1 else _prime_root(self.p)

    def powers(self):
        """All powers ``g**i`` for ``i`` in ``range(order - 1)``."""
        g = self.generator
        out = [1]
        for _ in range(self.order - 2):
            out.append(self.mul(out[-1], g))
        return out


class PrimeField(ExtensionField):
    def __init__(self, p):
        super().__init__(p, 1)


def _polymulmod(a, b, modulus, p):
    n = len(modulus) - 1
    prod = [0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                prod[i + j] += x * y
    # modulus is monic
    for d in range(len(prod) - 1, n - 1, -1):
        c = prod[d] % p
        if c:
            for k in range(n + 1):
                prod[d - n + k] -= c * modulus[k]
    return [c % p for c in prod[:n]] + [0] * max(0, n - len(prod))


def _polypowmod_x(k, modulus, p):
    n = len(modulus) - 1
    result = [1] + [0] * (n - 1)
    base = [0, 1] + [0] * (n - 2) if n > 1 else [0]
    while k:
        if k & 1:
            result = _polymulmod(result, base, modulus, p)
        base = _polymulmod(base, base, modulus, p)
        k >>= 1
    return result


@lru_cache(maxsize=None)
def _primitive_polynomial(p, n):
    """First monic degree-n polynomial over GF(p) for which x has full order."""
    if n == 1:
        return (_prime_root(p) * -1 % p, 1)
    order = p ** n - 1
    cofactors = [order // r for r in factorint(order)]
    one = [1] + [0] * (n - 1)
    for tail in product(range(p), repeat=n):
        if tail[0] == 0:
            continue
        modulus = list(tail) + [1]
        if _polypowmod_x(order, modulus, p) != one:
            continue
        if all(_polypowmod_x(c, modulus, p) != one for c in cofactors):
            return tuple(modulus)
    raise ArithmeticError(f"no primitive polynomial of degree {n} over GF({p})")


@lru_cache(maxsize=None)
def _prime_root(p):
    if p == 2:
        return 1
    cofactors = [(p - 1) // r for r in factorint(p - 1)]
    for g in range(2, p):
        if all(pow(g, c, p) != 1 for c in cofactors):
            return g
    raise ArithmeticError(p)

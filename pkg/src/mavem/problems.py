"""Manufactured test problems with closed-form derivatives."""
import numpy as np

from .forms import ProblemData

PROBLEMS = ("quadratic", "p1", "p2", "p3")


class DerivativeMismatchError(ValueError):
    pass


def _xy(p):
    p = np.asarray(p, dtype=float)
    return p[..., 0], p[..., 1]


def _hess(hxx, hxy, hyy):
    H = np.empty(np.shape(hxx) + (2, 2))
    H[..., 0, 0] = hxx
    H[..., 0, 1] = H[..., 1, 0] = hxy
    H[..., 1, 1] = hyy
    return H


def _quadratic():
    u = lambda p: _xy(p)[0] ** 2 + _xy(p)[1] ** 2
    grad = lambda p: 2.0 * np.asarray(p, dtype=float)
    hess = lambda p: _hess(*(np.full(np.shape(p)[:-1], v) for v in (2.0, 0.0, 2.0)))
    lap = lambda p: np.full(np.shape(p)[:-1], 4.0)
    bilap = lambda p: np.zeros(np.shape(p)[:-1])
    return u, grad, hess, lap, bilap


def _p1():
    def u(p):
        x, y = _xy(p)
        return (x**4 + y**4) / 12.0

    def grad(p):
        x, y = _xy(p)
        return np.stack([x**3 / 3.0, y**3 / 3.0], axis=-1)

    def hess(p):
        x, y = _xy(p)
        return _hess(x**2, 0.0 * x, y**2)

    lap = lambda p: _xy(p)[0] ** 2 + _xy(p)[1] ** 2
    bilap = lambda p: np.full(np.shape(p)[:-1], 4.0)
    return u, grad, hess, lap, bilap


def _p2():
    def u(p):
        x, y = _xy(p)
        return np.exp((x**2 + y**2) / 2.0)

    def grad(p):
        return np.asarray(p, dtype=float) * u(p)[..., None]

    def hess(p):
        x, y = _xy(p)
        e = u(p)
        return _hess((1 + x**2) * e, x * y * e, (1 + y**2) * e)

    def lap(p):
        x, y = _xy(p)
        r2 = x**2 + y**2
        return (2 + r2) * u(p)

    def bilap(p):
        x, y = _xy(p)
        r2 = x**2 + y**2
        return (r2**2 + 8 * r2 + 8) * u(p)

    return u, grad, hess, lap, bilap


def _p3():
    def u(p):
        x, y = _xy(p)
        return x * np.sin(x) + y * np.sin(y)

    def d1(s):
        return np.sin(s) + s * np.cos(s)

    def d2(s):
        return 2 * np.cos(s) - s * np.sin(s)

    def d4(s):
        return -4 * np.cos(s) + s * np.sin(s)

    def grad(p):
        x, y = _xy(p)
        return np.stack([d1(x), d1(y)], axis=-1)

    def hess(p):
        x, y = _xy(p)
        return _hess(d2(x), 0.0 * x, d2(y))

    lap = lambda p: d2(_xy(p)[0]) + d2(_xy(p)[1])
    bilap = lambda p: d4(_xy(p)[0]) + d4(_xy(p)[1])
    return u, grad, hess, lap, bilap


_TABLE = {"quadratic": _quadratic, "p1": _p1, "p2": _p2, "p3": _p3}


def exact_fields(name):
    """``(u, grad, hess, lap, bilap)`` callables for a named solution."""
    if name not in _TABLE:
        raise ValueError(f"unknown problem {name!r}; choose from {PROBLEMS}")
    return _TABLE[name]()


def manufactured(name, epsilon, boundary="exact", validate=True):
    """Problem data whose exact solution is the named function.

    ``boundary="exact"`` sets psi to the Laplacian of the solution, so the
    solution solves the regularised problem and f = det D2u - eps lap^2 u.
    ``boundary="vanishing"`` sets psi = epsilon and f = det D2u; the named
    function is then the limit solution as epsilon -> 0.
    """
    u, grad, hess, lap, bilap = exact_fields(name)
    if validate:
        validate_derivatives(name)
    if boundary == "exact":
        f = lambda p: np.linalg.det(hess(p)) - epsilon * bilap(p)
        psi = lap
    elif boundary == "vanishing":
        f = lambda p: np.linalg.det(hess(p))
        psi = lambda p: np.full(np.shape(p)[:-1], float(epsilon))
    else:
        raise ValueError(f"unknown boundary mode {boundary!r}")
    return ProblemData(epsilon=float(epsilon), f=f, g=u, psi=psi, g_hess=hess,
                       u=u, grad_u=grad, hess_u=hess, name=name)


def validate_derivatives(name, n_points=7, rtol=1e-5, seed=0):
    """Compare the closed-form derivatives with central differences at random points."""
    u, grad, hess, lap, bilap = exact_fields(name)
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.1, 0.9, size=(n_points, 2))
    d = 1e-3
    E = np.eye(2) * d
    fd_grad = np.stack([(u(pts + E[i]) - u(pts - E[i])) / (2 * d) for i in range(2)], -1)
    fd_hess = np.stack([(grad(pts + E[i]) - grad(pts - E[i])) / (2 * d) for i in range(2)], -2)
    fd_lap = np.trace(fd_hess, axis1=-2, axis2=-1)
    # fourth derivatives from a five-point Laplacian of lap
    h = 1e-2
    fd_bilap = sum((-lap(pts + 2 * h * e) + 16 * lap(pts + h * e) - 30 * lap(pts)
                    + 16 * lap(pts - h * e) - lap(pts - 2 * h * e)) / (12 * h * h)
                   for e in np.eye(2))
    checks = {"gradient": (grad(pts), fd_grad), "hessian": (hess(pts), fd_hess),
              "laplacian": (lap(pts), np.trace(hess(pts), axis1=-2, axis2=-1)),
              "laplacian (fd)": (lap(pts), fd_lap), "bilaplacian": (bilap(pts), fd_bilap)}
    for what, (exact, approx) in checks.items():
        scale = max(1.0, np.abs(exact).max())
        if np.abs(exact - approx).max() > rtol * scale:
            raise DerivativeMismatchError(f"{name}: {what} disagrees with finite differences")

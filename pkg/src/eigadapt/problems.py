"""The built-in eigenvalue problems: geometry, coefficients and oracles.

Each problem bundles a domain geometry with vectorized coefficient fields
for the diffusion tensor D(x) and the density rho(x), plus (when known) a
reference spectrum: analytic for the square, Bessel zeros for the circular
sector, and frozen fine-mesh fixtures for the L-shape and the ring test.
Image-driven problems (surface Laplacian, nonlinear-diffusion
linearization) take any PGM gray image; a synthetic test image generator
keeps the test suite self-contained.
"""

import math
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Optional

import numpy as np

from .errors import PgmError
from .mesh import Arc, Geometry, Segment

__all__ = [
    "EigenProblem", "GraySurface", "bessel_j", "bessel_zero",
    "sector_exact_eigenvalues", "sector_mode_orders",
    "load_gray_surface", "parse_pgm", "write_pseudo_bunny_pgm",
    "problem_square", "problem_lshape", "problem_ring", "problem_sector",
    "problem_laplace_beltrami", "problem_perona_malik", "get_problem",
    "PROBLEM_NAMES",
]


@dataclass
class EigenProblem:
    """Domain, coefficients, and an optional reference spectrum."""
    name: str
    geometry: Geometry
    diffusion: Callable          # points (m, 2) -> compact tensors (m, 3)
    density: Callable            # points (m, 2) -> positive scalars (m,)
    reference: Optional[Callable] = None   # j (1-based) -> lambda_j

    def reference_eigenvalues(self, count):
        if self.reference is None:
            return None
        return np.array([self.reference(j) for j in range(1, count + 1)])


# ---------------------------------------------------------------------------
# Bessel functions of the first kind and their zeros


def _bessel_series(nu, x):
    """Ascending power series, accumulated in extended precision since the
    alternating terms grow large before they decay."""
    half = np.longdouble(0.5) * np.longdouble(x)
    term = half ** np.longdouble(nu) / np.longdouble(math.gamma(nu + 1.0))
    total = term
    hh = half * half
    for k in range(1, 400):
        term = -term * hh / (np.longdouble(k) * np.longdouble(nu + k))
        total += term
        if abs(term) < 1e-24 * max(abs(total), np.longdouble(1e-30)):
            break
    return float(total)


def _bessel_backward(nu, x):
    """Miller's backward recurrence, normalized by the even-order sum
    identity (x/2)^mu = sum_k (mu+2k) Gamma(mu+k)/k! J_{mu+2k}(x)."""
    m = int(math.floor(nu))
    mu = nu - m                 # fractional base order in [0, 1)
    nstart = int(x + 12.0 * x ** (1.0 / 3.0) + 25.0) + m

    fp = 0.0                    # f at order mu + n + 1
    fc = 1e-30                  # f at order mu + n
    target = 0.0
    total = 0.0
    coeff_cache = {}

    def coeff(k):
        # (mu + 2k) Gamma(mu + k) / k!, iteratively to dodge overflow
        if k in coeff_cache:
            return coeff_cache[k]
        if mu == 0.0:
            c = 1.0 if k == 0 else 2.0
        elif k == 0:
            c = math.gamma(mu + 1.0)
        else:
            c = coeff(k - 1) * (mu + 2 * k) * (mu + k - 1) \
                / ((mu + 2 * k - 2) * k)
        coeff_cache[k] = c
        return c

    for n in range(nstart, -1, -1):
        order = mu + n
        fn = 2.0 * (order + 1.0) / x * fc - fp
        fp, fc = fc, fn
        if n % 2 == 0:
            total += coeff(n // 2) * fc
        if n == m:
            target = fc
        if abs(fc) > 1e250:
            fp *= 1e-250
            fc *= 1e-250
            total *= 1e-250
            target *= 1e-250
    if total == 0.0:
        return 0.0
    return target * (0.5 * x) ** mu / total


def bessel_j(nu, x):
    """J_nu(x) to 1e-10 absolute for nu in [0, 10], x in [0, 50]."""
    if not 0.0 <= nu <= 10.0:
        raise ValueError("order out of supported range [0, 10]")
    if not 0.0 <= x <= 50.0:
        raise ValueError("argument out of supported range [0, 50]")
    if x == 0.0:
        return 1.0 if nu == 0.0 else 0.0
    if x <= max(10.0, 2.0 * nu):
        return _bessel_series(nu, x)
    return _bessel_backward(nu, x)


def bessel_zero(nu, j):
    """The j-th positive zero of J_nu: 0.1-step sign scan plus bisection."""
    if j < 1:
        raise ValueError("zero index must be >= 1")
    step = 0.1
    x0 = step
    f0 = bessel_j(nu, x0)
    found = 0
    while x0 < 50.0:
        x1 = min(x0 + step, 50.0)
        f1 = bessel_j(nu, x1)
        if f0 == 0.0:
            found += 1
            if found == j:
                return x0
        elif f0 * f1 < 0.0:
            found += 1
            if found == j:
                lo, hi = x0, x1
                flo = f0
                while hi - lo > 1e-10:
                    mid = 0.5 * (lo + hi)
                    fm = bessel_j(nu, mid)
                    if fm == 0.0:
                        return mid
                    if flo * fm < 0.0:
                        hi = mid
                    else:
                        lo, flo = mid, fm
                return 0.5 * (lo + hi)
        x0, f0 = x1, f1
    raise ValueError("zero %d of J_%g not bracketed below x = 50" % (j, nu))


def sector_exact_eigenvalues(count):
    """Eigenvalues of the 3*pi/2 unit sector: alpha^2 over all zeros alpha
    of J_{2m/3}, m = 1, 2, ..., merged in ascending order."""
    per_order = count + 2
    candidates = []
    for m in range(1, count + 3):
        nu = 2.0 * m / 3.0
        if nu > 10.0:
            break
        for i in range(1, per_order + 1):
            try:
                z = bessel_zero(nu, i)
            except ValueError:
                break
            candidates.append((z * z, m, i))
    candidates.sort()
    if len(candidates) < count:
        raise ValueError("not enough sector eigenvalues below the "
                         "supported Bessel range")
    return candidates[:count]


def sector_mode_orders(count):
    """The angular orders m_j of the first `count` sector eigenvalues."""
    return [m for _, m, _ in sector_exact_eigenvalues(count)]


# ---------------------------------------------------------------------------
# PGM images and bilinear gray surfaces


def parse_pgm(data):
    """Parse a P2 (ASCII) or P5 (binary) PGM byte string.

    Returns (values row-major float array in [0, 1], width, height).
    Raises PgmError carrying the byte offset of the first defect.
    """
    if not isinstance(data, (bytes, bytearray)):
        raise TypeError("parse_pgm expects bytes")
    n = len(data)
    pos = 0

    def skip_separators(pos, need_one=False):
        seen = False
        while pos < n:
            ch = data[pos:pos + 1]
            if ch.isspace():
                pos += 1
                seen = True
            elif ch == b"#":
                while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                    pos += 1
                seen = True
            else:
                break
        if need_one and not seen:
            raise PgmError("expected whitespace", pos)
        return pos

    def read_token(pos):
        pos = skip_separators(pos)
        start = pos
        while pos < n and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise PgmError("unexpected end of header", start)
        return data[start:pos], pos

    magic, pos = read_token(pos)
    if magic not in (b"P2", b"P5"):
        raise PgmError("not a PGM file (magic %r)" % magic, 0)

    fields = []
    for _ in range(3):
        tok, pos = read_token(pos)
        if not tok.isdigit():
            raise PgmError("malformed integer %r in header" % tok,
                           pos - len(tok))
        fields.append(int(tok))
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise PgmError("degenerate image size %dx%d" % (width, height), 0)
    if not 0 < maxval <= 65535:
        raise PgmError("unsupported maxval %d" % maxval, 0)

    if magic == b"P5":
        if pos >= n or not data[pos:pos + 1].isspace():
            raise PgmError("missing separator before binary payload", pos)
        pos += 1
        bytes_per = 1 if maxval <= 255 else 2
        need = width * height * bytes_per
        if n - pos < need:
            raise PgmError("binary payload truncated (%d of %d bytes)"
                           % (n - pos, need), n)
        raw = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos)
        if bytes_per == 2:
            raw = raw.reshape(-1, 2)
            vals = raw[:, 0].astype(np.uint32) * 256 + raw[:, 1]
        else:
            vals = raw.astype(np.uint32)
    else:
        vals = np.empty(width * height, dtype=np.uint32)
        for i in range(width * height):
            tok, pos = read_token(pos)
            if not tok.isdigit():
                raise PgmError("malformed pixel value %r" % tok,
                               pos - len(tok))
            vals[i] = int(tok)
    if np.any(vals > maxval):
        raise PgmError("pixel value exceeds maxval", pos)
    grid = vals.reshape(height, width).astype(float) / maxval
    return grid, width, height


class GraySurface:
    """Bilinear interpolant of a gray image over the unit square.

    Pixel (0, 0) -- the first pixel of the payload -- maps to the lower
    left corner; the gradient is analytic inside each pixel patch, with
    points on pixel lines resolved to the lower-left patch.
    """

    def __init__(self, grid):
        grid = np.asarray(grid, dtype=float)
        if grid.ndim != 2 or grid.shape[0] < 2 or grid.shape[1] < 2:
            raise ValueError("gray surface needs at least a 2x2 grid")
        self.grid = grid
        self.height, self.width = grid.shape

    def _patch(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        sx = self.width - 1.0
        sy = self.height - 1.0
        gx = pts[:, 0] * sx
        gy = pts[:, 1] * sy
        ix = np.clip(np.ceil(gx).astype(int) - 1, 0, self.width - 2)
        iy = np.clip(np.ceil(gy).astype(int) - 1, 0, self.height - 2)
        u = gx - ix
        v = gy - iy
        z00 = self.grid[iy, ix]
        z10 = self.grid[iy, ix + 1]
        z01 = self.grid[iy + 1, ix]
        z11 = self.grid[iy + 1, ix + 1]
        return u, v, z00, z10, z01, z11, sx, sy

    def value(self, points):
        u, v, z00, z10, z01, z11, _, _ = self._patch(points)
        return (z00 * (1 - u) * (1 - v) + z10 * u * (1 - v)
                + z01 * (1 - u) * v + z11 * u * v)

    def gradient(self, points):
        u, v, z00, z10, z01, z11, sx, sy = self._patch(points)
        dx = ((z10 - z00) * (1 - v) + (z11 - z01) * v) * sx
        dy = ((z01 - z00) * (1 - u) + (z11 - z10) * u) * sy
        return np.stack([dx, dy], axis=-1)


def load_gray_surface(path):
    with open(path, "rb") as fh:
        grid, _, _ = parse_pgm(fh.read())
    return GraySurface(grid)


def write_pseudo_bunny_pgm(path, size=64):
    """Write a synthetic gray image: smoothed blobs on a flat background.

    A stand-in for an arbitrary photographic input; the sharp (but
    resolved) blob rims give the strong gray-level discontinuities the
    image problems are about.
    """
    n = int(size)
    xs = (np.arange(n) + 0.5) / n
    x, y = np.meshgrid(xs, xs)
    w = 1.2 / n            # rim width: steep yet resolved on the pixel grid

    def blob(cx, cy, rx, ry, angle=0.0):
        ca, sa = math.cos(angle), math.sin(angle)
        u = (x - cx) * ca + (y - cy) * sa
        v = -(x - cx) * sa + (y - cy) * ca
        d = np.sqrt((u / rx) ** 2 + (v / ry) ** 2) - 1.0
        scale = min(rx, ry)
        return 1.0 / (1.0 + np.exp(np.clip(d * scale / w, -60, 60)))

    img = 0.15 * np.ones_like(x)
    img += 0.55 * blob(0.45, 0.42, 0.26, 0.20, 0.3)      # body
    img += 0.45 * blob(0.68, 0.62, 0.12, 0.11)           # head
    img += 0.35 * blob(0.62, 0.80, 0.035, 0.12, -0.25)   # ear
    img += 0.35 * blob(0.76, 0.79, 0.035, 0.12, 0.25)    # ear
    img = np.clip(img, 0.0, 1.0)
    pixels = np.round(img * 255).astype(np.uint8)
    header = b"P5\n# synthetic test image\n%d %d\n255\n" % (n, n)
    with open(path, "wb") as fh:
        fh.write(header + pixels.tobytes())
    return path


# ---------------------------------------------------------------------------
# problem library


def _unit_square_geometry():
    return Geometry([Segment((0, 0), (1, 0)), Segment((1, 0), (1, 1)),
                     Segment((1, 1), (0, 1)), Segment((0, 1), (0, 0))])


def _identity_diffusion(points):
    points = np.atleast_2d(points)
    out = np.zeros((len(points), 3))
    out[:, 0] = 1.0
    out[:, 2] = 1.0
    return out


def _unit_density(points):
    return np.ones(len(np.atleast_2d(points)))


def problem_square():
    """Unit square Laplacian; exact spectrum pi^2 (m^2 + n^2)."""
    modes = sorted((m * m + n * n) for m in range(1, 40)
                   for n in range(1, 40))

    def ref(j):
        return math.pi ** 2 * modes[j - 1]

    return EigenProblem(name="square", geometry=_unit_square_geometry(),
                        diffusion=_identity_diffusion,
                        density=_unit_density, reference=ref)


def problem_lshape():
    """L-shaped domain (-1,1)^2 minus [0,1]x[-1,0]; reentrant corner at
    the origin.  Reference eigenvalues come from the stored fine-mesh
    fixture."""
    pts = [(-1, -1), (0, -1), (0, 0), (1, 0), (1, 1), (-1, 1)]
    curves = [Segment(pts[i], pts[(i + 1) % 6]) for i in range(6)]
    return EigenProblem(name="lshape", geometry=Geometry(curves),
                        diffusion=_identity_diffusion,
                        density=_unit_density,
                        reference=_fixture_reference("lshape"))


def problem_ring(chi_parallel=1e3, chi_perp=1.0):
    """Thermal diffusion along a circular magnetic field on (-1,1)^2."""
    sq = [(-1, -1), (1, -1), (1, 1), (-1, 1)]
    curves = [Segment(sq[i], sq[(i + 1) % 4]) for i in range(4)]

    def diffusion(points):
        pts = np.atleast_2d(points)
        r = np.hypot(pts[:, 0], pts[:, 1])
        safe = r >= 1e-8
        bx = np.where(safe, -pts[:, 1] / np.where(safe, r, 1.0), 1.0)
        by = np.where(safe, pts[:, 0] / np.where(safe, r, 1.0), 0.0)
        dchi = chi_parallel - chi_perp
        return np.stack([chi_perp + dchi * bx * bx,
                         dchi * bx * by,
                         chi_perp + dchi * by * by], axis=-1)

    return EigenProblem(name="ring", geometry=Geometry(curves),
                        diffusion=diffusion, density=_unit_density,
                        reference=_fixture_reference("ring"))


def problem_sector():
    """Unit circular sector of angle 3*pi/2; spectrum from Bessel zeros."""
    curves = [Segment((0, 0), (1, 0)),
              Arc((0, 0), 1.0, 0.0, 1.5 * math.pi),
              Segment((0, -1), (0, 0))]
    cache = {}

    def ref(j):
        if j not in cache:
            vals = sector_exact_eigenvalues(max(j, 8))
            for i, (lam, _, _) in enumerate(vals, start=1):
                cache[i] = lam
        return cache[j]

    return EigenProblem(name="sector", geometry=Geometry(curves),
                        diffusion=_identity_diffusion,
                        density=_unit_density, reference=ref)


def _surface_tensor(grad, power):
    gx = grad[:, 0]
    gy = grad[:, 1]
    g2 = gx * gx + gy * gy
    pref = (1.0 + g2) ** -power
    return np.stack([pref * (1.0 + gy * gy),
                     pref * (-gx * gy),
                     pref * (1.0 + gx * gx)], axis=-1)


def problem_laplace_beltrami(surface):
    """Surface Laplacian of the graph z = psi(x, y) over the unit square."""

    def diffusion(points):
        return _surface_tensor(surface.gradient(points), 0.5)

    def density(points):
        grad = surface.gradient(points)
        return np.sqrt(1.0 + np.sum(grad ** 2, axis=-1))

    return EigenProblem(name="laplace-beltrami",
                        geometry=_unit_square_geometry(),
                        diffusion=diffusion, density=density)


def problem_perona_malik(surface):
    """Linearized smoothing-filter operator for the image v0 = psi."""

    def diffusion(points):
        return _surface_tensor(surface.gradient(points), 1.5)

    return EigenProblem(name="perona-malik",
                        geometry=_unit_square_geometry(),
                        diffusion=diffusion, density=_unit_density)


def _fixture_reference(name):
    values = {}

    def ref(j):
        if not values:
            text = resources.files("eigadapt").joinpath(
                "data/%s_reference.txt" % name).read_text()
            for line in text.splitlines():
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                idx, lam = line.split()
                values[int(idx)] = float(lam)
        if j not in values:
            raise KeyError("no reference eigenvalue %d for %s" % (j, name))
        return values[j]

    return ref


PROBLEM_NAMES = ("square", "lshape", "ring", "sector")


def get_problem(name, surface_path=None):
    """Problem lookup by name; image problems need a PGM path."""
    if name == "square":
        return problem_square()
    if name == "lshape":
        return problem_lshape()
    if name == "ring":
        return problem_ring()
    if name == "sector":
        return problem_sector()
    if name in ("laplace-beltrami", "perona-malik"):
        if surface_path is None:
            raise ValueError("problem %r needs a PGM image path" % name)
        surface = load_gray_surface(surface_path)
        if name == "laplace-beltrami":
            return problem_laplace_beltrami(surface)
        return problem_perona_malik(surface)
    raise KeyError("unknown problem %r; valid names: %s"
                   % (name, ", ".join(PROBLEM_NAMES
                                      + ("laplace-beltrami",
                                         "perona-malik"))))

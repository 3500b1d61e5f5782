"""Exception hierarchy shared by all modules."""


class NumericError(Exception):
    """Base class for numerical failures (CLI exit code 3)."""


class DegenerateSpectrum(NumericError):
    """Two eigenvalues are closer than the requested gap tolerance."""

    def __init__(self, min_gap, gap_tol, t=None):
        self.min_gap = min_gap
        self.gap_tol = gap_tol
        self.t = t
        where = "" if t is None else f" at t={t:g}"
        super().__init__(f"min eigenvalue gap {min_gap:.3e} < {gap_tol:.3e}{where}")


class NoConvergence(NumericError):
    """QR iteration exceeded its sweep budget."""


class SingularMatrix(NumericError):
    """A pivot fell below the singularity threshold."""


class NotPositiveDefinite(NumericError):
    """Cholesky factorization met a non-positive pivot."""


class AmbiguousMatching(NumericError):
    """Best and second-best eigenvalue assignments have (nearly) equal cost."""


class ZeroGaugeFactor(ValueError):
    """A gauge factor equal to zero was supplied."""


class InsufficientSamples(ValueError):
    """Too few Monte Carlo samples requested."""


class GridTooCoarse(ValueError):
    """Quadrature grid does not resolve the regularization scale near an atom."""


class NoRoot(NumericError):
    """No positive fixed point exists (point outside the support)."""


class ShockDetected(NumericError):
    """Characteristics cross: the characteristic map lost monotonicity."""

    def __init__(self, msg, z=None, t=None):
        self.z = z
        self.t = t
        super().__init__(msg)


class RemovableSingularity(UserWarning):
    """Closed form evaluated through a removable singularity by series."""


class EnsembleError(NumericError):
    """One or more trajectories of an ensemble failed."""

    def __init__(self, failures):
        self.failures = failures  # list of (traj_index, exception)
        lines = [f"trajectory {k}: {type(e).__name__}: {e}" for k, e in failures]
        super().__init__("; ".join(lines))

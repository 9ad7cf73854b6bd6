"""Exception taxonomy shared by all fmm_lab modules.

Operational errors (bad inputs, exhausted budgets) derive from FmmLabError.
A paper-bound violation is *not* an exception: operations return the
numbers and callers (tests, CLI) decide; the CLI maps violations to exit
status 2 and operational errors to exit status 1.
"""


class FmmLabError(Exception):
    """Base class for all errors raised by fmm_lab."""


class EmptySupport(FmmLabError):
    """Single-site potential has no nonzero entry."""


class UnnormalizedSupport(FmmLabError):
    """Single-site potential does not start and end with nonzero entries."""


class InsufficientCouplings(FmmLabError):
    """Coupling field does not cover every index feeding the requested box."""


class EmptyBox(FmmLabError):
    """Requested box interval contains no sites."""


class BadSubbox(FmmLabError):
    """Sub-interval is not contained in the box."""


class NearSingular(FmmLabError):
    """(H - z) failed the relative-pivot singularity guard.

    For random energies this is a measure-zero event; Monte-Carlo callers
    resample and count the hit.
    """


class SingularV(FmmLabError):
    """The matrix multiplying the averaging variable is (numerically) singular."""


class SingularCombination(FmmLabError):
    """The alpha-weighted combination of matrices is singular."""


class NoApplicableAssumption(FmmLabError):
    """Density satisfies neither the W^{1,1} branch nor the compact-support branch."""


class QuadratureFailure(FmmLabError):
    """Adaptive quadrature exhausted its budget without reaching tolerance."""


class NotConnectedSupport(FmmLabError):
    """Operation requires a gap-free single-site potential (r = 0)."""


class SearchExhausted(FmmLabError):
    """Feasible-alpha search failed; existence is guaranteed, so this is internal."""


class ExcessiveResampling(FmmLabError):
    """Singularity-guard hits exceeded the measure-zero budget."""


class DegenerateDesign(FmmLabError):
    """Regression design matrix is rank deficient (e.g. all distances equal)."""


class ExponentOutOfRange(FmmLabError):
    """Fractional exponent outside the theorem's admissible interval."""


class SeparationViolated(FmmLabError):
    """Site pair closer than the statement's minimal separation."""


class NotExtractableError(FmmLabError):
    """No positive single-site block exists (root test fails)."""


class ConvergenceFailure(FmmLabError):
    """Eigensolver did not converge; fatal."""


class ConfigInvalid(FmmLabError):
    """Experiment configuration failed validation; message names the field."""

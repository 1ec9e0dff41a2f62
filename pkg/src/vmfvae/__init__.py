"""von Mises-Fisher latent variables for text VAEs.

Subpackages: :mod:`specialfn` (log Bessel I, log-gamma), :mod:`distributions`
(vMF and Gaussian posteriors), :mod:`tensor` (reverse-mode autodiff),
:mod:`models` (NVDM, NVRNN, RNNLM), :mod:`corpus`, :mod:`probes` and
:mod:`cli`.
"""
from . import corpus, distributions, models, probes, specialfn, tensor
from ._backend import available as available_backends
from ._backend import current as current_backend
from ._backend import use_backend
from .errors import ConfigError, CorpusError, DomainError, NumericalError, SamplerError, ShapeError, VmfVaeError

__version__ = "0.1.0"

__all__ = [
    "corpus", "distributions", "models", "probes", "specialfn", "tensor", "available_backends",
    "current_backend", "use_backend", "ConfigError", "CorpusError", "DomainError", "NumericalError",
    "SamplerError", "ShapeError", "VmfVaeError", "__version__",
]

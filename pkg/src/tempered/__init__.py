"""Hermite-coefficient toolkit for tempered distributions and generalized random fields."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AliasingError, CapacityError, InsufficientSampleError, InvalidArgumentError,
    PropagationError, TemperedError,
)
from .seqspace import (  # noqa: E402
    GrowthEnvelope, SeqBatch, TruncatedSeq, check_envelope, dual_maximizer, dual_norm,
    envelope_norm_bound, norm_p, pairing, zeta_const,
)
from .hermite import (  # noqa: E402
    QuadratureRule, gauss_hermite_rule, hermite_eval, hermite_eval_multi, hermite_reconstruct,
    hermite_transform,
)
from .rng import RandomStream  # noqa: E402
from .fields import (  # noqa: E402
    FieldSpec, field_pairing, gaussian_charfun_exact, sample_batch, sample_field,
)

"""Approximate sample-and-query access to vectors, states, and matrices.

The library builds classical analogues of quantum state access: metered
oracles that sample indices with squared-amplitude weights, answer
bounded-precision entry queries, and estimate norms -- plus the
composition rules, inner-product estimators, Pauli-basis machinery, and
the two-party protocol that run on top of them.  Everything random flows
through explicit seeded generators; everything costly flows through
ledgers.
"""

from .access import (
    DEFAULT_ITERATION_CAP,
    SAMPLE_FAILED,
    STARVATION_LIMIT,
    AccessHandle,
    AdversarialQuery,
    EstimatorReport,
    NonterminationCap,
    SampleOutcome,
    SamplerStarvation,
    UniformNoiseQuery,
    boosted_query,
    lower_median,
    relative_estimate,
    sample_valid,
)
from .backends import (
    AmplitudeTable,
    BudgetExceeded,
    DominanceViolation,
    MatrixBlockEncoding,
    PrepMeasureBackend,
    VectorBackedHandle,
    estimate_abs_amplitudes,
    exact_handle,
    query_amplitude,
    wrap_oversampled,
    wrap_perturbed,
)
from .compose import (
    ConstructionFailed,
    LinearCombinationHandle,
    LinearCombinationSpec,
    lincomb_deterministic,
    lincomb_probabilistic,
)
from .core import (
    CostLedger,
    DenseVector,
    DimensionMismatchError,
    L2Distribution,
    LedgerSnapshot,
    ZeroVectorError,
    check_tvd_bound,
    dump_matrix_json,
    dump_vector_json,
    l2_distribution,
    load_matrix_json,
    load_vector_json,
    norm2sq,
    one_norm,
    tvd,
)
from .estimators import (
    DEFAULT_CONSTANTS,
    EstimatorConstants,
    InnerProductConfig,
    NonUnitNorm,
    PointEstimatorTrace,
    RelativeEstimateFailed,
    inner_product_asym,
    inner_product_asym_perturbed,
    inner_product_real_exact,
    inner_product_sym,
    inner_product_sym_perturbed,
)
from .harness import (
    LoopbackTransport,
    PartyEndpoint,
    RemoteHandle,
    coordinate_overlap,
    serve,
    tcp_party,
)
from .pauli import (
    CorollaryCost,
    DimensionNotPowerOfTwo,
    MagicReport,
    NotNormalized,
    PauliRepresentation,
    PauliSampleHandle,
    distributed_overlap,
    exact_pauli_sampler,
    haar_random_state,
    magic_report,
    pauli_cdf,
    pauli_overlap,
    pauli_representation,
    random_clifford_state,
    zero_state,
)
from .rng import child_seed, derive_seed, generator
from .wire import (
    KAPPA_SENTINEL,
    MalformedFrame,
    ProtocolError,
    SessionAbort,
    SocketTransport,
    connect_tcp,
    decode_body,
    encode_body,
    encode_frame,
)

__version__ = "0.1.0"

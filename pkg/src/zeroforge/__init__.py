"""Zero-constellation modulation toolkit.

Binary messages ride on the zeros of a complex polynomial: each bit
places one zero inside or outside the unit circle on a fixed ray.  The
package covers encoding, direct zero-test and neural decoding, gradient
training of the constellation geometry, and Monte-Carlo error-rate
measurement over AWGN and flat-fading channels.
"""

from .channel import (
    ChannelConfig,
    apply_awgn,
    apply_flat_fading,
    ebn0_to_noise_var,
    ofdm_path,
)
from .constellation import (
    Constellation,
    bits_to_zeros,
    canonical_constellation,
    constellation_from_dict,
    constellation_to_dict,
    dizet_radius,
    encode,
    load_constellation,
    save_constellation,
)
from .decoders import (
    MlpParams,
    dizet_decode,
    dizet_tau,
    load_mlp,
    mlp_forward,
    mlp_from_dict,
    mlp_to_dict,
    nn_decode,
    real_bijection,
    save_mlp,
)
from .estimators import (
    BmoczEncoder,
    DizetConstellationLearner,
    DizetDecoder,
    JointConstellationLearner,
    NeuralDecoder,
)
from .errors import (
    ConvergenceError,
    DegeneratePolynomialError,
    DegenerateSpectrumError,
    InvalidArgumentError,
    NotBracketedError,
    TrainingAbortError,
    UnsupportedSizeError,
    ValidationError,
    ZeroforgeError,
)
from .montecarlo import (
    GainEntry,
    GainReport,
    HistogramResult,
    Scheme,
    SweepResult,
    class_histogram,
    ebn0_at_bler,
    measure_gain,
    run_sweep,
    wilson_interval,
    write_gain_report,
    write_sweep_csv,
)
from .poly import (
    ComplexPoly,
    companion_matrix,
    eigenvalue_jacobian,
    eval_poly,
    normalize_energy,
    poly_from_zeros,
    roots,
)
from .training import (
    DizetTrainResult,
    NnTrainResult,
    TrainConfig,
    bce_loss,
    config_from_dict,
    hinge_loss,
    lr_schedule,
    run_gradient_checks,
    train_dizet,
    train_nn,
)

__version__ = "0.1.0"

__all__ = [
    "BmoczEncoder",
    "ChannelConfig",
    "ComplexPoly",
    "Constellation",
    "ConvergenceError",
    "DegeneratePolynomialError",
    "DegenerateSpectrumError",
    "DizetConstellationLearner",
    "DizetDecoder",
    "DizetTrainResult",
    "GainEntry",
    "GainReport",
    "HistogramResult",
    "InvalidArgumentError",
    "JointConstellationLearner",
    "MlpParams",
    "NeuralDecoder",
    "NnTrainResult",
    "NotBracketedError",
    "Scheme",
    "SweepResult",
    "TrainConfig",
    "TrainingAbortError",
    "UnsupportedSizeError",
    "ValidationError",
    "ZeroforgeError",
    "apply_awgn",
    "apply_flat_fading",
    "bce_loss",
    "bits_to_zeros",
    "canonical_constellation",
    "class_histogram",
    "companion_matrix",
    "config_from_dict",
    "constellation_from_dict",
    "constellation_to_dict",
    "dizet_decode",
    "dizet_radius",
    "dizet_tau",
    "ebn0_at_bler",
    "ebn0_to_noise_var",
    "eigenvalue_jacobian",
    "encode",
    "eval_poly",
    "hinge_loss",
    "load_constellation",
    "load_mlp",
    "lr_schedule",
    "measure_gain",
    "mlp_forward",
    "mlp_from_dict",
    "mlp_to_dict",
    "nn_decode",
    "normalize_energy",
    "ofdm_path",
    "poly_from_zeros",
    "real_bijection",
    "roots",
    "run_gradient_checks",
    "run_sweep",
    "save_constellation",
    "save_mlp",
    "train_dizet",
    "train_nn",
    "wilson_interval",
    "write_gain_report",
    "write_sweep_csv",
    "__version__",
]

"""Python bindings for the contramod toolkit.

Frames are float32 arrays shaped (N, 2, L): row 0 holds the in-phase
samples and row 1 the quadrature samples.
"""

import json as _json

from ._contramod import (
    ContramodError,
    Dataset,
    Model,
    SplitTag,
    __version__,
    generate,
    iqd_file_size,
    load_iqd,
    normalize,
    nt_xent,
    pretrain,
    rotate,
    run_cli,
    save_iqd,
    scheme_code,
    scheme_names,
    select,
    split,
)
from ._contramod import evaluate as _evaluate


def evaluate(labels, predictions, snrs_db, num_classes=11):
    """Metrics report (overall, per-SNR accuracy and confusion) as a dict."""
    return _json.loads(_evaluate(list(labels), list(predictions), list(snrs_db), num_classes))


__all__ = [
    "ContramodError",
    "Dataset",
    "Model",
    "SplitTag",
    "__version__",
    "evaluate",
    "generate",
    "iqd_file_size",
    "load_iqd",
    "normalize",
    "nt_xent",
    "pretrain",
    "rotate",
    "run_cli",
    "save_iqd",
    "scheme_code",
    "scheme_names",
    "select",
    "split",
]

"""Risk-limiting audits of contests that mix CVR and no-CVR counting systems.

Ballots are split into a stratum audited by ballot- or batch-level comparison
and a stratum audited by ballot polling; the two tests are combined either
with a fixed split of the margin or with Fisher's method over every split.
"""

from .model import (
    COMPARISON,
    POLLING,
    Batch,
    ContestSpec,
    MarginError,
    MarginTable,
    StateError,
    StratumManifest,
    ValidationError,
    derive_margins,
    diluted_margin_after_handcount,
    worst_case_legacy_reduction,
)
from .comparison import (
    ComparisonEvidence,
    batch_upper_bound,
    clean_sample_size,
    km_pvalue,
    kw_pvalue,
    observed_taint,
)
from .polling import (
    PollingEvidence,
    PollingSample,
    cond_hyper_tail,
    polling_pvalue,
    tri_hyper_tail,
)
from .combination import (
    RiskAllocation,
    adjust_lambda_after_handcount,
    audit_state_step,
    combined_pvalue_over_lambda,
    fisher_combine,
    validate_allocation,
)
from .sampling import draw_ppeb, draw_srs
from .simulation import Scenario, WorkloadSummary, simulate_comparison_workload, simulate_polling_workload

__version__ = "0.1.0"

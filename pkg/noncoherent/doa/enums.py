"""noncoherent-doa enums."""

from enum import Enum


class Method(str, Enum):
    """DOA estimators."""

    proposed1 = "Proposed1"
    proposed1_no_r1 = "Proposed1NoR1"
    proposed2 = "Proposed2"
    sparsity_only = "SparsityOnly"
    low_rank_only = "LowRankOnly"
    noncoherent_music = "NonCoherentMUSIC"
    # Proposed2 second stage fed with the true phases
    genie_phase = "GeniePhase"


class ExitReason(str, Enum):
    """Why an iterative solver stopped."""

    converged = "converged"
    max_iterations = "max_iterations"


class SnrConvention(str, Enum):
    """How the per-antenna SNR maps to the noise variance."""

    # sigma^2 = P_s / SNR, each source having power P_s
    per_source = "per_source"
    # sigma^2 = Q * P_s / SNR, the total received power
    total = "total"

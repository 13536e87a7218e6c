"""Remove collapsed states and compact the model."""

from dataclasses import dataclass, field
import json

import numpy as np

from .model import RationalModel, WfsaParams


@dataclass
class PrunedStructure:
    original_ks: tuple
    surviving_states: tuple

    def __post_init__(self):
        if len(self.original_ks) != len(self.surviving_states):
            raise ValueError("one surviving count per original WFSA")
        for k, s in zip(self.original_ks, self.surviving_states):
            if not 0 <= s <= k:
                raise ValueError(f"surviving states {s} outside 0..{k}")

    @property
    def removed(self):
        return tuple(s == 0 for s in self.surviving_states)

    @property
    def ks(self):
        """Sizes of the WFSAs that are kept."""
        return tuple(s for s in self.surviving_states if s > 0)

    def to_dict(self):
        return {"original_ks": list(self.original_ks), "surviving_states": list(self.surviving_states)}


def count_transitions(structure):
    if isinstance(structure, PrunedStructure):
        return sum(structure.surviving_states)
    return sum(structure)


def check_suffix_removal(norms, epsilon):
    """Whether the sub-epsilon states form a suffix of the chain.

    Returns ``(ok, first_violation)`` where ``first_violation`` is the 1-based
    index of the first removed state that has a kept state after it.
    """
    below = [n < epsilon for n in norms]
    for i, b in enumerate(below):
        if b and not all(below[i:]):
            return False, i + 1
    return True, None


@dataclass
class PruneReport:
    epsilon: float
    norms: list = field(default_factory=list)  # per WFSA, list of raw group norms
    removed: list = field(default_factory=list)  # per WFSA, 1-based removed states
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return {"epsilon": self.epsilon, "norms": self.norms, "removed": self.removed,
                "warnings": self.warnings}

    def to_text(self):
        return json.dumps(self.to_dict(), indent=1) + "\n"


def prune(model, epsilon=0.1):
    """Drop states whose group norm is below ``epsilon``.

    A removed state makes every later state of its chain unreachable, so
    those are removed as well (and reported). WFSAs with no surviving state
    are dropped together with their classifier weight.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    report = PruneReport(epsilon)
    surviving, wfsas, weights = [], [], []
    for j, w in enumerate(model.wfsas):
        norms = [float(x) for x in np.linalg.norm(w.params, axis=1)]
        report.norms.append(norms)
        keep = next((i for i, n in enumerate(norms) if n < epsilon), w.k)
        ok, first = check_suffix_removal(norms, epsilon)
        if not ok:
            stranded = [i + 1 for i in range(keep, w.k) if norms[i] >= epsilon]
            report.warnings.append(
                f"wfsa {j}: state {first} removed before kept states {stranded}; "
                "later states are unreachable and were removed too")
        report.removed.append(list(range(keep + 1, w.k + 1)))
        surviving.append(keep)
        if keep > 0:
            wfsas.append(WfsaParams(w.params[:keep].copy()))
            weights.append(model.classifier_weight[j])
    structure = PrunedStructure(model.ks, tuple(surviving))
    compact = RationalModel(wfsas, np.array(weights, dtype=np.float64),
                            model.classifier_bias.copy(), model.d_emb)
    return structure, compact, report


def zero_pruned_groups(model, structure):
    """Copy of ``model`` with every removed group set to exactly zero."""
    out = model.copy()
    for w, s in zip(out.wfsas, structure.surviving_states):
        w.params[s:] = 0.0
    return out

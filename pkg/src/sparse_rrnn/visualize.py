"""Top/bottom scoring phrases per WFSA, pattern tables and tradeoff CSV."""

import csv
import io
from dataclasses import dataclass

from .model import timestep_weights
from .wfsa import extreme_path

SL_MARK = "_SL"
ELLIPSIS = "..."
END_MARK = "</s>"
MAX_INLINE_LOOPS = 2


@dataclass(frozen=True)
class Annotation:
    position: int
    token: str
    kind: str  # "MAIN" or "SELF_LOOP"
    state: int  # transition index for MAIN, looping state for SELF_LOOP


@dataclass
class PhraseMatch:
    doc_id: int
    wfsa_index: int
    score: float
    path: object  # PathRecord
    annotations: tuple
    span: tuple  # (first main position, document length)

    @property
    def main_tokens(self):
        return [a.token for a in self.annotations if a.kind == "MAIN"]


def annotate(path, tokens):
    """Label every token from the first main transition to the end."""
    out = []
    for j, t in enumerate(path.main):
        out.append(Annotation(t, tokens[t], "MAIN", j + 1))
        for s in path.self_loops[j]:
            out.append(Annotation(s, tokens[s], "SELF_LOOP", j + 1))
    out.sort(key=lambda a: a.position)
    return tuple(out)


def _match(doc_id, j, rec, tokens):
    return PhraseMatch(doc_id, j, rec.score, rec, annotate(rec, tokens), (rec.start_time, len(tokens)))


def doc_extremes(model, doc, tokens, doc_id=0):
    """Per WFSA, the ``(max, min)`` PhraseMatch of one document."""
    out = []
    for j, wfsa in enumerate(model.wfsas):
        if len(tokens) == 0:
            out.append((None, None))
            continue
        f, u = timestep_weights(wfsa, doc)
        hi, lo = extreme_path(f, u)
        out.append((_match(doc_id, j, hi, tokens), _match(doc_id, j, lo, tokens)))
    return out


def top_bottom_phrases(model, docs, tokens, n):
    """Per WFSA, the ``n`` highest and ``n`` lowest scoring document phrases.

    Returns a list (one entry per WFSA) of ``(top, bottom)`` lists. Ties are
    broken by document id.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    per_wfsa = [([], []) for _ in model.wfsas]
    for doc_id, (doc, toks) in enumerate(zip(docs, tokens)):
        for j, (hi, lo) in enumerate(doc_extremes(model, doc, toks, doc_id)):
            if hi is not None:
                per_wfsa[j][0].append(hi)
                per_wfsa[j][1].append(lo)
    out = []
    for highs, lows in per_wfsa:
        top = sorted(highs, key=lambda m: (-m.score, m.doc_id))[:n]
        bottom = sorted(lows, key=lambda m: (m.score, m.doc_id))[:n]
        out.append((top, bottom))
    return out


def _loops(tokens):
    if not tokens:
        return []
    if len(tokens) > MAX_INLINE_LOOPS:
        return [ELLIPSIS + SL_MARK]
    return [t + SL_MARK for t in tokens]


def phrase_cells(match, k):
    """``k`` transition cells plus an end cell for one match."""
    rec = match.path
    tok = {a.position: a.token for a in match.annotations}
    # state-0 loops fall before the span and are not shown
    cells = []
    for j in range(k):
        if j >= len(rec.main):
            cells.append("")
            continue
        before = [] if j == 0 else [tok[s] for s in rec.self_loops[j - 1]]
        cells.append(" ".join(_loops(before) + [tok[rec.main[j]]]))
    trailing = rec.self_loops[-1]
    cells.append(" ".join(([ELLIPSIS + SL_MARK] if trailing else []) + [END_MARK]))
    return cells


def _rows(phrases, ks):
    for j, (top, bottom) in enumerate(phrases):
        k = ks[j]
        for kind, matches in (("top", top), ("bottom", bottom)):
            for rank, m in enumerate(matches, 1):
                yield j, k, kind, rank, m, phrase_cells(m, k)


def render_pattern_table(phrases, ks, weights=None):
    """Aligned plain-text table, one block per WFSA."""
    lines = []
    blocks = {}
    for j, k, kind, rank, m, cells in _rows(phrases, ks):
        blocks.setdefault(j, []).append([kind, str(rank), f"{m.score:.4g}"] + cells)
    for j in range(len(phrases)):
        k = ks[j]
        header = ["", "#", "score"] + [f"transition_{i}" for i in range(1, k + 1)] + ["end"]
        rows = [header] + blocks.get(j, [])
        widths = [max(len(r[c]) for r in rows) for c in range(len(header))]
        title = f"WFSA {j} ({k} transitions)"
        if weights is not None:
            title += f" classifier weight {weights[j]:+.4f}"
        lines.append(title)
        for r in rows:
            lines.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
        lines.append("")
    return "\n".join(lines)


def render_pattern_tsv(phrases, ks):
    """Tab-separated variant with one row per match."""
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    width = max(ks, default=0)
    w.writerow(["wfsa", "kind", "rank", "doc_id", "score"]
               + [f"transition_{i}" for i in range(1, width + 1)] + ["end"])
    for j, k, kind, rank, m, cells in _rows(phrases, ks):
        w.writerow([j, kind, rank, m.doc_id, repr(m.score)] + cells[:-1] + [""] * (width - k) + cells[-1:])
    return buf.getvalue()


TRADEOFF_HEADER = ["method", "transitions", "transitions_std", "accuracy", "accuracy_std"]


def emit_tradeoff_csv(runs):
    """CSV of accuracy vs. transitions, sorted by transitions.

    ``runs`` holds ``(transitions, accuracy, accuracy_std, transitions_std, method)``.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRADEOFF_HEADER)
    for trans, acc, acc_std, trans_std, method in sorted(runs, key=lambda r: (r[0], str(r[4]))):
        w.writerow([method, trans, trans_std, acc, acc_std])
    return buf.getvalue()

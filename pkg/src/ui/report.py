"""
Rendering of fits, tests and rejection-rate tables.
"""

import json
import math
import re

import numpy as np

from src.models.montecarlo import STATISTICS, level_key

RULE_WIDTH = 72

# floats travel through json.dumps as tagged strings, then are unquoted
_FLOAT_TAG = "@@f17:"
_TAGGED_FLOAT = re.compile(r'"@@f17:([^"@]+)@@"')


def jsonable(value):
    """Convert numpy scalars/arrays to plain Python and non-finite floats to None."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def format_float(value):
    """17 significant digits, always readable back as a float."""
    text = "%.17g" % value
    if not any(c in text for c in ".e"):
        text += ".0"
    return text


def _tag_floats(value):
    if isinstance(value, dict):
        return {k: _tag_floats(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_tag_floats(v) for v in value]
    if isinstance(value, float):
        return f"{_FLOAT_TAG}{format_float(value)}@@"
    return value


def dumps(payload):
    """Stable-key JSON text; floats are written with 17 significant digits."""
    text = json.dumps(_tag_floats(jsonable(payload)), indent=2, sort_keys=True, allow_nan=False)
    return _TAGGED_FLOAT.sub(r"\1", text) + "\n"


def write_json(payload, path):
    """
    Write a JSON document.

    Raises:
        IOError: If the file cannot be written
    """
    try:
        with open(path, "w", encoding='utf-8') as f:
            f.write(dumps(payload))
    except (IOError, OSError) as e:
        raise IOError(f"Cannot write {path}: {e}")


def write_text(text, path):
    try:
        with open(path, "w", encoding='utf-8') as f:
            f.write(text)
    except (IOError, OSError) as e:
        raise IOError(f"Cannot write {path}: {e}")


def _cell(value, width=6):
    return f"{'-':>{width}}" if value is None else f"{value:{width}.1f}"


def render_manifest_header(manifest):
    """Comment lines carrying the provenance of a table."""
    lines = []
    for key, value in manifest.items():
        if isinstance(value, dict):
            lines.extend(f"# {key}: {name} {digest}" for name, digest in value.items())
        else:
            lines.append(f"# {key}: {value}")
    return "\n".join(lines) + "\n"


def render_rate_table(reports, title="Null rejection rates (%)", policy="fallback",
                      manifest=None):
    """
    Aligned text table: one row per report, one column group per level with
    LR, LR* and LR**, then degeneracy and non-convergence percentages.

    Args:
        reports (list): SimReport rows sharing the same levels
        title (str): Table caption
        policy (str): 'fallback' or 'exclude' for the LR*/LR** columns
        manifest (dict): Run manifest written as a '# key: value' header

    Returns:
        str: The table
    """
    header = render_manifest_header(manifest) if manifest else ""
    if not reports:
        return f"{header}{title}\n(no rows)\n"
    levels = reports[0].levels
    label_width = max(12, max(len(r.label) for r in reports) + 2)
    group_width = 3 * 7

    head1 = " " * label_width + "".join(
        f"{'gamma = ' + format(100 * g, 'g') + '%':^{group_width}}|" for g in levels)
    head1 += f"{'degen':>7}{'fail':>7}"
    head2 = f"{'':<{label_width}}" + "".join(
        "".join(f"{name:>7}" for name in STATISTICS) + "|" for _ in levels)
    head2 += f"{'%':>7}{'%':>7}"

    lines = [title, "=" * len(head1), head1, head2, "-" * len(head1)]
    for report in reports:
        row = f"{report.label:<{label_width}}"
        for g in levels:
            key = level_key(g)
            cells = []
            for name in STATISTICS:
                if policy == "exclude" and name in report.rates_exclude:
                    value = report.rates_exclude[name][key]
                else:
                    value = report.rates[name][key]
                cells.append(" " + _cell(value))
            row += "".join(cells) + "|"
        row += " " + _cell(100.0 * report.degenerate_fraction)
        row += " " + _cell(100.0 * report.nonconvergence_fraction)
        lines.append(row)
    lines.append("-" * len(head1))
    used = ", ".join(f"{r.label}: {r.used}/{r.replications}" for r in reports)
    lines.append(f"replications used: {used}")
    return header + "\n".join(lines) + "\n"


def render_fit(fit, standard_errors, info):
    """Short console summary of a fit."""
    lines = ["=" * RULE_WIDTH, "MAXIMUM LIKELIHOOD FIT", "=" * RULE_WIDTH]
    lines.append(f"log-likelihood : {fit.loglik:.6f}")
    lines.append(f"converged      : {fit.converged} "
                 f"(|grad| = {fit.grad_inf_norm:.2e}, {fit.iterations} iterations, "
                 f"{fit.restarts_used} restarts)")
    if fit.boundary:
        lines.append(f"boundary       : a variance tends to zero (|score| = {fit.score_inf_norm:.2e})")
    lines.append(f"information    : min eig {info['min_eigenvalue']:.4g}, "
                 f"condition {info['condition_number']:.4g}")
    lines.append("-" * RULE_WIDTH)
    lines.append(f"{'parameter':<16}{'estimate':>16}{'std. error':>16}")
    for (name, value), se in zip(fit.theta.to_dict().items(), standard_errors):
        se_text = "-" if not np.isfinite(se) else f"{se:.6g}"
        lines.append(f"{name:<16}{value:>16.6g}{se_text:>16}")
    return "\n".join(lines) + "\n"


def render_test(result, hypothesis_text):
    """Short console summary of a test."""
    lines = ["=" * RULE_WIDTH, f"H0: {hypothesis_text}  (q = {result.q})", "=" * RULE_WIDTH]
    lines.append(f"{'statistic':<12}{'value':>14}{'p-value':>14}")
    for name, value, p in (("LR", result.lr, result.p_lr),
                           ("LR*", result.lr_star, result.p_star),
                           ("LR**", result.lr_star_star, result.p_star_star)):
        lines.append(f"{name:<12}{value:>14.6g}{p:>14.6g}")
    rho_text = "-" if result.rho is None else f"{result.rho:.6g}"
    lines.append(f"rho = {rho_text}   degenerate = {result.degenerate.value}")
    return "\n".join(lines) + "\n"

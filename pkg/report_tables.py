"""
Console tables for the hetren commands.

Every table is rendered with tabulate's grid format; pass/fail cells are coloured with colorama.
click.echo strips the colour codes when the output is not a terminal.
"""
from typing import Any, Dict, List, Optional

from colorama import Fore, Style
from tabulate import tabulate

BANNER = "=" * 60


def mark(passed: bool) -> str:
    if passed:
        return f"{Fore.GREEN}✅{Style.RESET_ALL}"
    return f"{Fore.RED}❌{Style.RESET_ALL}"


def _num(value: Optional[float], fmt: str = ".3e") -> str:
    return "n/a" if value is None else format(value, fmt)


def checks_table(rows: List[Dict[str, Any]]) -> str:
    """rows of {tag, description, passed, detail}"""
    data = [[r["tag"], r["description"], mark(r["passed"]), r["detail"]] for r in rows]
    return tabulate(data, headers=["Tag", "Condition", "✓/✗", "Detail"], tablefmt="grid")


def schedule_table(schedule) -> str:
    data = [
        [k, pair.m, pair.n, f"{pair.product:.12f}", f"{pair.slack:.6f}", f"{zeta:.4g}", f"{vartheta:.4g}"]
        for k, (pair, (zeta, vartheta)) in enumerate(zip(schedule.pairs, schedule.offsets))
    ]
    headers = ["k", "m", "n", "σ^m λ^n", "slack", "ζ", "ϑ"]
    return tabulate(data, headers=headers, tablefmt="grid")


def renorm_table(report, c0_threshold: Optional[float] = None) -> str:
    data = []
    for r in report.records:
        c0_cell = _num(r.sup_c0_error)
        if c0_threshold is not None:
            c0_cell = f"{c0_cell} {mark(r.sup_c0_error < c0_threshold)}"
        data.append([
            r.k, r.pair.m, r.pair.n, c0_cell, _num(r.sup_c1_error), _num(r.cross_check_error),
            _num(r.prod_target_gap), _num(r.lp_s2m_s2n), _num(max(r.hot1, r.hot2, r.hot3)), r.digits,
        ])
    headers = ["k", "m", "n", "C0", "C1", "cross", "|σ^m λ^n - ξ/τ|", "λ_P^m σ_P^2m σ_Q^2n", "h.o.t.", "digits"]
    return tabulate(data, headers=headers, tablefmt="grid")


def certificate_table(cert) -> str:
    sv = cert.sigma_vec
    data = [
        ["ς", ", ".join(f"{s:.6g}" for s in sv.as_tuple()), ""],
        ["κ", f"{cert.kappa:.6g}", ""],
        ["η (ς5)", f"{cert.eta5:.6g}", mark(cert.restriction_ok)],
        ["η (ς4)", f"{cert.eta4:.6g}", mark(cert.restriction_ok_alt)],
        ["spectral condition", "", mark(cert.spectral_ok)],
        ["final C0 error", _num(cert.final_c0_error), mark(cert.convergence_ok)],
    ]
    return tabulate(data, headers=["Quantity", "Value", "✓/✗"], tablefmt="grid")


def decay_table(decay: Dict[str, Dict[str, Any]]) -> str:
    data = [
        [name, _num(s["first"]), _num(s["last"]), _num(s["ratio"], ".3g"),
         _num(s["fitted_rate"], ".3g"), mark(s["monotone"])]
        for name, s in decay.items()
    ]
    return tabulate(data, headers=["Column", "first k", "last k", "last/first", "rate per k", "monotone"],
                    tablefmt="grid")

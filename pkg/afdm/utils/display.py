"""Display utilities for the AFDM simulator."""

import math
from typing import Optional, Sequence

from rich.console import Console
from rich.table import Table

from afdm.harness import BenchRow, CurvePoint
from afdm.validation import CheckResult


def _fmt(value: float, spec: str = ".3e") -> str:
    """
    Format a number, showing N/A for missing values.

    :param value: Number to format
    :type value: float
    :param spec: Format specification
    :type spec: str
    :return: Formatted text
    :rtype: str
    """
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return 'N/A'
    return format(value, spec)


def display_curve_table(curve: Sequence[CurvePoint], sweep_var: str, console: Optional[Console] = None) -> None:
    """
    Display a sweep result in a table.

    BER cells turn red when the Monte Carlo value falls below the analytical lower bound by more than the
    confidence half-width.

    :param curve: Aggregated sweep points
    :type curve: Sequence[CurvePoint]
    :param sweep_var: Name of the swept variable
    :type sweep_var: str
    """
    console = console or Console()
    table = Table(title=f"Sweep over {sweep_var}")
    table.add_column(sweep_var, style="cyan", no_wrap=True)
    table.add_column("NMSE MC (dB)", style="green")
    table.add_column("NMSE closed (dB)", style="green")
    table.add_column("BER MC", style="magenta")
    table.add_column("BER bound", style="magenta")
    table.add_column("BER theory", style="magenta")
    table.add_column("±95%")
    table.add_column("Trials", style="bold")

    for point in curve:
        ber_mc = _fmt(point.ber_mc)
        if not math.isnan(point.ber_mc) and not math.isnan(point.ber_bound) \
                and point.ber_mc + point.ci_halfwidth < point.ber_bound:
            ber_mc = f"[red]{ber_mc}[/red]"
        trials = str(point.trials_used)
        if point.failures:
            trials += f" [yellow]({point.failures} failed)[/yellow]"
        table.add_row(_fmt(point.x, "g"), _fmt(point.nmse_mc, ".2f"), _fmt(point.nmse_closed, ".2f"), ber_mc,
                      _fmt(point.ber_bound), _fmt(point.ber_theory), _fmt(point.ci_halfwidth, ".1e"), trials)

    console.print(table)


def display_bench_table(rows: Sequence[BenchRow], console: Optional[Console] = None) -> None:
    """Display the estimator complexity benchmark."""
    console = console or Console()
    table = Table(title="Channel estimation cost")
    table.add_column("N", style="cyan", no_wrap=True)
    table.add_column("Gram (BEM)", style="green")
    table.add_column("Gram (naive)", style="green")
    table.add_column("BEM (s)")
    table.add_column("Naive (s)")
    table.add_column("Speedup", style="bold")
    for row in rows:
        table.add_row(str(row.n), str(row.gram_dim_bem), str(row.gram_dim_naive), _fmt(row.t_bem_s, ".2e"),
                      _fmt(row.t_naive_s, ".2e"), f"{row.speedup:.1f}x")
    console.print(table)


def display_validation_table(results: Sequence[CheckResult], console: Optional[Console] = None) -> None:
    """Display oracle results with a pass/fail mark."""
    console = console or Console()
    table = Table(title="Oracle suite")
    table.add_column("Check", style="cyan")
    table.add_column("Error")
    table.add_column("Tolerance")
    table.add_column("Result", style="bold")
    for result in results:
        mark = "[bold green]✓[/bold green]" if result.passed else "[bold red]✗[/bold red]"
        table.add_row(result.name, _fmt(result.error, ".2e"), _fmt(result.tolerance, ".0e"), mark)
    console.print(table)
    for result in results:
        if result.detail:
            console.print(f"[red]{result.name}:[/red] {result.detail}")

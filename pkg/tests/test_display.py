"""Tests for display utilities."""

import math
import unittest
from unittest.mock import patch

from rich.console import Console

from afdm.harness import BenchRow, CurvePoint
from afdm.utils.display import _fmt, display_bench_table, display_curve_table, display_validation_table
from afdm.validation import CheckResult


def make_point(x=10.0, ber_mc=1e-3, ber_bound=5e-4, ci=1e-4, failures=0):
    return CurvePoint(x=x, nmse_mc=-20.5, nmse_closed=-20.7, ber_mc=ber_mc, ber_bound=ber_bound, ber_theory=6e-4,
                      trials_used=100, ci_halfwidth=ci, failures=failures)


def render(func, *args):
    """Render a display call into plain text."""
    console = Console(record=True, width=200, color_system=None)
    func(*args, console=console)
    return console.export_text()


class TestDisplayUtils(unittest.TestCase):
    """Test cases for display utilities."""

    @patch('afdm.utils.display.Console')
    def test_display_curve_table_creates_console(self, mock_console):
        """Test that a console is created when none is passed."""
        display_curve_table([make_point()], "snr_d")

        # Check that console print was called
        self.assertTrue(mock_console.return_value.print.called)

    def test_display_curve_table_rows(self):
        """Test display_curve_table with two sweep points."""
        text = render(display_curve_table, [make_point(0.0), make_point(10.0)], "snr_d")
        self.assertIn("Sweep over snr_d", text)
        self.assertIn("-20.50", text)
        self.assertIn("1.000e-03", text)
        self.assertIn("100", text)

    def test_display_curve_table_flags_bound_violation(self):
        """Test that a Monte Carlo BER below the bound is highlighted."""
        console = Console(record=True, width=200)
        display_curve_table([make_point(ber_mc=1e-4, ber_bound=5e-4)], "snr_d", console=console)
        self.assertIn("\x1b[31m", console.export_text(styles=True))

    def test_display_curve_table_failures_and_missing(self):
        point = make_point(ber_mc=math.nan, ber_bound=math.nan, failures=3)
        text = render(display_curve_table, [point], "speed")
        self.assertIn("N/A", text)
        self.assertIn("3 failed", text)

    def test_display_bench_table(self):
        rows = [BenchRow(n=64, gram_dim_bem=30, gram_dim_naive=64, t_bem_s=1e-4, t_naive_s=2e-3)]
        text = render(display_bench_table, rows)
        self.assertIn("Channel estimation cost", text)
        self.assertIn("20.0x", text)

    def test_display_validation_table(self):
        results = [CheckResult(name="daft_unitary", passed=True, error=1e-15, tolerance=1e-10),
                   CheckResult(name="scalar_wiener", passed=False, error=math.nan, tolerance=1e-12,
                               detail="ParameterError: bad")]
        text = render(display_validation_table, results)
        self.assertIn("daft_unitary", text)
        self.assertIn("✓", text)
        self.assertIn("✗", text)
        self.assertIn("scalar_wiener: ParameterError: bad", text)

    def test_fmt(self):
        self.assertEqual(_fmt(None), "N/A")
        self.assertEqual(_fmt(math.nan), "N/A")
        self.assertEqual(_fmt(0.5, ".2f"), "0.50")


if __name__ == '__main__':
    unittest.main()

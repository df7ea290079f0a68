"""CSV emission for run time series and summaries."""

from __future__ import annotations

CSV_HEADER = ("step,n_solvent,n_defaulted,n_bankrupt,avg_leverage,avg_haircut,"
              "stock_price,risky_price,risky_p_sell,fire_sale_volume")


def format_report_row(report) -> str:
    return (f"{report.step},{report.n_solvent},{report.n_defaulted},"
            f"{report.n_bankrupt},{report.avg_leverage:.6f},"
            f"{report.avg_haircut:.6f},{report.stock_price:.6f},"
            f"{report.risky_price:.6f},{report.risky_p_sell:.6f},"
            f"{report.fire_sale_volume:.6f}")


def write_timeseries(reports, path) -> None:
    """Write the per-step CSV: fixed header, 6 fractional digits, LF endings."""
    lines = [CSV_HEADER] + [format_report_row(r) for r in reports]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_timeseries(path) -> list[dict]:
    """Strict reader for the time-series CSV; raises on any malformed row."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != CSV_HEADER:
            raise ValueError(f"unexpected header: {header!r}")
        columns = header.split(",")
        rows = []
        for line_no, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(",")
            if len(parts) != len(columns):
                raise ValueError(f"line {line_no}: expected {len(columns)} fields")
            row = {}
            for name, part in zip(columns, parts):
                row[name] = int(part) if name.startswith("n_") or name == "step" \
                    else float(part)
            rows.append(row)
    return rows


def write_summary(summary, path) -> None:
    pairs = [
        ("seed", summary.seed),
        ("bank_count", summary.bank_count),
        ("final_solvent", summary.final_solvent),
        ("final_defaulted", summary.final_defaulted),
        ("final_bankrupt", summary.final_bankrupt),
        ("final_bankrupt_banks", summary.final_bankrupt_banks),
        ("peak_haircut", f"{summary.peak_haircut:.6f}"),
        ("pre_shock_avg_leverage", f"{summary.pre_shock_avg_leverage:.6f}"),
        ("final_avg_leverage", f"{summary.final_avg_leverage:.6f}"),
        ("equilibrium_step", "" if summary.equilibrium_step is None
         else summary.equilibrium_step),
    ]
    lines = ["key,value"] + [f"{k},{v}" for k, v in pairs]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")

//! Human-readable tables and CSV for CLI output.
//!
//! Numbers are rounded to nine decimals so identical inputs give
//! byte-identical output across platforms.

use crate::analytic::Phase;
use crate::model::fmt_secs;
use crate::reference::ValidationReport;
use crate::scenario::{ScaleEstimate, SimulationRun, SweepDimension, SweepRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Table,
    Csv,
}

fn num(x: f64) -> String {
    fmt_secs(x)
}

fn pct(x: f64) -> String {
    format!("{:.2}%", x * 100.0)
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Left-aligned text table with a header rule.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row<S: Into<String>>(&mut self, cells: impl IntoIterator<Item = S>) {
        self.rows.push(cells.into_iter().map(Into::into).collect());
    }

    pub fn render(&self) -> String {
        let n = self.header.len();
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for r in &self.rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let mut s = String::new();
            for (k, c) in cells.iter().enumerate().take(n) {
                if k + 1 == n {
                    s.push_str(c);
                } else {
                    s.push_str(c);
                    s.push_str(&" ".repeat(widths[k] - c.chars().count() + 2));
                }
            }
            s.trim_end().to_string() + "\n"
        };
        let mut out = line(&self.header);
        let total: usize = widths.iter().sum::<usize>() + 2 * n.saturating_sub(1);
        out.push_str(&"-".repeat(total));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&line(r));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}

const ESTIMATE_HEADER: [&str; 16] = [
    "gpus",
    "nodes",
    "mode",
    "overlap_case",
    "io_s",
    "h2d_s",
    "forward_s",
    "backward_s",
    "comm_exposed_s",
    "update_s",
    "total_s",
    "hidden_io_s",
    "hidden_comm_s",
    "speedup",
    "efficiency",
    "formula",
];

pub fn estimate(name: &str, estimates: &[ScaleEstimate], format: Format) -> String {
    let mut t = Table::new(ESTIMATE_HEADER);
    for e in estimates {
        let est = &e.estimate;
        let mut cells = vec![
            e.inputs.gpus.to_string(),
            e.inputs.nodes.to_string(),
            est.mode.to_string(),
            est.overlap_case.map(|c| c.to_string()).unwrap_or_default(),
        ];
        cells.extend(Phase::ALL.iter().map(|&p| num(est.term(p))));
        cells.extend([
            num(est.total),
            num(est.hidden_io),
            num(est.hidden_comm),
            num(e.speedup.speedup),
            num(e.speedup.efficiency),
            e.speedup.formula.to_string(),
        ]);
        t.row(cells);
    }
    if format == Format::Csv {
        return t.to_csv();
    }
    let mut out = format!("scenario {name}\n\n");
    let mut summary = Table::new(["gpus", "mode", "case", "iter_time_s", "exposed_comm_s", "speedup", "efficiency", "formula"]);
    for e in estimates {
        summary.row([
            e.inputs.gpus.to_string(),
            e.estimate.mode.to_string(),
            e.estimate.overlap_case.map(|c| c.to_string()).unwrap_or_else(|| "-".into()),
            num(e.estimate.total),
            num(e.exposed_comm()),
            num(e.speedup.speedup),
            pct(e.speedup.efficiency),
            e.speedup.formula.to_string(),
        ]);
    }
    out.push_str(&summary.render());
    for e in estimates {
        out.push_str(&format!("\nbreakdown at {} GPUs ({} nodes)\n", e.inputs.gpus, e.inputs.nodes));
        let mut b = Table::new(["rank", "phase", "seconds", "share"]);
        for (k, x) in e.bottlenecks.iter().enumerate() {
            b.row([(k + 1).to_string(), x.phase.to_string(), num(x.seconds), pct(x.share)]);
        }
        out.push_str(&b.render());
        if e.estimate.hidden_io > 0.0 || e.estimate.hidden_comm > 0.0 {
            out.push_str(&format!(
                "hidden: io {} s, comm {} s\n",
                num(e.estimate.hidden_io),
                num(e.estimate.hidden_comm)
            ));
        }
    }
    out
}

pub fn sweep(dim: SweepDimension, rows: &[SweepRow], format: Format) -> String {
    let mut header = vec![dim.name().to_string()];
    if dim != SweepDimension::Gpus {
        header.push("gpus".into());
    }
    header.extend(["iter_time_s", "speedup", "efficiency", "exposed_comm_s"].map(String::from));
    let mut t = Table::new(header);
    for r in rows {
        let mut cells = vec![num(r.value)];
        if dim != SweepDimension::Gpus {
            cells.push(r.gpus.to_string());
        }
        cells.extend([num(r.iter_time), num(r.speedup), num(r.efficiency), num(r.exposed_comm)]);
        t.row(cells);
    }
    match format {
        Format::Csv => t.to_csv(),
        Format::Table => t.render(),
    }
}

pub fn simulation(name: &str, run: &SimulationRun, format: Format) -> String {
    let mut t = Table::new(["quantity", "seconds"]);
    let tr = &run.trace;
    t.row(["makespan".to_string(), num(tr.makespan)]);
    t.row(["exposed_comm".to_string(), num(tr.exposed_comm)]);
    t.row(["hidden_comm".to_string(), num(tr.hidden_comm)]);
    t.row(["comm_span_start".to_string(), num(tr.comm_span.0)]);
    t.row(["comm_span_end".to_string(), num(tr.comm_span.1)]);
    t.row(["steady_state_iter".to_string(), num(run.steady.mean)]);
    if let Some(a) = &run.analytic {
        t.row(["analytic_iter".to_string(), num(a.total)]);
        t.row(["sim_minus_analytic".to_string(), num(tr.makespan - a.total)]);
    }
    match format {
        Format::Csv => t.to_csv(),
        Format::Table => {
            let mut out = format!(
                "scenario {name} at {} GPUs ({} nodes), steady state over {} iterations\n\n",
                run.inputs.gpus,
                run.inputs.nodes,
                run.steady.per_iteration.len()
            );
            if let Some(a) = &run.analytic {
                let case = a.overlap_case.map(|c| format!(" {c}")).unwrap_or_default();
                out.push_str(&format!("closed form: {}{case}\n\n", a.mode));
            } else {
                out.push_str("closed form: none (irregular overlap)\n\n");
            }
            out.push_str(&t.render());
            out
        }
    }
}

pub fn validation(report: &ValidationReport, threshold: Option<f64>, format: Format) -> String {
    let mut t = Table::new([
        "scenario",
        "metric",
        "predicted_s",
        "measured_s",
        "std_s",
        "abs_error_s",
        "rel_error",
        "notes",
    ]);
    for r in &report.rows {
        let rel = match format {
            Format::Csv => opt(r.rel_error),
            Format::Table => r.rel_error.map(pct).unwrap_or_else(|| "-".into()),
        };
        t.row([
            r.scenario.to_string(),
            r.metric.to_string(),
            num(r.predicted),
            opt(r.measured.map(|m| m.mean)),
            opt(r.measured.and_then(|m| m.std)),
            opt(r.abs_error),
            rel,
            r.notes.join("; "),
        ]);
    }
    for c in &report.cross_checks {
        t.row([
            c.scenario.clone(),
            "analytic_vs_sim".into(),
            num(c.analytic),
            num(c.simulated),
            String::new(),
            num(c.gap().abs()),
            String::new(),
            format!("{}; gap {} s", c.formula, num(c.gap())),
        ]);
    }
    if format == Format::Csv {
        for (id, m) in &report.missing {
            t.row([
                id.to_string(),
                m.to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                "no reference".into(),
            ]);
        }
        return t.to_csv();
    }
    let mut out = t.render();
    let agg = |x: Option<f64>| x.map(pct).unwrap_or_else(|| "-".into());
    out.push_str(&format!(
        "\nrows with reference: {} of {}; mean rel error {}; max rel error {}\n",
        report.rows.iter().filter(|r| r.rel_error.is_some()).count(),
        report.rows.len(),
        agg(report.mean_rel_error()),
        agg(report.max_rel_error())
    ));
    if let Some(th) = threshold {
        out.push_str(&format!("threshold {}\n", pct(th)));
    }
    if !report.missing.is_empty() {
        out.push_str("\nno reference cells in the loaded data:\n");
        for (id, m) in &report.missing {
            out.push_str(&format!("  {id} {m}\n"));
        }
    }
    for n in &report.notes {
        out.push_str(&format!("note: {n}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_pads_columns() {
        let mut t = Table::new(["a", "bbb"]);
        t.row(["long", "x"]);
        assert_eq!(t.render(), "a     bbb\n---------\nlong  x\n");
    }

    #[test]
    fn csv_quotes_commas() {
        let mut t = Table::new(["a", "b"]);
        t.row(["1", "x, y"]);
        assert_eq!(t.to_csv(), "a,b\n1,\"x, y\"\n");
    }

    #[test]
    fn numbers_round_to_nine_decimals() {
        assert_eq!(num(0.1 + 0.2), "0.3");
        assert_eq!(pct(0.016285), "1.63%");
    }
}

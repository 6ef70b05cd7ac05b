use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// A rendered evaluation table with the provenance it was computed from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub title: String,
    pub config_hash: String,
    /// Model name to checkpoint id.
    pub checkpoints: BTreeMap<String, String>,
    pub columns: Vec<String>,
    pub rows: Vec<ReportRow>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub values: Vec<Option<f64>>,
}

fn fmt_value(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.2}"))
}

impl SuiteReport {
    pub fn new(suite: &str, title: &str, config_hash: &str, columns: Vec<String>) -> Self {
        Self {
            suite: suite.into(),
            title: title.into(),
            config_hash: config_hash.into(),
            checkpoints: BTreeMap::new(),
            columns,
            rows: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, label: impl Into<String>, values: Vec<Option<f64>>) {
        debug_assert_eq!(values.len(), self.columns.len());
        self.rows.push(ReportRow {
            label: label.into(),
            values,
        });
    }

    pub fn value(&self, row: &str, column: &str) -> Option<f64> {
        let c = self.columns.iter().position(|x| x == column)?;
        self.rows.iter().find(|r| r.label == row)?.values[c]
    }

    /// Header line with provenance, then one line per row.
    pub fn to_jsonl(&self) -> String {
        let header = serde_json::json!({
            "kind": "header",
            "suite": self.suite,
            "title": self.title,
            "config_hash": self.config_hash,
            "checkpoints": self.checkpoints,
            "columns": self.columns,
            "notes": self.notes,
        });
        let mut s = header.to_string();
        s.push('\n');
        for r in &self.rows {
            let line = serde_json::json!({ "kind": "row", "label": r.label, "values": r.values });
            s.push_str(&line.to_string());
            s.push('\n');
        }
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "## {} ({})\n", self.title, self.suite);
        let _ = writeln!(s, "config hash: `{}`\n", self.config_hash);
        if !self.checkpoints.is_empty() {
            let ids: Vec<String> = self.checkpoints.iter().map(|(k, v)| format!("{k}=`{v}`")).collect();
            let _ = writeln!(s, "checkpoints: {}\n", ids.join(", "));
        }
        let _ = writeln!(s, "| | {} |", self.columns.join(" | "));
        let _ = writeln!(s, "|---|{}", "---|".repeat(self.columns.len()));
        for r in &self.rows {
            let vals: Vec<String> = r.values.iter().map(|v| fmt_value(*v)).collect();
            let _ = writeln!(s, "| {} | {} |", r.label, vals.join(" | "));
        }
        for n in &self.notes {
            let _ = writeln!(s, "\n{n}");
        }
        s
    }

    /// Line plot of every row against the column index; numeric column
    /// labels become x tick labels.
    pub fn to_svg(&self, y_label: &str) -> String {
        const W: f64 = 520.0;
        const H: f64 = 340.0;
        const L: f64 = 60.0;
        const R: f64 = 140.0;
        const T: f64 = 30.0;
        const B: f64 = 50.0;
        const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
        let n = self.columns.len().max(2);
        let y_max = self
            .rows
            .iter()
            .flat_map(|r| r.values.iter().flatten())
            .fold(0.0f64, |a, &b| a.max(b))
            .max(1e-9);
        let y_top = (y_max / 10.0).ceil() * 10.0;
        let x = |i: usize| L + (W - L - R) * i as f64 / (n - 1) as f64;
        let y = |v: f64| H - B - (H - T - B) * v / y_top;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<text x="{L}" y="18" font-size="13">{}</text>"#, self.title);
        let _ = writeln!(
            s,
            r#"<line x1="{L}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/><line x1="{L}" y1="{T}" x2="{L}" y2="{0}" stroke="black"/>"#,
            H - B,
            W - R
        );
        for k in 0..=5 {
            let v = y_top * k as f64 / 5.0;
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.0}</text>"#,
                L - 6.0,
                y(v) + 4.0
            );
        }
        for (i, c) in self.columns.iter().enumerate() {
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{c}</text>"#, x(i), H - B + 16.0);
        }
        let _ = writeln!(
            s,
            r#"<text x="14" y="{:.1}" transform="rotate(-90 14 {:.1})" text-anchor="middle">{y_label}</text>"#,
            (H - B + T) / 2.0,
            (H - B + T) / 2.0
        );
        for (ri, r) in self.rows.iter().enumerate() {
            let color = COLORS[ri % COLORS.len()];
            let pts: Vec<String> = r
                .values
                .iter()
                .enumerate()
                .filter_map(|(i, v)| v.map(|v| format!("{:.1},{:.1}", x(i), y(v))))
                .collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.join(" "));
            let ly = T + 16.0 * ri as f64 + 10.0;
            let _ = writeln!(
                s,
                r#"<line x1="{0:.1}" y1="{ly:.1}" x2="{1:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{2:.1}" y="{3:.1}">{4}</text>"#,
                W - R + 10.0,
                W - R + 30.0,
                W - R + 35.0,
                ly + 4.0,
                r.label
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

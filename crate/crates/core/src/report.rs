//! Stable text, JSON and CSV renderings of evaluation tables and histograms.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::metrics::SystemEvaluation;

/// Weighted columns that always come first, in this order.
pub const KNOWN_WEIGHT_LABELS: [&str; 4] = ["W", "W_num", "W_dist", "W_t"];

/// A rendered evaluation table: header plus one row of optional cells per system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub system: String,
    /// One cell per column after `System`; `None` where not applicable.
    pub cells: Vec<Option<f64>>,
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// Column order: F1, Accuracy, F1-Bias, acc-Bias, then one `<label>-Bias`
/// per weight set (known labels first, others by first appearance).
pub fn build_table(rows: &[SystemEvaluation]) -> Table {
    let mut labels: Vec<String> = Vec::new();
    for known in KNOWN_WEIGHT_LABELS {
        if rows
            .iter()
            .any(|r| r.weighted.iter().any(|w| w.weights.as_deref() == Some(known)))
        {
            labels.push(known.to_string());
        }
    }
    for r in rows {
        for w in &r.weighted {
            let l = w.weights.clone().unwrap_or_default();
            if !labels.contains(&l) {
                labels.push(l);
            }
        }
    }
    let mut columns: Vec<String> = ["F1", "Accuracy", "F1-Bias", "acc-Bias"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    columns.extend(labels.iter().map(|l| format!("{l}-Bias")));
    let rows = rows
        .iter()
        .map(|r| {
            let mut cells = vec![
                Some(round3(r.f1)),
                Some(round3(r.accuracy)),
                r.f1_bias.ratio.map(round3),
                r.acc_bias.ratio.map(round3),
            ];
            for l in &labels {
                let hit = r.weighted.iter().find(|w| w.weights.as_deref() == Some(l.as_str()));
                cells.push(hit.and_then(|w| w.ratio).map(round3));
            }
            TableRow {
                system: r.system.clone(),
                cells,
            }
        })
        .collect();
    Table { columns, rows }
}

impl Table {
    /// Aligned columns, three decimals, blank cells where not applicable.
    pub fn to_text(&self) -> String {
        let mut grid: Vec<Vec<String>> = vec![std::iter::once("System".to_string())
            .chain(self.columns.iter().cloned())
            .collect()];
        for r in &self.rows {
            let mut line = vec![r.system.clone()];
            line.extend(
                r.cells
                    .iter()
                    .map(|c| c.map(|v| format!("{v:.3}")).unwrap_or_default()),
            );
            grid.push(line);
        }
        let widths: Vec<usize> = (0..grid[0].len())
            .map(|k| grid.iter().map(|l| l[k].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for line in &grid {
            let mut s = String::new();
            for (k, cell) in line.iter().enumerate() {
                if k == 0 {
                    let _ = write!(s, "{cell:<w$}", w = widths[k]);
                } else {
                    let _ = write!(s, "  {cell:>w$}", w = widths[k]);
                }
            }
            out.push_str(s.trim_end());
            out.push('\n');
        }
        out
    }

    /// `[{"system": .., "<column>": value-or-null, ..}, ..]`.
    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|r| {
                let mut obj = serde_json::Map::new();
                obj.insert("system".into(), r.system.clone().into());
                for (c, v) in self.columns.iter().zip(&r.cells) {
                    obj.insert(c.clone(), v.map_or(serde_json::Value::Null, Into::into));
                }
                serde_json::Value::Object(obj)
            })
            .collect();
        serde_json::Value::Array(rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub bin_width: f64,
    /// Left edge of bin 0; bins are `[origin + k·w, origin + (k+1)·w)`.
    pub origin: f64,
    /// Values at or above this are listed as overflow instead of binned.
    pub display_max: Option<f64>,
}

impl HistogramSpec {
    /// 0.1-wide bins from 0.0, values above 4.0 listed separately.
    pub const WEIGHTS: HistogramSpec = HistogramSpec {
        bin_width: 0.1,
        origin: 0.0,
        display_max: Some(4.0),
    };
    /// One bin per integer value.
    pub const COUNTS: HistogramSpec = HistogramSpec {
        bin_width: 1.0,
        origin: 0.0,
        display_max: None,
    };
}

/// Labelled values of one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramInput {
    pub group: String,
    /// `(id, value)` pairs.
    pub values: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub group: String,
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overflow {
    pub group: String,
    pub id: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub spec: HistogramSpec,
    pub bins: Vec<HistogramBin>,
    /// Values above the display range, largest first.
    pub overflow: Vec<Overflow>,
    /// Groups with no values at all.
    pub empty_groups: Vec<String>,
}

fn edge(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}

/// Bins values per group; only non-empty bins are emitted.
pub fn render_histogram(inputs: &[HistogramInput], spec: HistogramSpec) -> Histogram {
    let mut bins = Vec::new();
    let mut overflow = Vec::new();
    let mut empty_groups = Vec::new();
    for input in inputs {
        if input.values.is_empty() {
            empty_groups.push(input.group.clone());
            continue;
        }
        let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
        for (id, v) in &input.values {
            if spec.display_max.is_some_and(|m| *v > m) {
                overflow.push(Overflow {
                    group: input.group.clone(),
                    id: id.clone(),
                    value: *v,
                });
                continue;
            }
            let k = ((v - spec.origin) / spec.bin_width + 1e-9).floor() as i64;
            *counts.entry(k).or_default() += 1;
        }
        for (k, count) in counts {
            bins.push(HistogramBin {
                group: input.group.clone(),
                bin_lo: edge(spec.origin + k as f64 * spec.bin_width),
                bin_hi: edge(spec.origin + (k + 1) as f64 * spec.bin_width),
                count,
            });
        }
    }
    overflow.sort_by(|a, b| b.value.total_cmp(&a.value).then_with(|| a.id.cmp(&b.id)));
    Histogram {
        spec,
        bins,
        overflow,
        empty_groups,
    }
}

impl Histogram {
    pub fn binned(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    /// `group,bin_lo,bin_hi,count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,bin_lo,bin_hi,count\n");
        for b in &self.bins {
            let _ = writeln!(out, "{},{},{},{}", b.group, b.bin_lo, b.bin_hi, b.count);
        }
        out
    }

    /// `group,id,value`, largest first.
    pub fn overflow_csv(&self) -> String {
        let mut out = String::from("group,id,value\n");
        for o in &self.overflow {
            let _ = writeln!(out, "{},{},{}", o.group, o.id, o.value);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{BiasReport, MetricKind};

    fn row(system: &str, labels: &[&str]) -> SystemEvaluation {
        SystemEvaluation {
            system: system.into(),
            f1: 0.3051,
            accuracy: 0.2244,
            f1_bias: BiasReport::new(MetricKind::F1, None, 0.32, 0.28),
            acc_bias: BiasReport::new(MetricKind::Accuracy, None, 0.2, 0.17),
            weighted: labels
                .iter()
                .map(|l| BiasReport::new(MetricKind::WeightedAccuracy, Some(l.to_string()), 0.2, 0.2))
                .collect(),
            missing_predictions: 0,
        }
    }

    fn input(group: &str, values: &[f64]) -> HistogramInput {
        HistogramInput {
            group: group.into(),
            values: values.iter().enumerate().map(|(i, &v)| (format!("{group}{i}"), v)).collect(),
        }
    }

    #[test]
    fn unweighted_table_has_four_columns() {
        let t = build_table(&[row("Random", &[])]);
        assert_eq!(t.columns, vec!["F1", "Accuracy", "F1-Bias", "acc-Bias"]);
        assert_eq!(t.rows[0].cells[0], Some(0.305));
        assert_eq!(t.rows[0].cells[3], Some(0.85));
    }

    #[test]
    fn union_of_columns_with_blanks() {
        let t = build_table(&[row("a", &["W_t", "custom"]), row("b", &["W"])]);
        assert_eq!(
            &t.columns[4..],
            &["W-Bias".to_string(), "W_t-Bias".into(), "custom-Bias".into()]
        );
        assert_eq!(t.rows[0].cells[4], None);
        assert_eq!(t.rows[1].cells[5], None);
        let text = t.to_text();
        assert!(text.starts_with("System"));
        assert_eq!(text.lines().count(), 3);
        let json = t.to_json();
        assert_eq!(json[1]["W-Bias"], 1.0);
        assert!(json[1]["W_t-Bias"].is_null());
    }

    #[test]
    fn text_and_json_agree() {
        let t = build_table(&[row("a", &["W"])]);
        let text = t.to_text();
        let cells: Vec<&str> = text.lines().nth(1).unwrap().split_whitespace().skip(1).collect();
        let json = t.to_json();
        for (c, col) in cells.iter().zip(&t.columns) {
            assert_eq!(c.parse::<f64>().unwrap(), json[0][col].as_f64().unwrap());
        }
    }

    #[test]
    fn aligned_values_share_a_bin() {
        let spec = HistogramSpec { origin: 0.05, ..HistogramSpec::WEIGHTS };
        let h = render_histogram(&[input("m", &[0.95, 0.99, 1.0, 1.049])], spec);
        assert_eq!(h.bins.len(), 1);
        assert_eq!((h.bins[0].bin_lo, h.bins[0].bin_hi), (0.95, 1.05));
    }

    #[test]
    fn half_open_edges() {
        let h = render_histogram(&[input("m", &[0.3, 0.0, 0.0999])], HistogramSpec::WEIGHTS);
        let los: Vec<f64> = h.bins.iter().map(|b| b.bin_lo).collect();
        assert_eq!(los, vec![0.0, 0.3]);
        assert_eq!(h.bins[0].count, 2);
    }

    #[test]
    fn overflow_and_empty_groups() {
        let h = render_histogram(
            &[input("masculine", &[1.0, 4.5, 7.68, 4.0]), input("feminine", &[])],
            HistogramSpec::WEIGHTS,
        );
        assert_eq!(h.overflow.len(), 2);
        assert_eq!(h.overflow[0].value, 7.68);
        assert_eq!(h.empty_groups, vec!["feminine".to_string()]);
        assert_eq!(h.binned() + h.overflow.len(), 4);
        assert!(h.to_csv().starts_with("group,bin_lo,bin_hi,count\n"));
    }
}

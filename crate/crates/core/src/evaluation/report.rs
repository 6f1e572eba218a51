use crate::hallucination::HallucinationReport;

use super::MetricsReport;

/// Aligned `Model MP MR MF1 wP wR wF1` table, two decimals.
pub fn render_metrics_table(rows: &[(String, &MetricsReport)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max("Model".len());
    let mut out = format!(
        "{:<width$}  {:>5}  {:>5}  {:>5}  {:>5}  {:>5}  {:>5}\n",
        "Model", "MP", "MR", "MF1", "wP", "wR", "wF1"
    );
    for (name, m) in rows {
        out.push_str(&format!(
            "{:<width$}  {:>5.2}  {:>5.2}  {:>5.2}  {:>5.2}  {:>5.2}  {:>5.2}\n",
            name, m.mp, m.mr, m.mf1, m.wp, m.wr, m.wf1
        ));
    }
    out
}

/// Aligned `Model HL H% HS` block.
pub fn render_hallucination_table(rows: &[(String, &HallucinationReport)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max("Model".len());
    let mut out = format!("{:<width$}  {:>8}  {:>7}  {:>6}\n", "Model", "HL", "H%", "HS");
    for (name, h) in rows {
        out.push_str(&format!(
            "{:<width$}  {:>8}  {:>6}%  {:>6}\n",
            name,
            h.hl,
            h.h_percent_display(),
            h.hs
        ));
    }
    out
}

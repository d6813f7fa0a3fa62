//! CSV tables with round-trip number formatting.

use crate::error::{Error, Result};
use crate::optimizer::{fit_loglog_slope, FIT_FLOOR};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// One row of a refinement or continuation study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    /// Mesh width `h` or penalty weight `K`.
    pub parameter: f64,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub names: Vec<String>,
    pub rows: Vec<StudyRow>,
    /// `observed[i][r]` compares row `i` with row `i - 1`; empty for row 0
    /// and wherever a residual sits at the fit floor.
    pub observed: Vec<Vec<Option<f64>>>,
    /// Least-squares log-log slope per residual over all rows.
    pub fit: Vec<Option<f64>>,
}

/// Observed order `ln(e_i / e_{i-1}) / ln(p_i / p_{i-1})` between consecutive
/// rows. Halving `h` while the error drops fourfold gives 2; a `K` sweep
/// gives the decay exponent directly (about -1 for `O(1/K)`).
pub fn emit_convergence_table(names: &[&str], rows: &[StudyRow]) -> Result<ConvergenceTable> {
    if rows.len() < 2 {
        return Err(Error::Precondition("need ≥2 rows".into()));
    }
    if let Some(r) = rows.iter().find(|r| r.residuals.len() != names.len()) {
        return Err(Error::LengthMismatch {
            left: r.residuals.len(),
            right: names.len(),
        });
    }
    let ratio = |a: f64, b: f64| {
        let v = (b / a).ln();
        (a > FIT_FLOOR && b > FIT_FLOOR && v.is_finite()).then_some(v)
    };
    let mut observed = vec![vec![None; names.len()]];
    for w in rows.windows(2) {
        let dp = (w[1].parameter / w[0].parameter).ln();
        observed.push(
            (0..names.len())
                .map(|r| ratio(w[0].residuals[r], w[1].residuals[r]).map(|de| de / dp))
                .collect(),
        );
    }
    let params: Vec<f64> = rows.iter().map(|r| r.parameter).collect();
    let fit = (0..names.len())
        .map(|r| fit_loglog_slope(&params, &rows.iter().map(|row| row.residuals[r]).collect::<Vec<_>>()))
        .collect();
    Ok(ConvergenceTable {
        names: names.iter().map(|s| s.to_string()).collect(),
        rows: rows.to_vec(),
        observed,
        fit,
    })
}

impl ConvergenceTable {
    /// Rows of `parameter, residuals..., observed_order_<name>...`, then a
    /// final `fit` row carrying the least-squares slopes in the order columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("parameter");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        for n in &self.names {
            out.push_str(",observed_order_");
            out.push_str(n);
        }
        out.push('\n');
        for (row, obs) in self.rows.iter().zip(&self.observed) {
            let cells: Vec<String> = std::iter::once(num(row.parameter))
                .chain(row.residuals.iter().map(|v| num(*v)))
                .chain(obs.iter().map(|v| opt(*v)))
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        let cells: Vec<String> = std::iter::once("fit".to_string())
            .chain(self.names.iter().map(|_| String::new()))
            .chain(self.fit.iter().map(|v| opt(*v)))
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
        out
    }
}

//! Learning-curve metrics: relative value error against `J*` and the share
//! of episodes needed to settle near the final error level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::ValueTable;

/// One per-episode record of a learning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub run: usize,
    pub episode: usize,
    pub beta: f64,
    pub delta_v_pct: f64,
    pub policy_entropy: f64,
    pub steps: usize,
}

/// Ordered rows of one or more runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub rows: Vec<MetricRow>,
}

impl MetricSeries {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: MetricRow) {
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `delta_v_pct` column in row order.
    pub fn delta_v(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.delta_v_pct).collect()
    }

    pub fn extend(&mut self, other: MetricSeries) {
        self.rows.extend(other.rows);
    }

    /// Sorts by `(run, episode)`.
    pub fn sort(&mut self) {
        self.rows.sort_by_key(|r| (r.run, r.episode));
    }

    /// Writes the rows as CSV with a header line.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wtr.serialize(r)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<MetricRow>, _>>()?;
        Ok(Self { rows })
    }
}

/// States that enter the relative error: non-terminal with `J* ≠ 0`.
/// Non-terminal states with `J* = 0` are dropped with a warning.
pub fn included_states(j_star: &ValueTable, terminal: &[bool]) -> Vec<usize> {
    let mut keep = Vec::new();
    for s in 0..j_star.len() {
        if terminal[s] {
            continue;
        }
        if j_star[s] == 0.0 {
            log::warn!("state {s} has zero optimal value and is excluded from the relative error");
            continue;
        }
        keep.push(s);
    }
    keep
}

/// `(1/N) Σ_i Σ_s |V_i(s) - J*(s)| / |J*(s)|` over non-terminal states.
pub fn compute_delta_v(values: &[ValueTable], j_star: &ValueTable, terminal: &[bool]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("need at least one run".into()));
    }
    if terminal.len() != j_star.len() || values.iter().any(|v| v.len() != j_star.len()) {
        return Err(Error::Dimension("value tables vs optimal values".into()));
    }
    let keep = included_states(j_star, terminal);
    let total: f64 = values
        .iter()
        .map(|v| {
            keep.iter()
                .map(|&s| (v[s] - j_star[s]).abs() / j_star[s].abs())
                .sum::<f64>()
        })
        .sum();
    Ok(total / values.len() as f64)
}

/// Terminal level of a learning curve: mean of its last tenth (at least one
/// point).
pub fn plateau(series: &[f64]) -> f64 {
    let w = (series.len() / 10).max(1);
    let tail = &series[series.len() - w..];
    tail.iter().sum::<f64>() / w as f64
}

/// Percentage of episodes until the curve enters `plateau·(1+threshold)` and
/// stays there. Returns 100 if it never settles.
pub fn compute_epr(series: &[f64], threshold: f64) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::InvalidConfig("empty series".into()));
    }
    let best = plateau(series);
    let limit = best * (1.0 + threshold) + 1e-12;
    let n = series.len();
    // walk back from the end to find where the curve last left the band
    let mut first = n;
    for i in (0..n).rev() {
        if series[i] <= limit {
            first = i;
        } else {
            break;
        }
    }
    if first == n {
        return Ok(100.0);
    }
    Ok((first + 1) as f64 / n as f64 * 100.0)
}

/// Element-wise mean of equally long curves.
pub fn mean_curve(curves: &[Vec<f64>]) -> Vec<f64> {
    if curves.is_empty() {
        return Vec::new();
    }
    let n = curves.iter().map(|c| c.len()).min().unwrap_or(0);
    (0..n)
        .map(|i| curves.iter().map(|c| c[i]).sum::<f64>() / curves.len() as f64)
        .collect()
}

/// Median of a non-empty sample.
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_v_examples() {
        let j = ValueTable(vec![2.0, 4.0, 0.0]);
        let term = [false, false, true];
        assert_eq!(compute_delta_v(&[j.clone()], &j, &term).unwrap(), 0.0);
        let v = ValueTable(vec![2.2, 4.4, 7.0]);
        assert!((compute_delta_v(&[v], &j, &term).unwrap() - 0.2).abs() < 1e-12);
        let a = ValueTable(vec![2.2, 4.4, 0.0]);
        let b = ValueTable(vec![2.4, 4.8, 0.0]);
        assert!((compute_delta_v(&[a, b], &j, &term).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn epr_examples() {
        let mut s: Vec<f64> = (0..100).map(|i| (100 - i) as f64).collect();
        for x in s.iter_mut().skip(29) {
            *x = 1.0;
        }
        assert_eq!(compute_epr(&s, 0.05).unwrap(), 30.0);
        assert_eq!(compute_epr(&[3.0; 50], 0.05).unwrap(), 2.0);
        let never: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 1.0 } else { 3.0 }).collect();
        assert_eq!(compute_epr(&never, 0.05).unwrap(), 100.0);
    }

    #[test]
    fn csv_round_trip() {
        let mut m = MetricSeries::new();
        m.push(MetricRow {
            run: 0,
            episode: 1,
            beta: 0.1 + 0.2,
            delta_v_pct: 1.0 / 3.0,
            policy_entropy: f64::INFINITY,
            steps: 7,
        });
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = MetricSeries::read_csv(&buf[..]).unwrap();
        assert_eq!(back, m);
    }
}

//! Cellwise breakdown: executable contamination attacks, the empirical
//! breakdown fraction of location estimators, and breakdown curves.
//!
//! Every attack replaces at most one cell per row, cycling the target
//! column round-robin, so the per-column replacement count meets the
//! ceiling bound of the corresponding construction with equality when the
//! number of attacked rows is a multiple of the number of columns.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::estimate::{column_location, mean_matrix, spatial_median_matrix, LocationKind};
use crate::sim;
use crate::svg::{num, Svg};

/// Probability that a row of `d` independently contaminated cells (each
/// with probability `eps`) holds at least one outlying cell.
pub fn contamination_probability(eps: f64, d: u32) -> f64 {
    1.0 - (1.0 - eps).powi(d as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AttackParams {
    /// Every row moved onto `x^T 1 = c`.
    Location { c: f64 },
    /// Rows moved onto `x^T 1 = offset`, the hyperplane through the first row.
    /// `degenerate` marks `n <= d`, where no replacement is needed.
    Implosion { offset: f64, degenerate: bool },
    /// Rows moved onto `y = alpha0 + beta0 * sum(x)`; `gamma0 = (alpha0, beta0, ..., beta0)`.
    Regression { gamma0: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackResult {
    #[serde(serialize_with = "ser_data")]
    pub contaminated: DataMatrix,
    #[serde(serialize_with = "crate::io::ser_bool_matrix")]
    pub replaced: DMatrix<bool>,
    pub per_column_count: Vec<usize>,
    pub params: AttackParams,
}

fn ser_data<S: serde::Serializer>(x: &DataMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    crate::io::data_json(x).serialize(s)
}

impl AttackResult {
    fn build(contaminated: DataMatrix, replaced: DMatrix<bool>, params: AttackParams) -> Self {
        let per_column_count = (0..replaced.ncols())
            .map(|j| replaced.column(j).iter().filter(|&&r| r).count())
            .collect();
        Self {
            contaminated,
            replaced,
            per_column_count,
            params,
        }
    }

    pub fn max_per_column(&self) -> usize {
        self.per_column_count.iter().copied().max().unwrap_or(0)
    }
}

fn row_sum_except(x: &DMatrix<f64>, i: usize, skip: usize) -> f64 {
    (0..x.ncols()).filter(|&j| j != skip).map(|j| x[(i, j)]).sum()
}

/// Move every row onto the hyperplane `x^T 1 = c` by replacing the cell in
/// column `i mod d` of row `i`.
pub fn hyperplane_attack_location(x: &DataMatrix, c: f64) -> Result<AttackResult> {
    let v = x.complete()?;
    let (n, d) = v.shape();
    if n < d {
        return Err(Error::InvalidInput(format!("location attack needs n >= d, got {n} < {d}")));
    }
    let max_sum = (0..n).map(|i| v.row(i).sum()).fold(f64::NEG_INFINITY, f64::max);
    if !(c > max_sum) {
        return Err(Error::InvalidInput(format!(
            "c = {c} must exceed the largest row sum {max_sum}"
        )));
    }
    let mut out = v.clone();
    let mut replaced = DMatrix::from_element(n, d, false);
    for i in 0..n {
        let j = i % d;
        out[(i, j)] = c - row_sum_except(v, i, j);
        replaced[(i, j)] = true;
    }
    let contaminated = rename_like(DataMatrix::new(out)?, x)?;
    Ok(AttackResult::build(contaminated, replaced, AttackParams::Location { c }))
}

/// Keep the first row and move every other row onto the affine hyperplane
/// `x^T 1 = sum(x_1)` by replacing the cell in column `(i - 1) mod d`.
pub fn implosion_attack(x: &DataMatrix) -> Result<AttackResult> {
    let v = x.complete()?;
    let (n, d) = v.shape();
    let offset = v.row(0).sum();
    if n <= d {
        return Ok(AttackResult::build(
            x.clone(),
            DMatrix::from_element(n, d, false),
            AttackParams::Implosion {
                offset,
                degenerate: true,
            },
        ));
    }
    let mut out = v.clone();
    let mut replaced = DMatrix::from_element(n, d, false);
    for i in 1..n {
        let j = (i - 1) % d;
        out[(i, j)] = offset - row_sum_except(v, i, j);
        replaced[(i, j)] = true;
    }
    let contaminated = rename_like(DataMatrix::new(out)?, x)?;
    Ok(AttackResult::build(
        contaminated,
        replaced,
        AttackParams::Implosion {
            offset,
            degenerate: false,
        },
    ))
}

/// Regression attack on `Z = [x_1 .. x_p, y]` (response last).
///
/// With `alpha0 = y_1 - beta0 * sum_j x_1j`, every row but the first gets
/// one cell replaced (round-robin over the `p + 1` columns) so that it
/// satisfies `y = alpha0 + beta0 * sum_j x_j` exactly.
pub fn regression_attack(z: &DataMatrix, beta0: f64) -> Result<AttackResult> {
    let v = z.complete()?;
    let (n, cols) = v.shape();
    if cols < 2 {
        return Err(Error::InvalidInput("regression attack needs at least one covariate".into()));
    }
    let p = cols - 1;
    if n <= cols {
        return Err(Error::InvalidInput(format!("regression attack needs n > p + 1, got n = {n}")));
    }
    if beta0 == 0.0 || !beta0.is_finite() {
        return Err(Error::InvalidInput("beta0 must be finite and nonzero".into()));
    }
    let xsum = |m: &DMatrix<f64>, i: usize| (0..p).map(|j| m[(i, j)]).sum::<f64>();
    let alpha0 = v[(0, p)] - beta0 * xsum(v, 0);
    let mut out = v.clone();
    let mut replaced = DMatrix::from_element(n, cols, false);
    for i in 1..n {
        let j = (i - 1) % cols;
        if j == p {
            out[(i, p)] = alpha0 + beta0 * xsum(v, i);
        } else {
            let others = xsum(v, i) - v[(i, j)];
            out[(i, j)] = (v[(i, p)] - alpha0) / beta0 - others;
        }
        replaced[(i, j)] = true;
    }
    let mut gamma0 = vec![alpha0];
    gamma0.extend(std::iter::repeat_n(beta0, p));
    let contaminated = rename_like(DataMatrix::new(out)?, z)?;
    Ok(AttackResult::build(contaminated, replaced, AttackParams::Regression { gamma0 }))
}

fn rename_like(mut out: DataMatrix, like: &DataMatrix) -> Result<DataMatrix> {
    out.set_col_names(like.col_names().to_vec())?;
    out.set_row_names(like.row_names().to_vec())?;
    Ok(out)
}

/// Location estimators compared in breakdown experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationEstimator {
    Mean,
    SpatialMedian,
    CoordMedian,
    CoordMcd,
}

impl LocationEstimator {
    pub const ALL: [LocationEstimator; 4] = [
        LocationEstimator::Mean,
        LocationEstimator::SpatialMedian,
        LocationEstimator::CoordMedian,
        LocationEstimator::CoordMcd,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LocationEstimator::Mean => "mean",
            LocationEstimator::SpatialMedian => "spatial_median",
            LocationEstimator::CoordMedian => "coord_median",
            LocationEstimator::CoordMcd => "coord_mcd",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown location estimator '{s}'")))
    }

    /// Estimate on complete data. The coordinatewise MCD uses subsets of
    /// `floor(n/2) + 1` cells. The spatial median falls back to its last
    /// iterate if the iteration budget runs out.
    pub fn estimate(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        let coordwise = |kind| -> Result<Vec<f64>> {
            (0..x.ncols())
                .map(|j| column_location(x.column(j).as_slice(), kind))
                .collect()
        };
        match self {
            LocationEstimator::Mean => Ok(mean_matrix(x)),
            LocationEstimator::SpatialMedian => match spatial_median_matrix(x, 1e-10, 10_000) {
                Err(Error::NoConvergence { trace, .. }) => Ok(trace),
                other => other,
            },
            LocationEstimator::CoordMedian => coordwise(LocationKind::Median),
            LocationEstimator::CoordMcd => coordwise(LocationKind::UnivMcd { alpha: 0.5 }),
        }
    }
}

pub fn euclidean_norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Put `value` into `k` cells of every column, cell `i` of column `j` going
/// to row `(j k + i) mod n`, so that rows share outlying cells as little as
/// possible.
pub fn place_outlying_cells(x: &mut DMatrix<f64>, k: usize, value: f64) {
    let (n, d) = x.shape();
    for j in 0..d {
        for i in 0..k {
            x[((j * k + i) % n, j)] = value;
        }
    }
}

/// Smallest fraction `k/n` of outlying cells per column (placed by
/// [`place_outlying_cells`]) for which `|estimate| > threshold`, or `0.5`
/// when that never happens for `k <= n/2`.
pub fn empirical_breakdown(
    estimator: LocationEstimator,
    x: &DataMatrix,
    value: f64,
    threshold: f64,
) -> Result<f64> {
    let v = x.complete()?;
    let n = v.nrows();
    for k in 1..=n / 2 {
        let mut w = v.clone();
        place_outlying_cells(&mut w, k, value);
        if euclidean_norm(&estimator.estimate(&w)?) > threshold {
            return Ok(k as f64 / n as f64);
        }
    }
    Ok(0.5)
}

/// Mean norm of each estimator for `k = 0..=n/2` outlying cells per column.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BreakdownCurve {
    pub n: usize,
    pub d: usize,
    pub value: f64,
    pub reps: usize,
    pub seed: u64,
    pub estimators: Vec<LocationEstimator>,
    /// Number of outlying cells per column.
    pub k: Vec<usize>,
    /// `norms[e][k]`: average norm of estimator `e` at `k`.
    pub norms: Vec<Vec<f64>>,
}

impl BreakdownCurve {
    pub fn percent(&self, k: usize) -> f64 {
        100.0 * k as f64 / self.n as f64
    }

    pub fn norms_of(&self, e: LocationEstimator) -> Option<&[f64]> {
        self.estimators.iter().position(|&x| x == e).map(|i| self.norms[i].as_slice())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,percent");
        for e in &self.estimators {
            out.push(',');
            out.push_str(e.name());
        }
        out.push('\n');
        for (idx, &k) in self.k.iter().enumerate() {
            out.push_str(&format!("{k},{}", self.percent(k)));
            for row in &self.norms {
                out.push_str(&format!(",{}", row[idx]));
            }
            out.push('\n');
        }
        out
    }

    /// Line plot of norm against percentage of outlying cells per column.
    pub fn to_svg(&self) -> String {
        const COLORS: [&str; 4] = ["black", "red", "blue", "green"];
        let (w, h) = (640.0, 420.0);
        let (left, right, top, bottom) = (60.0, 150.0, 20.0, 50.0);
        let pw = w - left - right;
        let ph = h - top - bottom;
        let ymax = self
            .norms
            .iter()
            .flatten()
            .copied()
            .fold(1.0f64, f64::max)
            * 1.05;
        let sx = |pct: f64| left + pw * pct / 50.0;
        let sy = |v: f64| top + ph * (1.0 - v / ymax);

        let mut svg = Svg::new(w, h);
        svg.line(left, top + ph, left + pw, top + ph, "black", 1.0);
        svg.line(left, top, left, top + ph, "black", 1.0);
        for t in 0..=5 {
            let pct = 10.0 * t as f64;
            svg.line(sx(pct), top + ph, sx(pct), top + ph + 5.0, "black", 1.0);
            svg.text(sx(pct), top + ph + 18.0, 11.0, "middle", 0.0, "black", &format!("{}", 10 * t));
            let yv = ymax / 1.05 * t as f64 / 5.0;
            svg.line(left - 5.0, sy(yv), left, sy(yv), "black", 1.0);
            svg.text(left - 8.0, sy(yv) + 4.0, 11.0, "end", 0.0, "black", &num(yv));
        }
        svg.text(left + pw / 2.0, h - 10.0, 12.0, "middle", 0.0, "black", "% outlying cells per column");
        svg.text(15.0, top + ph / 2.0, 12.0, "middle", -90.0, "black", "norm of location estimate");
        for (e, row) in self.estimators.iter().zip(&self.norms) {
            let color = COLORS[LocationEstimator::ALL.iter().position(|x| x == e).unwrap_or(0)];
            let pts: Vec<(f64, f64)> = self
                .k
                .iter()
                .zip(row)
                .filter(|(&k, _)| self.percent(k) <= 50.0)
                .map(|(&k, &v)| (sx(self.percent(k)), sy(v)))
                .collect();
            svg.polyline(&pts, color, 1.5);
        }
        for (i, e) in self.estimators.iter().enumerate() {
            let color = COLORS[LocationEstimator::ALL.iter().position(|x| x == e).unwrap_or(0)];
            let y = top + 15.0 + 18.0 * i as f64;
            svg.line(left + pw + 10.0, y, left + pw + 30.0, y, color, 2.0);
            svg.text(left + pw + 35.0, y + 4.0, 11.0, "start", 0.0, "black", e.name());
        }
        svg.finish()
    }
}

/// Average norm of every estimator over `reps` standard Gaussian samples of
/// size `n x d`, for `k = 0..=n/2` outlying cells per column.
///
/// Replication `r` draws from `sim::rng(seed + r)`; replications may run in
/// parallel and are summed in index order, so the result does not depend on
/// scheduling.
pub fn breakdown_curve(
    estimators: &[LocationEstimator],
    n: usize,
    d: usize,
    value: f64,
    reps: usize,
    seed: u64,
) -> Result<BreakdownCurve> {
    if n < 2 || d < 1 || reps < 1 || estimators.is_empty() {
        return Err(Error::InvalidInput("breakdown curve needs n >= 2, d >= 1, reps >= 1 and an estimator".into()));
    }
    let ks: Vec<usize> = (0..=n / 2).collect();
    let per_rep: Vec<Vec<Vec<f64>>> = (0..reps)
        .into_par_iter()
        .map(|r| -> Result<Vec<Vec<f64>>> {
            let mut rng = sim::rng(seed.wrapping_add(r as u64));
            let clean = sim::gaussian_matrix(&mut rng, n, d);
            let mut norms = vec![Vec::with_capacity(ks.len()); estimators.len()];
            for &k in &ks {
                let mut x = clean.clone();
                place_outlying_cells(&mut x, k, value);
                for (e, est) in estimators.iter().enumerate() {
                    norms[e].push(euclidean_norm(&est.estimate(&x)?));
                }
            }
            Ok(norms)
        })
        .collect::<Result<_>>()?;

    let mut norms = vec![vec![0.0; ks.len()]; estimators.len()];
    for rep in &per_rep {
        for (acc, row) in norms.iter_mut().zip(rep) {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
    }
    for row in &mut norms {
        for a in row.iter_mut() {
            *a /= reps as f64;
        }
    }
    Ok(BreakdownCurve {
        n,
        d,
        value,
        reps,
        seed,
        estimators: estimators.to_vec(),
        k: ks,
        norms,
    })
}

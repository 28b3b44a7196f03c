//! Detection of outlying cells.
//!
//! Two detectors are provided. [`flag_univariate`] standardizes each column
//! robustly and flags large z-scores. [`ddc`] predicts every cell from the
//! columns it correlates with and flags large standardized cell residuals,
//! which also catches cells that are only outlying relative to the rest of
//! their row.

mod cellmap;

use nalgebra::DMatrix;
use serde::Serialize;

pub use cellmap::{cell_color, cellmap_svg, write_cellmap};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::univar;

/// `sqrt(chi2_1(0.99))`, the default cutoff on standardized residuals.
pub const DEFAULT_CUTOFF: f64 = 2.575_829_303_548_900_4;

/// A row is flagged when more than this fraction of its observed cells is.
pub const ROW_FLAG_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellFlags {
    #[serde(serialize_with = "crate::io::ser_bool_matrix")]
    pub flags: DMatrix<bool>,
    /// Standardized cell residuals, NaN in missing cells.
    #[serde(serialize_with = "crate::io::ser_matrix")]
    pub stdres: DMatrix<f64>,
    /// Predicted cell values in the original units.
    #[serde(serialize_with = "crate::io::ser_matrix")]
    pub predicted: DMatrix<f64>,
    #[serde(serialize_with = "crate::io::ser_bool_matrix")]
    pub missing: DMatrix<bool>,
    pub row_flags: Vec<bool>,
    pub cutoff: f64,
}

impl CellFlags {
    pub fn n_flagged(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.flags.shape()
    }

    /// Build flags and row flags from standardized residuals.
    pub fn from_residuals(
        stdres: DMatrix<f64>,
        predicted: DMatrix<f64>,
        missing: DMatrix<bool>,
        cutoff: f64,
    ) -> Self {
        let (n, d) = stdres.shape();
        let flags = DMatrix::from_fn(n, d, |i, j| !missing[(i, j)] && stdres[(i, j)].abs() > cutoff);
        let row_flags = (0..n)
            .map(|i| {
                let obs = (0..d).filter(|&j| !missing[(i, j)]).count();
                let hit = (0..d).filter(|&j| flags[(i, j)]).count();
                obs > 0 && hit as f64 / obs as f64 > ROW_FLAG_FRACTION
            })
            .collect();
        Self {
            flags,
            stdres,
            predicted,
            missing,
            row_flags,
            cutoff,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdcOptions {
    pub corr_threshold: f64,
    pub cutoff: f64,
    pub max_predictors: usize,
}

impl Default for DdcOptions {
    fn default() -> Self {
        Self {
            corr_threshold: 0.5,
            cutoff: DEFAULT_CUTOFF,
            max_predictors: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Detector {
    Univariate { cutoff: f64 },
    Ddc(DdcOptions),
}

impl Default for Detector {
    fn default() -> Self {
        Detector::Ddc(DdcOptions::default())
    }
}

impl Detector {
    pub fn name(&self) -> &'static str {
        match self {
            Detector::Univariate { .. } => "univariate",
            Detector::Ddc(_) => "ddc",
        }
    }

    pub fn cutoff(&self) -> f64 {
        match self {
            Detector::Univariate { cutoff } => *cutoff,
            Detector::Ddc(o) => o.cutoff,
        }
    }
}

pub fn run(x: &DataMatrix, detector: &Detector) -> Result<CellFlags> {
    match detector {
        Detector::Univariate { cutoff } => flag_univariate(x, *cutoff),
        Detector::Ddc(opts) => ddc(x, opts),
    }
}

struct ColumnStats {
    median: f64,
    scale: f64,
}

fn column_stats(x: &DataMatrix) -> Result<Vec<ColumnStats>> {
    (0..x.ncols())
        .map(|j| {
            let col = x.column_observed(j);
            let name = || x.col_names()[j].clone();
            if col.len() < 2 {
                return Err(Error::InvalidInput(format!("column '{}' has fewer than 2 observed cells", name())));
            }
            let median = univar::median(&col)?;
            let scale = univar::mad(&col)?;
            if scale <= 0.0 {
                return Err(Error::ZeroScale { column: name() });
            }
            Ok(ColumnStats { median, scale })
        })
        .collect()
}

fn check_cutoff(cutoff: f64) -> Result<()> {
    if !(cutoff.is_finite() && cutoff > 0.0) {
        return Err(Error::InvalidInput(format!("cutoff must be positive, got {cutoff}")));
    }
    Ok(())
}

/// Columnwise robust z-scores `(x - median) / MAD`, flagged above `cutoff`.
pub fn flag_univariate(x: &DataMatrix, cutoff: f64) -> Result<CellFlags> {
    check_cutoff(cutoff)?;
    let stats = column_stats(x)?;
    let (n, d) = (x.nrows(), x.ncols());
    let stdres = DMatrix::from_fn(n, d, |i, j| match x.get(i, j) {
        Some(v) => (v - stats[j].median) / stats[j].scale,
        None => f64::NAN,
    });
    let predicted = DMatrix::from_fn(n, d, |_, j| stats[j].median);
    Ok(CellFlags::from_residuals(stdres, predicted, x.missing().clone(), cutoff))
}

/// Smallest value whose cumulative weight reaches half the total weight.
pub(crate) fn weighted_median(items: &mut [(f64, f64)]) -> f64 {
    items.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = items.iter().map(|p| p.1).sum();
    let mut acc = 0.0;
    for &(v, w) in items.iter() {
        acc += w;
        if acc >= 0.5 * total {
            return v;
        }
    }
    items.last().map_or(0.0, |p| p.0)
}

/// Correlation-based cell detector.
///
/// 1. Standardize each column by median and MAD.
/// 2. For every column keep up to `max_predictors` other columns whose
///    robust correlation (Spearman mapped to the Gaussian scale by
///    `2 sin(pi r / 6)`) is at least `corr_threshold` in absolute value.
/// 3. Predict each standardized cell by the weighted median of
///    `r_jk z_ik` over the kept columns, with weights `|r_jk|`, skipping
///    predictor cells that are missing or univariately outlying
///    (`|z_ik| > cutoff`); zero when nothing is available.
/// 4. Standardize the residuals per column by their MAD and flag above
///    `cutoff`.
pub fn ddc(x: &DataMatrix, opts: &DdcOptions) -> Result<CellFlags> {
    check_cutoff(opts.cutoff)?;
    let (n, d) = (x.nrows(), x.ncols());
    if n < 20 || d < 2 {
        return Err(Error::InvalidInput(format!("ddc needs n >= 20 and d >= 2, got {n}x{d}")));
    }
    let stats = column_stats(x)?;
    let z = DMatrix::from_fn(n, d, |i, j| match x.get(i, j) {
        Some(v) => (v - stats[j].median) / stats[j].scale,
        None => f64::NAN,
    });

    let corr = robust_correlations(x, &z);
    let predictors: Vec<Vec<(usize, f64)>> = (0..d)
        .map(|j| {
            let mut cand: Vec<(usize, f64)> = (0..d)
                .filter(|&k| k != j && corr[(j, k)].abs() >= opts.corr_threshold)
                .map(|k| (k, corr[(j, k)]))
                .collect();
            cand.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
            cand.truncate(opts.max_predictors);
            cand
        })
        .collect();

    let mut zhat = DMatrix::<f64>::zeros(n, d);
    let mut items = Vec::with_capacity(opts.max_predictors);
    for j in 0..d {
        for i in 0..n {
            items.clear();
            items.extend(
                predictors[j]
                    .iter()
                    .filter(|(k, _)| !x.is_missing(i, *k) && z[(i, *k)].abs() <= opts.cutoff)
                    .map(|&(k, r)| (r * z[(i, k)], r.abs())),
            );
            zhat[(i, j)] = if items.is_empty() { 0.0 } else { weighted_median(&mut items) };
        }
    }

    let mut stdres = DMatrix::from_element(n, d, f64::NAN);
    for j in 0..d {
        let res: Vec<f64> = (0..n)
            .filter(|&i| !x.is_missing(i, j))
            .map(|i| z[(i, j)] - zhat[(i, j)])
            .collect();
        let scale = univar::mad(&res)?;
        if scale <= 0.0 {
            return Err(Error::ZeroScale {
                column: format!("residuals of {}", x.col_names()[j]),
            });
        }
        for i in 0..n {
            if !x.is_missing(i, j) {
                stdres[(i, j)] = (z[(i, j)] - zhat[(i, j)]) / scale;
            }
        }
    }
    let predicted = DMatrix::from_fn(n, d, |i, j| stats[j].median + stats[j].scale * zhat[(i, j)]);
    Ok(CellFlags::from_residuals(stdres, predicted, x.missing().clone(), opts.cutoff))
}

/// Symmetric matrix of Gaussian-consistent Spearman correlations on
/// pairwise complete observations; unit diagonal.
fn robust_correlations(x: &DataMatrix, z: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, d) = (x.nrows(), x.ncols());
    let complete: Vec<bool> = (0..d).map(|j| (0..n).all(|i| !x.is_missing(i, j))).collect();
    let full_ranks: Vec<Option<Vec<f64>>> = (0..d)
        .map(|j| complete[j].then(|| univar::ranks(&z.column(j).iter().copied().collect::<Vec<_>>())))
        .collect();
    let mut corr = DMatrix::<f64>::identity(d, d);
    for j in 0..d {
        for k in (j + 1)..d {
            let rc = match (&full_ranks[j], &full_ranks[k]) {
                (Some(a), Some(b)) => univar::pearson(a, b),
                _ => {
                    let (a, b): (Vec<f64>, Vec<f64>) = (0..n)
                        .filter(|&i| !x.is_missing(i, j) && !x.is_missing(i, k))
                        .map(|i| (z[(i, j)], z[(i, k)]))
                        .unzip();
                    if a.len() < 3 {
                        continue;
                    }
                    univar::pearson(&univar::ranks(&a), &univar::ranks(&b))
                }
            };
            let r = univar::spearman_to_pearson(rc.rho);
            corr[(j, k)] = r;
            corr[(k, j)] = r;
        }
    }
    corr
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim;
    use proptest::prelude::*;

    fn data(v: DMatrix<f64>) -> DataMatrix {
        DataMatrix::new(v).unwrap()
    }

    #[test]
    fn univariate_flags_single_spike() {
        let mut v = DMatrix::from_fn(100, 1, |i, _| (i % 10) as f64 * 0.1);
        v[(99, 0)] = 50.0;
        let f = flag_univariate(&data(v), DEFAULT_CUTOFF).unwrap();
        assert_eq!(f.n_flagged(), 1);
        assert!(f.flags[(99, 0)]);
    }

    #[test]
    fn univariate_zero_scale_names_column() {
        let v = DMatrix::from_fn(100, 2, |i, j| if j == 1 && i < 99 { 0.0 } else { i as f64 });
        match flag_univariate(&data(v), DEFAULT_CUTOFF) {
            Err(Error::ZeroScale { column }) => assert_eq!(column, "V2"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn univariate_flag_rate_on_clean_data() {
        let v = sim::gaussian_matrix(&mut sim::rng(3), 1000, 5);
        let f = flag_univariate(&data(v), DEFAULT_CUTOFF).unwrap();
        for j in 0..5 {
            let rate = (0..1000).filter(|&i| f.flags[(i, j)]).count() as f64 / 1000.0;
            assert!((rate - 0.01).abs() <= 0.005 + 1e-12, "column {j}: {rate}");
        }
    }

    #[test]
    fn missing_cells_are_never_flagged() {
        let mut v = sim::gaussian_matrix(&mut sim::rng(4), 50, 3);
        v[(0, 0)] = 100.0;
        let mask = DMatrix::from_fn(50, 3, |i, j| i == 0 && j == 0);
        let x = DataMatrix::with_mask(v, mask).unwrap();
        for f in [
            flag_univariate(&x, DEFAULT_CUTOFF).unwrap(),
            ddc(&x, &DdcOptions::default()).unwrap(),
        ] {
            assert!(!f.flags[(0, 0)]);
            assert!(f.stdres[(0, 0)].is_nan());
        }
    }

    /// Bivariate sample with correlation -0.9 plus one structural outlier
    /// that sits well inside both marginal ranges.
    fn structural_outlier() -> DataMatrix {
        let mut v = sim::mvn_sample(&mut sim::rng(21), 200, &sim::toeplitz_cov(2, -0.9));
        v[(0, 0)] = 1.5;
        v[(0, 1)] = 1.5;
        data(v)
    }

    #[test]
    fn structural_outlier_is_missed_by_univariate_filter() {
        let x = structural_outlier();
        let f = flag_univariate(&x, DEFAULT_CUTOFF).unwrap();
        assert!(!f.flags[(0, 0)] && !f.flags[(0, 1)]);
    }

    #[test]
    fn structural_outlier_is_caught_by_ddc() {
        let x = structural_outlier();
        let f = ddc(&x, &DdcOptions::default()).unwrap();
        assert!(f.flags[(0, 0)] || f.flags[(0, 1)]);
    }

    #[test]
    fn ddc_without_correlated_columns_reduces_to_univariate() {
        let x = data(sim::gaussian_matrix(&mut sim::rng(5), 200, 4));
        let opts = DdcOptions {
            corr_threshold: 0.9,
            ..DdcOptions::default()
        };
        let a = ddc(&x, &opts).unwrap();
        let b = flag_univariate(&x, DEFAULT_CUTOFF).unwrap();
        assert_eq!(a.flags, b.flags);
        assert!((&a.stdres - &b.stdres).amax() < 1e-12);
    }

    #[test]
    fn ddc_preconditions() {
        let x = data(sim::gaussian_matrix(&mut sim::rng(6), 10, 3));
        assert!(ddc(&x, &DdcOptions::default()).is_err());
        let x = data(sim::gaussian_matrix(&mut sim::rng(6), 30, 1));
        assert!(ddc(&x, &DdcOptions::default()).is_err());
    }

    #[test]
    fn ddc_detects_toeplitz_contamination() {
        let (v, truth) = sim::contaminated_toeplitz(&mut sim::rng(7), 1000, 10, 0.1, 5.0);
        let f = ddc(&data(v), &DdcOptions::default()).unwrap();
        let tp = f.flags.iter().zip(truth.iter()).filter(|(a, b)| **a && **b).count();
        let fp = f.flags.iter().zip(truth.iter()).filter(|(a, b)| **a && !**b).count();
        let recall = tp as f64 / 1000.0;
        let fpr = fp as f64 / 9000.0;
        assert!(recall >= 0.9, "recall {recall}");
        assert!(fpr <= 0.05, "fpr {fpr}");
    }

    #[test]
    fn ddc_clean_flag_rate() {
        let v = sim::mvn_sample(&mut sim::rng(8), 1000, &sim::toeplitz_cov(10, -0.9));
        let f = ddc(&data(v), &DdcOptions::default()).unwrap();
        let rate = f.n_flagged() as f64 / 10_000.0;
        assert!(rate <= 0.025, "rate {rate}");
    }

    #[test]
    fn weighted_median_picks_heavy_side() {
        let mut items = vec![(1.0, 1.0), (5.0, 3.0), (-2.0, 1.0)];
        assert_eq!(weighted_median(&mut items), 5.0);
        let mut items = vec![(1.0, 1.0), (2.0, 1.0), (3.0, 1.0)];
        assert_eq!(weighted_median(&mut items), 2.0);
    }

    #[test]
    fn row_flags_majority_rule() {
        let stdres = DMatrix::from_row_slice(2, 3, &[5.0, 5.0, 0.0, 5.0, 0.0, 0.0]);
        let f = CellFlags::from_residuals(
            stdres,
            DMatrix::zeros(2, 3),
            DMatrix::from_element(2, 3, false),
            DEFAULT_CUTOFF,
        );
        assert_eq!(f.row_flags, vec![true, false]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn univariate_affine_invariance(seed in 0u64..500, a in 0.1f64..20.0, b in -100.0f64..100.0, col in 0usize..3) {
            let v = sim::gaussian_matrix(&mut sim::rng(seed), 60, 3);
            let mut w = v.clone();
            for i in 0..60 {
                w[(i, col)] = a * v[(i, col)] + b;
            }
            let f1 = flag_univariate(&data(v), DEFAULT_CUTOFF).unwrap();
            let f2 = flag_univariate(&data(w), DEFAULT_CUTOFF).unwrap();
            prop_assert_eq!(&f1.flags, &f2.flags);
            prop_assert!((&f1.stdres - &f2.stdres).amax() < 1e-9);
        }

        #[test]
        fn ddc_column_permutation_equivariance(seed in 0u64..500) {
            let (v, _) = sim::contaminated_toeplitz(&mut sim::rng(seed), 100, 5, 0.05, 5.0);
            let perm = [3usize, 0, 4, 1, 2];
            let w = DMatrix::from_fn(100, 5, |i, j| v[(i, perm[j])]);
            let f1 = ddc(&data(v), &DdcOptions::default()).unwrap();
            let f2 = ddc(&data(w), &DdcOptions::default()).unwrap();
            for i in 0..100 {
                for j in 0..5 {
                    prop_assert_eq!(f2.flags[(i, j)], f1.flags[(i, perm[j])]);
                }
            }
        }
    }
}

//! Plug-in regression from a joint covariance model, and the AR(p)
//! embedding of a time series.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::estimate::{CovMethod, CovModel};
use crate::linalg::{solve_spd, sym_eigen};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegFit {
    /// Intercept; 0 for a fit without intercept.
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub sigma_hat: f64,
    pub intercept: bool,
    pub response_index: usize,
    /// `method` of the covariance model the fit was computed from.
    pub source: String,
    pub warnings: Vec<String>,
}

/// Regression of variable `response_index` on all other variables of the
/// model: `beta = S_xx^{-1} S_xy`, `alpha = mu_y - mu_x^T beta` and
/// `sigma^2 = S_yy - beta^T S_xx beta`, clamped at zero.
///
/// Without intercept the same formulas run on raw second moments
/// `Sigma + mu mu^T` and `alpha` is 0.
pub fn plugin_regression(model: &CovModel, response_index: usize, intercept: bool) -> Result<RegFit> {
    let d = model.dim();
    if response_index >= d || d < 2 {
        return Err(Error::InvalidInput(format!(
            "response index {response_index} invalid for a {d}-variable model"
        )));
    }
    let mu = DVector::from_column_slice(&model.mu);
    let moments = if intercept {
        model.sigma.clone()
    } else {
        &model.sigma + &mu * mu.transpose()
    };
    let xs: Vec<usize> = (0..d).filter(|&j| j != response_index).collect();
    let p = xs.len();
    let sxx = DMatrix::from_fn(p, p, |a, b| moments[(xs[a], xs[b])]);
    let sxy = DMatrix::from_fn(p, 1, |a, _| moments[(xs[a], response_index)]);
    let syy = moments[(response_index, response_index)];

    let lmin = sym_eigen(&sxx)?.lambda_min();
    if lmin <= 1e-10 {
        return Err(Error::SingularPredictors { lambda_min: lmin });
    }
    let beta = solve_spd(&sxx, &sxy)?;
    let explained = (beta.transpose() * &sxx * &beta)[(0, 0)];
    let mut warnings = Vec::new();
    let mut s2 = syy - explained;
    if s2 < 0.0 {
        warnings.push(format!(
            "residual variance {s2:.3e} was negative and has been clamped to 0"
        ));
        s2 = 0.0;
    }
    let beta: Vec<f64> = beta.iter().copied().collect();
    let alpha = if intercept {
        mu[response_index] - xs.iter().zip(&beta).map(|(&j, b)| mu[j] * b).sum::<f64>()
    } else {
        0.0
    };
    Ok(RegFit {
        alpha,
        beta,
        sigma_hat: s2.sqrt(),
        intercept,
        response_index,
        source: model.method.clone(),
        warnings,
    })
}

/// Lagged design: row `t` (for `t = p..n`, zero based) is
/// `(y[t-1], ..., y[t-p], y[t])`, so the last column is the response.
pub fn ar_design(y: &[f64], p: usize) -> Result<DataMatrix> {
    let n = y.len();
    if p == 0 || n <= p {
        return Err(Error::InvalidInput(format!("AR design needs n > p >= 1, got n={n}, p={p}")));
    }
    let rows = n - p;
    let values = DMatrix::from_fn(rows, p + 1, |r, c| {
        let t = r + p;
        if c < p {
            y[t - 1 - c]
        } else {
            y[t]
        }
    });
    let mut x = DataMatrix::new(values)?;
    let mut names: Vec<String> = (1..=p).map(|k| format!("lag{k}")).collect();
    names.push("y".into());
    x.set_col_names(names)?;
    x.set_row_names((p..n).map(|t| (t + 1).to_string()).collect())?;
    Ok(x)
}

/// Rows of the AR(p) design that contain at least one marked series value.
pub fn ar_contaminated_rows(marked: &[bool], p: usize) -> Vec<bool> {
    (p..marked.len()).map(|t| marked[t - p..=t].iter().any(|&m| m)).collect()
}

/// Fit an AR(p) model through the design matrix and a covariance estimator.
pub fn ar_fit(y: &[f64], p: usize, method: &CovMethod, intercept: bool) -> Result<RegFit> {
    let z = ar_design(y, p)?;
    let model = method.fit(&z)?;
    plugin_regression(&model, p, intercept)
}

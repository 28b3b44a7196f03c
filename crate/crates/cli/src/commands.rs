use std::io::Write;
use std::path::Path;

use cellrobust::breakdown::{self, AttackResult, LocationEstimator};
use cellrobust::ca::{self, ContingencyTable, RobustPcaOptions};
use cellrobust::detect::{self, DdcOptions, Detector};
use cellrobust::estimate::{self, CovMethod, EmOptions, LocationKind};
use cellrobust::linalg::sym_eigen;
use cellrobust::regress::{ar_contaminated_rows, ar_fit, plugin_regression};
use cellrobust::univar::RobustScaleKind;
use cellrobust::{io, sim, DataMatrix};
use nalgebra::DMatrix;
use serde_json::{json, Value};

use crate::args::*;
use crate::CliError;

type CliResult<T = ()> = Result<T, CliError>;

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub fn dispatch(command: Command) -> CliResult {
    match command {
        Command::Detect(a) => detect_cmd(a),
        Command::Estimate(a) => estimate_cmd(a),
        Command::Regress(a) => regress_cmd(a),
        Command::Arfit(a) => arfit_cmd(a),
        Command::Breakdown(BreakdownCommand::Curve(a)) => curve_cmd(a),
        Command::Breakdown(BreakdownCommand::Attack(a)) => attack_cmd(a),
        Command::Ca(a) => ca_cmd(a),
        Command::Simulate(SimulateCommand::Gaussian(a)) => sim_gaussian(a),
        Command::Simulate(SimulateCommand::Toeplitz(a)) => sim_toeplitz(a),
        Command::Simulate(SimulateCommand::Ar(a)) => sim_ar(a),
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn emit_json(op: &str, inputs: Value, result: Value, out: Option<&Path>) -> CliResult {
    match out {
        Some(path) => Ok(io::write_json(op, inputs, result, path)?),
        None => {
            let doc = io::result_document(op, inputs, result);
            let mut stdout = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut stdout, &doc)?;
            writeln!(stdout).map_err(|e| CliError::Data(format!("standard output: {e}")))
        }
    }
}

fn emit_text(text: &str, out: Option<&Path>) -> CliResult {
    match out {
        Some(path) => Ok(io::write_atomic(path, text.as_bytes())?),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Data(format!("standard output: {e}"))),
    }
}

fn positive(name: &str, v: f64) -> CliResult<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("--{name} must be a positive finite number, got {v}")))
    }
}

fn detector(method: DetectMethod, cutoff: f64) -> CliResult<Detector> {
    let cutoff = positive("cutoff", cutoff)?;
    Ok(match method {
        DetectMethod::Univariate => Detector::Univariate { cutoff },
        DetectMethod::Ddc => Detector::Ddc(DdcOptions {
            cutoff,
            ..DdcOptions::default()
        }),
    })
}

fn scale_kind(s: ScaleArg) -> RobustScaleKind {
    match s {
        ScaleArg::Mad => RobustScaleKind::Mad,
        ScaleArg::Qn => RobustScaleKind::Qn,
    }
}

fn cov_method(cov: CovArg, d: &DetectorArgs) -> CliResult<CovMethod> {
    Ok(match cov {
        CovArg::Classical => CovMethod::Classical,
        CovArg::Twostep => CovMethod::TwoStep(detector(d.detector, d.cutoff)?),
        CovArg::Pairwise => CovMethod::Pairwise(scale_kind(d.scale)),
    })
}

fn cov_inputs(cov: CovArg, d: &DetectorArgs) -> Value {
    match cov {
        CovArg::Classical => json!({ "cov": "classical" }),
        CovArg::Twostep => json!({ "cov": "twostep", "detector": format!("{:?}", d.detector).to_lowercase(), "cutoff": d.cutoff }),
        CovArg::Pairwise => json!({ "cov": "pairwise", "scale": format!("{:?}", d.scale).to_lowercase() }),
    }
}

/// A 0/1 indicator CSV of the given shape.
fn read_indicator(path: &Path, shape: (usize, usize)) -> CliResult<DMatrix<bool>> {
    let m = io::read_csv(path)?;
    if (m.nrows(), m.ncols()) != shape {
        return Err(CliError::Data(format!(
            "{}: indicator is {}x{}, expected {}x{}",
            path_str(path),
            m.nrows(),
            m.ncols(),
            shape.0,
            shape.1
        )));
    }
    let mut out = DMatrix::from_element(shape.0, shape.1, false);
    for i in 0..shape.0 {
        for j in 0..shape.1 {
            out[(i, j)] = match m.get(i, j) {
                Some(v) if v == 0.0 => false,
                Some(v) if v == 1.0 => true,
                _ => {
                    return Err(CliError::Data(format!(
                        "{}: cell ({}, {}) is not 0 or 1",
                        path_str(path),
                        i + 1,
                        j + 1
                    )))
                }
            };
        }
    }
    Ok(out)
}

fn indicator_data(mask: &DMatrix<bool>, names: Vec<String>) -> CliResult<DataMatrix> {
    let mut x = DataMatrix::new(mask.map(|b| if b { 1.0 } else { 0.0 }))?;
    x.set_col_names(names)?;
    Ok(x)
}

fn has_default_row_names(x: &DataMatrix) -> bool {
    x.row_names().iter().enumerate().all(|(i, r)| *r == (i + 1).to_string())
}

fn detect_cmd(a: DetectArgs) -> CliResult {
    let x = io::read_csv(&a.input)?;
    let det = detector(a.method, a.cutoff)?;
    let flags = detect::run(&x, &det)?;
    if let Some(path) = &a.cellmap {
        detect::write_cellmap(&flags, x.row_names(), x.col_names(), path)?;
    }
    let metrics = match &a.truth {
        Some(path) => {
            let truth = read_indicator(path, flags.shape())?;
            let (mut tp, mut pos, mut fp, mut neg) = (0usize, 0usize, 0usize, 0usize);
            for ((&f, &t), &m) in flags.flags.iter().zip(truth.iter()).zip(flags.missing.iter()) {
                if m {
                    continue;
                }
                if t {
                    pos += 1;
                    tp += usize::from(f);
                } else {
                    neg += 1;
                    fp += usize::from(f);
                }
            }
            let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
            json!({ "recall": ratio(tp, pos), "false_positive_rate": ratio(fp, neg), "contaminated": pos })
        }
        None => Value::Null,
    };
    let inputs = json!({
        "in": path_str(&a.input),
        "method": det.name(),
        "cutoff": det.cutoff(),
        "truth": a.truth.as_deref().map(path_str),
    });
    let result = json!({
        "n_flagged": flags.n_flagged(),
        "n_rows_flagged": flags.row_flags.iter().filter(|&&r| r).count(),
        "row_names": x.row_names(),
        "col_names": x.col_names(),
        "cells": serde_json::to_value(&flags)?,
        "metrics": metrics,
    });
    emit_json("detect", inputs, result, a.out.as_deref())
}

fn estimate_cmd(a: EstimateArgs) -> CliResult {
    let x = io::read_csv(&a.input)?;
    let location = |mu: Vec<f64>, method: &str| json!({ "method": method, "mu": mu, "col_names": x.col_names() });
    let mut inputs = json!({ "in": path_str(&a.input) });
    let result = match a.method {
        EstimateMethod::Classical => serde_json::to_value(estimate::classical(&x)?)?,
        EstimateMethod::Coordmedian => location(estimate::coordwise_location(&x, LocationKind::Median)?, "coordmedian"),
        EstimateMethod::Coordmcd => location(
            estimate::coordwise_location(&x, LocationKind::UnivMcd { alpha: 0.5 })?,
            "coordmcd",
        ),
        EstimateMethod::Spatialmedian => location(estimate::spatial_median(&x, 1e-10, 10_000)?, "spatialmedian"),
        EstimateMethod::Twostep => {
            let det = detector(a.detector.detector, a.detector.cutoff)?;
            inputs["detector"] = json!(det.name());
            inputs["cutoff"] = json!(det.cutoff());
            serde_json::to_value(estimate::two_step_cov(&x, &det, &EmOptions::default())?)?
        }
        EstimateMethod::Pairwise => {
            inputs["scale"] = json!(format!("{:?}", a.detector.scale).to_lowercase());
            serde_json::to_value(estimate::pairwise_cov(&x, scale_kind(a.detector.scale), None)?)?
        }
    };
    inputs["method"] = json!(format!("{:?}", a.method).to_lowercase());
    emit_json("estimate", inputs, result, a.out.as_deref())
}

fn response_index(wanted: &str, x: &DataMatrix) -> CliResult<usize> {
    let d = x.ncols();
    if wanted == "last" {
        return Ok(d - 1);
    }
    if let Ok(k) = wanted.parse::<usize>() {
        return if (1..=d).contains(&k) {
            Ok(k - 1)
        } else {
            Err(CliError::Data(format!("response column {k} out of range 1..={d}")))
        };
    }
    x.col_names()
        .iter()
        .position(|c| c == wanted)
        .ok_or_else(|| CliError::Data(format!("no column named '{wanted}'")))
}

fn regress_cmd(a: RegressArgs) -> CliResult {
    let x = io::read_csv(&a.input)?;
    let idx = response_index(&a.response, &x)?;
    let model = cov_method(a.cov, &a.detector)?.fit(&x)?;
    let fit = plugin_regression(&model, idx, !a.no_intercept)?;
    let predictors: Vec<&String> = x.col_names().iter().enumerate().filter(|&(j, _)| j != idx).map(|(_, c)| c).collect();
    let mut inputs = cov_inputs(a.cov, &a.detector);
    inputs["in"] = json!(path_str(&a.input));
    inputs["response"] = json!(a.response);
    inputs["intercept"] = json!(!a.no_intercept);
    let result = json!({
        "response": x.col_names()[idx],
        "predictors": predictors,
        "fit": serde_json::to_value(&fit)?,
    });
    emit_json("regress", inputs, result, a.out.as_deref())
}

fn read_series(path: &Path) -> CliResult<Vec<f64>> {
    let x = io::read_csv(path)?;
    if x.ncols() != 1 {
        return Err(CliError::Data(format!("{}: expected one column, found {}", path_str(path), x.ncols())));
    }
    (0..x.nrows())
        .map(|i| {
            x.get(i, 0)
                .ok_or_else(|| CliError::Data(format!("{}: missing value in row {}", path_str(path), i + 1)))
        })
        .collect()
}

fn arfit_cmd(a: ArfitArgs) -> CliResult {
    let y = read_series(&a.input)?;
    let p = a.order as usize;
    let fit = ar_fit(&y, p, &cov_method(a.cov, &a.detector)?, !a.no_intercept)?;
    let contaminated = match &a.truth {
        Some(path) => {
            let marked = read_indicator(path, (y.len(), 1))?;
            let marked: Vec<bool> = marked.iter().copied().collect();
            let rows = ar_contaminated_rows(&marked, p);
            json!({
                "outliers": marked.iter().filter(|&&m| m).count(),
                "contaminated_rows": rows.iter().filter(|&&r| r).count(),
            })
        }
        None => Value::Null,
    };
    let mut inputs = cov_inputs(a.cov, &a.detector);
    inputs["in"] = json!(path_str(&a.input));
    inputs["order"] = json!(p);
    inputs["intercept"] = json!(!a.no_intercept);
    let result = json!({
        "n": y.len(),
        "design_rows": y.len().saturating_sub(p),
        "fit": serde_json::to_value(&fit)?,
        "contamination": contaminated,
    });
    emit_json("arfit", inputs, result, a.out.as_deref())
}

fn curve_cmd(a: CurveArgs) -> CliResult {
    let threshold = positive("threshold", a.threshold)?;
    if !a.value.is_finite() {
        return Err(CliError::Usage("--value must be finite".into()));
    }
    let estimators = a.estimators.clone().unwrap_or_else(|| LocationEstimator::ALL.to_vec());
    let curve = breakdown::breakdown_curve(&estimators, a.n, a.d, a.value, a.reps, a.seed)?;
    emit_text(&curve.to_csv(), a.out.as_deref())?;
    if let Some(path) = &a.plot {
        io::write_atomic(path, curve.to_svg().as_bytes())?;
    }
    if let Some(path) = &a.summary {
        let per: Vec<Value> = estimators
            .iter()
            .zip(&curve.norms)
            .map(|(e, norms)| {
                let k = curve.k.iter().zip(norms).find(|(_, &v)| v > threshold).map(|(&k, _)| k);
                json!({
                    "estimator": e.name(),
                    "breakdown_k": k,
                    "breakdown_fraction": k.map(|k| k as f64 / a.n as f64),
                    "max_norm": norms.iter().cloned().fold(0.0, f64::max),
                })
            })
            .collect();
        let inputs = json!({
            "n": a.n, "d": a.d, "value": a.value, "reps": a.reps, "seed": a.seed,
            "threshold": threshold,
            "estimators": estimators.iter().map(|e| e.name()).collect::<Vec<_>>(),
        });
        io::write_json("breakdown_curve", inputs, json!({ "estimators": per }), path)?;
    }
    Ok(())
}

fn attack_cmd(a: AttackArgs) -> CliResult {
    let x = io::read_csv(&a.input)?;
    let (n, d) = (x.nrows(), x.ncols());
    let (res, bound): (AttackResult, usize) = match a.kind {
        AttackKind::Location => (breakdown::hyperplane_attack_location(&x, positive("c", a.c)?)?, n.div_ceil(d)),
        AttackKind::Implosion => (breakdown::implosion_attack(&x)?, (n.saturating_sub(1)).div_ceil(d)),
        AttackKind::Regression => {
            if !a.beta0.is_finite() {
                return Err(CliError::Usage("--beta0 must be finite".into()));
            }
            (breakdown::regression_attack(&x, a.beta0)?, (n.saturating_sub(1)).div_ceil(d))
        }
    };
    io::write_csv(&res.contaminated, &a.out, !has_default_row_names(&x))?;
    if let Some(path) = &a.report {
        let attacked = &res.contaminated;
        let evaluation = match a.kind {
            AttackKind::Location => {
                let m = breakdown::LocationEstimator::SpatialMedian.estimate(attacked.complete()?)?;
                json!({ "spatial_median": m, "coordinate_sum": m.iter().sum::<f64>() })
            }
            AttackKind::Implosion => {
                let cov = estimate::classical(attacked)?;
                json!({ "classical_lambda_min": sym_eigen(&cov.sigma)?.lambda_min() })
            }
            AttackKind::Regression => {
                let fit = plugin_regression(&estimate::classical(attacked)?, d - 1, true)?;
                json!({ "least_squares": serde_json::to_value(&fit)? })
            }
        };
        let inputs = json!({
            "in": path_str(&a.input),
            "kind": format!("{:?}", a.kind).to_lowercase(),
            "c": a.c,
            "beta0": a.beta0,
        });
        let result = json!({
            "params": serde_json::to_value(&res.params)?,
            "per_column_count": res.per_column_count,
            "max_per_column": res.max_per_column(),
            "per_column_bound": bound,
            "replaced": serde_json::to_value(&res)?["replaced"],
            "evaluation": evaluation,
        });
        io::write_json("breakdown_attack", inputs, result, path)?;
    }
    Ok(())
}

fn ca_cmd(a: CaArgs) -> CliResult {
    if a.cellmap.is_some() && a.method == CaMethod::Classical {
        return Err(CliError::Usage("--cellmap requires --method robust".into()));
    }
    let x = io::read_csv(&a.input)?;
    let table = ContingencyTable::from_data(&x)?;
    let sol = match a.method {
        CaMethod::Classical => ca::classical_ca(&table, a.k)?,
        CaMethod::Robust => ca::robust_ca(
            &table,
            &RobustPcaOptions {
                k: a.k,
                cutoff: positive("cutoff", a.cutoff)?,
                max_iter: a.max_iter,
            },
        )?,
    };
    if let Some(path) = &a.biplot {
        ca::write_biplot(&sol, path)?;
    }
    if let (Some(path), Some(flags)) = (&a.cellmap, &sol.flags) {
        detect::write_cellmap(flags, &sol.row_names, &sol.col_names, path)?;
    }
    let mut inputs = json!({
        "in": path_str(&a.input),
        "method": format!("{:?}", a.method).to_lowercase(),
        "k": serde_json::to_value(a.k)?,
    });
    if a.method == CaMethod::Robust {
        inputs["cutoff"] = json!(a.cutoff);
        inputs["max_iter"] = json!(a.max_iter);
    }
    let total = table.chi_square() / table.total();
    let mut result = serde_json::to_value(&sol)?;
    result["inertia"] = json!(sol.inertia());
    result["total_inertia"] = json!(total);
    result["n_flagged"] = json!(sol.flags.as_ref().map(|f| f.n_flagged()));
    emit_json("ca", inputs, result, a.out.as_deref())
}

fn sim_gaussian(a: GaussianArgs) -> CliResult {
    if a.n == 0 || a.d == 0 {
        return Err(CliError::Usage("--n and --d must be positive".into()));
    }
    let x = DataMatrix::new(sim::gaussian_matrix(&mut sim::rng(a.seed), a.n, a.d))?;
    Ok(io::write_csv(&x, &a.out, false)?)
}

fn sim_toeplitz(a: ToeplitzArgs) -> CliResult {
    if a.n == 0 || a.d == 0 || !(0.0..=1.0).contains(&a.eps) {
        return Err(CliError::Usage("need --n, --d > 0 and --eps in [0, 1]".into()));
    }
    let (values, mask) = sim::contaminated_toeplitz(&mut sim::rng(a.seed), a.n, a.d, a.eps, a.value);
    let x = DataMatrix::new(values)?;
    io::write_csv(&x, &a.out, false)?;
    if let Some(path) = &a.truth {
        io::write_csv(&indicator_data(&mask, x.col_names().to_vec())?, path, false)?;
    }
    Ok(())
}

fn sim_ar(a: ArSimArgs) -> CliResult {
    if a.n == 0 || a.beta.is_empty() {
        return Err(CliError::Usage("--n must be positive and --beta non-empty".into()));
    }
    let mut y = sim::ar_series(&mut sim::rng(a.seed), a.n, &a.beta, a.sigma);
    let marked = if a.period > 0 {
        sim::periodic_outliers(&mut y, a.period, a.value)
    } else {
        vec![false; y.len()]
    };
    let mut x = DataMatrix::new(DMatrix::from_column_slice(a.n, 1, &y))?;
    x.set_col_names(vec!["y".into()])?;
    io::write_csv(&x, &a.out, false)?;
    if let Some(path) = &a.truth {
        let mask = DMatrix::from_column_slice(a.n, 1, &marked);
        io::write_csv(&indicator_data(&mask, vec!["outlier".into()])?, path, false)?;
    }
    Ok(())
}

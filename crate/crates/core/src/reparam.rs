//! Identifiability analysis from the log-space Jacobian of the auxiliary
//! mapping, and the monomial coordinates it suggests.
//!
//! For a model output `phi(theta)` the Jacobian with respect to `log theta` is
//! factored as `U S Vt`. Rows of `Vt` are directions in log-parameter space;
//! row `i` defines the monomial `prod_j theta_j^Vt[i, j]`, and its singular
//! value ratio `s_i / s_1` says how strongly the data constrain it.

use std::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::LikelihoodProblem;
use crate::model::{ErrorModel, ModelSpec};
use crate::numerics::{jacobian_from_duals, max_principal_angle, numerical_rank, rows, svd, Dual, Scalar};
use crate::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// `s_i / s_1` below this is a structural zero.
    pub structural: f64,
    /// `s_i / s_1` below this (and above `structural`) is poorly identified.
    pub practical: f64,
    /// Rounding step for exponents.
    pub granularity: f64,
    /// Entries below this fraction of the row maximum are dropped before rounding.
    pub negligible: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            structural: 1e-8,
            practical: 0.1,
            granularity: 0.5,
            negligible: 1e-6,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        if !(self.structural > 0.0 && self.structural <= self.practical && self.practical <= 1.0) {
            return Err(Error::invalid(format!(
                "need 0 < structural <= practical <= 1, got {} and {}",
                self.structural, self.practical
            )));
        }
        if !(self.granularity > 0.0) || !(self.negligible >= 0.0 && self.negligible < 1.0) {
            return Err(Error::invalid("granularity must be positive and negligible in [0, 1)"));
        }
        Ok(())
    }

    pub fn classify(&self, ratio: f64) -> Identifiability {
        if ratio < self.structural {
            Identifiability::StructurallyNonIdentified
        } else if ratio < self.practical {
            Identifiability::PoorlyIdentified
        } else {
            Identifiability::WellIdentified
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Identifiability {
    WellIdentified,
    PoorlyIdentified,
    StructurallyNonIdentified,
}

/// Jacobian of the fine-grid output with respect to `log theta`, by forward
/// differentiation through `theta = exp(log theta)`.
pub fn log_jacobian(model: &ModelSpec, theta_ref: &[f64]) -> Result<Matrix> {
    if !model.is_interior(theta_ref) {
        return Err(Error::OutOfBounds(format!(
            "{}: reference point {theta_ref:?} must be strictly inside the bounds",
            model.name
        )));
    }
    log_jacobian_closed(model, theta_ref)
}

/// As [`log_jacobian`] but allows points on the boundary of the box.
fn log_jacobian_closed(model: &ModelSpec, theta: &[f64]) -> Result<Matrix> {
    let n = theta.len();
    let duals: Vec<Dual<f64>> = theta
        .iter()
        .enumerate()
        .map(|(i, &t)| Dual::seeded(t, i, n, t))
        .collect();
    let out = model.predict_fine_dual(&duals)?;
    jacobian_from_duals(&out, n)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvdAnalysis {
    pub model: String,
    pub param_names: Vec<String>,
    pub reference_point: Vec<f64>,
    /// Non-increasing, one per parameter.
    pub singular_values: Vec<f64>,
    /// `s_i / s_1`.
    pub ratios: Vec<f64>,
    /// Rows of `Vt`, sign-normalised.
    #[serde(with = "rows")]
    pub right_vectors: Matrix,
    pub classification: Vec<Identifiability>,
    pub tolerances: Tolerances,
}

impl SvdAnalysis {
    /// Number of rows that are not structural zeros.
    pub fn rank(&self) -> usize {
        numerical_rank(&self.singular_values, self.tolerances.structural)
    }

    /// Structurally non-identified directions, one per column.
    pub fn null_space(&self) -> Matrix {
        let r = self.rank();
        let n = self.right_vectors.nrows();
        self.right_vectors.rows(r, n - r).transpose()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.right_vectors.row(i).iter().copied().collect()
    }
}

/// SVD of the log-space Jacobian at `theta_ref`, which may sit on the
/// boundary of the box (a boundary MLE, for instance).
pub fn analyze(model: &ModelSpec, theta_ref: &[f64], tols: &Tolerances) -> Result<SvdAnalysis> {
    tols.validate()?;
    if theta_ref.len() != model.n_params() || !model.bounds.contains(theta_ref) {
        return Err(Error::OutOfBounds(format!("{}: reference point {theta_ref:?}", model.name)));
    }
    let j = log_jacobian_closed(model, theta_ref)?;
    let f = svd(&j)?;
    let s1 = f.singular_values[0];
    let ratios: Vec<f64> = f
        .singular_values
        .iter()
        .map(|&s| if s1 > 0.0 { s / s1 } else { 0.0 })
        .collect();
    let classification = ratios.iter().map(|&r| tols.classify(r)).collect();
    Ok(SvdAnalysis {
        model: model.name.clone(),
        param_names: model.param_names.clone(),
        reference_point: theta_ref.to_vec(),
        singular_values: f.singular_values,
        ratios,
        right_vectors: f.vt,
        classification,
        tolerances: *tols,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub points: Vec<Vec<f64>>,
    pub ranks: Vec<usize>,
    /// Null-space basis at each point, columns as lists.
    pub null_spaces: Vec<Vec<Vec<f64>>>,
    /// Largest principal angle between any point's null space and the first's.
    pub max_angle: f64,
    pub angle_tolerance: f64,
    pub pass: bool,
}

/// Whether the structural null space is the same at every point.
pub fn invariance_check(model: &ModelSpec, points: &[Vec<f64>], tols: &Tolerances) -> Result<InvarianceReport> {
    const ANGLE_TOL: f64 = 1e-6;
    if points.len() < 2 {
        return Err(Error::invalid("invariance check needs at least two reference points"));
    }
    let analyses = points
        .iter()
        .map(|p| analyze(model, p, tols))
        .collect::<Result<Vec<_>>>()?;
    let bases: Vec<Matrix> = analyses.iter().map(SvdAnalysis::null_space).collect();
    let mut max_angle = 0.0f64;
    for b in &bases[1..] {
        let angle = if b.ncols() == bases[0].ncols() {
            max_principal_angle(&bases[0], b)?
        } else {
            FRAC_PI_2
        };
        max_angle = max_angle.max(angle);
    }
    Ok(InvarianceReport {
        points: points.to_vec(),
        ranks: analyses.iter().map(SvdAnalysis::rank).collect(),
        null_spaces: bases
            .iter()
            .map(|b| b.column_iter().map(|c| c.iter().copied().collect()).collect())
            .collect(),
        max_angle,
        angle_tolerance: ANGLE_TOL,
        pass: max_angle < ANGLE_TOL,
    })
}

fn round_half_away(x: f64) -> f64 {
    // f64::round already rounds ties away from zero
    x.round()
}

/// Scale an exponent row and round it to multiples of `granularity`.
///
/// The row is first normalised by its largest entry so that rounding acts on
/// relative sizes, then rounded, then divided by its smallest non-zero
/// magnitude. `[0.8165, -0.4082, -0.4082]` becomes `[2, -1, -1]`.
pub fn round_exponents(row: &[f64], granularity: f64, negligible: f64) -> Result<Vec<f64>> {
    if !(granularity > 0.0) {
        return Err(Error::invalid("granularity must be positive"));
    }
    if row.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("round_exponents"));
    }
    let max = row.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max == 0.0 {
        return Err(Error::invalid("cannot round an all-zero exponent row"));
    }
    let rounded: Vec<f64> = row
        .iter()
        .map(|&x| {
            if x.abs() <= negligible * max {
                0.0
            } else {
                round_half_away(x / max / granularity) * granularity
            }
        })
        .collect();
    let smallest = rounded
        .iter()
        .filter(|x| **x != 0.0)
        .fold(f64::INFINITY, |m, x| m.min(x.abs()));
    Ok(rounded.iter().map(|x| if *x == 0.0 { 0.0 } else { x / smallest }).collect())
}

/// Divide by the largest magnitude when every entry stays a multiple of
/// `granularity`, so `[2, -1, -1]` reads `[1, -0.5, -0.5]`.
fn rescale_to_unit_max(row: Vec<f64>, granularity: f64) -> Vec<f64> {
    let max = row.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scaled: Vec<f64> = row.iter().map(|x| x / max).collect();
    let on_lattice = scaled
        .iter()
        .all(|x| ((x / granularity) - (x / granularity).round()).abs() < 1e-9);
    if on_lattice {
        scaled
    } else {
        row
    }
}

fn format_power(name: &str, e: f64) -> String {
    if e == 1.0 {
        name.to_string()
    } else {
        format!("{name}^{}", trim_float(e))
    }
}

fn trim_float(x: f64) -> String {
    let s = format!("{x:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

fn product(terms: &[(&str, f64)]) -> String {
    let plain: Vec<String> = terms
        .iter()
        .filter(|(_, e)| *e != 0.5)
        .map(|(n, e)| format_power(n, *e))
        .collect();
    let roots: Vec<&str> = terms.iter().filter(|(_, e)| *e == 0.5).map(|(n, _)| *n).collect();
    let mut parts = plain;
    if !roots.is_empty() {
        parts.push(format!("sqrt({})", roots.join("*")));
    }
    parts.join("*")
}

/// Human-readable monomial, e.g. `T1/sqrt(T2*R)`.
pub fn monomial_label(exponents: &[f64], names: &[String]) -> String {
    let num: Vec<(&str, f64)> = names
        .iter()
        .zip(exponents)
        .filter(|(_, &e)| e > 0.0)
        .map(|(n, &e)| (n.as_str(), e))
        .collect();
    let den: Vec<(&str, f64)> = names
        .iter()
        .zip(exponents)
        .filter(|(_, &e)| e < 0.0)
        .map(|(n, &e)| (n.as_str(), -e))
        .collect();
    let top = if num.is_empty() { "1".to_string() } else { product(&num) };
    match den.len() {
        0 => top,
        1 if den[0].1 != 0.5 => format!("{top}/{}", format_power(den[0].0, den[0].1)),
        _ => {
            let bottom = product(&den);
            if den.iter().all(|(_, e)| *e == 0.5) || den.len() == 1 {
                format!("{top}/{bottom}")
            } else {
                format!("{top}/({bottom})")
            }
        }
    }
}

/// Monomial coordinates `phi = exp(A log theta)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reparameterisation {
    pub param_names: Vec<String>,
    pub labels: Vec<String>,
    #[serde(with = "rows")]
    pub exponents: Matrix,
    #[serde(with = "rows")]
    pub inverse_exponents: Matrix,
    pub classification: Vec<Identifiability>,
    pub rounded: bool,
}

impl Reparameterisation {
    /// Coordinates from explicit exponent rows.
    pub fn from_exponents(
        param_names: Vec<String>,
        exponents: Matrix,
        classification: Vec<Identifiability>,
        rounded: bool,
    ) -> Result<Self> {
        let n = param_names.len();
        if exponents.shape() != (n, n) || classification.len() != n {
            return Err(Error::invalid(format!(
                "exponent matrix must be {n}x{n} with {n} labels, got {:?}",
                exponents.shape()
            )));
        }
        let inverse_exponents = if rounded {
            let det = exponents.determinant();
            if !(det.abs() > 1e-10) {
                return Err(Error::SingularRounded { det });
            }
            exponents.clone().try_inverse().ok_or(Error::SingularRounded { det })?
        } else {
            exponents.transpose()
        };
        let labels = exponents
            .row_iter()
            .map(|r| {
                let row: Vec<f64> = r.iter().copied().collect();
                monomial_label(&row, &param_names)
            })
            .collect();
        Ok(Self {
            param_names,
            labels,
            exponents,
            inverse_exponents,
            classification,
            rounded,
        })
    }

    pub fn dim(&self) -> usize {
        self.param_names.len()
    }

    fn apply<S: Scalar>(m: &Matrix, x: &[S]) -> Vec<S> {
        let logs: Vec<S> = x.iter().map(|v| v.clone().ln()).collect();
        (0..m.nrows())
            .map(|i| {
                let mut acc = S::zero();
                for (j, l) in logs.iter().enumerate() {
                    let a = m[(i, j)];
                    if a != 0.0 {
                        acc = acc + l.clone().scale(a);
                    }
                }
                acc.exp()
            })
            .collect()
    }

    /// `theta -> phi`.
    pub fn forward(&self, theta: &[f64]) -> Vec<f64> {
        Self::apply(&self.exponents, theta)
    }

    /// `phi -> theta`.
    pub fn inverse(&self, phi: &[f64]) -> Vec<f64> {
        Self::apply(&self.inverse_exponents, phi)
    }

    pub fn forward_scalar<S: Scalar>(&self, theta: &[S]) -> Vec<S> {
        Self::apply(&self.exponents, theta)
    }

    pub fn inverse_scalar<S: Scalar>(&self, phi: &[S]) -> Vec<S> {
        Self::apply(&self.inverse_exponents, phi)
    }
}

/// Coordinates from the analysis rows, optionally rounded to simple powers.
pub fn build_reparam(analysis: &SvdAnalysis, rounded: bool) -> Result<Reparameterisation> {
    let tols = &analysis.tolerances;
    let exponents = if rounded {
        let n = analysis.right_vectors.nrows();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            let r = round_exponents(&analysis.row(i), tols.granularity, tols.negligible)?;
            let r = rescale_to_unit_max(r, tols.granularity);
            for (j, v) in r.into_iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    } else {
        analysis.right_vectors.clone()
    };
    Reparameterisation::from_exponents(
        analysis.param_names.clone(),
        exponents,
        analysis.classification.clone(),
        rounded,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridLevelRanks {
    pub jacobian_rank: usize,
    pub fisher_rank: usize,
    pub jacobian_singular_values: Vec<f64>,
    pub fisher_singular_values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FisherReport {
    pub theta: Vec<f64>,
    pub solution: GridLevelRanks,
    pub observation: GridLevelRanks,
    /// Solution-grid Jacobian and Fisher ranks agree.
    pub pass: bool,
    /// The observation grid loses rank relative to the solution grid.
    pub observation_rank_drop: bool,
}

/// Fisher information `Jt W J` for the given rows of the output.
fn fisher_information(error: &ErrorModel, values: &[f64], jac: &Matrix, n_rep: usize) -> Result<Matrix> {
    let n = jac.ncols();
    let reps = n_rep as f64;
    let mut f = Matrix::zeros(n, n);
    let mut add = |row: usize, w: f64| {
        let r = jac.row(row);
        f += r.transpose() * r * w;
    };
    match *error {
        ErrorModel::NormalAdditive { sigma } => {
            for i in 0..values.len() {
                add(i, reps / (sigma * sigma));
            }
        }
        ErrorModel::LogNormal { sigma } => {
            for (i, &h) in values.iter().enumerate() {
                let row_is_zero = jac.row(i).iter().all(|x| *x == 0.0);
                if h == 0.0 && row_is_zero {
                    continue;
                }
                if !(h > 0.0) {
                    return Err(Error::Domain(format!("log-normal mean {h} at output {i} is not positive")));
                }
                add(i, reps / (sigma * sigma * h * h));
            }
        }
        ErrorModel::MeanVariance => {
            if values.len() != 2 {
                return Err(Error::invalid("mean-variance error model needs a (mean, variance) output"));
            }
            let v = values[1];
            if !(v > 0.0) {
                return Err(Error::Domain(format!("variance {v} is not positive")));
            }
            add(0, reps / v);
            add(1, reps / (2.0 * v * v));
        }
    }
    Ok(f)
}

fn ranks(error: &ErrorModel, values: &[f64], jac: &Matrix, n_rep: usize, tol: f64) -> Result<GridLevelRanks> {
    let fisher = fisher_information(error, values, jac, n_rep)?;
    let js = svd(jac)?.singular_values;
    let fs = svd(&fisher)?.singular_values;
    Ok(GridLevelRanks {
        jacobian_rank: numerical_rank(&js, tol),
        fisher_rank: numerical_rank(&fs, tol),
        jacobian_singular_values: js,
        fisher_singular_values: fs,
    })
}

/// Compare the rank of the observed Fisher information with the rank of the
/// log-space Jacobian, at solution-grid and observation-grid level.
pub fn fisher_rank_check(problem: &LikelihoodProblem, theta_hat: &[f64], tols: &Tolerances) -> Result<FisherReport> {
    let model = &problem.model;
    if !model.bounds.contains(theta_hat) {
        return Err(Error::OutOfBounds(format!("{}: {theta_hat:?}", model.name)));
    }
    let values = model.predict_fine(theta_hat)?;
    let jac = log_jacobian_closed(model, theta_hat)?;
    let n_rep = problem.data.n_replicates;
    let solution = ranks(&model.error_model, &values, &jac, n_rep, tols.structural)?;

    let idx = &model.obs_operator.indices;
    let obs_values = model.obs_operator.apply(&values)?;
    let obs_jac = jac.select_rows(idx.iter());
    let observation = ranks(&model.error_model, &obs_values, &obs_jac, n_rep, tols.structural)?;

    Ok(FisherReport {
        theta: theta_hat.to_vec(),
        pass: solution.jacobian_rank == solution.fisher_rank,
        observation_rank_drop: observation.fisher_rank < solution.fisher_rank,
        solution,
        observation,
    })
}

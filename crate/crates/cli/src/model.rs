use nalgebra::DMatrix;

use myis::io::{read_counts_csv, read_matrix_csv, read_vector_csv};
use myis::models::{
    make_checkerboard, make_poisson, make_toy, make_trendfilter, trendfilter_from_data, CheckerboardSpec,
    PoissonDataSpec, ToySpec, TrendSignal,
};
use myis::prox::{GaussianModel, NuclearModel, NuclearSpec, PoissonModel, PoissonSpec};
use myis::TargetModel;

use crate::config::ModelSpec;
use crate::error::CliError;

pub struct BuiltModel {
    pub model: Box<dyn TargetModel<f64>>,
    /// Covariance eigenvalues, for Gaussian models only.
    pub gaussian_eigenvalues: Option<Vec<f64>>,
}

/// Builds the target. Every failure here is a configuration problem,
/// including unreadable data files.
pub fn build(spec: &ModelSpec) -> Result<BuiltModel, CliError> {
    build_inner(spec).map_err(|e| CliError::Config(e.to_string()))
}

fn build_inner(spec: &ModelSpec) -> myis::Result<BuiltModel> {
    let plain = |model: Box<dyn TargetModel<f64>>| BuiltModel { model, gaussian_eigenvalues: None };
    Ok(match spec {
        ModelSpec::Toy { beta, d } => plain(Box::new(make_toy::<f64>(ToySpec { beta: *beta, d: *d })?)),
        ModelSpec::Trendfilter { m, sigma2, alpha, k, seed, data } => match data {
            Some(path) => {
                let y = read_vector_csv(path)?;
                plain(Box::new(trendfilter_from_data(y, *sigma2, *alpha, *k)?))
            }
            None => {
                let signal = TrendSignal { m: *m, sigma2: *sigma2, alpha: *alpha, seed: *seed };
                plain(Box::new(make_trendfilter::<f64>(&signal, *k)?.0))
            }
        },
        ModelSpec::Nuclear { size, block, sigma2, alpha, seed, data } => {
            let board = CheckerboardSpec { size: *size, block: *block, sigma2: *sigma2, alpha: *alpha, seed: *seed };
            match data {
                Some(path) => {
                    let m = read_matrix_csv(path)?;
                    let spec = NuclearSpec { rows: m.rows, cols: m.cols, alpha: board.alpha(), sigma2: *sigma2, y: m.values };
                    plain(Box::new(NuclearModel::new(spec)?))
                }
                None => plain(Box::new(make_checkerboard::<f64>(&board)?.0)),
            }
        }
        ModelSpec::Poisson { classes, sigma_eta, c, per_class, mu_star, seed, data } => match data {
            Some(path) => {
                let counts = read_counts_csv(path)?;
                plain(Box::new(PoissonModel::new(PoissonSpec::new(counts, sigma_eta * sigma_eta, c * c))?))
            }
            None => {
                let spec = PoissonDataSpec {
                    classes: *classes,
                    sigma_eta: *sigma_eta,
                    c: *c,
                    per_class: *per_class,
                    mu_star: *mu_star,
                    seed: *seed,
                };
                plain(Box::new(make_poisson::<f64>(&spec)?.0))
            }
        },
        ModelSpec::Gaussian { covariance, variances, d, variance } => {
            let model = match (covariance, variances, d) {
                (Some(rows), None, None) => {
                    let n = rows.len();
                    if rows.iter().any(|r| r.len() != n) {
                        return Err(myis::Error::InvalidArgument("covariance must be square".into()));
                    }
                    GaussianModel::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))?
                }
                (None, Some(v), None) => GaussianModel::diagonal(v)?,
                (None, None, Some(d)) => GaussianModel::isotropic(*d, *variance)?,
                _ => {
                    return Err(myis::Error::InvalidArgument(
                        "gaussian model needs exactly one of covariance, variances or d".into(),
                    ))
                }
            };
            let eig = model.eigenvalues()?;
            BuiltModel { model: Box::new(model), gaussian_eigenvalues: Some(eig) }
        }
    })
}

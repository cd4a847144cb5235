use std::path::Path;

use mcarma_core::{DriverSpec, LambdaMatrix, McarmaModel, RMat};
use serde::Deserialize;

use crate::CliError;

/// Leading coefficient must be the identity to this accuracy.
const MONIC_TOL: f64 = 1e-12;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    #[serde(rename = "A")]
    a: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "B")]
    b: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "sigma_L")]
    sigma_l: Vec<Vec<f64>>,
    #[serde(default)]
    driver: Option<DriverFile>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum DriverFile {
    Brownian,
    CompoundPoisson {
        rate: f64,
        jump_cov: Vec<Vec<f64>>,
        #[serde(default)]
        mean: Option<Vec<f64>>,
    },
}

pub struct Loaded {
    pub model: McarmaModel,
    pub driver: DriverSpec,
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<RMat, CliError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(CliError::Input(format!("{what} is empty")));
    }
    if let Some(bad) = rows.iter().position(|row| row.len() != c) {
        return Err(CliError::Input(format!("{what}: row {bad} has {} entries, expected {c}", rows[bad].len())));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CliError::Input(format!("{what} has a non-finite entry")));
    }
    Ok(RMat::from_fn(r, c, |i, j| rows[i][j]))
}

fn same_shape(mats: &[RMat], shape: (usize, usize), what: &str) -> Result<(), CliError> {
    match mats.iter().position(|m| m.shape() != shape) {
        Some(k) => Err(CliError::Input(format!(
            "{what}[{k}] is {}x{}, expected {}x{}",
            mats[k].nrows(),
            mats[k].ncols(),
            shape.0,
            shape.1
        ))),
        None => Ok(()),
    }
}

pub fn parse(text: &str) -> Result<Loaded, CliError> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| CliError::Input(format!("malformed model file: {e}")))?;
    let mut a: Vec<RMat> = file
        .a
        .iter()
        .enumerate()
        .map(|(k, m)| matrix(m, &format!("A[{k}]")))
        .collect::<Result<_, _>>()?;
    let b: Vec<RMat> = file
        .b
        .iter()
        .enumerate()
        .map(|(k, m)| matrix(m, &format!("B[{k}]")))
        .collect::<Result<_, _>>()?;
    if a.len() < 2 {
        return Err(CliError::Input("A needs at least two coefficients".into()));
    }
    if b.is_empty() {
        return Err(CliError::Input("B needs at least one coefficient".into()));
    }
    let d = a[0].nrows();
    same_shape(&a, (d, d), "A")?;
    let m = b[0].ncols();
    same_shape(&b, (d, m), "B")?;
    let gap = (&a[0] - RMat::identity(d, d)).amax();
    if gap > MONIC_TOL {
        return Err(CliError::Input(format!("A[0] differs from the identity by {gap:.3e} (NotMonic)")));
    }
    a[0] = RMat::identity(d, d);
    let sigma = matrix(&file.sigma_l, "sigma_L")?;

    let model = McarmaModel::new(LambdaMatrix::from_real(&a)?, LambdaMatrix::from_real(&b)?, sigma)?;
    let driver = match file.driver {
        None | Some(DriverFile::Brownian) => DriverSpec::Brownian,
        Some(DriverFile::CompoundPoisson { rate, jump_cov, mean }) => {
            if mean.is_some_and(|mu| mu.iter().any(|&v| v != 0.0)) {
                return Err(CliError::Input("jumps must have zero mean".into()));
            }
            DriverSpec::CompoundPoisson {
                rate,
                jump_cov: matrix(&jump_cov, "jump_cov")?,
            }
        }
    };
    driver.validate(model.sigma_l())?;
    Ok(Loaded { model, driver })
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    parse(&text)
}

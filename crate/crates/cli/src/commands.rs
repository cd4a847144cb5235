use std::io::Write;

use mcarma_core::{
    analyze, extract_noise, sampled_varma, varma_ar, Grouping, OuDecomposition, PathGrid, Simulator, SolventSet, Start,
};
use serde::Serialize;
use serde_json::value::RawValue;

use crate::format::{self, cmatrix, complex, float, num, Complex, ComplexMatrix};
use crate::model::Loaded;
use crate::CliError;

/// `auto` or a JSON list of index groups into the sorted latent roots,
/// e.g. `[[0,1],[2,3]]`.
pub fn parse_grouping(text: &str) -> Result<Grouping, CliError> {
    if text.trim() == "auto" {
        return Ok(Grouping::Auto);
    }
    serde_json::from_str::<Vec<Vec<usize>>>(text)
        .map(Grouping::Explicit)
        .map_err(|e| CliError::Input(format!("--grouping must be `auto` or a JSON list of index lists: {e}")))
}

fn require_positive(name: &str, value: f64) -> Result<(), CliError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(CliError::Input(format!("{name} must be positive, got {value}")))
    }
}

#[derive(Serialize)]
struct SolventOut {
    matrix: ComplexMatrix,
    spectrum: Vec<Complex>,
    residual_norm: Box<RawValue>,
}

#[derive(Serialize)]
struct SolventsOut {
    solvents: Vec<SolventOut>,
    #[serde(rename = "cond_V")]
    cond_v: Box<RawValue>,
    max_residual: Box<RawValue>,
}

fn solvents_json(set: &SolventSet) -> SolventsOut {
    SolventsOut {
        solvents: set
            .solvents()
            .iter()
            .map(|s| SolventOut {
                matrix: cmatrix(&s.matrix),
                spectrum: s.spectrum.iter().map(|&z| complex(z)).collect(),
                residual_norm: num(s.residual_norm),
            })
            .collect(),
        cond_v: num(set.cond_v()),
        max_residual: num(set.max_residual()),
    }
}

fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

pub fn solvents(loaded: &Loaded, grouping: &Grouping, out: &mut dyn Write) -> Result<(), CliError> {
    let dec = analyze(&loaded.model, grouping, None)?;
    write_json(out, &solvents_json(&dec.solvents))
}

#[derive(Serialize)]
struct ComponentOut {
    #[serde(rename = "R")]
    r: ComplexMatrix,
    #[serde(rename = "Res")]
    res: ComplexMatrix,
    spectrum: Vec<Complex>,
}

#[derive(Serialize)]
struct DecompositionOut {
    components: Vec<ComponentOut>,
    #[serde(rename = "cond_V")]
    cond_v: Box<RawValue>,
    max_real_part: Box<RawValue>,
    stationary: bool,
    similarity_defect: Box<RawValue>,
}

pub fn decompose(loaded: &Loaded, grouping: &Grouping, out: &mut dyn Write) -> Result<(), CliError> {
    let dec = analyze(&loaded.model, grouping, None)?;
    let doc = DecompositionOut {
        components: dec
            .components
            .iter()
            .zip(dec.solvents.solvents())
            .map(|(c, s)| ComponentOut {
                r: cmatrix(&c.r),
                res: cmatrix(&c.res),
                spectrum: s.spectrum.iter().map(|&z| complex(z)).collect(),
            })
            .collect(),
        cond_v: num(dec.solvents.cond_v()),
        max_real_part: num(dec.max_real_part()),
        stationary: dec.is_stationary(),
        similarity_defect: num(dec.similarity_defect),
    };
    write_json(out, &doc)
}

pub fn acvf(loaded: &Loaded, grouping: &Grouping, h: f64, lags: usize, out: &mut dyn Write) -> Result<(), CliError> {
    require_positive("--h", h)?;
    let dec = analyze(&loaded.model, grouping, None)?;
    let taus: Vec<f64> = (0..=lags).map(|l| l as f64 * h).collect();
    let gamma = dec.stationary_acvf(&taus)?;
    writeln!(out, "lag,i,j,value")?;
    for (tau, g) in taus.iter().zip(&gamma) {
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                writeln!(out, "{},{},{},{}", float(*tau), i + 1, j + 1, float(g[(i, j)]))?;
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct VarmaOut {
    h: Box<RawValue>,
    #[serde(rename = "Phi")]
    phi: Vec<Vec<Vec<Box<RawValue>>>>,
    #[serde(rename = "gamma_U")]
    gamma_u: Vec<Vec<Vec<Box<RawValue>>>>,
    #[serde(rename = "Theta")]
    theta: Vec<Vec<Vec<Box<RawValue>>>>,
    #[serde(rename = "Sigma_eps")]
    sigma_eps: Vec<Vec<Box<RawValue>>>,
    schur_stable: bool,
    #[serde(rename = "cond_V")]
    cond_v: Box<RawValue>,
    invertibility_margin: Box<RawValue>,
}

pub fn varma(loaded: &Loaded, grouping: &Grouping, h: f64, out: &mut dyn Write) -> Result<(), CliError> {
    require_positive("--h", h)?;
    let dec = analyze(&loaded.model, grouping, None)?;
    let sv = sampled_varma(&dec, h)?;
    let doc = VarmaOut {
        h: num(h),
        phi: sv.phi.iter().map(format::matrix).collect(),
        gamma_u: sv.gamma_u.iter().map(format::matrix).collect(),
        theta: sv.theta.iter().map(format::matrix).collect(),
        sigma_eps: format::matrix(&sv.sigma_eps),
        schur_stable: sv.schur_stable,
        cond_v: num(sv.cond_v),
        invertibility_margin: num(sv.invertibility_margin),
    };
    write_json(out, &doc)
}

pub struct SimulateArgs {
    pub h: f64,
    pub steps: usize,
    pub seed: u64,
    pub stationary_start: bool,
    pub emit_noise: bool,
}

pub fn simulate_path(dec: &OuDecomposition, loaded: &Loaded, args: &SimulateArgs) -> Result<PathGrid, CliError> {
    require_positive("--h", args.h)?;
    if args.steps == 0 {
        return Err(CliError::Input("--steps must be at least 1".into()));
    }
    let start = if args.stationary_start { Start::Stationary } else { Start::Initial };
    let mut sim = Simulator::new(dec, &loaded.driver, args.h)?;
    sim.prepare(start)?;
    Ok(sim.run(args.steps, start, args.seed, 0)?)
}

pub fn simulate(loaded: &Loaded, grouping: &Grouping, args: &SimulateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let dec = analyze(&loaded.model, grouping, None)?;
    let path = simulate_path(&dec, loaded, args)?;
    let d = path.y.ncols();
    let noise = if args.emit_noise {
        let ar = varma_ar(&dec, args.h)?;
        Some((ar.phi.len(), extract_noise(&path.y, &ar.phi)?))
    } else {
        None
    };

    let mut header = String::from("n");
    for i in 1..=d {
        header.push_str(&format!(",Y_{i}"));
    }
    if noise.is_some() {
        for i in 1..=d {
            header.push_str(&format!(",U_{i}"));
        }
    }
    writeln!(out, "{header}")?;
    for row in 0..path.y.nrows() {
        let mut line = (row + 1).to_string();
        for v in path.y.row(row).iter() {
            line.push(',');
            line.push_str(&float(*v));
        }
        if let Some((p, u)) = &noise {
            // U_n needs p earlier observations
            for c in 0..d {
                line.push(',');
                if row >= *p {
                    line.push_str(&float(u[(row - p, c)]));
                }
            }
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

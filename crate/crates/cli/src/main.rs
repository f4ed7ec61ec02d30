//! Command-line front end for the `outerh` library.
//!
//! Matrix inputs are JSON files of the form
//! `{"n": 2, "blocks": [1, 1], "matrix": {"re": [[1, 5], [0, 2]]}}`.
//! Results are printed with 12 significant digits. Exit status is 0 on
//! success, 1 when verification finds a failing property or a matrix is not
//! factorizable, and 2 on input, parse or domain errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use outerh::determinant::{fk_det, fk_det_regularized};
use outerh::factor::{
    default_n_values, diag_commuting_check, inner_outer, riesz_szego_positive, strongly_outer_approximants,
    uniform_outer_sequence, FactorizationResult,
};
use outerh::harness::{run_suite, SuiteConfig};
use outerh::io::{read_matrix, write_matrix, MatrixData};
use outerh::metrics::{delta_min, dist_to_right_ideal, szego_infimum, OptimOptions};
use outerh::outerness::is_outer_with;
use outerh::{tol, BlockStructure, CMatrix, Error, PNorm, Projection};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(
    name = "outerh",
    version,
    about = "Outer elements, determinants and factorizations for block triangular matrix algebras"
)]
struct Cli {
    /// Base of the relative tolerance used for rank and membership tests.
    #[arg(long, global = true, value_name = "TOL")]
    base_tol: Option<f64>,
    /// Write the parsed input matrix to this file before running.
    #[arg(long, global = true, value_name = "PATH")]
    dump: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fuglede-Kadison determinant.
    Det {
        file: PathBuf,
        /// Report Delta(|x| + eps) instead.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Inner-outer, positive Riesz-Szego, uniform-outer or approximant constructions.
    Factor {
        file: PathBuf,
        #[arg(long, value_enum)]
        mode: FactorMode,
        #[arg(long, default_value = "2")]
        p: PNorm,
    },
    /// Infimum of |h(a + d)|_p over a in A0 and d in D with Delta(d) = 1.
    Szego {
        file: PathBuf,
        #[arg(long, default_value = "2")]
        p: PNorm,
        #[arg(long, default_value_t = 16)]
        restarts: usize,
        /// Optimizer convergence tolerance.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Distance to the right ideal (with --e) or the injectivity gauge delta_min.
    Delta {
        file: PathBuf,
        /// Projection in D, as a matrix file.
        #[arg(long, value_name = "PROJECTION_FILE")]
        e: Option<PathBuf>,
        #[arg(long, default_value = "2")]
        p: PNorm,
    },
    /// Outerness verdict with every criterion.
    OuterTest {
        file: PathBuf,
        #[arg(long, default_value = "2")]
        p: PNorm,
    },
    /// Randomized verification of the library's invariants.
    Verify {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value = "2..5", value_parser = parse_dims)]
        dims: (usize, usize),
        #[arg(long, default_value_t = 4)]
        restarts: usize,
        /// Only run properties whose name contains this text (repeatable).
        #[arg(long)]
        only: Vec<String>,
        /// Write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FactorMode {
    InnerOuter,
    RieszSzego,
    UniformSeq,
    ApproxSeq,
}

fn parse_dims(s: &str) -> Result<(usize, usize), String> {
    let (a, b) =
        s.split_once("..=").or_else(|| s.split_once("..")).ok_or_else(|| format!("expected A..B, got {s:?}"))?;
    let a: usize = a.trim().parse().map_err(|e| format!("dims start: {e}"))?;
    let b: usize = b.trim().parse().map_err(|e| format!("dims end: {e}"))?;
    if a > b {
        return Err(format!("empty range {a}..{b}"));
    }
    Ok((a, b))
}

/// `%.12g`-style formatting.
fn sig12(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if v == 0.0 {
        return "0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    let trim = |s: String| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim(format!("{v:.decimals$}"))
    } else {
        let s = format!("{v:.11e}");
        let (mant, e) = s.split_once('e').expect("exponent form");
        format!("{}e{}", trim(mant.to_string()), e)
    }
}

/// Rounds every float in a JSON tree to 12 significant digits; non-finite
/// values become strings.
fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            sig12(x).parse::<f64>().ok().and_then(serde_json::Number::from_f64).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

fn finite_or_text(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(sig12(x))
    }
}

fn matrix_json(x: &CMatrix) -> Value {
    serde_json::to_value(MatrixData::from_matrix(x)).expect("matrix data serializes")
}

fn print_json(v: Value) {
    println!("{}", serde_json::to_string_pretty(&round_json(v)).expect("json output"));
}

fn factorization_json(r: &FactorizationResult) -> Value {
    json!({
        "u": matrix_json(&r.u),
        "h": matrix_json(&r.h),
        "residual": r.residual,
        "u_unitarity_defect": r.u_unitarity_defect,
        "h_outer": r.h_outer,
    })
}

fn load(path: &Path, dump: Option<&Path>) -> outerh::Result<(CMatrix, BlockStructure)> {
    let (x, bs) = read_matrix(path)?;
    if let Some(out) = dump {
        write_matrix(out, &x, &bs)?;
    }
    Ok((x, bs))
}

fn run(cli: Cli) -> outerh::Result<ExitCode> {
    if let Some(b) = cli.base_tol {
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::Parse { field: "base-tol".into(), message: format!("must be positive, got {b}") });
        }
        tol::set_base(b);
    }
    let dump = cli.dump.as_deref();
    match cli.command {
        Command::Det { file, eps } => {
            let (x, _) = load(&file, dump)?;
            let r = match eps {
                Some(e) => fk_det_regularized(&x, e)?,
                None => fk_det(&x)?,
            };
            println!("{}", sig12(r.value));
        }
        Command::Factor { file, mode, p } => {
            let (x, bs) = load(&file, dump)?;
            let out = match mode {
                FactorMode::InnerOuter => factorization_json(&inner_outer(&x, &bs)?),
                FactorMode::RieszSzego => factorization_json(&riesz_szego_positive(&x, &bs)?),
                FactorMode::UniformSeq => {
                    let steps = uniform_outer_sequence(&x, &bs, &default_n_values(&x), p)?;
                    let steps: Vec<Value> = steps
                        .iter()
                        .map(|s| {
                            json!({
                                "n": s.n,
                                "a_n": matrix_json(&s.a_n),
                                "k_n": matrix_json(&s.k_n),
                                "op_norm_ha": s.op_norm_ha,
                                "p_dist_to_one": s.p_dist_to_one,
                                "det_ha": s.det_ha,
                                "inverse_gap": s.inverse_gap,
                            })
                        })
                        .collect();
                    json!({ "p": p, "steps": steps })
                }
                FactorMode::ApproxSeq => {
                    let u = diag_commuting_check(&x, &bs)?
                        .ok_or_else(|| Error::Domain("matrix is not diagonally commuting".into()))?;
                    let approx = strongly_outer_approximants(&x, &bs, &u, &default_n_values(&x), p)?;
                    let steps: Vec<Value> = approx
                        .iter()
                        .map(|a| {
                            json!({
                                "n": a.n,
                                "h_n": matrix_json(&a.h_n),
                                "distance": a.distance,
                                "det": a.det,
                            })
                        })
                        .collect();
                    json!({ "p": p, "u": matrix_json(&u), "approximants": steps })
                }
            };
            print_json(out);
        }
        Command::Szego { file, p, restarts, tol: opt_tol } => {
            let (x, bs) = load(&file, dump)?;
            let mut opts = OptimOptions { restarts, ..OptimOptions::default() };
            if let Some(t) = opt_tol {
                if !(t > 0.0 && t.is_finite()) {
                    return Err(Error::Parse { field: "tol".into(), message: format!("must be positive, got {t}") });
                }
                opts.nelder_mead.f_tol = t;
                opts.bfgs.grad_tol = t;
            }
            let r = szego_infimum(&x, &bs, p, &opts)?;
            print_json(json!({
                "p": p,
                "value": r.value,
                "a": matrix_json(&r.a),
                "d": r.d.as_ref().map(matrix_json),
                "converged": r.converged,
                "iterations": r.iterations,
                "restarts_used": r.restarts_used,
            }));
        }
        Command::Delta { file, e, p } => {
            let (x, bs) = load(&file, dump)?;
            let opts = OptimOptions::default();
            let out = match e {
                Some(path) => {
                    let (em, ebs) = read_matrix(&path)?;
                    if ebs != bs {
                        return Err(Error::Parse {
                            field: "blocks".into(),
                            message: "projection file uses different blocks".into(),
                        });
                    }
                    let proj = Projection::new(em)?;
                    let r = dist_to_right_ideal(&x, &bs, &proj, p, &opts)?;
                    json!({ "p": p, "value": r.value, "a": matrix_json(&r.a), "converged": r.converged })
                }
                None => {
                    let one = Projection::identity(bs.n());
                    let r = dist_to_right_ideal(&x, &bs, &one, p, &opts)?;
                    let dm = delta_min(&x, &bs, PNorm::TWO)?;
                    json!({
                        "p": p,
                        "value": r.value,
                        "a": matrix_json(&r.a),
                        "delta_min": {
                            "sigma_min": dm.sigma_min,
                            "rank_tol": dm.rank_tol,
                            "injective": dm.injective(),
                            "witness": matrix_json(&dm.witness),
                        },
                    })
                }
            };
            print_json(out);
        }
        Command::OuterTest { file, p } => {
            let (x, bs) = load(&file, dump)?;
            let v = is_outer_with(&x, &bs, p, &OptimOptions::default())?;
            let criteria: serde_json::Map<String, Value> = v
                .criteria
                .iter()
                .map(|(k, c)| (k.clone(), json!({ "holds": c.holds, "residual": finite_or_text(c.residual) })))
                .collect();
            print_json(json!({
                "outer": v.outer,
                "strongly_outer": v.strongly_outer,
                "p": v.p,
                "criteria": criteria,
            }));
        }
        Command::Verify { seed, trials, dims, restarts, only, report } => {
            let cfg = SuiteConfig {
                dims: dims.0..=dims.1,
                trials,
                master_seed: seed,
                restarts,
                only,
                ..SuiteConfig::default()
            };
            let rep = run_suite(&cfg)?;
            print!("{}", rep.table());
            if let Some(path) = report {
                std::fs::write(path, rep.to_json() + "\n")?;
            }
            return Ok(if rep.passed { ExitCode::SUCCESS } else { ExitCode::from(1) });
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NotFactorizable { .. } => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(sig12(2f64.sqrt()), "1.41421356237");
        assert_eq!(sig12(1.0), "1");
        assert_eq!(sig12(0.0), "0");
        assert_eq!(sig12(-0.125), "-0.125");
        assert_eq!(sig12(1.5e-9), "1.5e-9");
        assert_eq!(sig12(123456789012345.0), "1.23456789012e14");
        assert_eq!(sig12(f64::INFINITY), "inf");
    }

    #[test]
    fn dims_ranges() {
        assert_eq!(parse_dims("2..5"), Ok((2, 5)));
        assert_eq!(parse_dims("3..=4"), Ok((3, 4)));
        assert!(parse_dims("5..2").is_err());
        assert!(parse_dims("five").is_err());
    }
}

//! Flat `key = value` run configuration.
//!
//! Blank lines and everything after `#` are ignored, lists are comma
//! separated, and unknown or repeated keys are rejected.

use std::path::PathBuf;
use std::str::FromStr;

use crate::control::{InitialData, MIN_CONTROL_TIME};
use crate::error::{Error, Result};
use crate::iterate::{Algorithm, RunConfig};
use crate::nonlinear::{ControlWeight, Nonlinearity};
use crate::replay::{DEFAULT_CFL, DEFAULT_NODES};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonlinearityKind {
    /// `c_f r ln²(1 + |r|)`.
    LogSquared,
    /// `c_f r`.
    Linear,
    Zero,
}

impl NonlinearityKind {
    pub fn build(&self, c_f: f64) -> Nonlinearity {
        match self {
            NonlinearityKind::LogSquared => Nonlinearity::log_squared(c_f),
            NonlinearityKind::Linear => Nonlinearity::linear(c_f),
            NonlinearityKind::Zero => Nonlinearity::zero(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    Cosine,
    Ramp100,
    Mixed,
    Zero,
}

impl DataKind {
    pub fn build(&self, c_u0: f64, c_u1: f64) -> InitialData {
        match self {
            DataKind::Cosine => InitialData::Cosine { c: c_u0 },
            DataKind::Ramp100 => InitialData::Ramp100,
            DataKind::Mixed => InitialData::Mixed { c1: c_u0, c2: c_u1 },
            DataKind::Zero => InitialData::Zero,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FigureKind {
    ErrorVsK,
    LambdaVsK,
    NormT,
    ControlT,
}

impl FigureKind {
    pub const ALL: [FigureKind; 4] = [
        FigureKind::ErrorVsK,
        FigureKind::LambdaVsK,
        FigureKind::NormT,
        FigureKind::ControlT,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FigureKind::ErrorVsK => "error_vs_k",
            FigureKind::LambdaVsK => "lambda_vs_k",
            FigureKind::NormT => "norm_t",
            FigureKind::ControlT => "control_t",
        }
    }
}

impl FromStr for FigureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FigureKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown figure '{s}'")))
    }
}

#[derive(Debug, Clone)]
pub struct Config {
    pub algorithm: Algorithm,
    pub nonlinearity: NonlinearityKind,
    pub c_f: f64,
    pub data: DataKind,
    pub c_u0: f64,
    pub c_u1: f64,
    pub t_final: f64,
    pub nx: usize,
    pub nt: usize,
    pub tol: f64,
    pub kmax: usize,
    pub blowup: f64,
    pub ls_tol: f64,
    pub quad_order: usize,
    pub weight: ControlWeight,
    pub output_dir: PathBuf,
    pub sweep_c_f: Vec<f64>,
    pub sweep_c_u0: Vec<f64>,
    pub sweep_algorithms: Vec<Algorithm>,
    pub replay_m: usize,
    pub replay_cfl: f64,
    pub figures: Vec<FigureKind>,
}

impl Default for Config {
    fn default() -> Self {
        let run = RunConfig::default();
        Self {
            algorithm: run.algorithm,
            nonlinearity: NonlinearityKind::LogSquared,
            c_f: -1.0,
            data: DataKind::Cosine,
            c_u0: 20.0,
            c_u1: 0.0,
            t_final: run.t_final,
            nx: run.nx,
            nt: run.nt,
            tol: run.tol,
            kmax: run.kmax,
            blowup: run.blowup,
            ls_tol: run.ls_tol,
            quad_order: run.quad_order,
            weight: run.weight,
            output_dir: PathBuf::from("out"),
            sweep_c_f: Vec::new(),
            sweep_c_u0: Vec::new(),
            sweep_algorithms: Vec::new(),
            replay_m: DEFAULT_NODES,
            replay_cfl: DEFAULT_CFL,
            figures: vec![FigureKind::ErrorVsK, FigureKind::LambdaVsK, FigureKind::ControlT],
        }
    }
}

/// One entry of a parameter sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub c_f: f64,
    pub c_u0: f64,
    pub algorithm: Algorithm,
}

impl Config {
    pub fn run_config(&self) -> RunConfig {
        self.run_config_for(SweepPoint {
            c_f: self.c_f,
            c_u0: self.c_u0,
            algorithm: self.algorithm,
        })
    }

    pub fn run_config_for(&self, p: SweepPoint) -> RunConfig {
        RunConfig {
            t_final: self.t_final,
            nx: self.nx,
            nt: self.nt,
            quad_order: self.quad_order,
            nonlinearity: self.nonlinearity.build(p.c_f),
            data: self.data.build(p.c_u0, self.c_u1),
            weight: self.weight,
            tol: self.tol,
            kmax: self.kmax,
            blowup: self.blowup,
            ls_tol: self.ls_tol,
            algorithm: p.algorithm,
        }
    }

    /// Sweep entries in `c_f`-major, then `c_u0`, then algorithm order. Empty
    /// lists fall back to the single configured value.
    pub fn sweep_points(&self) -> Vec<SweepPoint> {
        let c_fs = if self.sweep_c_f.is_empty() { vec![self.c_f] } else { self.sweep_c_f.clone() };
        let c_u0s = if self.sweep_c_u0.is_empty() { vec![self.c_u0] } else { self.sweep_c_u0.clone() };
        let algs = if self.sweep_algorithms.is_empty() {
            vec![self.algorithm]
        } else {
            self.sweep_algorithms.clone()
        };
        let mut out = Vec::new();
        for &c_f in &c_fs {
            for &c_u0 in &c_u0s {
                for &algorithm in &algs {
                    out.push(SweepPoint { c_f, c_u0, algorithm });
                }
            }
        }
        out
    }
}

fn parse_value<T: FromStr>(value: &str, what: &str) -> std::result::Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("expected {what}, found '{value}'"))
}

fn parse_list<T: FromStr>(value: &str, what: &str) -> std::result::Result<Vec<T>, String> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_value(v.trim(), what)).collect()
}

fn positive(v: f64, key: &str) -> std::result::Result<f64, String> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{key} must be positive"))
    }
}

fn at_least_one(v: usize, key: &str) -> std::result::Result<usize, String> {
    if v >= 1 {
        Ok(v)
    } else {
        Err(format!("{key} must be at least 1"))
    }
}

fn set(cfg: &mut Config, key: &str, value: &str) -> std::result::Result<(), String> {
    match key {
        "algorithm" => cfg.algorithm = value.parse().map_err(|e: Error| e.to_string())?,
        "nonlinearity" => {
            cfg.nonlinearity = match value {
                "paper_log2" | "log2" => NonlinearityKind::LogSquared,
                "linear" => NonlinearityKind::Linear,
                "zero" => NonlinearityKind::Zero,
                _ => return Err(format!("unknown nonlinearity '{value}'")),
            }
        }
        "c_f" => cfg.c_f = parse_value(value, "a number")?,
        "data" => {
            cfg.data = match value {
                "cosine" => DataKind::Cosine,
                "ramp100" => DataKind::Ramp100,
                "mixed" => DataKind::Mixed,
                "zero" => DataKind::Zero,
                _ => return Err(format!("unknown initial data '{value}'")),
            }
        }
        "c_u0" => cfg.c_u0 = parse_value(value, "a number")?,
        "c_u1" => cfg.c_u1 = parse_value(value, "a number")?,
        "T" => {
            let t: f64 = parse_value(value, "a number")?;
            if !(t > MIN_CONTROL_TIME) {
                return Err(format!("controllability time must exceed {MIN_CONTROL_TIME}"));
            }
            cfg.t_final = t;
        }
        "nx" => cfg.nx = at_least_one(parse_value(value, "an integer")?, key)?,
        "nt" => cfg.nt = at_least_one(parse_value(value, "an integer")?, key)?,
        "tol" => cfg.tol = positive(parse_value(value, "a number")?, key)?,
        "kmax" => cfg.kmax = parse_value(value, "an integer")?,
        "blowup" => cfg.blowup = positive(parse_value(value, "a number")?, key)?,
        "ls_tol" => {
            let v = positive(parse_value(value, "a number")?, key)?;
            if v >= 1.0 {
                return Err("ls_tol must be below 1".into());
            }
            cfg.ls_tol = v;
        }
        "quad_order" => {
            let n: usize = parse_value(value, "an integer")?;
            if !(1..=crate::geometry::MAX_QUAD_ORDER).contains(&n) {
                return Err(format!(
                    "quad_order must lie in 1..={}",
                    crate::geometry::MAX_QUAD_ORDER
                ));
            }
            cfg.quad_order = n;
        }
        "weight" => {
            cfg.weight = match value {
                "cutoff" => ControlWeight::CutOff,
                "unit" => ControlWeight::Unit,
                _ => return Err(format!("unknown weight '{value}'")),
            }
        }
        "output_dir" => {
            if value.is_empty() {
                return Err("output_dir must not be empty".into());
            }
            cfg.output_dir = PathBuf::from(value);
        }
        "sweep_c_f" => cfg.sweep_c_f = parse_list(value, "a number")?,
        "sweep_c_u0" => cfg.sweep_c_u0 = parse_list(value, "a number")?,
        "sweep_algorithms" => {
            cfg.sweep_algorithms = parse_list::<String>(value, "an algorithm")?
                .iter()
                .map(|s| s.parse().map_err(|e: Error| e.to_string()))
                .collect::<std::result::Result<_, _>>()?
        }
        "replay_m" => {
            let m: usize = parse_value(value, "an integer")?;
            if m < crate::replay::MIN_NODES {
                return Err(format!("replay_m must be at least {}", crate::replay::MIN_NODES));
            }
            cfg.replay_m = m;
        }
        "replay_cfl" => {
            let c: f64 = parse_value(value, "a number")?;
            if !(c > 0.0 && c <= 1.0) {
                return Err("replay_cfl must lie in (0, 1]".into());
            }
            cfg.replay_cfl = c;
        }
        "figures" => {
            cfg.figures = parse_list::<String>(value, "a figure name")?
                .iter()
                .map(|s| s.parse().map_err(|e: Error| e.to_string()))
                .collect::<std::result::Result<_, _>>()?
        }
        _ => return Err(format!("unknown key '{key}'")),
    }
    Ok(())
}

pub fn parse_config(text: &str) -> Result<Config> {
    let mut cfg = Config::default();
    let mut seen: Vec<String> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse { line, message };
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(format!("expected key=value, found '{content}'")))?;
        let (key, value) = (key.trim(), value.trim());
        if seen.iter().any(|k| k == key) {
            return Err(err(format!("duplicate key '{key}'")));
        }
        set(&mut cfg, key, value).map_err(err)?;
        seen.push(key.to_string());
    }
    Ok(cfg)
}

pub fn load_config(path: &std::path::Path) -> Result<Config> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg.algorithm, Algorithm::Ls);
        assert_eq!(cfg.nonlinearity, NonlinearityKind::LogSquared);
        assert_eq!(cfg.c_f, -1.0);
        assert_eq!(cfg.data, DataKind::Cosine);
        assert_eq!(cfg.c_u0, 20.0);
        assert_eq!((cfg.t_final, cfg.nx, cfg.nt), (3.0, 100, 300));
        assert_eq!((cfg.tol, cfg.kmax, cfg.quad_order), (1e-5, 1000, 4));
        assert_eq!((cfg.replay_cfl, cfg.replay_m), (0.9, 400));
    }

    #[test]
    fn newton_override() {
        let cfg = parse_config("algorithm=newton\nc_f=-2").unwrap();
        assert_eq!(cfg.algorithm, Algorithm::Newton);
        assert_eq!(cfg.c_f, -2.0);
    }

    #[test]
    fn short_horizon_rejected() {
        match parse_config("T=1.5") {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 1);
                assert!(message.contains("controllability time must exceed 2"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "# comment\n\nnx = 10\nbogus = 3\n";
        match parse_config(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        assert!(parse_config("nx=ten").is_err());
        assert!(parse_config("nx=3\nnx=4").is_err());
        assert!(parse_config("noequals").is_err());
    }

    #[test]
    fn lists_and_sweeps() {
        let cfg = parse_config("sweep_c_f = 1, -0.5 ,-2 # trailing\nsweep_algorithms=ls,pf1\ndata=mixed\nc_u1=100").unwrap();
        assert_eq!(cfg.sweep_c_f, vec![1.0, -0.5, -2.0]);
        let pts = cfg.sweep_points();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[1].algorithm, Algorithm::Pf1);
        assert_eq!(pts[2].c_f, -0.5);
        let run = cfg.run_config_for(pts[5]);
        assert_eq!(run.data.u1(0.9), 100.0);
    }

    #[test]
    fn figure_names() {
        let cfg = parse_config("figures=norm_t,control_t").unwrap();
        assert_eq!(cfg.figures, vec![FigureKind::NormT, FigureKind::ControlT]);
        assert!(parse_config("figures=pie").is_err());
    }
}

//! Outer iterations for the semilinear problem: damped Newton least squares,
//! plain Newton, and the two fixed-point maps.
//!
//! The residual `r_k = y_k,tt - y_k,xx + f(y_k)` is never formed from second
//! derivatives of `y_k`. It is carried along by the recursion
//! `r_{k+1} = (1 - lambda_k) r_k + G_k(lambda_k)` starting from `r_0 = f(y_0)`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use log::{debug, info, warn};

use crate::c1fem::build_c1_space;
use crate::control::{ControlProblem, ControlSolution, InitialData, NullControlSolver};
use crate::error::{Error, Result};
use crate::geometry::{BoundaryTrace, QuadField, SpaceTimeMesh};
use crate::nonlinear::{ControlWeight, Nonlinearity};

pub const DEFAULT_TOL: f64 = 1e-5;
pub const DEFAULT_KMAX: usize = 1000;
pub const DEFAULT_BLOWUP: f64 = 1e10;
pub const DEFAULT_LS_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Ls,
    Newton,
    Pf1,
    Pf2,
}

impl Algorithm {
    pub fn tag(&self) -> &'static str {
        match self {
            Algorithm::Ls => "LS",
            Algorithm::Newton => "NEWTON",
            Algorithm::Pf1 => "PF1",
            Algorithm::Pf2 => "PF2",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ls" => Ok(Algorithm::Ls),
            "newton" => Ok(Algorithm::Newton),
            "pf1" => Ok(Algorithm::Pf1),
            "pf2" => Ok(Algorithm::Pf2),
            _ => Err(Error::invalid(format!("unknown algorithm '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    Diverged,
    MaxIter,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::Diverged => "diverged",
            Status::MaxIter => "max_iter",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub t_final: f64,
    pub nx: usize,
    pub nt: usize,
    pub quad_order: usize,
    pub nonlinearity: Nonlinearity,
    pub data: InitialData,
    pub weight: ControlWeight,
    pub tol: f64,
    pub kmax: usize,
    pub blowup: f64,
    pub ls_tol: f64,
    pub algorithm: Algorithm,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            t_final: 3.0,
            nx: 100,
            nt: 300,
            quad_order: 4,
            nonlinearity: Nonlinearity::log_squared(-1.0),
            data: InitialData::Cosine { c: 20.0 },
            weight: ControlWeight::CutOff,
            tol: DEFAULT_TOL,
            kmax: DEFAULT_KMAX,
            blowup: DEFAULT_BLOWUP,
            ls_tol: DEFAULT_LS_TOL,
            algorithm: Algorithm::Ls,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        if !(self.ls_tol > 0.0 && self.ls_tol < 1.0) {
            return Err(Error::invalid("line-search tolerance must lie in (0, 1)"));
        }
        if !(self.blowup > 0.0) {
            return Err(Error::invalid("blow-up threshold must be positive"));
        }
        SpaceTimeMesh::new(self.nx, self.nt, self.t_final)?;
        Ok(())
    }

    fn solver(&self) -> Result<NullControlSolver> {
        self.validate()?;
        let mesh = SpaceTimeMesh::new(self.nx, self.nt, self.t_final)?;
        let space = build_c1_space(mesh, self.quad_order)?;
        NullControlSolver::new(Arc::new(space), self.weight)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub sqrt2e: f64,
    /// Step that produced this iterate; `None` at `k = 0` and for fixed points.
    pub lambda: Option<f64>,
    pub norm_y: f64,
    pub norm_v: f64,
    pub rel_dy: Option<f64>,
    pub rel_dv: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub algorithm: Algorithm,
    pub records: Vec<IterationRecord>,
    pub status: Status,
    pub y: QuadField,
    pub v: BoundaryTrace,
}

impl RunReport {
    /// Index of the final iterate of a converged run.
    pub fn k_star(&self) -> Option<usize> {
        match self.status {
            Status::Converged => self.records.last().map(|r| r.k),
            _ => None,
        }
    }

    pub fn last(&self) -> &IterationRecord {
        self.records.last().expect("a report holds at least the initial iterate")
    }
}

/// How the descent step is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// Ternary search on `[0, 1]` down to the given interval width.
    LineSearch { tol: f64 },
    Fixed(f64),
}

/// `r + = (1 - lambda) r + G`.
pub fn residual_update(r: &QuadField, g: &QuadField, lambda: f64) -> Result<QuadField> {
    r.zip_map(g, |a, b| (1.0 - lambda) * a + b)
}

fn merit(r: &QuadField, y: &QuadField, dir: &QuadField, nl: &Nonlinearity, lambda: f64) -> f64 {
    let grid = r.grid();
    let nq = grid.points_per_cell();
    let (rv, yv, dv) = (r.values(), y.values(), dir.values());
    let mut total = 0.0;
    for cell in 0..grid.mesh().cell_count() {
        let mut s = 0.0;
        for q in 0..nq {
            let i = cell * nq + q;
            let e = (1.0 - lambda) * rv[i] + nl.remainder_at(yv[i], dv[i], lambda);
            s += grid.weight(q) * e * e;
        }
        total += s;
    }
    total
}

/// Minimize `phi(lambda) = ||(1 - lambda) r + G(lambda)||²` over `[0, 1]` by
/// trichotomy until the bracket is narrower than `tol`. The bracket midpoint
/// is compared with both end points and the best of the three is returned
/// together with `phi / 2`.
pub fn line_search(
    r: &QuadField,
    y: &QuadField,
    dir: &QuadField,
    nl: &Nonlinearity,
    tol: f64,
) -> Result<(f64, f64)> {
    r.check_compatible(y)?;
    r.check_compatible(dir)?;
    if !(tol > 0.0) {
        return Err(Error::invalid("line-search tolerance must be positive"));
    }
    let phi = |l: f64| merit(r, y, dir, nl, l);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > tol {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if phi(m1) <= phi(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let mid = 0.5 * (lo + hi);
    let mut best = (mid, phi(mid));
    for cand in [1.0, 0.0] {
        let v = phi(cand);
        if v < best.1 {
            best = (cand, v);
        }
    }
    Ok((best.0, 0.5 * best.1))
}

fn relative_change(new: f64, old: f64) -> f64 {
    if old > 0.0 {
        new / old
    } else {
        new
    }
}

fn out_of_bounds(rec: &IterationRecord, blowup: f64) -> bool {
    [rec.sqrt2e, rec.norm_y, rec.norm_v]
        .iter()
        .any(|v| !v.is_finite() || *v > blowup)
}

/// Stop test shared by every algorithm. `min_iter` forces that many
/// iterations before convergence is accepted.
fn verdict(cfg: &RunConfig, rec: &IterationRecord, min_iter: usize) -> Option<Status> {
    if rec.k >= min_iter && rec.sqrt2e <= cfg.tol {
        Some(Status::Converged)
    } else if out_of_bounds(rec, cfg.blowup) {
        Some(Status::Diverged)
    } else if rec.k >= cfg.kmax {
        Some(Status::MaxIter)
    } else {
        None
    }
}

fn initial(cfg: &RunConfig, solver: &mut NullControlSolver) -> Result<(ControlSolution, QuadField, IterationRecord)> {
    let sol = solver.solve(&ControlProblem {
        potential: None,
        source: None,
        data: cfg.data.clone(),
    })?;
    let r = cfg.nonlinearity.apply(&sol.y);
    let rec = IterationRecord {
        k: 0,
        sqrt2e: r.l2_norm(),
        lambda: None,
        norm_y: sol.norm_y,
        norm_v: sol.norm_v,
        rel_dy: None,
        rel_dv: None,
    };
    Ok((sol, r, rec))
}

fn log_record(alg: Algorithm, rec: &IterationRecord) {
    info!(
        "{alg} k={} sqrt2E={:.4e} lambda={} |y|={:.4e} |v|={:.4e}",
        rec.k,
        rec.sqrt2e,
        rec.lambda.map_or("-".to_string(), |l| format!("{l:.4}")),
        rec.norm_y,
        rec.norm_v
    );
}

/// Least squares / Newton iteration with the given step rule.
pub fn run_descent(cfg: &RunConfig, rule: StepRule, algorithm: Algorithm) -> Result<RunReport> {
    let mut solver = cfg.solver()?;
    let nl = &cfg.nonlinearity;
    let (sol, mut r, rec) = initial(cfg, &mut solver)?;
    let (mut y, mut v) = (sol.y, sol.v);
    log_record(algorithm, &rec);
    let mut records = vec![rec];
    let status = loop {
        let last = records.last().unwrap();
        if let Some(s) = verdict(cfg, last, 0) {
            break s;
        }
        let k = last.k;
        let started = Instant::now();
        let a = nl.apply_derivative(&y);
        let dir = solver
            .solve(&ControlProblem {
                potential: Some(a),
                source: Some(r.clone()),
                data: InitialData::Zero,
            })
            .map_err(|e| e.at_iteration(k))?;
        let lambda = match rule {
            StepRule::LineSearch { tol } => line_search(&r, &y, &dir.y, nl, tol)?.0,
            StepRule::Fixed(l) => l,
        };
        let g = nl.remainder(&y, &dir.y, lambda)?;
        r = residual_update(&r, &g, lambda)?;
        let step_y = dir.y.scaled(lambda);
        let step_v = dir.v.scaled(lambda);
        let new_y = y.sub(&step_y)?;
        let new_v = v.sub(&step_v)?;
        let rec = IterationRecord {
            k: k + 1,
            sqrt2e: r.l2_norm(),
            lambda: Some(lambda),
            norm_y: new_y.l2_norm(),
            norm_v: new_v.l2_norm(),
            rel_dy: Some(relative_change(step_y.l2_norm(), y.l2_norm())),
            rel_dv: Some(relative_change(step_v.l2_norm(), v.l2_norm())),
        };
        y = new_y;
        v = new_v;
        debug!("iteration {} took {:?}", k + 1, started.elapsed());
        log_record(algorithm, &rec);
        records.push(rec);
        if lambda == 0.0 && records.last().unwrap().sqrt2e > cfg.tol {
            // Every later iteration would repeat this one exactly.
            warn!("{algorithm}: zero step at k={}, iteration stalled", k + 1);
            break Status::MaxIter;
        }
    };
    Ok(RunReport {
        algorithm,
        records,
        status,
        y,
        v,
    })
}

pub fn run_ls(cfg: &RunConfig) -> Result<RunReport> {
    run_descent(cfg, StepRule::LineSearch { tol: cfg.ls_tol }, Algorithm::Ls)
}

pub fn run_newton(cfg: &RunConfig) -> Result<RunReport> {
    run_descent(cfg, StepRule::Fixed(1.0), Algorithm::Newton)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PfVariant {
    /// Potential `f^(y_k)`, source `-f(0)`.
    Pf1,
    /// Zero potential, source `-f(y_k)`.
    Pf2,
}

/// Fixed-point iteration. At least one iteration is performed.
pub fn run_pf(cfg: &RunConfig, variant: PfVariant) -> Result<RunReport> {
    let algorithm = match variant {
        PfVariant::Pf1 => Algorithm::Pf1,
        PfVariant::Pf2 => Algorithm::Pf2,
    };
    let mut solver = cfg.solver()?;
    let nl = &cfg.nonlinearity;
    let grid = solver.space().grid().clone();
    let (sol, r, rec) = initial(cfg, &mut solver)?;
    let (mut y, mut v) = (sol.y, sol.v);
    drop(r);
    log_record(algorithm, &rec);
    let mut records = vec![rec];
    let f0 = nl.f(0.0);
    let status = loop {
        let last = records.last().unwrap();
        if let Some(s) = verdict(cfg, last, 1) {
            break s;
        }
        let k = last.k;
        let (potential, source) = match variant {
            PfVariant::Pf1 => (
                Some(nl.apply_secant(&y)),
                (f0 != 0.0).then(|| QuadField::constant(&grid, -f0)),
            ),
            PfVariant::Pf2 => (None, Some(nl.apply(&y).scaled(-1.0))),
        };
        let next = solver
            .solve(&ControlProblem {
                potential: potential.clone(),
                source,
                data: cfg.data.clone(),
            })
            .map_err(|e| e.at_iteration(k))?;
        let r = match variant {
            PfVariant::Pf1 => {
                let a = potential.expect("PF1 always has a potential");
                let ay = a.zip_map(&next.y, |s, u| s * u)?;
                nl.apply(&next.y).zip_map(&ay, |fy, sy| fy - f0 - sy)?
            }
            PfVariant::Pf2 => nl.apply(&next.y).sub(&nl.apply(&y))?,
        };
        let rec = IterationRecord {
            k: k + 1,
            sqrt2e: r.l2_norm(),
            lambda: None,
            norm_y: next.norm_y,
            norm_v: next.norm_v,
            rel_dy: Some(relative_change(next.y.sub(&y)?.l2_norm(), y.l2_norm())),
            rel_dv: Some(relative_change(next.v.sub(&v)?.l2_norm(), v.l2_norm())),
        };
        y = next.y;
        v = next.v;
        log_record(algorithm, &rec);
        records.push(rec);
    };
    Ok(RunReport {
        algorithm,
        records,
        status,
        y,
        v,
    })
}

/// Run the algorithm selected in `cfg`.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    match cfg.algorithm {
        Algorithm::Ls => run_ls(cfg),
        Algorithm::Newton => run_newton(cfg),
        Algorithm::Pf1 => run_pf(cfg, PfVariant::Pf1),
        Algorithm::Pf2 => run_pf(cfg, PfVariant::Pf2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{QuadGrid, QuadRule};

    fn grid() -> Arc<QuadGrid> {
        QuadGrid::new(SpaceTimeMesh::new(2, 2, 3.0).unwrap(), QuadRule::gauss_legendre(2).unwrap())
    }

    fn small(nl: Nonlinearity) -> RunConfig {
        RunConfig {
            nx: 6,
            nt: 18,
            nonlinearity: nl,
            data: InitialData::Cosine { c: 2.0 },
            ..Default::default()
        }
    }

    #[test]
    fn residual_update_endpoints() {
        let g = grid();
        let r = QuadField::from_fn(&g, |x, t| x + t);
        let gg = QuadField::from_fn(&g, |x, t| x * t);
        assert_eq!(residual_update(&r, &gg, 0.0).unwrap().values(), QuadField::from_fn(&g, |x, t| x + t + x * t).values());
        assert_eq!(residual_update(&r, &gg, 1.0).unwrap().values(), gg.values());
    }

    #[test]
    fn line_search_linear_takes_full_step() {
        let g = grid();
        let r = QuadField::from_fn(&g, |x, t| 1.0 + x * t);
        let y = QuadField::from_fn(&g, |x, _| x);
        let (l, e) = line_search(&r, &y, &y, &Nonlinearity::linear(-1.0), 1e-3).unwrap();
        assert_eq!(l, 1.0);
        assert_eq!(e, 0.0);
    }

    #[test]
    fn line_search_quadratic_minimizer() {
        // r = 1, Y = 0 on even samples; r = 0, Y = 1 on odd ones. With
        // f(s) = -|s| and f' = 0 the remainder is -lambda on odd samples, so
        // phi(lambda) = W ((1 - lambda)² + lambda²).
        let g = grid();
        let n = g.sample_count();
        let r = QuadField::from_values(&g, (0..n).map(|i| ((i + 1) % 2) as f64).collect()).unwrap();
        let dir = QuadField::from_values(&g, (0..n).map(|i| (i % 2) as f64).collect()).unwrap();
        let y = QuadField::zeros(&g);
        let nl = Nonlinearity::custom(|s| -s.abs(), |_| 0.0);
        let (l, e) = line_search(&r, &y, &dir, &nl, 1e-3).unwrap();
        assert!((l - 0.5).abs() <= 1e-3, "{l}");
        let w = 0.5 * r.l2_norm_squared();
        assert!((e - w * 0.5).abs() <= 1e-6 * w);
    }

    #[test]
    fn line_search_stays_in_unit_interval() {
        let g = grid();
        let r = QuadField::from_fn(&g, |x, t| 10.0 * (x - t));
        let y = QuadField::from_fn(&g, |x, t| 3.0 * x * t);
        let d = QuadField::from_fn(&g, |x, _| -x);
        for c in [-2.0, -1.0, 5.0] {
            let (l, e) = line_search(&r, &y, &d, &Nonlinearity::log_squared(c), 1e-3).unwrap();
            assert!((0.0..=1.0).contains(&l));
            assert!(e <= 0.5 * r.l2_norm_squared() + 1e-12);
        }
    }

    #[test]
    fn unrolled_recursion_matches_product_formula() {
        let g = grid();
        let nl = Nonlinearity::log_squared(-1.0);
        let y0 = QuadField::from_fn(&g, |x, t| 5.0 * x - t);
        let dirs = [
            QuadField::from_fn(&g, |x, t| x * t),
            QuadField::from_fn(&g, |x, _| 2.0 * x - 1.0),
            QuadField::from_fn(&g, |_, t| t.sin()),
        ];
        let lambdas = [0.3, 0.8, 1.0];
        let mut y = y0.clone();
        let mut r = nl.apply(&y0);
        let mut gs = Vec::new();
        for (d, &l) in dirs.iter().zip(&lambdas) {
            let gk = nl.remainder(&y, d, l).unwrap();
            r = residual_update(&r, &gk, l).unwrap();
            y = y.sub(&d.scaled(l)).unwrap();
            gs.push(gk);
        }
        let k = lambdas.len() - 1;
        let f0 = nl.apply(&y0);
        let mut expect = f0.scaled(lambdas.iter().map(|l| 1.0 - l).product());
        for j in 0..k {
            let prod: f64 = lambdas[j + 1..=k].iter().map(|l| 1.0 - l).product();
            expect = expect.zip_map(&gs[j], |a, b| a + b * prod).unwrap();
        }
        expect = expect.zip_map(&gs[k], |a, b| a + b).unwrap();
        for (a, b) in r.values().iter().zip(expect.values()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn linear_problem_needs_one_step() {
        for report in [run_ls(&small(Nonlinearity::linear(-1.0))).unwrap(), run_newton(&small(Nonlinearity::linear(-1.0))).unwrap()] {
            assert_eq!(report.status, Status::Converged);
            assert_eq!(report.k_star(), Some(1));
            assert_eq!(report.last().sqrt2e, 0.0);
        }
    }

    #[test]
    fn newton_is_unit_step_least_squares() {
        let cfg = small(Nonlinearity::log_squared(-1.0));
        let a = run_descent(&cfg, StepRule::Fixed(1.0), Algorithm::Ls).unwrap();
        let b = run_newton(&cfg).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.y.values(), b.y.values());
    }

    #[test]
    fn zero_nonlinearity_fixed_points() {
        for v in [PfVariant::Pf1, PfVariant::Pf2] {
            let report = run_pf(&small(Nonlinearity::zero()), v).unwrap();
            assert_eq!(report.k_star(), Some(1));
            assert_eq!(report.records[1].rel_dy, Some(0.0));
        }
    }

    #[test]
    fn least_squares_is_monotone() {
        let report = run_ls(&small(Nonlinearity::log_squared(-1.0))).unwrap();
        assert_eq!(report.status, Status::Converged);
        for w in report.records.windows(2) {
            assert!(w[1].sqrt2e <= w[0].sqrt2e * (1.0 + 1e-12));
        }
        assert!(report.last().lambda.unwrap() >= 1.0 - 1e-3);
    }

    #[test]
    fn algorithm_tags() {
        assert_eq!("newton".parse::<Algorithm>().unwrap(), Algorithm::Newton);
        assert_eq!(Algorithm::Pf2.to_string(), "PF2");
        assert!("bisect".parse::<Algorithm>().is_err());
    }
}

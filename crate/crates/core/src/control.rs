//! One linear null-control problem: find the control `v` and trajectory `y`
//! of `y_tt - y_xx + A y = B`, `y(0,t) = 0`, `y_x(1,t) = v(t)`, starting at
//! `(u0, u1)` and reaching rest at `t = T`, of least weighted cost.

use std::fmt;
use std::sync::Arc;

use crate::c1fem::C1Space;
use crate::error::{Error, Result};
use crate::geometry::{BoundaryTrace, QuadField};
use crate::linalg::{self, Ordering, SparseSpd, SpdFactor, SymbolicFactor};
use crate::nonlinear::ControlWeight;

/// Controllability time below which the problem is not solvable.
pub const MIN_CONTROL_TIME: f64 = 2.0;

type Profile = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Initial position `u0` and velocity `u1` on `[0, 1]`.
#[derive(Clone, Default)]
pub enum InitialData {
    #[default]
    Zero,
    /// `u0 = c (cos(pi x) - 1)`, `u1 = 0`.
    Cosine { c: f64 },
    /// `u0 = 100 (x - 1/2)` and `u1 = 100` on `(1/2, 1]`, zero elsewhere.
    Ramp100,
    /// `u0 = c1 (cos(pi x) - 1)`, `u1 = c2` on `(1/2, 1]`.
    Mixed { c1: f64, c2: f64 },
    Custom { u0: Profile, u1: Profile },
}

impl fmt::Debug for InitialData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialData::Zero => write!(f, "Zero"),
            InitialData::Cosine { c } => write!(f, "Cosine {{ c: {c} }}"),
            InitialData::Ramp100 => write!(f, "Ramp100"),
            InitialData::Mixed { c1, c2 } => write!(f, "Mixed {{ c1: {c1}, c2: {c2} }}"),
            InitialData::Custom { .. } => write!(f, "Custom"),
        }
    }
}

#[inline]
fn right_half(x: f64) -> f64 {
    if x > 0.5 {
        1.0
    } else {
        0.0
    }
}

impl InitialData {
    pub fn custom(
        u0: impl Fn(f64) -> f64 + Send + Sync + 'static,
        u1: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        InitialData::Custom {
            u0: Arc::new(u0),
            u1: Arc::new(u1),
        }
    }

    pub fn u0(&self, x: f64) -> f64 {
        match self {
            InitialData::Zero => 0.0,
            InitialData::Cosine { c } => c * ((std::f64::consts::PI * x).cos() - 1.0),
            InitialData::Ramp100 => 100.0 * (x - 0.5) * right_half(x),
            InitialData::Mixed { c1, .. } => c1 * ((std::f64::consts::PI * x).cos() - 1.0),
            InitialData::Custom { u0, .. } => u0(x),
        }
    }

    pub fn u1(&self, x: f64) -> f64 {
        match self {
            InitialData::Zero | InitialData::Cosine { .. } => 0.0,
            InitialData::Ramp100 => 100.0 * right_half(x),
            InitialData::Mixed { c2, .. } => c2 * right_half(x),
            InitialData::Custom { u1, .. } => u1(x),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, InitialData::Zero)
    }
}

/// Data of one linear problem. `None` stands for a zero potential or source.
#[derive(Debug, Clone, Default)]
pub struct ControlProblem {
    pub potential: Option<QuadField>,
    pub source: Option<QuadField>,
    pub data: InitialData,
}

#[derive(Debug, Clone)]
pub struct ControlSolution {
    /// Dual coefficients.
    pub p: Vec<f64>,
    pub y: QuadField,
    pub v: BoundaryTrace,
    /// `||y||² + ||v / eta||²`.
    pub cost: f64,
    pub norm_y: f64,
    pub norm_v: f64,
}

/// Linear solver used for the Gram systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinearSolver {
    #[default]
    Cholesky,
    ConjugateGradient,
}

/// Solves linear control problems on a fixed space, reusing the symbolic
/// factorization and the factor of the zero-potential Gram matrix.
pub struct NullControlSolver {
    space: Arc<C1Space>,
    weight: ControlWeight,
    linear_solver: LinearSolver,
    symbolic: Option<SymbolicFactor>,
    free_gram: Option<(SparseSpd, Option<SpdFactor>)>,
}

impl NullControlSolver {
    pub fn new(space: Arc<C1Space>, weight: ControlWeight) -> Result<Self> {
        let t = space.mesh().t_final();
        if t <= MIN_CONTROL_TIME {
            return Err(Error::invalid(format!(
                "controllability time must exceed {MIN_CONTROL_TIME} (got {t})"
            )));
        }
        Ok(Self {
            space,
            weight,
            linear_solver: LinearSolver::default(),
            symbolic: None,
            free_gram: None,
        })
    }

    pub fn with_linear_solver(mut self, linear_solver: LinearSolver) -> Self {
        self.linear_solver = linear_solver;
        self
    }

    pub fn space(&self) -> &Arc<C1Space> {
        &self.space
    }

    pub fn weight(&self) -> ControlWeight {
        self.weight
    }

    fn load(&self, problem: &ControlProblem) -> Result<Vec<f64>> {
        let data = &problem.data;
        self.space
            .assemble_load(problem.source.as_ref(), &|x| data.u0(x), &|x| data.u1(x))
    }

    fn symbolic(&mut self, m: &SparseSpd) -> Result<&SymbolicFactor> {
        if self.symbolic.is_none() {
            self.symbolic = Some(SymbolicFactor::analyze(m, Ordering::FillReducing)?);
        }
        Ok(self.symbolic.as_ref().unwrap())
    }

    fn solve_linear(&mut self, m: &SparseSpd, factor: Option<&SpdFactor>, b: &[f64]) -> Result<Vec<f64>> {
        match (self.linear_solver, factor) {
            (LinearSolver::Cholesky, Some(f)) => m.solve_with(f, b),
            _ => {
                let max_iter = 20 * m.dim().max(100);
                Ok(linalg::conjugate_gradient(m, b, linalg::CG_TOLERANCE, max_iter)?.0)
            }
        }
    }

    fn factor(&mut self, m: &SparseSpd) -> Result<Option<SpdFactor>> {
        match self.linear_solver {
            LinearSolver::Cholesky => Ok(Some(self.symbolic(m)?.factorize(m)?)),
            LinearSolver::ConjugateGradient => Ok(None),
        }
    }

    /// Dual coefficients of `problem`.
    pub fn solve_dual(&mut self, problem: &ControlProblem) -> Result<Vec<f64>> {
        let load = self.load(problem)?;
        if load.iter().all(|&v| v == 0.0) {
            return Ok(vec![0.0; load.len()]);
        }
        match &problem.potential {
            None => {
                if self.free_gram.is_none() {
                    let m = self
                        .space
                        .assemble_gram(&QuadField::zeros(self.space.grid()), self.weight)?;
                    let f = self.factor(&m)?;
                    self.free_gram = Some((m, f));
                }
                let (m, f) = self.free_gram.take().unwrap();
                let out = self.solve_linear(&m, f.as_ref(), &load);
                self.free_gram = Some((m, f));
                out
            }
            Some(a) => {
                let m = self.space.assemble_gram(a, self.weight)?;
                let f = self.factor(&m)?;
                self.solve_linear(&m, f.as_ref(), &load)
            }
        }
    }

    pub fn solve(&mut self, problem: &ControlProblem) -> Result<ControlSolution> {
        let p = self.solve_dual(problem)?;
        self.solution_from_dual(p, problem.potential.as_ref())
    }

    /// State, control and cost of given dual coefficients.
    pub fn solution_from_dual(&self, p: Vec<f64>, potential: Option<&QuadField>) -> Result<ControlSolution> {
        let zero;
        let a = match potential {
            Some(a) => a,
            None => {
                zero = QuadField::zeros(self.space.grid());
                &zero
            }
        };
        let y = self.space.extract_state(&p, a)?;
        let v = self.space.extract_control(&p, self.weight)?;
        let norm_y = y.l2_norm();
        let norm_v = v.l2_norm();
        let cost = norm_y * norm_y + weighted_control_cost(&v, self.weight);
        Ok(ControlSolution {
            p,
            y,
            v,
            cost,
            norm_y,
            norm_v,
        })
    }
}

/// `||v / eta||²`, with zero contribution where `eta` vanishes.
pub fn weighted_control_cost(v: &BoundaryTrace, weight: ControlWeight) -> f64 {
    let grid = v.grid();
    let t_final = grid.mesh().t_final();
    v.values()
        .iter()
        .enumerate()
        .map(|(s, &val)| {
            let eta = weight.eta(grid.trace_time(s), t_final);
            if eta == 0.0 {
                0.0
            } else {
                let r = val / eta;
                grid.trace_weight(s) * r * r
            }
        })
        .sum()
}

/// Solve a single problem without keeping any factorization.
pub fn solve_null_control(
    space: Arc<C1Space>,
    weight: ControlWeight,
    problem: &ControlProblem,
) -> Result<ControlSolution> {
    NullControlSolver::new(space, weight)?.solve(problem)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c1fem::build_c1_space;
    use crate::geometry::SpaceTimeMesh;

    fn solver(nx: usize, nt: usize, weight: ControlWeight) -> NullControlSolver {
        let space = build_c1_space(SpaceTimeMesh::new(nx, nt, 3.0).unwrap(), 4).unwrap();
        NullControlSolver::new(Arc::new(space), weight).unwrap()
    }

    #[test]
    fn data_profiles() {
        let d = InitialData::Ramp100;
        assert_eq!(d.u0(0.5), 0.0);
        assert_eq!(d.u1(0.5), 0.0);
        assert_eq!(d.u1(0.75), 100.0);
        assert_eq!(d.u0(1.0), 50.0);
        let c = InitialData::Cosine { c: 20.0 };
        assert_eq!(c.u0(0.0), 0.0);
        assert!((c.u0(1.0) + 40.0).abs() < 1e-12);
        let m = InitialData::Mixed { c1: 50.0, c2: 100.0 };
        assert_eq!(m.u1(0.6), 100.0);
        assert!((m.u0(0.5) + 50.0).abs() < 1e-12);
    }

    #[test]
    fn short_horizon_is_rejected() {
        let space = build_c1_space(SpaceTimeMesh::new(4, 4, 2.0).unwrap(), 4).unwrap();
        assert!(NullControlSolver::new(Arc::new(space), ControlWeight::CutOff).is_err());
    }

    #[test]
    fn zero_datum_gives_zero_solution() {
        let mut s = solver(4, 12, ControlWeight::CutOff);
        let sol = s.solve(&ControlProblem::default()).unwrap();
        assert!(sol.p.iter().all(|&v| v == 0.0));
        assert_eq!(sol.cost, 0.0);
        assert_eq!(sol.y.max_abs(), 0.0);
        assert_eq!(sol.v.max_abs(), 0.0);
    }

    #[test]
    fn solution_is_linear_in_data() {
        let mut s = solver(6, 18, ControlWeight::CutOff);
        let base = ControlProblem {
            data: InitialData::Cosine { c: 1.0 },
            ..Default::default()
        };
        let scaled = ControlProblem {
            data: InitialData::Cosine { c: -3.5 },
            ..Default::default()
        };
        let a = s.solve(&base).unwrap();
        let b = s.solve(&scaled).unwrap();
        let diff = b.y.sub(&a.y.scaled(-3.5)).unwrap().l2_norm();
        assert!(diff <= 1e-9 * b.norm_y, "{diff}");
        let dv = b.v.sub(&a.v.scaled(-3.5)).unwrap().l2_norm();
        assert!(dv <= 1e-9 * b.norm_v);
    }

    #[test]
    fn conjugate_gradient_matches_cholesky() {
        let problem = ControlProblem {
            potential: None,
            source: None,
            data: InitialData::Cosine { c: 2.0 },
        };
        let direct = solver(4, 12, ControlWeight::Unit).solve(&problem).unwrap();
        let iter = solver(4, 12, ControlWeight::Unit)
            .with_linear_solver(LinearSolver::ConjugateGradient)
            .solve(&problem)
            .unwrap();
        let rel = direct.y.sub(&iter.y).unwrap().l2_norm() / direct.norm_y;
        assert!(rel < 1e-6, "{rel}");
    }
}

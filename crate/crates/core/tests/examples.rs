use std::sync::Arc;

use approx::assert_relative_eq;

use semiwave::c1fem::{build_c1_space, hermite_basis};
use semiwave::control::solve_null_control;
use semiwave::geometry::{build_mesh, tensor_quadrature, BoundaryTrace, QuadField, QuadGrid};
use semiwave::iterate::line_search;
use semiwave::linalg::{factorize, SparseSpd};
use semiwave::nonlinear::eval_eta;
use semiwave::report::{format_csv, parse_csv};
use semiwave::{
    run_ls, run_newton, ControlProblem, ControlWeight, InitialData, Nonlinearity, NullControlSolver, RunConfig,
    Status,
};

fn grid(nx: usize, nt: usize, order: usize) -> Arc<QuadGrid> {
    QuadGrid::new(build_mesh(nx, nt, 3.0).unwrap(), tensor_quadrature(order).unwrap())
}

#[test]
fn mesh_sizes() {
    let m = build_mesh(100, 300, 3.0).unwrap();
    assert_relative_eq!(m.dx(), 0.01, epsilon = 1e-15);
    assert_relative_eq!(m.dt(), 0.01, epsilon = 1e-15);
    assert_relative_eq!(m.h(), 1.414e-2, max_relative = 1e-3);
    let m = build_mesh(2, 3, 3.0).unwrap();
    assert_eq!(m.cell_count(), 6);
    assert_eq!((m.dx(), m.dt()), (0.5, 1.0));
    assert!(build_mesh(0, 3, 3.0).is_err());
}

#[test]
fn quadrature_rules() {
    let r = tensor_quadrature(4).unwrap();
    assert_eq!(r.points_per_cell(), 16);
    let s: f64 = r.weights().iter().flat_map(|a| r.weights().iter().map(move |b| a * b)).sum();
    assert_relative_eq!(s, 1.0, epsilon = 1e-15);
    let i7: f64 = r.points().iter().zip(r.weights()).map(|(x, w)| w * x.powi(7)).sum();
    assert_relative_eq!(i7, 0.125, max_relative = 1e-14);
    let mid = tensor_quadrature(1).unwrap();
    assert_eq!((mid.points()[0], mid.weights()[0]), (0.5, 1.0));
    assert!(tensor_quadrature(11).is_err());
}

#[test]
fn field_norms() {
    let g = grid(8, 8, 4);
    assert_relative_eq!(QuadField::constant(&g, 1.0).l2_norm(), 3f64.sqrt(), max_relative = 1e-14);
    assert_eq!(QuadField::zeros(&g).l2_norm(), 0.0);
    let s = QuadField::from_fn(&g, |x, _| (std::f64::consts::PI * x).sin());
    assert!((s.l2_norm() - 1.5f64.sqrt()).abs() <= 1e-6);
    let one = BoundaryTrace::from_fn(&g, |_| 1.0);
    assert_relative_eq!(one.l2_norm(), 3f64.sqrt(), max_relative = 1e-14);
}

#[test]
fn hermite_examples() {
    assert_eq!(hermite_basis(0.0, 0).unwrap(), [1.0, 0.0, 0.0, 0.0]);
    assert_eq!(hermite_basis(0.5, 0).unwrap(), [0.5, 0.125, 0.5, -0.125]);
    for xi in [0.0, 0.3, 1.0] {
        let h = hermite_basis(xi, 0).unwrap();
        assert_relative_eq!(h[0] + h[2], 1.0, epsilon = 1e-15);
    }
    assert!(hermite_basis(0.5, 3).is_err());
}

#[test]
fn dof_counts() {
    let one = build_c1_space(build_mesh(1, 1, 3.0).unwrap(), 4).unwrap();
    assert_eq!((one.total_dofs(), one.constrained_dofs(), one.free_dofs()), (16, 8, 8));
    let full = build_c1_space(build_mesh(100, 300, 3.0).unwrap(), 4).unwrap();
    assert_eq!((full.total_dofs(), full.free_dofs()), (121604, 120400));
}

#[test]
fn factorization_examples() {
    let id = factorize(&SparseSpd::identity(5)).unwrap();
    assert!(id.pivots().iter().all(|&p| p == 1.0));
    let m = SparseSpd::from_dense(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap();
    let x = m.solve_with(&factorize(&m).unwrap(), &[8.0, 7.0]).unwrap();
    assert_relative_eq!(x[0], 1.25, epsilon = 1e-14);
    assert_relative_eq!(x[1], 1.5, epsilon = 1e-14);
    let bad = SparseSpd::from_dense(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
    assert!(matches!(factorize(&bad), Err(semiwave::Error::NotPositiveDefinite { .. })));
}

#[test]
fn eta_examples() {
    assert_eq!(eval_eta(0.0, 3.0).unwrap(), 0.0);
    assert_relative_eq!(eval_eta(1.5, 3.0).unwrap(), 1.0000002, max_relative = 1e-7);
    for t in [0.3, 1.0, 1.4] {
        assert!((eval_eta(t, 3.0).unwrap() - eval_eta(3.0 - t, 3.0).unwrap()).abs() <= 1e-12);
    }
    assert!(eval_eta(3.1, 3.0).is_err());
}

#[test]
fn nonlinearity_examples() {
    let f = Nonlinearity::log_squared(-1.0);
    assert_relative_eq!(f.f(1.0), -0.480_453_0, max_relative = 1e-6);
    assert_relative_eq!(f.df(1.0), -1.173_600_2, max_relative = 1e-6);
    assert_relative_eq!(f.secant(1.0), -0.480_453_0, max_relative = 1e-6);
    assert_eq!(f.secant(0.0), 0.0);
    assert_eq!(f.secant(-2.0), f.secant(2.0));
    assert_relative_eq!(f.remainder_at(1.0, 1.0, 1.0), -std::f64::consts::LN_2, max_relative = 1e-6);
}

/// `(p, q)_Phi = l(q)` for every basis function, with a unit weight.
#[test]
fn dual_solution_is_stationary() {
    let space = Arc::new(build_c1_space(build_mesh(6, 18, 3.0).unwrap(), 4).unwrap());
    let g = space.grid().clone();
    let a = QuadField::from_fn(&g, |x, t| 1.0 + x * t);
    let b = QuadField::from_fn(&g, |x, t| (3.0 * x).sin() * t);
    let data = InitialData::Cosine { c: 2.0 };
    let problem = ControlProblem {
        potential: Some(a.clone()),
        source: Some(b.clone()),
        data: data.clone(),
    };
    let sol = solve_null_control(space.clone(), ControlWeight::Unit, &problem).unwrap();
    let (m, load) = space
        .assemble_system(&a, Some(&b), &|x| data.u0(x), &|x| data.u1(x), ControlWeight::Unit)
        .unwrap();
    let mp = m.matvec(&sol.p).unwrap();
    // Row i of M p - l is (p, e_i)_Phi - l(e_i); ||e_i|| = 1.
    let worst = mp.iter().zip(&load).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-8, "stationarity defect {worst}");
}

/// Projection load built from an admissible bicubic returns its coefficients.
#[test]
fn galerkin_reproduces_admissible_bicubic() {
    let space = build_c1_space(build_mesh(4, 12, 3.0).unwrap(), 4).unwrap();
    let g = space.grid().clone();
    let p = |x: f64, _t: f64| x * x * (3.0 - 2.0 * x);
    let lp = |x: f64, _t: f64| -(6.0 - 12.0 * x);
    for weight in [ControlWeight::Unit, ControlWeight::CutOff] {
        let a = QuadField::zeros(&g);
        let m = space.assemble_gram(&a, weight).unwrap();
        let load = space.assemble_projection_load(&a, weight, &p, &lp).unwrap();
        let coeffs = m.solve_with(&factorize(&m).unwrap(), &load).unwrap();
        let exact = space.interpolate(&p, &|x, _| 6.0 * x * (1.0 - x), &|_, _| 0.0, &|_, _| 0.0);
        let err = coeffs.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-8, "{weight:?}: {err}");
    }
}

#[test]
fn linear_solve_initial_norms() {
    let space = Arc::new(build_c1_space(build_mesh(100, 300, 3.0).unwrap(), 4).unwrap());
    let mut solver = NullControlSolver::new(space, ControlWeight::CutOff).unwrap();
    let sol = solver
        .solve(&ControlProblem {
            data: InitialData::Cosine { c: 20.0 },
            ..Default::default()
        })
        .unwrap();
    assert!((sol.norm_y / 18.82 - 1.0).abs() <= 0.15, "{}", sol.norm_y);
    assert!((sol.norm_v / 28.73 - 1.0).abs() <= 0.15, "{}", sol.norm_v);
    let v = sol.v.values();
    assert_eq!(v[0], 0.0);
    assert_eq!(*v.last().unwrap(), 0.0);
}

#[test]
fn zero_datum() {
    let space = Arc::new(build_c1_space(build_mesh(4, 12, 3.0).unwrap(), 4).unwrap());
    let sol = solve_null_control(space, ControlWeight::CutOff, &ControlProblem::default()).unwrap();
    assert!(sol.p.iter().all(|&c| c == 0.0));
    assert_eq!((sol.norm_y, sol.norm_v, sol.cost), (0.0, 0.0, 0.0));
}

#[test]
fn line_search_examples() {
    let g = grid(1, 1, 1);
    let r = QuadField::constant(&g, 2.0);
    let y = QuadField::constant(&g, 0.3);
    let dir = QuadField::constant(&g, 0.7);
    let (lambda, e) = line_search(&r, &y, &dir, &Nonlinearity::linear(-1.0), 1e-3).unwrap();
    assert_eq!(lambda, 1.0);
    assert_eq!(e, 0.0);
}

fn small(nonlinearity: Nonlinearity) -> RunConfig {
    RunConfig {
        nx: 8,
        nt: 24,
        nonlinearity,
        data: InitialData::Cosine { c: 2.0 },
        ..Default::default()
    }
}

#[test]
fn linear_nonlinearity_takes_one_step() {
    for rep in [run_ls(&small(Nonlinearity::linear(-1.0))).unwrap(), run_newton(&small(Nonlinearity::linear(-1.0))).unwrap()] {
        assert_eq!(rep.status, Status::Converged);
        assert_eq!(rep.k_star(), Some(1));
        assert!(rep.last().sqrt2e <= 1e-10);
    }
}

#[test]
fn controlled_data_give_a_single_row() {
    let rep = run_ls(&small(Nonlinearity::zero())).unwrap();
    assert_eq!(rep.k_star(), Some(0));
    let csv = format_csv(&rep);
    assert_eq!(csv.lines().count(), 2);
    let (records, status) = parse_csv(&csv).unwrap();
    assert_eq!((records.len(), status), (1, Status::Converged));
}

#[test]
fn diverged_run_has_footer() {
    let cfg = RunConfig {
        blowup: 1e-3,
        ..small(Nonlinearity::log_squared(-1.0))
    };
    let rep = run_newton(&cfg).unwrap();
    assert_eq!(rep.status, Status::Diverged);
    let csv = format_csv(&rep);
    assert!(csv.ends_with("# status=diverged\n"), "{csv}");
    assert_eq!(parse_csv(&csv).unwrap().1, Status::Diverged);
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = semiwave::load_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(!cfg.sweep_points().is_empty());
        n += 1;
    }
    assert_eq!(n, 6);
}

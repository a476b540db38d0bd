use amvp_core::asymptotics::{check_amvp, expansion_sweep, QuadraticModel};
use amvp_core::ballquad::QuadratureSpec;
use amvp_core::median::MedianConfig;
use amvp_core::special;
use amvp_core::{GroupModel, GroupPoint};
use nalgebra::DMatrix;

fn h1() -> GroupModel {
    GroupModel::heisenberg(1).unwrap()
}

fn model(g: &GroupModel, a: DMatrix<f64>, xi: Vec<f64>, eta: f64, x: &[f64]) -> QuadraticModel {
    QuadraticModel::new(g, 0.3, xi, vec![eta], a, GroupPoint::new(x.to_vec()).unwrap()).unwrap()
}

#[test]
fn heisenberg_p3_sweep() {
    let g = h1();
    let m = model(&g, DMatrix::identity(2, 2), vec![1.0, 0.0], 0.0, &[0.0, 0.0, 0.0]);
    let r = expansion_sweep(
        &g,
        &m,
        3.0,
        0.2,
        5,
        &QuadratureSpec::new(1_000_000, 1),
        &MedianConfig::new(3.0),
    )
    .unwrap();
    let predicted = 3.0 * special::c_heisenberg1(3.0).unwrap();
    assert!((r.predicted_coeff - predicted).abs() < 1e-14);
    println!("{r:?}");
    assert!(r.rel_error < 0.02, "{r:?}");
}

#[test]
fn heisenberg_p3_sweep_off_identity() {
    let g = h1();
    let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.8, 0.8, -0.4]);
    let m = model(&g, a, vec![0.6, -0.8], 0.7, &[0.5, -1.0, 2.0]);
    let r = expansion_sweep(
        &g,
        &m,
        3.0,
        0.2,
        5,
        &QuadratureSpec::new(1_000_000, 2),
        &MedianConfig::new(3.0),
    )
    .unwrap();
    println!("{r:?}");
    assert!(r.rel_error < 0.02, "{r:?}");
}

#[test]
fn heisenberg_infinity_sweep() {
    let g = h1();
    let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
    let m = model(&g, a, vec![1.0, 0.0], 0.0, &[0.0, 0.0, 0.0]);
    let r = expansion_sweep(
        &g,
        &m,
        f64::INFINITY,
        0.2,
        5,
        &QuadratureSpec::new(400_000, 3),
        &MedianConfig::new(f64::INFINITY),
    )
    .unwrap();
    assert_eq!(r.predicted_coeff, 1.0);
    println!("{r:?}");
    assert!(r.rel_error < 0.02, "{r:?}");
}

#[test]
fn eta_does_not_move_the_fit() {
    let g = h1();
    let spec = QuadratureSpec::new(400_000, 4);
    let cfg = MedianConfig::new(2.5);
    let base = model(&g, DMatrix::identity(2, 2), vec![0.0, 1.0], 0.0, &[0.0, 0.0, 0.0]);
    let with_eta = model(&g, DMatrix::identity(2, 2), vec![0.0, 1.0], 3.0, &[0.0, 0.0, 0.0]);
    let r0 = expansion_sweep(&g, &base, 2.5, 0.2, 5, &spec, &cfg).unwrap();
    let r1 = expansion_sweep(&g, &with_eta, 2.5, 0.2, 5, &spec, &cfg).unwrap();
    println!("{} {}", r0.fitted_coeff, r1.fitted_coeff);
    assert!((r0.fitted_coeff - r1.fitted_coeff).abs() < 0.02 * r0.predicted_coeff);
}

#[test]
fn smooth_function_on_heisenberg() {
    let g = h1();
    let x = GroupPoint::new(vec![1.0, 0.0, 0.0]).unwrap();
    let r = check_amvp(
        &g,
        |y| y[0] * y[0],
        &x,
        2.0,
        0.2,
        5,
        &QuadratureSpec::new(400_000, 5),
        &MedianConfig::new(2.0),
    )
    .unwrap();
    assert!((r.predicted_coeff - 2.0 / (3.0 * std::f64::consts::PI)).abs() < 1e-6);
    println!("{r:?}");
    assert!(r.rel_error < 0.02, "{r:?}");
}

#[test]
fn harmonic_and_linear_functions_predict_zero() {
    let e = GroupModel::euclidean(2).unwrap();
    let x = GroupPoint::new(vec![0.5, 0.2]).unwrap();
    let spec = QuadratureSpec::new(200_000, 6);
    let r = check_amvp(
        &e,
        |y| y[0] * y[0] - y[1] * y[1],
        &x,
        2.0,
        0.2,
        5,
        &spec,
        &MedianConfig::new(2.0),
    )
    .unwrap();
    assert!(r.predicted_coeff.abs() < 1e-4);
    assert!(r.fitted_coeff.abs() <= 1e-3 * 2.0, "{r:?}");
    let g = h1();
    let r = check_amvp(
        &g,
        |y| 0.3 * y[0] - y[1],
        &GroupPoint::zero(3),
        3.0,
        0.2,
        5,
        &spec,
        &MedianConfig::new(3.0),
    )
    .unwrap();
    assert_eq!(r.predicted_coeff, 0.0);
    assert!(r.fitted_coeff.abs() <= 1e-3, "{r:?}");
}

#[test]
fn five_and_six_level_fits_agree() {
    let g = h1();
    let m = model(&g, DMatrix::identity(2, 2), vec![1.0, 0.0], 0.0, &[0.0, 0.0, 0.0]);
    let spec = QuadratureSpec::new(400_000, 7);
    let cfg = MedianConfig::new(4.0);
    let r5 = expansion_sweep(&g, &m, 4.0, 0.2, 5, &spec, &cfg).unwrap();
    let r6 = expansion_sweep(&g, &m, 4.0, 0.2, 6, &spec, &cfg).unwrap();
    println!("{} {}", r5.fitted_coeff, r6.fitted_coeff);
    assert!((r5.fitted_coeff - r6.fitted_coeff).abs() < 0.01 * r5.fitted_coeff.abs());
}

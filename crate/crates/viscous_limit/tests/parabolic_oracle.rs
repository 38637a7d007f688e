use std::collections::BTreeMap;

use viscous_limit::linalg::vec_from;
use viscous_limit::parabolic_oracle::{
    counterexample_family, counterexample_family_on, crossing_position, estimate_trace, simulate_boundary_riemann,
    simulate_ibvp, BoundaryDatum, CounterExample, SimGrid, SimOptions, SimResult,
};
use viscous_limit::system_model::{build_boundary_map, make_catalog_system};
use viscous_limit::{Error, SystemSpec, Vector};

fn burgers() -> SystemSpec {
    make_catalog_system("burgers", &BTreeMap::new()).unwrap()
}

fn riemann(eps: f64, l: f64, j: usize, t: f64, u0: f64, ub: f64) -> SimResult {
    simulate_boundary_riemann(&burgers(), eps, l, j, t, &vec_from(&[u0]), &BoundaryDatum::State(vec_from(&[ub]))).unwrap()
}

fn total(sim: &SimResult, snap: usize) -> f64 {
    let u = &sim.snapshots[snap];
    let dx = sim.grid.dx;
    (0..u.len() - 1).map(|i| 0.5 * dx * (u[i][0] + u[i + 1][0])).sum()
}

#[test]
fn grid_respects_the_stability_bound() {
    let b = burgers();
    let states = [vec_from(&[-1.0]), vec_from(&[2.0])];
    let g = SimGrid::new(&b, 0.01, 2.0, 1000, 0.5, &states).unwrap();
    let bound = 0.4 * (g.dx / 2.0).min(g.dx * g.dx / (2.0 * 0.01));
    assert!(g.dt <= bound * (1.0 + 1e-12));
    assert!(((g.t_final / g.dt).round() * g.dt - 0.5).abs() < 1e-12);
    assert!(SimGrid::new(&b, -0.01, 2.0, 1000, 0.5, &states).is_err());

    let mut bad = g;
    bad.dt *= 3.0;
    let r = simulate_ibvp(&b, &bad, |_| vec_from(&[-1.0]), &BoundaryDatum::State(vec_from(&[2.0])), &SimOptions::default());
    assert!(matches!(r, Err(Error::Cfl { .. })));
}

#[test]
fn viscous_shock_from_the_boundary() {
    // u0 = -1, ub = 2: shock at speed 1/2, trace 2
    let sim = riemann(0.01, 2.0, 1000, 0.5, -1.0, 2.0);
    let x = crossing_position(&sim, 0, 0.5, 0.0).unwrap();
    assert!((x - 0.25).abs() < 0.02, "{x}");
    let tr = estimate_trace(&sim, 0.01, 4.0).unwrap();
    assert!((tr[0] - 2.0).abs() < 0.02, "{}", tr[0]);
}

#[test]
fn epsilon_sweep_is_cauchy() {
    let sims: Vec<SimResult> = [0.02, 0.01, 0.005].iter().map(|e| riemann(*e, 2.0, 2000, 0.5, -1.0, 2.0)).collect();
    let d1 = sims[0].l1_distance(&sims[1]);
    let d2 = sims[1].l1_distance(&sims[2]);
    assert!(d2 < d1, "{d1} {d2}");
}

#[test]
fn constant_data_and_positive_speeds() {
    let sim = riemann(0.01, 1.0, 200, 0.3, 1.0, 1.0);
    assert!(sim.final_state().iter().all(|u| (u[0] - 1.0).abs() < 1e-14));

    // all speeds positive: the datum is transported inside
    let sim = riemann(0.005, 2.0, 1000, 0.5, 1.0, 1.5);
    let tr = estimate_trace(&sim, 0.005, 8.0).unwrap();
    assert!((tr[0] - 1.5).abs() < 0.01, "{}", tr[0]);

    // characteristic case with a layer: trace is the interior state
    let sim = riemann(0.005, 2.0, 1000, 0.5, -2.0, 1.0);
    let tr = estimate_trace(&sim, 0.005, 8.0).unwrap();
    assert!((tr[0] + 2.0).abs() < 0.05, "{}", tr[0]);

    // a window across the shock is rejected
    let sim = riemann(0.01, 2.0, 1000, 0.5, -1.0, 2.0);
    assert!(matches!(estimate_trace(&sim, 0.01, 15.0), Err(Error::WindowCollision(_))));
}

#[test]
fn finite_propagation() {
    let b = burgers();
    let states = [vec_from(&[-2.0]), vec_from(&[-1.6])];
    let g = SimGrid::new(&b, 0.01, 3.0, 1500, 0.3, &states).unwrap();
    let datum = BoundaryDatum::State(vec_from(&[-2.0]));
    let base = simulate_ibvp(&b, &g, |_| vec_from(&[-2.0]), &datum, &SimOptions::default()).unwrap();
    let bump = simulate_ibvp(&b, &g, |x| vec_from(&[if x > 1.5 { -1.6 } else { -2.0 }]), &datum, &SimOptions::default()).unwrap();
    let diff: Vec<f64> = base.final_state().iter().zip(bump.final_state()).map(|(a, c)| (a[0] - c[0]).abs()).collect();
    let at = |x: f64| diff[(x / g.dx).round() as usize];
    // the front sits near 1.5 - 2 * 0.3 = 0.9; the difference decays exponentially ahead of it
    assert!(at(0.1) < 1e-12);
    assert!(at(0.8) > at(0.7) && at(0.7) > at(0.6));
    let slope = (at(0.8).ln() - at(0.6).ln()) / 0.2;
    assert!(slope > 10.0, "{slope}");
}

#[test]
fn conservation_with_matched_far_field() {
    let b = burgers();
    let states = [vec_from(&[1.0]), vec_from(&[1.3])];
    let g = SimGrid::new(&b, 0.01, 3.0, 1500, 0.3, &states).unwrap();
    let bump = |x: f64| vec_from(&[1.0 + if (0.8..1.2).contains(&x) { 0.3 * (1.0 - ((x - 1.0) / 0.2).powi(2)) } else { 0.0 }]);
    let sim = simulate_ibvp(&b, &g, bump, &BoundaryDatum::State(vec_from(&[1.0])), &SimOptions::default()).unwrap();
    let drift = total(&sim, sim.snapshots.len() - 1) - total(&sim, 0);
    // both ends carry the flux f(1) = 1/2
    assert!(drift.abs() <= 10.0 * g.dt * g.dx, "{drift}");
}

/// `x(u)` for `u' = (nu - u) / u`.
fn kernel_x(nu: f64, u10: f64, u: f64) -> f64 {
    (u10 - u) + nu * ((u10 - nu) / (u - nu)).ln()
}

/// `x(u)` for `u' = (u - nu)(u + nu - 2) / (2u)` by partial fractions.
fn travelling_x(nu: f64, u10: f64, u: f64) -> f64 {
    let a = nu / (nu - 1.0);
    let b = (2.0 - nu) / (1.0 - nu);
    a * ((u - nu) / (u10 - nu)).ln() + b * ((2.0 - nu - u) / (2.0 - nu - u10)).ln()
}

#[test]
fn counterexamples_against_implicit_solutions() {
    for nu in [1e-2, 1e-3] {
        let fam = counterexample_family_on(CounterExample::Kernel, nu, 1.0, 801).unwrap();
        for (x, u) in fam.x.iter().zip(&fam.solution) {
            if u - nu > 1e-4 {
                assert!((kernel_x(nu, 1.0, *u) - x).abs() < 1e-6);
            }
        }
        let fam = counterexample_family_on(CounterExample::Travelling, nu, 1.0, 801).unwrap();
        for (x, u) in fam.x.iter().zip(&fam.solution) {
            if u - nu > 1e-4 {
                assert!((travelling_x(nu, 1.0, *u) - x).abs() < 1e-6, "{x}");
            }
        }
    }
}

#[test]
fn counterexample_limits() {
    let k = CounterExample::Kernel;
    assert_eq!(k.limit_kink(1.0), 1.0);
    let fam = counterexample_family(k, 1e-4, 1.0).unwrap();
    assert!(fam.sup_error <= 0.02, "{}", fam.sup_error);
    assert!((fam.kink.unwrap() - 1.0).abs() <= 0.02);
    let i = fam.x.iter().position(|x| *x >= 0.5).unwrap();
    assert!((fam.solution[i] - 0.5).abs() < 1e-3);

    let t = CounterExample::Travelling;
    assert!((t.limit_kink(1.0) - 2.0 * 2f64.ln()).abs() < 1e-15);
    assert!((t.limit(1.0, 0.6) - (2.0 - 0.3f64.exp())).abs() < 1e-15);
    let fam = counterexample_family(t, 1e-4, 1.0).unwrap();
    assert!((fam.kink.unwrap() - 1.3863).abs() <= 0.02);
    assert!(fam.sup_error <= 0.02);

    let r = CounterExample::Rank { gamma: 5.0 };
    assert!((r.limit_kink(1.0) - (60.0f64 / 16.0).sqrt()).abs() < 1e-15);
    assert!((r.limit_kink(1.0) - 1.9365).abs() < 1e-4);
    assert_eq!(r.limit(1.0, 0.0), 1.0);
    let fam = counterexample_family(r, 1e-5, 1.0).unwrap();
    assert!((fam.kink.unwrap() - 1.9365).abs() <= 0.03, "{:?}", fam.kink);

    assert!(counterexample_family(t, 1e-3, 2.5).is_err());
    assert!(counterexample_family(k, 0.0, 1.0).is_err());
}

fn ordered_in_nu(fams: &[viscous_limit::parabolic_oracle::NuFamily]) -> bool {
    // fams sorted by decreasing nu
    fams.windows(2).all(|w| w[1].solution.iter().zip(&w[0].solution).all(|(a, b)| a <= b))
}

#[test]
fn families_are_monotone_in_nu_and_sharpen() {
    let nus = [1e-2, 1e-3, 1e-4];
    for ex in [CounterExample::Kernel, CounterExample::Travelling, CounterExample::Rank { gamma: 5.0 }] {
        let fams: Vec<_> = nus.iter().map(|nu| counterexample_family(ex, *nu, 1.0).unwrap()).collect();
        if !matches!(ex, CounterExample::Rank { .. }) {
            assert!(ordered_in_nu(&fams), "{}", ex.name());
        }
        for f in &fams {
            // decreasing up to round-off on the plateau at nu
            assert!(f.solution.windows(2).all(|p| p[1] <= p[0] + 1e-12), "{}", ex.name());
        }
        let kink = ex.limit_kink(1.0);
        let curv: Vec<f64> = fams.iter().map(|f| f.second_difference_at(kink).abs()).collect();
        assert!(curv[0] < curv[1] && curv[1] < curv[2], "{}: {curv:?}", ex.name());
    }
}

/// `d/dnu |u'|` at `u = 1`, `nu = 0` for the rank example, analytically.
fn rank_slope_sensitivity(gamma: f64) -> f64 {
    let a = 2.0 * gamma / (gamma + 1.0);
    (gamma - 2.0 * a) / (2.0 * a.sqrt() * gamma * gamma)
}

#[test]
fn rank_example_ordering_follows_the_sign_condition() {
    // near u10 a larger nu steepens the profile iff gamma > 3
    assert!(rank_slope_sensitivity(5.0) > 0.0);
    assert!(rank_slope_sensitivity(2.0) < 0.0);
    let fams = |gamma: f64| -> Vec<_> {
        [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|nu| counterexample_family(CounterExample::Rank { gamma }, *nu, 1.0).unwrap())
            .collect()
    };
    assert!(!ordered_in_nu(&fams(5.0)));
    assert!(ordered_in_nu(&fams(2.0)));
}

#[test]
fn reduced_datum_simulation() {
    // ex_travelling: impose the W-coordinate at the boundary, close the rest by extrapolation
    let mut p = BTreeMap::new();
    p.insert("delta".to_string(), 0.3);
    let t = make_catalog_system("ex_travelling", &p).unwrap();
    let u0 = vec_from(&[0.5, 0.0, 0.0]);
    let g = SimGrid::new(&t, 0.01, 2.0, 400, 0.2, &[u0.clone()]).unwrap();
    let dim = build_boundary_map(&t, &u0).unwrap().dim();
    let mut g0 = Vector::zeros(dim);
    g0[0] = 0.05;
    let datum = BoundaryDatum::Reduced(g0);
    let sim = simulate_ibvp(&t, &g, |_| u0.clone(), &datum, &SimOptions::default()).unwrap();
    assert!(sim.final_state().iter().all(|u: &Vector| u.iter().all(|c| c.is_finite())));
    assert!(matches!(
        simulate_ibvp(&t, &g, |_| u0.clone(), &BoundaryDatum::Reduced(Vector::zeros(dim + 1)), &SimOptions::default()),
        Err(Error::DatumDimension { .. })
    ));
}

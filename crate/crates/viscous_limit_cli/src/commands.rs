//! One function per command. Each writes its CSVs into the output directory
//! and records checks in the summary; library errors end the command and are
//! recorded as a summary row by [`run`].

use std::io;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use viscous_limit::boundary_layers::{layer_profile_with, LayerConfig};
use viscous_limit::boundary_riemann::{detect_regime_with, solve_boundary_riemann_with, BoundaryConfig, RegimeChoice};
use viscous_limit::envelopes::{concave_envelope, convex_envelope, monotone_concave_envelope, monotone_convex_envelope};
use viscous_limit::parabolic_oracle::{
    counterexample_family_on, estimate_trace, simulate_ibvp, BoundaryDatum, CounterExample, SimGrid, SimOptions,
    SimResult,
};
use viscous_limit::spectral::{
    eig_pencil, generalized_eigs, stable_dimension_pair, transversal_subspaces, verify_count_invariance, Which,
};
use viscous_limit::system_model::{
    check_beta_transversality, check_block_linear_degeneracy, check_kawashima, check_strict_hyperbolicity,
    make_catalog_system,
};
use viscous_limit::wave_curves::{sample_solution, solve_cauchy_riemann, RiemannPattern, WavePiece};
use viscous_limit::{Error, SampledFunction, SystemSpec, Vector};

use crate::config::{Command, EnvelopeKind, Regime, RunConfig};
use crate::output::{columns, fmt_f, Kind, Status, Summary, Table};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Lib(#[from] Error),
    #[error("writing output: {0}")]
    Io(#[from] io::Error),
}

type Res = Result<(), RunError>;

struct Ctx<'a> {
    cfg: &'a RunConfig,
    spec: SystemSpec,
    out: &'a Path,
    seed: u64,
}

/// Runs the configured command. The summary is always written; the returned
/// code follows the exit-code contract (0 ok, 2 hypothesis, 1 numerical).
pub fn run(cfg: &RunConfig, out: &Path, seed: u64) -> io::Result<(Summary, i32)> {
    std::fs::create_dir_all(out)?;
    let mut summary = Summary::default();
    summary.note("command", cfg.command.name());
    summary.note("system", cfg.system.name.as_str());
    let scheduled = cfg.scheduled_checks();
    if !scheduled.is_empty() {
        summary.note("scheduled", scheduled.join(" "));
    }
    let result = make_catalog_system(&cfg.system.name, &cfg.system.params)
        .map_err(RunError::from)
        .and_then(|spec| {
            let ctx = Ctx { cfg, spec, out, seed };
            match cfg.command {
                Command::Analyze => analyze(&ctx, &mut summary),
                Command::Envelope => envelope(&ctx, &mut summary),
                Command::Riemann => riemann(&ctx, &mut summary),
                Command::BoundaryRiemann => boundary_riemann(&ctx, &mut summary),
                Command::Layer => layer(&ctx, &mut summary),
                Command::Simulate => simulate(&ctx, &mut summary),
                Command::Counterexample => counterexample(&ctx, &mut summary),
                Command::Verify => verify(&ctx, &mut summary),
            }
        });
    match result {
        Ok(()) => {}
        Err(RunError::Lib(e)) => summary.error(cfg.command.name(), &e),
        Err(RunError::Io(e)) => return Err(e),
    }
    summary.write(out)?;
    let code = summary.exit_code();
    Ok((summary, code))
}

fn vec_of(x: &[f64]) -> Vector {
    Vector::from_column_slice(x)
}

fn state(x: &Option<Vec<f64>>) -> Vector {
    vec_of(x.as_deref().unwrap_or_default())
}

fn regime_choice(r: Regime) -> RegimeChoice {
    match r {
        Regime::Auto => RegimeChoice::Auto,
        Regime::Characteristic => RegimeChoice::ForceCharacteristic,
        Regime::NonCharacteristic => RegimeChoice::ForceNonCharacteristic,
    }
}

fn pattern_table(p: &RiemannPattern, n: usize) -> Table {
    let mut header: Vec<String> = ["index", "kind", "family", "speed_from", "speed_to"].map(String::from).to_vec();
    header.extend(columns("u_from", n));
    header.extend(columns("u_to", n));
    let mut t = Table::new(header);
    let mut idx = 0;
    for piece in &p.pieces {
        let (kind, family) = match piece {
            WavePiece::ConstantState(_) => continue,
            WavePiece::Rarefaction { family, .. } => ("rarefaction", Some(*family)),
            WavePiece::Shock { family, .. } => ("shock", Some(*family)),
            WavePiece::BoundaryLayer { .. } => ("boundary_layer", None),
        };
        let (a, b) = piece.speed_range().unwrap_or((0.0, 0.0));
        let (uf, ut) = piece.states().expect("non-constant piece");
        let mut row = vec![
            idx.to_string(),
            kind.to_string(),
            family.map(|f| (f + 1).to_string()).unwrap_or_default(),
            fmt_f(a),
            fmt_f(b),
        ];
        row.extend(uf.iter().chain(ut.iter()).map(|x| fmt_f(*x)));
        t.push(row);
        idx += 1;
    }
    t
}

fn solution_table(p: &RiemannPattern, n: usize, t: f64, xs: impl Iterator<Item = f64>) -> Result<Table, Error> {
    let mut header = vec!["x".to_string()];
    header.extend(columns("u", n));
    let mut tab = Table::new(header);
    for x in xs {
        let u = sample_solution(p, t, x)?;
        tab.push_floats(std::iter::once(x).chain(u.iter().copied()));
    }
    Ok(tab)
}

fn grid(a: f64, b: f64, m: usize) -> impl Iterator<Item = f64> {
    (0..m).map(move |i| a + (b - a) * i as f64 / (m - 1) as f64)
}

fn analyze(c: &Ctx, sum: &mut Summary) -> Res {
    let spec = &c.spec;
    let u = c.cfg.data.u.as_deref().map(vec_of).unwrap_or_else(|| spec.u_base.clone());
    let mut t = Table::new(["kind", "index", "re", "im"]);
    let ea = eig_pencil(spec, &u, Which::EA)?;
    for (i, l) in ea.values.iter().enumerate() {
        t.push(vec!["ea".into(), (i + 1).to_string(), fmt_f(*l), fmt_f(0.0)]);
    }
    if !spec.is_singular() {
        let ba = eig_pencil(spec, &u, Which::BA)?;
        for (i, l) in ba.values.iter().enumerate() {
            t.push(vec!["ba".into(), (i + 1).to_string(), fmt_f(*l), fmt_f(0.0)]);
        }
    }
    match generalized_eigs(spec, &u) {
        Ok(g) => {
            for (i, e) in g.iter().enumerate() {
                t.push(vec!["generalized".into(), (i + 1).to_string(), fmt_f(e.mu.re), fmt_f(e.mu.im)]);
            }
        }
        Err(e) => sum.error("generalized_eigs", &e),
    }
    t.write(c.out, "spectrum.csv")?;

    match check_strict_hyperbolicity(spec, std::slice::from_ref(&u)) {
        Ok(r) => sum.report("strict_hyperbolicity", &r),
        Err(e) => sum.error("strict_hyperbolicity", &e),
    }
    count_invariance_row(spec, &u, "count_invariance", sum);
    stable_dimension_row(spec, &u, "stable_dimension", sum);
    match detect_regime_with(spec, &u, c.cfg.numerics.margin, RegimeChoice::Auto) {
        Ok(r) => sum.note("regime", format!("{r:?}")),
        Err(e) => sum.error("regime", &e),
    }
    Ok(())
}

fn count_invariance_row(spec: &SystemSpec, u: &Vector, name: &str, sum: &mut Summary) {
    if spec.is_singular() {
        sum.add(name, Status::Vacuous, Kind::Hypothesis, None, "singular viscosity");
        return;
    }
    match verify_count_invariance(spec, u) {
        Ok(r) => sum.report(name, &r),
        Err(e) => sum.error(name, &e),
    }
}

fn stable_dimension_row(spec: &SystemSpec, u: &Vector, name: &str, sum: &mut Summary) {
    match stable_dimension_pair(spec, u) {
        Ok((d, formula)) => {
            let status = if d == formula { Status::Pass } else { Status::Fail };
            let f = if formula == usize::MAX { "undefined".to_string() } else { formula.to_string() };
            sum.add(name, status, Kind::Hypothesis, Some(d as f64), format!("generalized count {d}, formula {f}"));
        }
        Err(e) => sum.error(name, &e),
    }
}

/// Second-order finite differences, one-sided at the ends.
fn fd_derivative(values: &[f64], h: f64) -> Vec<f64> {
    let m = values.len();
    if m == 2 {
        let d = (values[1] - values[0]) / h;
        return vec![d, d];
    }
    (0..m)
        .map(|j| match j {
            0 => (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h),
            j if j == m - 1 => (3.0 * values[j] - 4.0 * values[j - 1] + values[j - 2]) / (2.0 * h),
            j => (values[j + 1] - values[j - 1]) / (2.0 * h),
        })
        .collect()
}

fn envelope(c: &Ctx, sum: &mut Summary) -> Res {
    let d = &c.cfg.data;
    let m = d.values.len();
    let h = d.s / (m.max(2) - 1) as f64;
    let deriv = d.derivatives.clone().unwrap_or_else(|| fd_derivative(&d.values, h));
    let lip_k = c.cfg.numerics.lip_k.unwrap_or_else(|| {
        deriv.windows(2).map(|w| (w[1] - w[0]).abs() / h).fold(0.0, f64::max)
    });
    let f = SampledFunction::new(d.s, d.values.clone(), deriv, lip_k)?;
    let r = match d.kind {
        EnvelopeKind::Concave => concave_envelope(&f)?,
        EnvelopeKind::Convex => convex_envelope(&f)?,
        EnvelopeKind::MonotoneConcave => monotone_concave_envelope(&f)?,
        EnvelopeKind::MonotoneConvex => monotone_convex_envelope(&f)?,
    };
    let mut t = Table::new(["tau", "f", "env", "env_deriv", "contact"]);
    for j in 0..m {
        t.push(vec![
            fmt_f(f.tau(j)),
            fmt_f(f.values[j]),
            fmt_f(r.env.values[j]),
            fmt_f(r.env.deriv[j]),
            u8::from(r.contact[j]).to_string(),
        ]);
    }
    t.write(c.out, "envelope.csv")?;
    sum.info("lip_k", lip_k, "");
    sum.info("gaps", r.gaps.len() as f64, "");
    for (i, g) in r.gaps.iter().enumerate() {
        sum.info(format!("gap[{i}]"), g.b - g.a, format!("[{}, {}]", fmt_f(g.a), fmt_f(g.b)));
    }
    if let Some(t0) = r.tau0 {
        sum.info("tau0", t0, "");
    }
    Ok(())
}

fn riemann(c: &Ctx, sum: &mut Summary) -> Res {
    let (ul, ur) = (state(&c.cfg.data.u_left), state(&c.cfg.data.u_right));
    let sol = solve_cauchy_riemann(&c.spec, &ul, &ur)?;
    let n = c.spec.n;
    pattern_table(&sol.pattern, n).write(c.out, "pattern.csv")?;
    let (l, t) = (c.cfg.numerics.domain_length, c.cfg.numerics.t_final);
    solution_table(&sol.pattern, n, t, grid(-l, l, c.cfg.numerics.samples))?.write(c.out, "solution.csv")?;
    for (i, s) in sol.s.iter().enumerate() {
        sum.info(format!("s_{}", i + 1), *s, "");
    }
    sum.info("residual", sol.residual, format!("{} newton iterations", sol.newton_iterations));
    Ok(())
}

fn boundary_cfg(c: &Ctx) -> BoundaryConfig {
    BoundaryConfig {
        margin: c.cfg.numerics.margin,
        regime: regime_choice(c.cfg.numerics.regime),
        ..Default::default()
    }
}

fn boundary_riemann(c: &Ctx, sum: &mut Summary) -> Res {
    let (u0, datum) = (state(&c.cfg.data.u0), state(&c.cfg.data.datum));
    let sol = solve_boundary_riemann_with(&c.spec, &u0, &datum, &boundary_cfg(c))?;
    let n = c.spec.n;
    pattern_table(&sol.pattern, n).write(c.out, "pattern.csv")?;
    let mut t = Table::new(["component", "u0", "trace", "boundary_value"]);
    for i in 0..n {
        t.push(vec![(i + 1).to_string(), fmt_f(u0[i]), fmt_f(sol.trace[i]), fmt_f(sol.boundary_value[i])]);
    }
    t.write(c.out, "trace.csv")?;
    let (l, tf) = (c.cfg.numerics.domain_length, c.cfg.numerics.t_final);
    solution_table(&sol.pattern, n, tf, grid(0.0, l, c.cfg.numerics.samples))?.write(c.out, "solution.csv")?;
    sum.note("regime", format!("{:?}", sol.regime.boundary));
    for (i, s) in sol.s.iter().enumerate() {
        sum.info(format!("s_{}", i + 1), *s, "");
    }
    for i in 0..n {
        sum.info(format!("trace_{}", i + 1), sol.trace[i], "");
    }
    sum.info("residual", sol.residual, format!("{} newton iterations", sol.newton_iters));
    Ok(())
}

fn layer(c: &Ctx, sum: &mut Summary) -> Res {
    let (u0, ub) = (state(&c.cfg.data.u0), state(&c.cfg.data.u_bar));
    let cfg = LayerConfig { samples: c.cfg.numerics.samples, ..Default::default() };
    let p = layer_profile_with(&c.spec, &u0, &ub, c.cfg.numerics.x_max, &cfg)?;
    let mut header = vec!["x".to_string()];
    header.extend(columns("u", c.spec.n));
    let mut t = Table::new(header);
    for (x, u) in p.x.iter().zip(&p.u) {
        t.push_floats(std::iter::once(*x).chain(u.iter().copied()));
    }
    t.write(c.out, "profile.csv")?;
    sum.numeric("converged", p.converged, (p.end() - &p.target).norm(), "distance to u_bar at x_max");
    sum.info("decay_rate", p.decay_rate, "");
    Ok(())
}

fn simulate(c: &Ctx, sum: &mut Summary) -> Res {
    let spec = &c.spec;
    let nm = &c.cfg.numerics;
    let (u0, datum) = (state(&c.cfg.data.u0), state(&c.cfg.data.datum));
    let bd = if datum.len() == spec.n { BoundaryDatum::State(datum.clone()) } else { BoundaryDatum::Reduced(datum.clone()) };
    let limit = solve_boundary_riemann_with(spec, &u0, &datum, &boundary_cfg(c)).map(|s| s.trace);
    match &limit {
        Ok(tr) => {
            for i in 0..spec.n {
                sum.info(format!("limit_trace_{}", i + 1), tr[i], "boundary Riemann solver");
            }
        }
        Err(e) => sum.note("limit_trace", format!("unavailable: {e}")),
    }

    let mut header = vec!["eps".to_string(), "t".into(), "x".into()];
    header.extend(columns("u", spec.n));
    let mut space_time = Table::new(header);
    let mut sweep_header = vec!["eps".to_string()];
    sweep_header.extend(columns("trace", spec.n));
    sweep_header.push("l1_delta".into());
    let mut sweep = Table::new(sweep_header);

    let mut prev: Option<SimResult> = None;
    for &eps in &nm.eps {
        let mut states = vec![u0.clone()];
        if let BoundaryDatum::State(s) = &bd {
            states.push(s.clone());
        }
        let g = SimGrid::new(spec, eps, nm.domain_length, nm.cells, nm.t_final, &states)?;
        let u0c = u0.clone();
        let opts = SimOptions { snapshots: nm.snapshots, ..Default::default() };
        let res = simulate_ibvp(spec, &g, move |_| u0c.clone(), &bd, &opts)?;
        for (t, snap) in res.times.iter().zip(&res.snapshots) {
            for (x, u) in res.x.iter().zip(snap) {
                space_time.push_floats([eps, *t, *x].into_iter().chain(u.iter().copied()));
            }
        }
        let tag = format!("[eps={}]", fmt_f(eps));
        let trace = match estimate_trace(&res, eps, nm.trace_k) {
            Ok(tr) => Some(tr),
            Err(e) => {
                sum.error(format!("trace{tag}"), &e);
                None
            }
        };
        let delta = prev.as_ref().map(|p| p.l1_distance(&res));
        let mut row = vec![fmt_f(eps)];
        match &trace {
            Some(tr) => row.extend(tr.iter().map(|x| fmt_f(*x))),
            None => row.extend(std::iter::repeat_n(String::new(), spec.n)),
        }
        row.push(delta.map(fmt_f).unwrap_or_default());
        sweep.push(row);
        if let Some(tr) = &trace {
            for i in 0..spec.n {
                sum.info(format!("trace_{}{tag}", i + 1), tr[i], "");
            }
            if let Ok(lt) = &limit {
                sum.info(format!("trace_distance{tag}"), (tr - lt).amax(), "max-norm distance to the limit trace");
            }
        }
        if let Some(d) = delta {
            sum.info(format!("l1_delta{tag}"), d, "L1 distance to the previous eps");
        }
        prev = Some(res);
    }
    space_time.write(c.out, "solution.csv")?;
    sweep.write(c.out, "sweep.csv")?;
    Ok(())
}

fn counterexample(c: &Ctx, sum: &mut Summary) -> Res {
    let d = &c.cfg.data;
    let ex = CounterExample::from_name(d.example.as_deref().unwrap_or_default(), d.gamma)?;
    let nodes = c.cfg.numerics.nodes;
    let kink = ex.limit_kink(d.u10);
    sum.info("limit_kink", kink, ex.name());

    let mut profile = Table::new(["nu", "x", "u_1", "limit"]);
    let mut sweep = Table::new(["nu", "sup_error", "kink", "second_difference"]);
    let mut fams = Vec::new();
    for &nu in &c.cfg.numerics.nu {
        let f = counterexample_family_on(ex, nu, d.u10, nodes)?;
        for i in 0..f.x.len() {
            profile.push_floats([nu, f.x[i], f.solution[i], f.closed_form_limit[i]]);
        }
        let d2 = f.second_difference_at(kink);
        sweep.push(vec![fmt_f(nu), fmt_f(f.sup_error), f.kink.map(fmt_f).unwrap_or_default(), fmt_f(d2)]);
        let tag = format!("[nu={}]", fmt_f(nu));
        sum.info(format!("sup_error{tag}"), f.sup_error, "max |u_1 - limit| on the grid");
        if let Some(k) = f.kink {
            sum.info(format!("kink{tag}"), k, "");
        }
        fams.push((d2, f));
    }
    profile.write(c.out, "profile.csv")?;
    sweep.write(c.out, "sweep.csv")?;

    if fams.len() > 1 {
        fams.sort_by(|a, b| a.1.nu.total_cmp(&b.1.nu));
        // smaller nu lies below at every node
        let worst = fams
            .windows(2)
            .flat_map(|w| w[0].1.solution.iter().zip(&w[1].1.solution).map(|(a, b)| a - b))
            .fold(f64::NEG_INFINITY, f64::max);
        sum.numeric("nu_monotonicity", worst <= 1e-9, worst, "max over nodes of u(nu_small) - u(nu_large)");
        let sharpening = fams.windows(2).all(|w| w[0].0.abs() > w[1].0.abs());
        sum.numeric("kink_sharpening", sharpening, fams[0].0.abs(), "second difference at the kink grows as nu decreases");
    }
    Ok(())
}

fn verify(c: &Ctx, sum: &mut Summary) -> Res {
    let spec = &c.spec;
    let nm = &c.cfg.numerics;
    let mut samples: Vec<Vector> = if c.cfg.data.states.is_empty() {
        vec![spec.u_base.clone()]
    } else {
        c.cfg.data.states.iter().map(|s| vec_of(s)).collect()
    };
    if nm.random_states > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let r = 0.9 * spec.delta / (spec.n as f64).sqrt();
        for _ in 0..nm.random_states {
            let v = Vector::from_fn(spec.n, |_, _| rng.gen_range(-1.0..=1.0));
            samples.push(&spec.u_base + v * r);
        }
    }
    let mut st = Table::new(columns("u", spec.n));
    for u in &samples {
        st.push_floats(u.iter().copied());
    }
    st.write(c.out, "states.csv")?;

    match check_strict_hyperbolicity(spec, &samples) {
        Ok(r) => sum.report("strict_hyperbolicity", &r),
        Err(e) => sum.error("strict_hyperbolicity", &e),
    }
    match check_block_linear_degeneracy(spec, nm.sigma, &samples) {
        Ok(r) => sum.report("block_linear_degeneracy", &r),
        Err(e) => sum.error("block_linear_degeneracy", &e),
    }
    for (i, u) in samples.iter().enumerate() {
        let tag = format!("[{i}]");
        match check_kawashima(spec, u) {
            Ok(r) => sum.report(&format!("kawashima{tag}"), &r),
            Err(e) => sum.error(format!("kawashima{tag}"), &e),
        }
        count_invariance_row(spec, u, &format!("count_invariance{tag}"), sum);
        stable_dimension_row(spec, u, &format!("stable_dimension{tag}"), sum);
        let beta = transversal_subspaces(spec, u).and_then(|v| check_beta_transversality(spec, u, &v.v_basis()));
        match beta {
            Ok(r) => sum.report(&format!("beta_transversality{tag}"), &r),
            Err(e) => sum.error(format!("beta_transversality{tag}"), &e),
        }
    }
    Ok(())
}

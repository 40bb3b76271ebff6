use crate::input::{load_algebra, load_element, parse_list};
use crate::output::{element_columns, element_row, is_json, write_csv, write_json, Ctx};
use crate::*;
use anyhow::{bail, Context, Result};
use nalgebra::Complex;
use orbit_core::algebra::Family;
use orbit_core::expansion::{converged_series, residual_slope, ExpansionContext, FMapOptions};
use orbit_core::inequality::{
    chebyshev_check, draw_sample, evaluate_sample, SweepOptions, SweepReport, EQ_TOL, INEQ_TOL,
};
use orbit_core::instanton::{default_ode_options, integrate, integrate_at};
use orbit_core::moment::{descend_to_core, polish_core, DescentOptions, DescentResult};
use orbit_core::sekiguchi::{convergence_probe, deformation_flow, p_core_coords, sekiguchi_partner, Direction};
use orbit_core::sl2kit::{self, SlHom};
use orbit_core::{GVector, RealSemisimpleAlgebra};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub fn run(cli: Cli) -> Result<()> {
    let g = cli.global;
    let ctx = |name: &str| Ctx { command: name.to_string(), seed_rng: g.seed_rng, tol: g.tol };
    let out = g.out.as_deref();
    match cli.command {
        Command::Algebra { action } => match action {
            AlgebraCmd::Init { family, n, p, q, killing_scale } => algebra_init(family, n, p, q, killing_scale, out),
            AlgebraCmd::Inspect(a) => algebra_inspect(&ctx("algebra inspect"), &a, out),
            AlgebraCmd::Check(a) => algebra_check(&ctx("algebra check"), &a, out),
        },
        Command::Core(args) => core(&ctx("core"), &args, out),
        Command::Flow { kind } => match kind {
            FlowCmd::Instanton { target, range, hom } => {
                flow_instanton(&ctx("flow instanton"), &target, &range, hom.as_deref(), out)
            }
            FlowCmd::Gradient { target } => flow_gradient(&ctx("flow gradient"), &target, out),
            FlowCmd::Deform { target, range, probe } => flow_deform(&ctx("flow deform"), &target, &range, probe, out),
        },
        Command::Expand(args) => expand(&ctx("expand"), &args, out),
        Command::Sekiguchi(args) => sekiguchi(&ctx("sekiguchi"), &args, out),
        Command::Verify { check } => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(g.jobs).build()?;
            pool.install(|| match check {
                VerifyCmd::FlowBound { algebra, element, samples, t1, kappa } => {
                    verify_flow_bound(&ctx("verify flow-bound"), &algebra, &element, samples, t1, kappa, out)
                }
                VerifyCmd::Chebyshev { samples, max_l } => {
                    verify_chebyshev(&ctx("verify chebyshev"), samples, max_l, out)
                }
            })
        }
    }
}

// ---- algebra ----

fn algebra_init(
    family: FamilyArg,
    n: Option<usize>,
    p: Option<usize>,
    q: Option<usize>,
    killing_scale: f64,
    out: Option<&Path>,
) -> Result<()> {
    let (fam, a, b) = match family {
        FamilyArg::Sl => (Family::SlR, n.ok_or_else(|| Invalid("--n is required for sl".into()))?, 0),
        FamilyArg::Su | FamilyArg::So => {
            let fam = if matches!(family, FamilyArg::Su) { Family::Su } else { Family::So };
            let p = p.ok_or_else(|| Invalid("--p is required".into()))?;
            (fam, p, q.unwrap_or(0))
        }
    };
    let alg = RealSemisimpleAlgebra::builtin(fam, a, b)?;
    let alg = if killing_scale != 1.0 { alg.with_killing_scale(killing_scale)? } else { alg };
    write_json(out, &alg.to_json())
}

#[derive(Serialize)]
struct Signature {
    negative: usize,
    zero: usize,
    positive: usize,
    min: f64,
    max: f64,
}

fn signature(alg: &RealSemisimpleAlgebra, basis: &nalgebra::DMatrix<f64>, tol: f64) -> Signature {
    if basis.ncols() == 0 {
        return Signature { negative: 0, zero: 0, positive: 0, min: 0.0, max: 0.0 };
    }
    let b = basis.transpose() * alg.raw_killing() * basis;
    let ev = b.symmetric_eigenvalues();
    let scale = ev.amax().max(1.0);
    Signature {
        negative: ev.iter().filter(|&&x| x < -tol * scale).count(),
        zero: ev.iter().filter(|&&x| x.abs() <= tol * scale).count(),
        positive: ev.iter().filter(|&&x| x > tol * scale).count(),
        min: ev.min(),
        max: ev.max(),
    }
}

#[derive(Serialize)]
struct Inspection {
    name: String,
    dim: usize,
    dim_k: usize,
    dim_p: usize,
    basis: Vec<String>,
    killing_scale: f64,
    killing_on_k: Signature,
    killing_on_p: Signature,
}

fn algebra_inspect(ctx: &Ctx, a: &AlgebraRef, out: Option<&Path>) -> Result<()> {
    let alg = load_algebra(&a.algebra, ctx.tol)?;
    let r = Inspection {
        name: alg.name().to_string(),
        dim: alg.dim(),
        dim_k: alg.k_basis().ncols(),
        dim_p: alg.p_basis().ncols(),
        basis: alg.basis_names().to_vec(),
        killing_scale: alg.killing_scale(),
        killing_on_k: signature(&alg, alg.k_basis(), ctx.tol),
        killing_on_p: signature(&alg, alg.p_basis(), ctx.tol),
    };
    write_json(out, &ctx.report(r))
}

#[derive(Serialize)]
struct CheckResult {
    name: String,
    passes: bool,
    invariants: orbit_core::algebra::InvariantReport,
}

fn algebra_check(ctx: &Ctx, a: &AlgebraRef, out: Option<&Path>) -> Result<()> {
    let alg = load_algebra(&a.algebra, ctx.tol)?;
    let inv = alg.check();
    let passes = inv.passes(ctx.tol);
    write_json(out, &ctx.report(CheckResult { name: alg.name().to_string(), passes, invariants: inv }))?;
    if !passes {
        bail!(CheckFailed(format!("algebra {} fails its invariants", a.algebra)));
    }
    Ok(())
}

// ---- shared orbit setup ----

/// Algebra with the Killing form rescaled so that the core of the orbit of x
/// has |m|^2 = 2, plus the descent in that normalization.
struct Prepared {
    alg: RealSemisimpleAlgebra,
    x: GVector,
}

fn prepare(ctx: &Ctx, target: &ElementRef) -> Result<Prepared> {
    let raw = load_algebra(&target.algebra.algebra, ctx.tol)?;
    let x = load_element(&raw, &target.element)?;
    if target.keep_scale {
        return Ok(Prepared { alg: raw, x });
    }
    let d = descend_to_core(&raw, &x, &DescentOptions { record: false, ..DescentOptions::default() })
        .context("normalizing the Killing form")?;
    let factor = d.m_norm_sq / 2.0;
    let alg = if (factor - 1.0).abs() <= 1e-12 { raw } else { raw.with_killing_scale(raw.killing_scale() * factor)? };
    Ok(Prepared { alg, x })
}

/// Strictly normal morphism attached to the orbit of a real nilpotent element.
fn morphism_for(alg: &RealSemisimpleAlgebra, e: &GVector) -> Result<SlHom> {
    if !e.is_real(1e-12) {
        bail!(Invalid("the element must be real".into()));
    }
    let d = descend_to_core(alg, e, &DescentOptions { record: false, ..DescentOptions::default() })?;
    let core = polish_core(alg, &d.core, 1e-13, 30)?;
    let t = sl2kit::strictly_normal_from_critical(alg, &core.real_part(), 1e-8)?;
    Ok(t.to_hom(alg))
}

fn descent_rows(d: &DescentResult) -> Vec<Vec<f64>> {
    d.trajectory
        .iter()
        .map(|s| {
            let mut row = vec![s.t, s.m_norm_sq, s.a];
            row.extend(element_row(&s.zeta));
            row
        })
        .collect()
}

fn descent_header(alg: &RealSemisimpleAlgebra) -> Vec<String> {
    let mut h = vec!["t".to_string(), "m_norm_sq".into(), "a".into()];
    h.extend(element_columns("", alg.basis_names()));
    h
}

// ---- core ----

#[derive(Serialize)]
struct CoreResult {
    killing_scale: f64,
    core: GVector,
    m_norm_sq: f64,
    a: f64,
    steps: usize,
    t_final: f64,
    max_increase: f64,
    nilpotency_residual: f64,
}

fn core(ctx: &Ctx, args: &CoreArgs, out: Option<&Path>) -> Result<()> {
    let p = prepare(ctx, &args.target)?;
    let d = descend_to_core(&p.alg, &p.x, &DescentOptions::default())?;
    let r = CoreResult {
        killing_scale: p.alg.killing_scale(),
        core: d.core.clone(),
        m_norm_sq: d.m_norm_sq,
        a: d.a,
        steps: d.steps,
        t_final: d.t_final,
        max_increase: d.max_increase,
        nilpotency_residual: p.alg.nilpotency_residual(&d.core),
    };
    write_json(out, &ctx.report(r))?;
    let traj = args.trajectory.clone().or_else(|| out.map(|o| o.with_extension("csv")));
    if let Some(path) = traj {
        write_csv(Some(&path), &descent_header(&p.alg), &descent_rows(&d))?;
    }
    Ok(())
}

// ---- flows ----

fn grid(r: &Range) -> Result<Vec<f64>> {
    if !r.t0.is_finite() || !r.t1.is_finite() {
        bail!(Invalid("times must be finite".into()));
    }
    let n = r.samples.max(2);
    Ok((0..n).map(|j| r.t0 + (r.t1 - r.t0) * j as f64 / (n - 1) as f64).collect())
}

#[derive(Deserialize)]
struct HomFile {
    e: GVector,
    f: GVector,
    h: GVector,
}

fn write_table<T: Serialize>(ctx: &Ctx, out: Option<&Path>, header: Vec<String>, rows: Vec<Vec<f64>>, meta: T) -> Result<()> {
    if is_json(out) {
        #[derive(Serialize)]
        struct Table<T> {
            meta: T,
            columns: Vec<String>,
            rows: Vec<Vec<f64>>,
        }
        write_json(out, &ctx.report(Table { meta, columns: header, rows }))
    } else {
        write_csv(out, &header, &rows)
    }
}

fn flow_instanton(ctx: &Ctx, target: &ElementRef, range: &Range, hom: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let p = prepare(ctx, target)?;
    let (start, exact) = match hom {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let h: HomFile = serde_json::from_str(&text).map_err(|e| Invalid(format!("{}: {e}", path.display())))?;
            for v in [&h.e, &h.f, &h.h] {
                p.alg.ensure_dim(v)?;
            }
            (SlHom::with_flags(&p.alg, h.e, h.f, h.h), false)
        }
        None => (morphism_for(&p.alg, &p.x)?, true),
    };
    let opts = default_ode_options();
    let traj = if range.samples == 0 {
        integrate(&p.alg, &start, range.t0, range.t1, &opts)?
    } else {
        let times = grid(range)?;
        integrate_at(&p.alg, &start, range.t0, &times, &opts)?
    };
    let mut header = vec!["t".to_string(), "norm".into()];
    if exact {
        header.push("exact_error".into());
    }
    for slot in ["e.", "f.", "h."] {
        header.extend(element_columns(slot, p.alg.basis_names()));
    }
    let rows = traj
        .csv_rows()
        .into_iter()
        .zip(&traj.values)
        .map(|(row, v)| {
            let t = row[0];
            let mut r = vec![t, v.norm(&p.alg)];
            if exact {
                r.push(v.sub(&start.scale(1.0 / (1.0 + t - range.t0))).amax());
            }
            r.extend_from_slice(&row[1..]);
            r
        })
        .collect();
    write_table(ctx, out, header, rows, traj.meta)
}

fn flow_gradient(ctx: &Ctx, target: &ElementRef, out: Option<&Path>) -> Result<()> {
    let p = prepare(ctx, target)?;
    let d = descend_to_core(&p.alg, &p.x, &DescentOptions::default())?;
    #[derive(Serialize)]
    struct Meta {
        killing_scale: f64,
        steps: usize,
        max_increase: f64,
    }
    let meta = Meta { killing_scale: p.alg.killing_scale(), steps: d.steps, max_increase: d.max_increase };
    write_table(ctx, out, descent_header(&p.alg), descent_rows(&d), meta)
}

fn flow_deform(ctx: &Ctx, target: &ElementRef, range: &Range, probe: bool, out: Option<&Path>) -> Result<()> {
    let p = prepare(ctx, target)?;
    let times = grid(range)?;
    let basis = p.alg.basis_names();
    if probe {
        if times.iter().any(|&t| t < 0.0) {
            bail!(Invalid("probe times must be >= 0".into()));
        }
        let phi0 = morphism_for(&p.alg, &p.x)?;
        let rows = convergence_probe(&p.alg, &phi0, &times)?;
        let i = Complex::new(0.0, 1.0);
        let base = phi0.eval([i, i, Complex::new(1.0, 0.0)]);
        let mut header = vec!["t".to_string(), "s".into(), "distance".into(), "slope".into()];
        header.extend(element_columns("", basis));
        let mut table = Vec::new();
        for r in rows {
            let v = deformation_flow(&p.alg, &base.scale(r.s), r.t)?;
            let mut row = vec![r.t, r.s, r.distance, r.slope];
            row.extend(element_row(&v));
            table.push(row);
        }
        write_table(ctx, out, header, table, serde_json::json!({ "phi0": phi0 }))
    } else {
        let mut header = vec!["t".to_string()];
        header.extend(element_columns("", basis));
        let mut table = Vec::new();
        for &t in &times {
            let v = deformation_flow(&p.alg, &p.x, t)?;
            let mut row = vec![t];
            row.extend(element_row(&v));
            table.push(row);
        }
        write_table(ctx, out, header, table, serde_json::json!({ "start": p.x }))
    }
}

// ---- expand ----

#[derive(Serialize)]
struct ExpandResult {
    killing_scale: f64,
    normal_orders: Vec<usize>,
    coords: Vec<f64>,
    root_estimate: f64,
    slope: orbit_core::expansion::SlopeReport,
    coefficient_norms: Vec<f64>,
    series: orbit_core::expansion::ExpansionSeries,
    f_map: Option<GVector>,
}

fn expand(ctx: &Ctx, args: &ExpandArgs, out: Option<&Path>) -> Result<()> {
    let p = prepare(ctx, &args.target)?;
    let phi0 = morphism_for(&p.alg, &p.x)?;
    let c = ExpansionContext::new(&p.alg, &phi0)?;
    let coords = match &args.coords {
        Some(s) => parse_list(s)?,
        None => (0..c.normal.len()).map(|j| 0.1 * (-0.6f64).powi(j as i32)).collect(),
    };
    if coords.len() != c.normal.len() {
        bail!(Invalid(format!("expected {} coordinates, got {}", c.normal.len(), coords.len())));
    }
    if !(args.t0 > 0.0 && args.t1 > args.t0) || args.samples < 2 {
        bail!(Invalid("need 0 < t0 < t1 and at least 2 samples".into()));
    }
    let free = c.free_from_coords(&coords);
    let series = c.build(&free, args.order)?;
    let slope = residual_slope(&p.alg, &series, args.t0, args.t1, args.samples);
    let f_map = if args.fmap { Some(converged_series(&c, &free, &FMapOptions::default())?.evaluate(1.0).e) } else { None };
    let r = ExpandResult {
        killing_scale: p.alg.killing_scale(),
        normal_orders: c.normal.iter().map(|d| d.r).collect(),
        coords,
        root_estimate: series.root_estimate(&p.alg),
        slope,
        coefficient_norms: series.coeffs.iter().map(|x| x.norm(&p.alg)).collect(),
        series,
        f_map,
    };
    write_json(out, &ctx.report(r))
}

// ---- sekiguchi ----

fn sekiguchi(ctx: &Ctx, args: &SekiguchiArgs, out: Option<&Path>) -> Result<()> {
    let p = prepare(ctx, &args.target)?;
    let scale = 1e-9 * (1.0 + p.x.amax());
    let direction = match args.direction {
        DirectionArg::PToGr => Direction::PToGr,
        DirectionArg::GrToP => Direction::GrToP,
        DirectionArg::Auto if p.x.re.amax() <= scale => Direction::GrToP,
        DirectionArg::Auto if p.alg.is_in_p(&p.x, scale) => Direction::PToGr,
        DirectionArg::Auto => bail!(Invalid("element is neither in p nor in i g_R".into())),
    };
    let partner = sekiguchi_partner(&p.alg, &p.x, direction)?;
    #[derive(Serialize)]
    struct Out {
        killing_scale: f64,
        direction: Direction,
        partner: orbit_core::sekiguchi::Partner,
    }
    write_json(out, &ctx.report(Out { killing_scale: p.alg.killing_scale(), direction, partner }))
}

// ---- verify ----

fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index as u64);
    r
}

/// Principal and minimal nilpotents of sl(n, R) from the algebra name.
fn default_elements(alg: &RealSemisimpleAlgebra) -> Option<Vec<GVector>> {
    let n: usize = alg.name().strip_prefix("sl(")?.strip_suffix(",R)")?.parse().ok()?;
    let mut parts = vec![vec![n]];
    if n > 2 {
        let mut min = vec![2];
        min.extend(std::iter::repeat_n(1, n - 2));
        parts.push(min);
    }
    parts.iter().map(|p| sl2kit::sl_partition_triple(n, p).ok().map(|t| t.e)).collect()
}

#[derive(Serialize)]
struct FlowBoundResult {
    holds: bool,
    orbits: usize,
    killing_scale: f64,
    t_max: f64,
    kappa: f64,
    ineq_tol: f64,
    eq_tol: f64,
    report: SweepReport,
}

fn verify_flow_bound(
    ctx: &Ctx,
    algebra: &AlgebraRef,
    elements: &[String],
    samples: usize,
    t_max: f64,
    kappa: f64,
    out: Option<&Path>,
) -> Result<()> {
    if !(t_max >= 0.0 && t_max.is_finite()) || !(kappa > 0.0) {
        bail!(Invalid("need t1 >= 0 and kappa > 0".into()));
    }
    let raw = load_algebra(&algebra.algebra, ctx.tol)?;
    let nilpotents = if elements.is_empty() {
        default_elements(&raw).ok_or_else(|| Invalid("--element is required for this algebra".into()))?
    } else {
        elements.iter().map(|e| load_element(&raw, e)).collect::<Result<_>>()?
    };
    let alg = sl2kit::normalized_for_element(&raw, &nilpotents[0])?;
    let seeds: Vec<GVector> = nilpotents
        .iter()
        .map(|e| morphism_for(&alg, e).map(|phi| phi.eval(p_core_coords())))
        .collect::<Result<_>>()?;
    let opts = SweepOptions { samples, t_max, kappa };
    let start = std::time::Instant::now();
    let outcomes: Vec<_> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(ctx.seed_rng, i);
            let (z, t) = draw_sample(&alg, &seeds, i, &opts, &mut rng)?;
            let o = evaluate_sample(&alg, &z, t)?;
            Ok::<_, orbit_core::OrbitError>((z, t, o))
        })
        .collect();
    let mut report = SweepReport::empty();
    for (i, o) in outcomes.into_iter().enumerate() {
        let (z, t, o) = o?;
        report.record(i, t, &z, &o);
    }
    report.wall_time_s = start.elapsed().as_secs_f64();
    let holds = report.failures == 0 && report.disagreements == 0 && report.t0_gap <= EQ_TOL;
    let r = FlowBoundResult {
        holds,
        orbits: seeds.len(),
        killing_scale: alg.killing_scale(),
        t_max,
        kappa,
        ineq_tol: INEQ_TOL,
        eq_tol: EQ_TOL,
        report,
    };
    write_json(out, &ctx.report(&r))?;
    if !holds {
        bail!(CheckFailed(format!(
            "flow bound: {} failures, {} disagreements, t = 0 gap {:.3e}",
            r.report.failures, r.report.disagreements, r.report.t0_gap
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct ChebyshevResult {
    holds: bool,
    samples: usize,
    max_l: usize,
    failures: usize,
    /// Smallest (lhs - rhs) / max(|lhs|, 1) over the sweep.
    min_margin: f64,
    single_pair_equality: bool,
}

/// Random symmetric mass vector with total mass in (0, 1].
fn mass_vector<R: Rng>(rng: &mut R) -> Vec<(f64, f64)> {
    let n = rng.gen_range(1..5);
    let total = rng.gen_range(0.01..=1.0);
    let mut w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x *= total / (2.0 * sum));
    let mut pairs = Vec::with_capacity(2 * n);
    for x in w {
        let l = rng.gen_range(0.05..4.0);
        pairs.push((l, x));
        pairs.push((-l, x));
    }
    pairs
}

fn verify_chebyshev(ctx: &Ctx, samples: usize, max_l: usize, out: Option<&Path>) -> Result<()> {
    let checks: Vec<_> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(ctx.seed_rng, i);
            let pairs = mass_vector(&mut rng);
            let l = rng.gen_range(0..=max_l);
            chebyshev_check(&pairs, l)
        })
        .collect::<std::result::Result<_, _>>()?;
    let failures = checks.iter().filter(|c| !c.holds).count();
    let min_margin = checks.iter().map(|c| (c.lhs - c.rhs) / c.lhs.abs().max(1.0)).fold(f64::INFINITY, f64::min);
    let mut single_pair_equality = true;
    for l in 0..=max_l {
        let c = chebyshev_check(&[(-1.7, 0.5), (1.7, 0.5)], l)?;
        single_pair_equality &= c.holds && c.equality;
    }
    let holds = failures == 0 && single_pair_equality;
    let r = ChebyshevResult { holds, samples, max_l, failures, min_margin, single_pair_equality };
    write_json(out, &ctx.report(&r))?;
    if !holds {
        bail!(CheckFailed(format!("chebyshev: {failures} failures, single-pair equality {single_pair_equality}")));
    }
    Ok(())
}

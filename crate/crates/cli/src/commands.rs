use std::fmt::Write as _;
use std::path::Path;

use lagraph::graph::Chain1;
use lagraph::model::{FieldConfig, LagrangianSystem, TangentField};
use lagraph::scatter::{verify_unitarity, ScatterError, ScatterProblem};
use lagraph::symform::{
    assemble_omega, boundary_omega, check_closedness, omega_on_tangents, tangent_solutions,
    ClosednessMode, Support,
};
use lagraph::sysfile::{parse_system, write_system};
use lagraph::treeform::{normalize as to_tree_form, TreeLikeSystem};
use lagraph::variational::{el_residual, solve_newton, NewtonOptions, VariationalError};
use lagraph::wronskian::{nn_wronskian, wronskian as wronskian_chain, WronskianError};

use crate::report::{Recorder, Status};
use crate::{CheckKind, Mode};

type Outcome = Result<Recorder, String>;

/// Relative singular-value cutoff for tangent solutions.
const KERNEL_TOL: f64 = 1e-8;
const NEWTON_TOL: f64 = 1e-10;

fn load(path: &Path, allow_ends: bool) -> Result<(Vec<u8>, LagrangianSystem), String> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| format!("{}: {e}", path.display()))?;
    let sys = parse_system(text, allow_ends).map_err(|e| format!("{}: {e}", path.display()))?;
    for w in &sys.warnings {
        eprintln!("warning: {w}");
    }
    Ok((bytes, sys))
}

fn pick_config(sys: &LagrangianSystem, name: Option<&str>) -> Result<FieldConfig, String> {
    match name {
        Some(n) => sys
            .config(n)
            .cloned()
            .ok_or_else(|| format!("no config named `{n}`")),
        None => Ok(sys
            .configs
            .first()
            .map(|(_, c)| c.clone())
            .unwrap_or_else(|| sys.zero_config())),
    }
}

fn tree_form(sys: &LagrangianSystem) -> Result<TreeLikeSystem<'_>, String> {
    to_tree_form(sys).map_err(|e| e.to_string())
}

fn config_section(sys: &LagrangianSystem, name: &str, cfg: &FieldConfig) -> String {
    let mut out = format!("[config {name}]\n");
    for v in 0..sys.graph.vertex_count() {
        let vals: Vec<String> = cfg.at(&sys.layout, v).iter().map(|x| format!("{x:?}")).collect();
        let _ = writeln!(out, "{} = {}", sys.graph.vertex_name(v), vals.join(" "));
    }
    for (&t, vals) in &cfg.tail_sites {
        let vals: Vec<String> = vals.iter().map(|x| format!("{x:?}")).collect();
        let _ = writeln!(out, "{} = {}", sys.graph.tails()[t].name, vals.join(" "));
    }
    out
}

fn support_label(sys: &LagrangianSystem, s: Support) -> String {
    let g = &sys.graph;
    match s {
        Support::Edge(e) => {
            let (a, b) = g.edge(e);
            format!("edge {}->{}", g.vertex_name(a), g.vertex_name(b))
        }
        Support::Tail(t) => format!("tail {}", g.tails()[t].name),
    }
}

fn chain_lines(sys: &LagrangianSystem, c: &Chain1) -> String {
    let mut out = String::new();
    for (&e, &x) in c.core() {
        let _ = writeln!(out, "  {:<24} {x:+.12e}", support_label(sys, Support::Edge(e)));
    }
    for (&t, &x) in c.tail_map() {
        let _ = writeln!(out, "  {:<24} {x:+.12e}", support_label(sys, Support::Tail(t)));
    }
    out
}

pub fn validate(path: &Path, allow_ends: bool) -> Outcome {
    let (bytes, sys) = load(path, allow_ends)?;
    let mut rec = Recorder::new("validate", &bytes);
    let g = &sys.graph;
    eprintln!(
        "{} vertices, {} edges, {} tails, {} terms, {} configs",
        g.vertex_count(),
        g.edge_count(),
        g.tail_count(),
        sys.terms.len(),
        sys.configs.len()
    );
    let connected = g.is_connected();
    rec.push(
        "connected",
        if connected { Status::Pass } else { Status::Fail },
        Some(if connected { 1.0 } else { 0.0 }),
        None,
    );
    match sys.locality_bound() {
        Ok(m) => rec.push("locality", Status::Pass, Some(m as f64), None),
        Err(e) => {
            eprintln!("locality: {e}");
            rec.push("locality", Status::Fail, None, None);
        }
    }
    rec.push("ends", Status::Pass, Some(g.ends().len() as f64), None);
    Ok(rec)
}

pub fn normalize(path: &Path, allow_ends: bool, output: Option<&Path>) -> Outcome {
    let (bytes, sys) = load(path, allow_ends)?;
    let tsys = tree_form(&sys)?;
    let mut rec = Recorder::new("normalize", &bytes);
    let g = &sys.graph;
    let non_tree = tsys.terms.iter().filter(|t| !t.is_tree).count();
    rec.bound("tree_like", non_tree as f64, 0.0);
    let mut worst = 1.0_f64;
    let mut equal = 0;
    for t in &tsys.terms {
        let d = g.set_diameter(&sys.terms[t.term].vertices).map_err(|e| e.to_string())?;
        let d2 = g.set_diameter(&t.support).map_err(|e| e.to_string())?;
        if d == d2 {
            equal += 1;
        }
        if d > 0 {
            worst = worst.max(d2 as f64 / d as f64);
        }
    }
    rec.bound("diameter_ratio", worst, 2.0);
    eprintln!("diameter preserved in {equal} of {} terms", tsys.terms.len());
    let text = write_system(&sys, Some(&tsys.annotations()));
    match output {
        Some(out) => std::fs::write(out, text).map_err(|e| format!("{}: {e}", out.display()))?,
        None => eprint!("{text}"),
    }
    Ok(rec)
}

pub fn solve(
    path: &Path,
    allow_ends: bool,
    config: Option<&str>,
    tol: f64,
    max_iter: usize,
    ridge: Option<f64>,
) -> Outcome {
    if !(tol > 0.0) {
        return Err("--tol must be positive".into());
    }
    let (bytes, sys) = load(path, allow_ends)?;
    let init = pick_config(&sys, config)?;
    let mut rec = Recorder::new("solve", &bytes);
    let opts = NewtonOptions { tol, max_iter, ridge };
    match solve_newton(&sys, &init, &opts) {
        Ok(out) => {
            let r = el_residual(&sys, &out.config).map_err(|e| e.to_string())?;
            rec.bound("newton", r.norm_inf(), tol);
            rec.push("iterations", Status::Pass, Some(out.iterations as f64), Some(max_iter as f64));
            let hist: Vec<String> = out.residuals.iter().map(|r| format!("{r:.3e}")).collect();
            eprintln!("residuals: {}", hist.join(" "));
            eprint!("{}", config_section(&sys, "solved", &out.config));
        }
        Err(VariationalError::NoConvergence { residual, best, iterations }) => {
            eprintln!("no convergence after {iterations} iterations; consider damping or a better start");
            rec.push("newton", Status::Fail, Some(residual), Some(tol));
            eprint!("{}", config_section(&sys, "best", &best));
        }
        Err(e @ VariationalError::SingularJacobian { .. }) => {
            eprintln!("{e}");
            rec.push("newton", Status::Fail, None, Some(tol));
        }
        Err(e) => return Err(e.to_string()),
    }
    Ok(rec)
}

pub struct VerifyOptions {
    pub checks: Vec<CheckKind>,
    pub mode: Mode,
    pub fd_step: f64,
    pub tol: f64,
    pub config: Option<String>,
    pub ridge: Option<f64>,
}

/// Newton solution and its tangent solutions, shared by the cycle checks.
struct OnShell {
    config: FieldConfig,
    tangents: Vec<TangentField>,
}

fn on_shell(sys: &LagrangianSystem, init: &FieldConfig, ridge: Option<f64>) -> Result<OnShell, String> {
    let opts = NewtonOptions {
        tol: NEWTON_TOL,
        max_iter: 50,
        ridge,
    };
    let out = solve_newton(sys, init, &opts).map_err(|e| e.to_string())?;
    let tangents = tangent_solutions(sys, &out.config, KERNEL_TOL).map_err(|e| e.to_string())?;
    eprintln!(
        "solution after {} Newton steps, {} tangent solutions",
        out.iterations,
        tangents.len()
    );
    Ok(OnShell {
        config: out.config,
        tangents,
    })
}

pub fn verify(path: &Path, allow_ends: bool, opts: &VerifyOptions) -> Outcome {
    if !(opts.tol > 0.0 && opts.fd_step > 0.0) {
        return Err("--tol and --fd-step must be positive".into());
    }
    let (bytes, sys) = load(path, allow_ends)?;
    let cfg = pick_config(&sys, opts.config.as_deref())?;
    let tsys = tree_form(&sys)?;
    let mut rec = Recorder::new("verify", &bytes);
    let mut shell: Option<Result<OnShell, String>> = None;
    let mut seen = Vec::new();
    for &check in &opts.checks {
        if seen.contains(&check) {
            continue;
        }
        seen.push(check);
        match check {
            CheckKind::Closed => {
                let mode = match opts.mode {
                    Mode::Analytic => ClosednessMode::Analytic,
                    Mode::Fd => ClosednessMode::FiniteDifference { step: opts.fd_step },
                };
                let r = check_closedness(&tsys, &cfg, mode).map_err(|e| e.to_string())?;
                rec.bound("closed", r.max(), opts.tol);
                if let Some((s, x)) = r.worst() {
                    eprintln!("largest |dB| = {x:.3e} on {}", support_label(&sys, s));
                }
                if opts.mode == Mode::Analytic {
                    let zero = r.symbolic_zero();
                    rec.push(
                        "closed_symbolic",
                        if zero { Status::Pass } else { Status::Fail },
                        None,
                        None,
                    );
                    for e in r.entries.iter().filter(|e| !e.expr.is_zero()) {
                        let [a, b, c] = e.coords.map(|p| {
                            let (v, i) = sys.layout.vertex_of(p);
                            format!("x({},{i})", sys.graph.vertex_name(v))
                        });
                        eprintln!(
                            "  dB on {} ({a}, {b}, {c}) = {} = {:.6}",
                            support_label(&sys, e.support),
                            e.expr,
                            e.value
                        );
                    }
                }
            }
            CheckKind::Boundary => {
                let form = assemble_omega(&tsys, &cfg).map_err(|e| e.to_string())?;
                let bf = boundary_omega(&form, &tsys, &cfg).map_err(|e| e.to_string())?;
                rec.bound("boundary_identity", bf.defect(), opts.tol);
                let s = shell.get_or_insert_with(|| on_shell(&sys, &cfg, opts.ridge));
                match s {
                    Err(msg) => {
                        eprintln!("boundary_cycle: {msg}");
                        rec.push("boundary_cycle", Status::Fail, None, Some(opts.tol));
                    }
                    Ok(sh) if sh.tangents.len() < 2 => {
                        rec.push("boundary_cycle", Status::Skip, None, Some(opts.tol));
                    }
                    Ok(sh) => {
                        let form = assemble_omega(&tsys, &sh.config).map_err(|e| e.to_string())?;
                        let bf = boundary_omega(&form, &tsys, &sh.config).map_err(|e| e.to_string())?;
                        let mut worst = 0.0_f64;
                        for (i, u) in sh.tangents.iter().enumerate() {
                            for v in &sh.tangents[i + 1..] {
                                worst = worst.max(bf.max_on(u, v));
                            }
                        }
                        rec.bound("boundary_cycle", worst, opts.tol);
                    }
                }
            }
            CheckKind::Homology => {
                let s = shell.get_or_insert_with(|| on_shell(&sys, &cfg, opts.ridge));
                match s {
                    Err(msg) => {
                        eprintln!("homology: {msg}");
                        rec.push("homology", Status::Fail, None, Some(opts.tol));
                    }
                    Ok(sh) if sh.tangents.len() < 2 => {
                        rec.push("homology", Status::Skip, None, Some(opts.tol));
                    }
                    Ok(sh) => {
                        let form = assemble_omega(&tsys, &sh.config).map_err(|e| e.to_string())?;
                        let basis = sys.graph.cycle_basis().map_err(|e| e.to_string())?;
                        eprintln!("open homology dimension {}", basis.len());
                        let mut worst = 0.0_f64;
                        for (i, u) in sh.tangents.iter().enumerate() {
                            for (j, v) in sh.tangents.iter().enumerate().skip(i + 1) {
                                let c = omega_on_tangents(&form, u, v);
                                worst = worst.max(sys.graph.boundary(&c).norm_inf());
                                match sys.graph.cycle_coordinates(&basis, &c, opts.tol) {
                                    Ok(x) => eprintln!("  class of (t{i}, t{j}): {x:?}"),
                                    Err(e) => eprintln!("  (t{i}, t{j}): {e}"),
                                }
                            }
                        }
                        rec.bound("homology", worst, opts.tol);
                    }
                }
            }
        }
    }
    Ok(rec)
}

pub fn wronskian(path: &Path, allow_ends: bool, config: &str, tol: f64) -> Outcome {
    let (bytes, sys) = load(path, allow_ends)?;
    let psi = pick_config(&sys, Some(config))?;
    let tsys = tree_form(&sys)?;
    let mut rec = Recorder::new("wronskian", &bytes);
    let r = el_residual(&sys, &psi).map_err(|e| e.to_string())?;
    rec.bound("el_residual", r.norm_inf(), tol);
    let tangents = tangent_solutions(&sys, &psi, KERNEL_TOL).map_err(|e| e.to_string())?;
    eprintln!("{} tangent solutions", tangents.len());
    if tangents.len() < 2 {
        for name in ["antisymmetry", "cycle", "nn_identity"] {
            rec.push(name, Status::Skip, None, None);
        }
        return Ok(rec);
    }
    let mut antisym = 0.0_f64;
    let mut cycle = 0.0_f64;
    let mut nn: Option<f64> = Some(0.0);
    for (i, u) in tangents.iter().enumerate() {
        for (j, v) in tangents.iter().enumerate().skip(i + 1) {
            let w = wronskian_chain(&tsys, &psi, u, v).map_err(|e| e.to_string())?;
            let back = wronskian_chain(&tsys, &psi, v, u).map_err(|e| e.to_string())?;
            antisym = antisym.max(w.add(&back).norm_inf());
            cycle = cycle.max(sys.graph.boundary(&w).norm_inf());
            eprintln!("W(t{i}, t{j}):");
            eprint!("{}", chain_lines(&sys, &w));
            for e in 0..sys.graph.edge_count() {
                match nn_wronskian(&tsys, &psi, u, v, e) {
                    Ok(x) => {
                        if let Some(m) = nn.as_mut() {
                            *m = m.max((x - w.coefficient(e)).abs());
                        }
                    }
                    Err(WronskianError::NotNearestNeighbor(_)) => nn = None,
                    Err(e) => return Err(e.to_string()),
                }
            }
        }
    }
    rec.bound("antisymmetry", antisym, 0.0);
    rec.bound("cycle", cycle, tol);
    match nn {
        Some(x) => rec.bound("nn_identity", x, 0.0),
        None => rec.push("nn_identity", Status::Skip, None, None),
    }
    Ok(rec)
}

pub fn scatter(path: &Path, allow_ends: bool, k: f64, tol: f64) -> Outcome {
    let (bytes, sys) = load(path, allow_ends)?;
    let p = ScatterProblem::from_system(&sys).map_err(|e| e.to_string())?;
    let mut rec = Recorder::new("scatter", &bytes);
    match verify_unitarity(&p, k, tol) {
        Ok(r) => {
            let sm = &r.smatrix;
            if let Some(w) = &sm.warning {
                eprintln!("warning: {w}");
            }
            let tails = p.graph.tails();
            eprintln!("S at k = {k} (row: outgoing, column: incoming)");
            for b in 0..tails.len() {
                let row: Vec<String> = (0..tails.len())
                    .map(|a| {
                        let z = sm.s[(b, a)];
                        format!("{:+.12} {:+.12}i", z.re, z.im)
                    })
                    .collect();
                eprintln!("  {:<8} {}", tails[b].name, row.join("   "));
            }
            rec.bound("unitarity", r.unitarity_defect, tol);
            rec.bound("wronskian_flux", r.flux_balance.max(r.flux_drift), tol);
            rec.bound("reciprocity", r.reciprocity_defect, tol);
        }
        Err(e @ ScatterError::SingularSystem { .. }) => {
            eprintln!("{e}");
            rec.push("unitarity", Status::Fail, None, Some(tol));
        }
        Err(e) => return Err(e.to_string()),
    }
    Ok(rec)
}

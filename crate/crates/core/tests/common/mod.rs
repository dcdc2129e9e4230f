//! Seeded generators for random local systems.
#![allow(dead_code)]

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::PathBuf;

use lagraph::model::{FieldConfig, LagrangianSystem};
use lagraph::sysfile::parse_system;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

pub fn fixture_names() -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(fixture(""))
        .expect("fixtures directory")
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".sys"))
        .collect();
    names.sort();
    names
}

#[derive(Debug, Clone, Copy)]
pub struct GenOptions {
    pub min_vertices: usize,
    pub max_vertices: usize,
    pub max_dim: usize,
    pub max_terms: usize,
    /// Largest distance from a term's anchor vertex to its other members.
    pub radius: usize,
    pub max_body: usize,
    pub pairwise_only: bool,
    pub trig: bool,
    /// Probability of an extra edge per vertex beyond the spanning tree.
    pub extra_edges: f64,
}

impl Default for GenOptions {
    fn default() -> Self {
        Self {
            min_vertices: 3,
            max_vertices: 12,
            max_dim: 3,
            max_terms: 8,
            radius: 2,
            max_body: 3,
            pairwise_only: false,
            trig: true,
            extra_edges: 0.4,
        }
    }
}

/// Connected graph: a random spanning tree plus optional chords, random orientations.
pub fn random_edges(rng: &mut ChaCha8Rng, n: usize, extra: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    let has = |edges: &[(usize, usize)], a: usize, b: usize| {
        edges.iter().any(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a))
    };
    for i in 1..n {
        let j = rng.gen_range(0..i);
        edges.push(if rng.gen_bool(0.5) { (i, j) } else { (j, i) });
    }
    for _ in 0..n {
        if n > 2 && rng.gen_bool(extra) {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if a != b && !has(&edges, a, b) {
                edges.push((a, b));
            }
        }
    }
    edges
}

fn within(n: usize, edges: &[(usize, usize)], root: usize, radius: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; n];
    dist[root] = 0;
    let mut q = VecDeque::from([root]);
    while let Some(v) = q.pop_front() {
        for &(a, b) in edges {
            let w = if a == v {
                b
            } else if b == v {
                a
            } else {
                continue;
            };
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                q.push_back(w);
            }
        }
    }
    (0..n).filter(|&v| dist[v] <= radius).collect()
}

fn coef(rng: &mut ChaCha8Rng) -> String {
    let c: f64 = rng.gen_range(0.1..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    format!("{c:.3}")
}

/// Polynomial of degree ≤ 4 in `vars`, optionally with a sine or cosine term.
pub fn random_potential(rng: &mut ChaCha8Rng, vars: &[String], trig: bool) -> String {
    let mut parts = Vec::new();
    for _ in 0..rng.gen_range(1..=3) {
        let degree = rng.gen_range(1..=4);
        let mut factors: Vec<String> = (0..degree)
            .map(|_| vars.choose(rng).unwrap().clone())
            .collect();
        // make most monomials couple several variables
        if vars.len() > 1 && degree < 4 && rng.gen_bool(0.6) {
            factors.push(vars[rng.gen_range(0..vars.len())].clone());
        }
        parts.push(format!("{}*{}", coef(rng), factors.join("*")));
    }
    if trig && rng.gen_bool(0.6) {
        let a = vars.choose(rng).unwrap();
        let b = vars.choose(rng).unwrap();
        let f = if rng.gen_bool(0.5) { "sin" } else { "cos" };
        let inner = if rng.gen_bool(0.5) {
            format!("{a}-{b}")
        } else {
            format!("{a}*{b}")
        };
        parts.push(format!("{}*{f}({inner})", coef(rng)));
    }
    parts.join(" + ")
}

pub fn random_system_text(rng: &mut ChaCha8Rng, opts: &GenOptions) -> String {
    let n = rng.gen_range(opts.min_vertices..=opts.max_vertices);
    let edges = random_edges(rng, n, opts.extra_edges);
    let dims: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=opts.max_dim)).collect();
    let mut s = String::from("[graph]\n");
    for (v, d) in dims.iter().enumerate() {
        let _ = writeln!(s, "vertex v{v} fiber=R{d}");
    }
    for &(a, b) in &edges {
        let _ = writeln!(s, "edge v{a} v{b}");
    }
    for t in 0..rng.gen_range(1..=opts.max_terms) {
        let anchor = rng.gen_range(0..n);
        let mut near = within(n, &edges, anchor, opts.radius);
        near.retain(|&v| v != anchor);
        near.shuffle(rng);
        let body = if opts.pairwise_only {
            if near.is_empty() {
                1
            } else {
                2
            }
        } else {
            rng.gen_range(1..=opts.max_body.min(near.len() + 1))
        };
        let mut alpha = vec![anchor];
        alpha.extend(near.into_iter().take(body - 1));
        let vars: Vec<String> = alpha
            .iter()
            .flat_map(|&v| (0..dims[v]).map(move |i| format!("x(v{v},{i})")))
            .collect();
        let expr = random_potential(rng, &vars, opts.trig);
        let names: Vec<String> = alpha.iter().map(|v| format!("v{v}")).collect();
        let _ = write!(s, "\n[term t{t}]\nvertices = {}\nexpr = \"{expr}\"\n", names.join(","));
    }
    s
}

pub fn random_system(rng: &mut ChaCha8Rng, opts: &GenOptions) -> LagrangianSystem {
    let text = random_system_text(rng, opts);
    parse_system(&text, true).unwrap_or_else(|e| panic!("{e}\n{text}"))
}

pub fn random_config(rng: &mut ChaCha8Rng, sys: &LagrangianSystem) -> FieldConfig {
    FieldConfig::from_flat((0..sys.layout.total()).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

pub fn random_tangent(rng: &mut ChaCha8Rng, sys: &LagrangianSystem) -> FieldConfig {
    random_config(rng, sys)
}

/// ‖a − b‖∞ / max(‖a‖∞, 1).
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

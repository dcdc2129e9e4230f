//! Line-oriented system file format.
//!
//! ```text
//! # comment
//! [graph]
//! vertex NAME [fiber=R<m>|S1]
//! edge NAME NAME
//! tail NAME attach=NAME [expr="<potential in x(ATTACH,i), x(NAME,i)>"]
//!
//! [term NAME]
//! vertices = NAME,NAME,...
//! expr = "<expression>"
//! path = NAME,NAME,...        # optional, repeatable
//!
//! [config NAME]
//! NAME = r1 r2 ... rm
//! ```
//!
//! Sections may repeat and appear in any order. Unknown keys are errors.
//! Vertices missing from a config section sit at the origin of their fiber.

use std::fmt::Write as _;

use crate::expr::{self, Expr};
use crate::graph::{Graph, VertexId};
use crate::model::{Fiber, LagrangianSystem, ModelError};

struct RawVertex {
    line: usize,
    name: String,
    fiber: Fiber,
}

struct RawTail {
    line: usize,
    name: String,
    attach: String,
    expr: Option<(usize, String)>,
}

#[derive(Default)]
struct RawTerm {
    line: usize,
    name: String,
    vertices: Option<(usize, Vec<String>)>,
    expr: Option<(usize, String)>,
    paths: Vec<(usize, Vec<String>)>,
}

struct RawConfig {
    name: String,
    entries: Vec<(usize, String, Vec<f64>)>,
}

enum Section {
    None,
    Graph,
    Term(usize),
    Config(usize),
}

fn perr(line: usize, message: impl Into<String>) -> ModelError {
    ModelError::Parse {
        line,
        message: message.into(),
    }
}

/// Removes a trailing `#` comment that is not inside double quotes.
fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

fn valid_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn name_list(line: usize, s: &str) -> Result<Vec<String>, ModelError> {
    s.split(',')
        .map(|n| {
            let n = n.trim();
            if valid_name(n) {
                Ok(n.to_string())
            } else {
                Err(perr(line, format!("invalid vertex name `{n}`")))
            }
        })
        .collect()
}

fn unquote(line: usize, s: &str) -> Result<String, ModelError> {
    let s = s.trim();
    s.strip_prefix('"')
        .and_then(|r| r.strip_suffix('"'))
        .filter(|inner| !inner.contains('"'))
        .map(str::to_string)
        .ok_or_else(|| perr(line, "expected a double-quoted expression"))
}

fn parse_fiber(line: usize, s: &str) -> Result<Fiber, ModelError> {
    if s == "S1" {
        return Ok(Fiber::circle());
    }
    s.strip_prefix('R')
        .and_then(|d| d.parse::<usize>().ok())
        .filter(|&d| d >= 1)
        .map(Fiber::euclidean)
        .ok_or_else(|| perr(line, format!("unknown fiber `{s}` (expected R<m> or S1)")))
}

fn parse_expr(line: usize, text: &str) -> Result<Expr, ModelError> {
    expr::parse(text).map_err(|source| ModelError::Expr { line, source })
}

fn with_line(line: usize, e: ModelError) -> ModelError {
    match e {
        ModelError::UnknownVertex { name, .. } => ModelError::UnknownVertex { line, name },
        ModelError::FiberMismatch { message, .. } => ModelError::FiberMismatch { line, message },
        ModelError::Parse { message, .. } => ModelError::Parse { line, message },
        other => other,
    }
}

pub fn parse_system(text: &str, allow_ends: bool) -> Result<LagrangianSystem, ModelError> {
    let mut vertices: Vec<RawVertex> = Vec::new();
    let mut edges: Vec<(usize, String, String)> = Vec::new();
    let mut tails: Vec<RawTail> = Vec::new();
    let mut terms: Vec<RawTerm> = Vec::new();
    let mut configs: Vec<RawConfig> = Vec::new();
    let mut section = Section::None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = strip_comment(raw).trim();
        if content.is_empty() {
            continue;
        }
        if let Some(header) = content.strip_prefix('[') {
            let header = header
                .strip_suffix(']')
                .ok_or_else(|| perr(line, "unterminated section header"))?
                .trim();
            let mut words = header.split_whitespace();
            section = match (words.next(), words.next(), words.next()) {
                (Some("graph"), None, _) => Section::Graph,
                (Some("term"), Some(name), None) if valid_name(name) => {
                    terms.push(RawTerm {
                        line,
                        name: name.to_string(),
                        ..RawTerm::default()
                    });
                    Section::Term(terms.len() - 1)
                }
                (Some("config"), Some(name), None) if valid_name(name) => {
                    configs.push(RawConfig {
                        name: name.to_string(),
                        entries: Vec::new(),
                    });
                    Section::Config(configs.len() - 1)
                }
                _ => return Err(perr(line, format!("unknown section `[{header}]`"))),
            };
            continue;
        }
        match section {
            Section::None => return Err(perr(line, "content before the first section")),
            Section::Graph => {
                let (keyword, rest) = content
                    .split_once(char::is_whitespace)
                    .unwrap_or((content, ""));
                let rest = rest.trim();
                match keyword {
                    "vertex" => {
                        let mut parts = rest.split_whitespace();
                        let name = parts.next().filter(|n| valid_name(n)).ok_or_else(|| {
                            perr(line, "expected `vertex NAME [fiber=R<m>|S1]`")
                        })?;
                        let fiber = match parts.next() {
                            None => Fiber::euclidean(1),
                            Some(opt) => match opt.strip_prefix("fiber=") {
                                Some(f) => parse_fiber(line, f)?,
                                None => return Err(perr(line, format!("unknown key `{opt}`"))),
                            },
                        };
                        if let Some(extra) = parts.next() {
                            return Err(perr(line, format!("unexpected `{extra}`")));
                        }
                        vertices.push(RawVertex {
                            line,
                            name: name.to_string(),
                            fiber,
                        });
                    }
                    "edge" => {
                        let parts: Vec<&str> = rest.split_whitespace().collect();
                        match parts.as_slice() {
                            [a, b] => edges.push((line, a.to_string(), b.to_string())),
                            _ => return Err(perr(line, "expected `edge NAME NAME`")),
                        }
                    }
                    "tail" => {
                        let (name, opts) = rest
                            .split_once(char::is_whitespace)
                            .ok_or_else(|| perr(line, "expected `tail NAME attach=NAME`"))?;
                        if !valid_name(name) {
                            return Err(perr(line, format!("invalid tail name `{name}`")));
                        }
                        let mut attach = None;
                        let mut expr = None;
                        let mut opts = opts.trim();
                        while !opts.is_empty() {
                            if let Some(r) = opts.strip_prefix("attach=") {
                                let (v, next) =
                                    r.split_once(char::is_whitespace).unwrap_or((r, ""));
                                attach = Some(v.to_string());
                                opts = next.trim();
                            } else if let Some(r) = opts.strip_prefix("expr=") {
                                expr = Some((line, unquote(line, r)?));
                                opts = "";
                            } else {
                                return Err(perr(line, format!("unknown key in `{opts}`")));
                            }
                        }
                        tails.push(RawTail {
                            line,
                            name: name.to_string(),
                            attach: attach
                                .ok_or_else(|| perr(line, "tail needs `attach=NAME`"))?,
                            expr,
                        });
                    }
                    other => return Err(perr(line, format!("unknown graph entry `{other}`"))),
                }
            }
            Section::Term(t) => {
                let (key, value) = content
                    .split_once('=')
                    .ok_or_else(|| perr(line, "expected `key = value`"))?;
                let term = &mut terms[t];
                match key.trim() {
                    "vertices" => term.vertices = Some((line, name_list(line, value)?)),
                    "expr" => term.expr = Some((line, unquote(line, value)?)),
                    "path" => term.paths.push((line, name_list(line, value)?)),
                    other => return Err(perr(line, format!("unknown key `{other}`"))),
                }
            }
            Section::Config(c) => {
                let (key, value) = content
                    .split_once('=')
                    .ok_or_else(|| perr(line, "expected `NAME = r1 r2 ...`"))?;
                let values = value
                    .split_whitespace()
                    .map(|x| x.parse::<f64>().map_err(|_| perr(line, format!("bad number `{x}`"))))
                    .collect::<Result<Vec<_>, _>>()?;
                configs[c]
                    .entries
                    .push((line, key.trim().to_string(), values));
            }
        }
    }

    let mut graph = Graph::new();
    let mut fibers = Vec::new();
    for v in &vertices {
        graph
            .add_vertex(&v.name)
            .map_err(|source| ModelError::Graph { line: v.line, source })?;
        fibers.push(v.fiber);
    }
    let vertex = |line: usize, name: &str, graph: &Graph| {
        graph
            .vertex_id(name)
            .ok_or_else(|| ModelError::UnknownVertex {
                line,
                name: name.to_string(),
            })
    };
    for (line, a, b) in &edges {
        let (a, b) = (vertex(*line, a, &graph)?, vertex(*line, b, &graph)?);
        graph
            .add_edge(a, b)
            .map_err(|source| ModelError::Graph { line: *line, source })?;
    }
    for t in &tails {
        let attach = vertex(t.line, &t.attach, &graph)?;
        graph
            .add_tail(&t.name, attach)
            .map_err(|source| ModelError::Graph { line: t.line, source })?;
    }

    let mut sys = LagrangianSystem::new(graph, fibers);
    for (id, t) in tails.iter().enumerate() {
        if let Some((line, text)) = &t.expr {
            let e = parse_expr(*line, text)?;
            sys.set_tail_potential(id, e).map_err(|e| with_line(*line, e))?;
        }
    }
    for raw in &terms {
        let (vline, names) = raw
            .vertices
            .as_ref()
            .ok_or_else(|| perr(raw.line, format!("term `{}` lacks `vertices`", raw.name)))?;
        let (eline, text) = raw
            .expr
            .as_ref()
            .ok_or_else(|| perr(raw.line, format!("term `{}` lacks `expr`", raw.name)))?;
        let ids = names
            .iter()
            .map(|n| vertex(*vline, n, &sys.graph))
            .collect::<Result<Vec<VertexId>, _>>()?;
        let e = parse_expr(*eline, text)?;
        let t = sys
            .add_term(&raw.name, ids, e)
            .map_err(|e| with_line(*eline, e))?;
        for (pline, walk) in &raw.paths {
            let ids = walk
                .iter()
                .map(|n| vertex(*pline, n, &sys.graph))
                .collect::<Result<Vec<VertexId>, _>>()?;
            if ids.len() < 2 || sys.graph.walk_chain(&ids).is_none() {
                return Err(perr(*pline, "path must be a walk along edges with at least two vertices"));
            }
            sys.terms[t].paths.push(ids);
        }
    }
    for raw in &configs {
        let mut config = sys.zero_config();
        for (line, name, values) in &raw.entries {
            let (dim, slot) = if let Some(v) = sys.graph.vertex_id(name) {
                (sys.layout.dim(v), Some(v))
            } else if let Some(t) = sys.graph.tail_id(name) {
                (sys.layout.dim(sys.graph.tails()[t].attach), None)
            } else {
                return Err(ModelError::UnknownVertex {
                    line: *line,
                    name: name.clone(),
                });
            };
            if values.len() != dim {
                return Err(ModelError::FiberMismatch {
                    line: *line,
                    message: format!("`{name}` needs {dim} values, got {}", values.len()),
                });
            }
            match slot {
                Some(v) => {
                    let r = sys.layout.range(v);
                    config.values[r].copy_from_slice(values);
                }
                None => {
                    let t = sys.graph.tail_id(name).expect("checked above");
                    config.tail_sites.insert(t, values.clone());
                }
            }
        }
        sys.configs.push((raw.name.clone(), config));
    }
    sys.check_degrees(allow_ends)?;
    Ok(sys)
}

/// Serializes a system in canonical form. `paths[t]`, when given, replaces the
/// walks recorded for term `t`.
pub fn write_system(sys: &LagrangianSystem, paths: Option<&[Vec<Vec<VertexId>>]>) -> String {
    let g = &sys.graph;
    let mut out = String::new();
    out.push_str("[graph]\n");
    for v in 0..g.vertex_count() {
        let _ = writeln!(out, "vertex {} fiber={}", g.vertex_name(v), sys.fibers[v].label());
    }
    for &(a, b) in g.edges() {
        let _ = writeln!(out, "edge {} {}", g.vertex_name(a), g.vertex_name(b));
    }
    for (t, tail) in g.tails().iter().enumerate() {
        let _ = write!(out, "tail {} attach={}", tail.name, g.vertex_name(tail.attach));
        if let Some(tp) = &sys.tail_potentials[t] {
            let _ = write!(out, " expr=\"{}\"", tp.potential);
        }
        out.push('\n');
    }
    let names = |ids: &[VertexId]| {
        ids.iter()
            .map(|&v| g.vertex_name(v))
            .collect::<Vec<_>>()
            .join(",")
    };
    for (t, term) in sys.terms.iter().enumerate() {
        let _ = writeln!(out, "\n[term {}]", term.name);
        let _ = writeln!(out, "vertices = {}", names(&term.vertices));
        let _ = writeln!(out, "expr = \"{}\"", term.potential);
        let walks = paths.map(|p| p[t].as_slice()).unwrap_or(&term.paths);
        for walk in walks {
            let _ = writeln!(out, "path = {}", names(walk));
        }
    }
    for (name, config) in &sys.configs {
        let _ = writeln!(out, "\n[config {name}]");
        for v in 0..g.vertex_count() {
            let vals: Vec<String> = config
                .at(&sys.layout, v)
                .iter()
                .map(|x| format!("{x:?}"))
                .collect();
            let _ = writeln!(out, "{} = {}", g.vertex_name(v), vals.join(" "));
        }
        for (&t, vals) in &config.tail_sites {
            let vals: Vec<String> = vals.iter().map(|x| format!("{x:?}")).collect();
            let _ = writeln!(out, "{} = {}", g.tails()[t].name, vals.join(" "));
        }
    }
    out
}

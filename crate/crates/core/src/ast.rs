//! Typed abstract syntax tree for MELA models.
//!
//! A model consists of parameter bindings, one space declaration, agent
//! definitions (defining equations `C(l) = P(l)`), environment factors and
//! the initial configuration. `ModelDef::pretty` renders a model back to
//! concrete syntax; parsing that output yields a structurally identical
//! tree.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::diag::NodePos;
use crate::expr::RateExpr;
use crate::space::{Boundary, Location, NeighbourhoodKind, NeighbourhoodSpec, SpaceDecl};

/// A complete parsed model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDef {
    pub params: BTreeMap<String, f64>,
    pub space: SpaceBlock,
    /// Agent definitions in source order; order fixes the stable series
    /// order used by all outputs.
    pub agents: Vec<AgentDef>,
    pub env_factors: Vec<EnvDef>,
    pub init: Vec<InitEntry>,
}

impl ModelDef {
    pub fn agent(&self, name: &str) -> Option<&AgentDef> {
        self.agents.iter().find(|a| a.name == name)
    }

    pub fn env_factor(&self, name: &str) -> Option<&EnvDef> {
        self.env_factors.iter().find(|e| e.name == name)
    }
}

/// The `space ...;` declaration with its attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceBlock {
    pub decl: SpaceDecl,
    pub neighbourhood: NeighbourhoodSpec,
    /// Entry cell for nested inter-vertex movement.
    pub entry: (i64, i64),
    pub pos: NodePos,
}

/// A defining equation `agent C(vars) = body;`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentDef {
    pub name: String,
    /// Location variables, 1 to 3 of them.
    pub location_vars: Vec<String>,
    pub body: ProcessTerm,
    pub pos: NodePos,
}

impl AgentDef {
    pub fn location_arity(&self) -> usize {
        self.location_vars.len()
    }
}

/// Process terms. Choice is n-ary via right nesting; `nil` may only appear
/// as a whole body; constant references outside continuation position are
/// rejected by validation (guardedness).
#[derive(Debug, Clone, PartialEq)]
pub enum ProcessTerm {
    Prefix(Box<Prefix>),
    Choice(Box<ProcessTerm>, Box<ProcessTerm>),
    ConstantRef { name: String, pos: NodePos },
    Nil,
}

impl ProcessTerm {
    /// All prefixes of this term, left to right.
    pub fn prefixes(&self) -> Vec<&Prefix> {
        let mut out = Vec::new();
        self.collect_prefixes(&mut out);
        out
    }

    fn collect_prefixes<'a>(&'a self, out: &mut Vec<&'a Prefix>) {
        match self {
            ProcessTerm::Prefix(p) => out.push(p),
            ProcessTerm::Choice(l, r) => {
                l.collect_prefixes(out);
                r.collect_prefixes(out);
            }
            _ => {}
        }
    }
}

/// One action prefix with its continuation.
#[derive(Debug, Clone, PartialEq)]
pub struct Prefix {
    pub action: ActionSpec,
    /// Name of the agent the prefix continues as.
    pub target: String,
    /// Location of the continuation.
    pub destination: DestinationExpr,
    pub pos: NodePos,
}

/// The action part of a prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpec {
    pub name: String,
    pub kind: ActionKind,
    pub mode: Mode,
    /// Rate for no-influence/influence actions, probability for passive.
    pub value: RateExpr,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActionKind {
    /// `(a, r)` — performed alone.
    NoInfluence,
    /// `->{L}(a, r)` — may affect agents in the target set.
    Influence(LocationSetExpr),
    /// `<-(a, p)` — potentially affected, with probability `p`.
    Passive,
}

/// Population effect of an action: `.` keeps the number of agents, `up`
/// creates one, `down` destroys the acting agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Keep,
    Create,
    Destroy,
}

impl Mode {
    pub fn token(self) -> &'static str {
        match self {
            Mode::Keep => ".",
            Mode::Create => "up",
            Mode::Destroy => "down",
        }
    }

    /// Net change to the number of agents contributed by a participant
    /// acting with this mode.
    pub fn net_change(self) -> i64 {
        match self {
            Mode::Keep => 0,
            Mode::Create => 1,
            Mode::Destroy => -1,
        }
    }
}

/// Target set of an influence action.
#[derive(Debug, Clone, PartialEq)]
pub enum LocationSetExpr {
    /// The acting agent's own location (`{l}` with the agent's variables).
    Here,
    ExplicitList(Vec<Location>),
    All,
}

/// Location of a continuation.
#[derive(Debug, Clone, PartialEq)]
pub enum DestinationExpr {
    /// The agent's own location variables, unchanged.
    Same,
    Literal(Location),
    /// `new(vars)`: uniform over the neighbourhood of the current location
    /// (for nested spaces, the in-grid neighbourhood).
    New,
    /// `new_v(vars)`: nested spaces only — uniform over the outer-graph
    /// neighbours, landing at the entry cell.
    NewOuter,
    /// `dist(l1[p1], ...)`: empirical distribution; probabilities may depend
    /// on the current state and must sum to 1.
    Empirical(Vec<(Location, RateExpr)>),
}

/// An environment factor `env E = ->{L}(a, r) . E;`. It has no location and
/// never changes state.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvDef {
    pub name: String,
    pub action: String,
    pub target: LocationSetExpr,
    pub rate: RateExpr,
    pub pos: NodePos,
}

/// One `Name(loc)[n]` term of the initial configuration. Environment
/// factors carry no location.
#[derive(Debug, Clone, PartialEq)]
pub struct InitEntry {
    pub name: String,
    pub location: Option<Location>,
    pub multiplicity: u64,
    pub pos: NodePos,
}

// ---------------------------------------------------------------------------
// Pretty printing
// ---------------------------------------------------------------------------

fn write_location_args(out: &mut String, l: &Location) {
    match l {
        Location::One(a) => {
            let _ = write!(out, "{a}");
        }
        Location::Two(a, b) => {
            let _ = write!(out, "{a},{b}");
        }
        Location::Three(a, b, c) => {
            let _ = write!(out, "{a},{b},{c}");
        }
    }
}

fn render_location_set(set: &LocationSetExpr, vars: &[String]) -> String {
    let mut s = String::from("{");
    match set {
        LocationSetExpr::Here if vars.len() > 1 => {
            s.push('(');
            s.push_str(&vars.join(","));
            s.push(')');
        }
        LocationSetExpr::Here => s.push_str(&vars.join(",")),
        LocationSetExpr::All => s.push_str("all"),
        LocationSetExpr::ExplicitList(ls) => {
            for (i, l) in ls.iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                match l {
                    Location::One(a) => {
                        let _ = write!(s, "{a}");
                    }
                    l => {
                        s.push('(');
                        write_location_args(&mut s, l);
                        s.push(')');
                    }
                }
            }
        }
    }
    s.push('}');
    s
}

fn render_destination(dest: &DestinationExpr, vars: &[String]) -> String {
    match dest {
        DestinationExpr::Same => vars.join(","),
        DestinationExpr::Literal(l) => {
            let mut s = String::new();
            write_location_args(&mut s, l);
            s
        }
        DestinationExpr::New => format!("new({})", vars.join(",")),
        DestinationExpr::NewOuter => format!("new_v({})", vars.join(",")),
        DestinationExpr::Empirical(items) => {
            let mut s = String::from("dist(");
            for (i, (l, p)) in items.iter().enumerate() {
                if i > 0 {
                    s.push_str(", ");
                }
                match l {
                    Location::One(a) => {
                        let _ = write!(s, "{a}");
                    }
                    l => {
                        s.push('(');
                        write_location_args(&mut s, l);
                        s.push(')');
                    }
                }
                let _ = write!(s, "[{}]", p.render(Some(vars)));
            }
            s.push(')');
            s
        }
    }
}

fn render_prefix(p: &Prefix, vars: &[String]) -> String {
    let mut s = String::new();
    match &p.action.kind {
        ActionKind::NoInfluence => {
            let _ = write!(s, "({}, {})", p.action.name, p.action.value.render(Some(vars)));
        }
        ActionKind::Influence(set) => {
            let _ = write!(
                s,
                "->{}({}, {})",
                render_location_set(set, vars),
                p.action.name,
                p.action.value.render(Some(vars))
            );
        }
        ActionKind::Passive => {
            let _ = write!(s, "<-({}, {})", p.action.name, p.action.value.render(Some(vars)));
        }
    }
    let _ = write!(
        s,
        " {} {}({})",
        p.action.mode.token(),
        p.target,
        render_destination(&p.destination, vars)
    );
    s
}

fn render_term(term: &ProcessTerm, vars: &[String], out: &mut String) {
    match term {
        ProcessTerm::Nil => out.push_str("nil"),
        ProcessTerm::ConstantRef { name, .. } => {
            let _ = write!(out, "{}({})", name, vars.join(","));
        }
        ProcessTerm::Prefix(p) => out.push_str(&render_prefix(p, vars)),
        ProcessTerm::Choice(l, r) => {
            render_term(l, vars, out);
            out.push_str("\n    + ");
            render_term(r, vars, out);
        }
    }
}

fn render_graph(g: &crate::space::GraphDecl) -> String {
    let mut s = String::from("graph {");
    for (v, ns) in &g.adjacency {
        let _ = write!(s, " {v}: [");
        for (i, n) in ns.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            let _ = write!(s, "{n}");
        }
        s.push_str("];");
    }
    s.push_str(" }");
    s
}

fn render_space_decl(d: &SpaceDecl) -> String {
    match d {
        SpaceDecl::Line(n) => format!("line({n})"),
        SpaceDecl::Grid2d(w, h) => format!("grid2d({w},{h})"),
        SpaceDecl::Grid3d(w, h, d) => format!("grid3d({w},{h},{d})"),
        SpaceDecl::Graph(g) => render_graph(g),
        SpaceDecl::Nested { inner, outer } => {
            format!("nested({}, {})", render_space_decl(inner), render_graph(outer))
        }
    }
}

impl ModelDef {
    /// Render the model as concrete `.mela` syntax.
    pub fn pretty(&self) -> String {
        let mut s = String::new();
        for (name, value) in &self.params {
            let _ = writeln!(s, "param {name} = {value};");
        }
        if !self.params.is_empty() {
            s.push('\n');
        }

        let _ = write!(s, "space {}", render_space_decl(&self.space.decl));
        if !matches!(self.space.decl, SpaceDecl::Graph(_)) {
            let b = match self.space.neighbourhood.boundary {
                Boundary::Periodic => "periodic",
                Boundary::Closed => "closed",
            };
            let k = match self.space.neighbourhood.kind {
                NeighbourhoodKind::VonNeumann => "vonneumann",
                NeighbourhoodKind::Moore => "moore",
                NeighbourhoodKind::GraphAdjacency => "graph",
            };
            let _ = write!(s, " boundary={b} neighbourhood={k}");
        }
        if matches!(self.space.decl, SpaceDecl::Nested { .. }) {
            let _ = write!(s, " entry=({},{})", self.space.entry.0, self.space.entry.1);
        }
        s.push_str(";\n\n");

        for a in &self.agents {
            let _ = write!(s, "agent {}({}) =\n      ", a.name, a.location_vars.join(","));
            let mut body = String::new();
            render_term(&a.body, &a.location_vars, &mut body);
            s.push_str(&body);
            s.push_str(";\n\n");
        }

        for e in &self.env_factors {
            let _ = writeln!(
                s,
                "env {} = ->{}({}, {}) . {};",
                e.name,
                render_location_set(&e.target, &[]),
                e.action,
                e.rate.render(None),
                e.name
            );
        }
        if !self.env_factors.is_empty() {
            s.push('\n');
        }

        s.push_str("init = ");
        for (i, entry) in self.init.iter().enumerate() {
            if i > 0 {
                s.push_str(" | ");
            }
            s.push_str(&entry.name);
            if let Some(l) = &entry.location {
                s.push('(');
                write_location_args(&mut s, l);
                s.push(')');
            }
            if entry.multiplicity != 1 {
                let _ = write!(s, "[{}]", entry.multiplicity);
            }
        }
        s.push_str(";\n");
        s
    }
}

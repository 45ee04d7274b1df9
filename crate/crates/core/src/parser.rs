//! Recursive-descent parser for `.mela` model files.
//!
//! The grammar is documented in `docs/language.md`. Parsing either yields a
//! [`ModelDef`] or a list of diagnostics carrying line/column positions.

use std::collections::BTreeMap;

use crate::ast::*;
use crate::diag::{Diagnostic, Pos};
use crate::expr::{BinOp, CountLoc, RateExpr};
use crate::lexer::{tokenize, Tok, Token};
use crate::space::{Boundary, GraphDecl, Location, NeighbourhoodKind, NeighbourhoodSpec, SpaceDecl};

/// Parse a complete model from source text.
pub fn parse_model(src: &str) -> Result<ModelDef, Vec<Diagnostic>> {
    let tokens = tokenize(src).map_err(|d| vec![d])?;
    let mut parser = Parser {
        tokens,
        at: 0,
        diags: Vec::new(),
    };
    match parser.model() {
        Ok(model) if parser.diags.is_empty() => Ok(model),
        Ok(_) => Err(parser.diags),
        Err(d) => {
            parser.diags.push(d);
            Err(parser.diags)
        }
    }
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
    diags: Vec<Diagnostic>,
}

/// A single coordinate in a location position: integer literal or variable.
#[derive(Debug, Clone)]
enum LocAtom {
    Int(i64),
    Var(String),
}

type PResult<T> = Result<T, Diagnostic>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.at].tok
    }

    fn pos(&self) -> Pos {
        self.tokens[self.at].pos
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.at].clone();
        if self.at + 1 < self.tokens.len() {
            self.at += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok) -> PResult<Token> {
        if self.peek() == &tok {
            Ok(self.bump())
        } else {
            Err(self.unexpected(&format!("expected {}", tok.describe())))
        }
    }

    fn expect_ident(&mut self, what: &str) -> PResult<(String, Pos)> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.bump();
                Ok((name, pos))
            }
            _ => Err(self.unexpected(&format!("expected {what}"))),
        }
    }

    fn expect_int(&mut self, what: &str) -> PResult<(i64, Pos)> {
        let pos = self.pos();
        match self.peek() {
            Tok::Int(v) => {
                let v = *v;
                self.bump();
                Ok((v, pos))
            }
            _ => Err(self.unexpected(&format!("expected {what}"))),
        }
    }

    fn unexpected(&self, msg: &str) -> Diagnostic {
        Diagnostic::error(
            format!("{msg}, found {}", self.peek().describe()),
            Some(self.pos()),
        )
    }

    // -- model ------------------------------------------------------------

    fn model(&mut self) -> PResult<ModelDef> {
        let mut params: BTreeMap<String, f64> = BTreeMap::new();
        let mut space: Option<SpaceBlock> = None;
        let mut agents: Vec<AgentDef> = Vec::new();
        let mut env_factors: Vec<EnvDef> = Vec::new();
        let mut init: Option<Vec<InitEntry>> = None;

        loop {
            match self.peek() {
                Tok::Eof => break,
                Tok::Param => {
                    let (name, value, pos) = self.param()?;
                    if params.insert(name.clone(), value).is_some() {
                        self.diags.push(Diagnostic::error(
                            format!("duplicate definition of parameter `{name}`"),
                            Some(pos),
                        ));
                    }
                }
                Tok::Space => {
                    let block = self.space_block()?;
                    if space.is_some() {
                        self.diags.push(Diagnostic::error(
                            "duplicate space declaration",
                            Some(block.pos.pos()),
                        ));
                    } else {
                        space = Some(block);
                    }
                }
                Tok::Agent => {
                    let agent = self.agent()?;
                    if agents.iter().any(|a| a.name == agent.name)
                        || env_factors.iter().any(|e| e.name == agent.name)
                    {
                        self.diags.push(Diagnostic::error(
                            format!("duplicate definition of `{}`", agent.name),
                            Some(agent.pos.pos()),
                        ));
                    } else {
                        agents.push(agent);
                    }
                }
                Tok::Env => {
                    let env = self.env_factor()?;
                    if agents.iter().any(|a| a.name == env.name)
                        || env_factors.iter().any(|e| e.name == env.name)
                    {
                        self.diags.push(Diagnostic::error(
                            format!("duplicate definition of `{}`", env.name),
                            Some(env.pos.pos()),
                        ));
                    } else {
                        env_factors.push(env);
                    }
                }
                Tok::Init => {
                    let pos = self.pos();
                    let entries = self.init_block()?;
                    if init.is_some() {
                        self.diags
                            .push(Diagnostic::error("duplicate init declaration", Some(pos)));
                    } else {
                        init = Some(entries);
                    }
                }
                _ => {
                    return Err(self.unexpected(
                        "expected `param`, `space`, `agent`, `env` or `init` declaration",
                    ))
                }
            }
        }

        let space = space.ok_or_else(|| {
            Diagnostic::error("model declares no space", Some(Pos::new(1, 1)))
        })?;
        let init = init.ok_or_else(|| {
            Diagnostic::error("model declares no init configuration", Some(Pos::new(1, 1)))
        })?;

        Ok(ModelDef {
            params,
            space,
            agents,
            env_factors,
            init,
        })
    }

    fn param(&mut self) -> PResult<(String, f64, Pos)> {
        self.expect(Tok::Param)?;
        let (name, pos) = self.expect_ident("parameter name")?;
        self.expect(Tok::Eq)?;
        let negative = self.eat(&Tok::Minus);
        let value = match self.peek() {
            Tok::Int(v) => {
                let v = *v as f64;
                self.bump();
                v
            }
            Tok::Float(v) => {
                let v = *v;
                self.bump();
                v
            }
            _ => return Err(self.unexpected("expected numeric parameter value")),
        };
        self.expect(Tok::Semi)?;
        Ok((name, if negative { -value } else { value }, pos))
    }

    // -- space ------------------------------------------------------------

    fn space_block(&mut self) -> PResult<SpaceBlock> {
        let pos = self.pos();
        self.expect(Tok::Space)?;
        let decl = self.space_decl()?;
        let is_graph = matches!(decl, SpaceDecl::Graph(_));
        let is_nested = matches!(decl, SpaceDecl::Nested { .. });

        let mut neighbourhood = if is_graph {
            NeighbourhoodSpec {
                kind: NeighbourhoodKind::GraphAdjacency,
                boundary: Boundary::Periodic,
            }
        } else {
            NeighbourhoodSpec::default()
        };
        let mut entry = (0i64, 0i64);

        while let Tok::Ident(attr) = self.peek().clone() {
            let attr_pos = self.pos();
            self.bump();
            self.expect(Tok::Eq)?;
            match attr.as_str() {
                "boundary" => {
                    let (v, vpos) = self.expect_ident("boundary value")?;
                    neighbourhood.boundary = match v.as_str() {
                        "periodic" => Boundary::Periodic,
                        "closed" => Boundary::Closed,
                        _ => {
                            return Err(Diagnostic::error(
                                format!("unknown boundary `{v}` (expected periodic or closed)"),
                                Some(vpos),
                            ))
                        }
                    };
                }
                "neighbourhood" => {
                    let (v, vpos) = self.expect_ident("neighbourhood value")?;
                    neighbourhood.kind = match v.as_str() {
                        "vonneumann" => NeighbourhoodKind::VonNeumann,
                        "moore" => NeighbourhoodKind::Moore,
                        _ => {
                            return Err(Diagnostic::error(
                                format!(
                                    "unknown neighbourhood `{v}` (expected vonneumann or moore)"
                                ),
                                Some(vpos),
                            ))
                        }
                    };
                }
                "entry" => {
                    self.expect(Tok::LParen)?;
                    let (x, _) = self.expect_int("entry x coordinate")?;
                    self.expect(Tok::Comma)?;
                    let (y, _) = self.expect_int("entry y coordinate")?;
                    self.expect(Tok::RParen)?;
                    entry = (x, y);
                }
                _ => {
                    return Err(Diagnostic::error(
                        format!("unknown space attribute `{attr}`"),
                        Some(attr_pos),
                    ))
                }
            }
            if is_graph {
                return Err(Diagnostic::error(
                    format!("attribute `{attr}` is not applicable to graph spaces"),
                    Some(attr_pos),
                ));
            }
            if attr == "entry" && !is_nested {
                return Err(Diagnostic::error(
                    "attribute `entry` is only applicable to nested spaces",
                    Some(attr_pos),
                ));
            }
        }
        // A graph body already ends with `}`; the semicolon is optional there.
        if is_graph {
            self.eat(&Tok::Semi);
        } else {
            self.expect(Tok::Semi)?;
        }
        Ok(SpaceBlock {
            decl,
            neighbourhood,
            entry,
            pos: pos.into(),
        })
    }

    fn space_decl(&mut self) -> PResult<SpaceDecl> {
        let (kind, pos) = self.expect_ident("space kind")?;
        match kind.as_str() {
            "line" => {
                self.expect(Tok::LParen)?;
                let (n, _) = self.expect_int("line length")?;
                self.expect(Tok::RParen)?;
                Ok(SpaceDecl::Line(self.dim(n)?))
            }
            "grid2d" => {
                self.expect(Tok::LParen)?;
                let (w, _) = self.expect_int("grid width")?;
                self.expect(Tok::Comma)?;
                let (h, _) = self.expect_int("grid height")?;
                self.expect(Tok::RParen)?;
                Ok(SpaceDecl::Grid2d(self.dim(w)?, self.dim(h)?))
            }
            "grid3d" => {
                self.expect(Tok::LParen)?;
                let (w, _) = self.expect_int("grid width")?;
                self.expect(Tok::Comma)?;
                let (h, _) = self.expect_int("grid height")?;
                self.expect(Tok::Comma)?;
                let (d, _) = self.expect_int("grid depth")?;
                self.expect(Tok::RParen)?;
                Ok(SpaceDecl::Grid3d(self.dim(w)?, self.dim(h)?, self.dim(d)?))
            }
            "graph" => Ok(SpaceDecl::Graph(self.graph_body()?)),
            "nested" => {
                self.expect(Tok::LParen)?;
                let inner = self.space_decl()?;
                if !matches!(inner, SpaceDecl::Grid2d(..)) {
                    return Err(Diagnostic::error(
                        "nested spaces require a grid2d inner structure",
                        Some(pos),
                    ));
                }
                self.expect(Tok::Comma)?;
                let outer = self.space_decl()?;
                let outer = match outer {
                    SpaceDecl::Graph(g) => g,
                    _ => {
                        return Err(Diagnostic::error(
                            "nested spaces require a graph outer structure",
                            Some(pos),
                        ))
                    }
                };
                self.expect(Tok::RParen)?;
                Ok(SpaceDecl::Nested {
                    inner: Box::new(inner),
                    outer,
                })
            }
            _ => Err(Diagnostic::error(
                format!("unknown space kind `{kind}` (expected line, grid2d, grid3d, graph or nested)"),
                Some(pos),
            )),
        }
    }

    fn dim(&self, v: i64) -> PResult<u32> {
        u32::try_from(v).map_err(|_| {
            Diagnostic::error(format!("dimension {v} out of range"), Some(self.pos()))
        })
    }

    fn graph_body(&mut self) -> PResult<GraphDecl> {
        self.expect(Tok::LBrace)?;
        let mut adjacency = Vec::new();
        while self.peek() != &Tok::RBrace {
            let (v, _) = self.expect_int("vertex id")?;
            self.expect(Tok::Colon)?;
            self.expect(Tok::LBracket)?;
            let mut ns = Vec::new();
            if self.peek() != &Tok::RBracket {
                loop {
                    let (n, _) = self.expect_int("vertex id")?;
                    ns.push(n);
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
            }
            self.expect(Tok::RBracket)?;
            self.expect(Tok::Semi)?;
            adjacency.push((v, ns));
        }
        self.expect(Tok::RBrace)?;
        Ok(GraphDecl { adjacency })
    }

    // -- agents -----------------------------------------------------------

    fn agent(&mut self) -> PResult<AgentDef> {
        self.expect(Tok::Agent)?;
        let (name, pos) = self.expect_ident("agent name")?;
        self.expect(Tok::LParen)?;
        let mut vars = Vec::new();
        loop {
            let (v, vpos) = self.expect_ident("location variable")?;
            if vars.contains(&v) {
                return Err(Diagnostic::error(
                    format!("duplicate location variable `{v}`"),
                    Some(vpos),
                ));
            }
            vars.push(v);
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(Tok::RParen)?;
        if vars.len() > 3 {
            return Err(Diagnostic::error(
                "agents carry at most 3 location coordinates",
                Some(pos),
            ));
        }
        self.expect(Tok::Eq)?;
        let body = self.term(&vars)?;
        self.expect(Tok::Semi)?;
        Ok(AgentDef {
            name,
            location_vars: vars,
            body,
            pos: pos.into(),
        })
    }

    fn term(&mut self, vars: &[String]) -> PResult<ProcessTerm> {
        let mut summands = vec![self.summand(vars)?];
        while self.eat(&Tok::Plus) {
            summands.push(self.summand(vars)?);
        }
        // right-nested n-ary choice
        let mut term = summands.pop().expect("at least one summand");
        while let Some(s) = summands.pop() {
            term = ProcessTerm::Choice(Box::new(s), Box::new(term));
        }
        Ok(term)
    }

    fn summand(&mut self, vars: &[String]) -> PResult<ProcessTerm> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Nil => {
                self.bump();
                Ok(ProcessTerm::Nil)
            }
            Tok::LParen => {
                self.bump();
                let (action, _) = self.expect_ident("action name")?;
                self.expect(Tok::Comma)?;
                let value = self.expr(Some(vars))?;
                self.expect(Tok::RParen)?;
                self.finish_prefix(vars, action, ActionKind::NoInfluence, value, pos)
            }
            Tok::Arrow => {
                self.bump();
                let target = self.location_set(Some(vars))?;
                self.expect(Tok::LParen)?;
                let (action, _) = self.expect_ident("action name")?;
                self.expect(Tok::Comma)?;
                let value = self.expr(Some(vars))?;
                self.expect(Tok::RParen)?;
                self.finish_prefix(vars, action, ActionKind::Influence(target), value, pos)
            }
            Tok::BackArrow => {
                self.bump();
                self.expect(Tok::LParen)?;
                let (action, _) = self.expect_ident("action name")?;
                self.expect(Tok::Comma)?;
                let value = self.expr(Some(vars))?;
                self.expect(Tok::RParen)?;
                self.finish_prefix(vars, action, ActionKind::Passive, value, pos)
            }
            Tok::Ident(name) => {
                self.bump();
                // Bare constant reference; arguments are parsed for shape but
                // not retained (validation rejects unguarded references).
                self.expect(Tok::LParen)?;
                let _ = self.loc_atoms_until_rparen()?;
                self.expect(Tok::RParen)?;
                Ok(ProcessTerm::ConstantRef {
                    name,
                    pos: pos.into(),
                })
            }
            _ => Err(self.unexpected("expected an action prefix, constant reference or `nil`")),
        }
    }

    fn finish_prefix(
        &mut self,
        vars: &[String],
        action: String,
        kind: ActionKind,
        value: RateExpr,
        pos: Pos,
    ) -> PResult<ProcessTerm> {
        let mode = self.mode()?;
        let (target, tpos) = self.expect_ident("continuation agent name")?;
        self.expect(Tok::LParen)?;
        let destination = self.destination(vars, tpos)?;
        self.expect(Tok::RParen)?;
        Ok(ProcessTerm::Prefix(Box::new(Prefix {
            action: ActionSpec {
                name: action,
                kind,
                mode,
                value,
            },
            target,
            destination,
            pos: pos.into(),
        })))
    }

    fn mode(&mut self) -> PResult<Mode> {
        match self.peek() {
            Tok::Dot => {
                self.bump();
                Ok(Mode::Keep)
            }
            Tok::Up => {
                self.bump();
                Ok(Mode::Create)
            }
            Tok::Down => {
                self.bump();
                Ok(Mode::Destroy)
            }
            _ => Err(self.unexpected("expected mode `.`, `up` or `down`")),
        }
    }

    fn destination(&mut self, vars: &[String], pos: Pos) -> PResult<DestinationExpr> {
        match self.peek().clone() {
            Tok::New => {
                self.bump();
                self.expect(Tok::LParen)?;
                self.expect_self_vars(vars, "new")?;
                self.expect(Tok::RParen)?;
                Ok(DestinationExpr::New)
            }
            Tok::NewV => {
                self.bump();
                self.expect(Tok::LParen)?;
                self.expect_self_vars(vars, "new_v")?;
                self.expect(Tok::RParen)?;
                Ok(DestinationExpr::NewOuter)
            }
            Tok::Dist => {
                self.bump();
                self.expect(Tok::LParen)?;
                let mut items = Vec::new();
                loop {
                    let loc = self.location_literal_item()?;
                    self.expect(Tok::LBracket)?;
                    let prob = self.expr(Some(vars))?;
                    self.expect(Tok::RBracket)?;
                    items.push((loc, prob));
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
                self.expect(Tok::RParen)?;
                Ok(DestinationExpr::Empirical(items))
            }
            _ => {
                let atoms = self.loc_atoms_until_rparen()?;
                self.classify_destination(atoms, vars, pos)
            }
        }
    }

    fn classify_destination(
        &self,
        atoms: Vec<LocAtom>,
        vars: &[String],
        pos: Pos,
    ) -> PResult<DestinationExpr> {
        if atoms.is_empty() || atoms.len() > 3 {
            return Err(Diagnostic::error(
                "destination must have 1 to 3 coordinates",
                Some(pos),
            ));
        }
        if atoms.iter().all(|a| matches!(a, LocAtom::Int(_))) {
            return Ok(DestinationExpr::Literal(atoms_to_location(&atoms)));
        }
        if atoms.iter().all(|a| matches!(a, LocAtom::Var(_))) {
            let names: Vec<&str> = atoms
                .iter()
                .map(|a| match a {
                    LocAtom::Var(v) => v.as_str(),
                    LocAtom::Int(_) => unreachable!(),
                })
                .collect();
            if names.len() == vars.len() && names.iter().zip(vars).all(|(a, b)| *a == b) {
                return Ok(DestinationExpr::Same);
            }
            return Err(Diagnostic::error(
                format!(
                    "destination variables ({}) do not match the agent's location variables ({})",
                    names.join(","),
                    vars.join(",")
                ),
                Some(pos),
            ));
        }
        Err(Diagnostic::error(
            "destination must be the agent's location variables, a literal location, new(...), new_v(...) or dist(...)",
            Some(pos),
        ))
    }

    fn expect_self_vars(&mut self, vars: &[String], fun: &str) -> PResult<()> {
        let pos = self.pos();
        let atoms = self.loc_atoms_until_rparen()?;
        let names: Vec<String> = atoms
            .iter()
            .filter_map(|a| match a {
                LocAtom::Var(v) => Some(v.clone()),
                LocAtom::Int(_) => None,
            })
            .collect();
        if names.len() != atoms.len() || names.len() != vars.len()
            || names.iter().zip(vars).any(|(a, b)| a != b)
        {
            return Err(Diagnostic::error(
                format!(
                    "`{fun}` takes the agent's location variables ({})",
                    vars.join(",")
                ),
                Some(pos),
            ));
        }
        Ok(())
    }

    /// Comma-separated location atoms, stopping before `)`. Accepts an
    /// optional surrounding parenthesis pair for tuple forms.
    fn loc_atoms_until_rparen(&mut self) -> PResult<Vec<LocAtom>> {
        let mut atoms = Vec::new();
        let parenthesized = self.eat(&Tok::LParen);
        loop {
            match self.peek().clone() {
                Tok::Int(v) => {
                    self.bump();
                    atoms.push(LocAtom::Int(v));
                }
                Tok::Ident(name) => {
                    self.bump();
                    atoms.push(LocAtom::Var(name));
                }
                _ => return Err(self.unexpected("expected a location coordinate")),
            }
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        if parenthesized {
            self.expect(Tok::RParen)?;
        }
        Ok(atoms)
    }

    /// One location literal: `3` or `(0,1)` or `(0,0,2)`.
    fn location_literal_item(&mut self) -> PResult<Location> {
        let pos = self.pos();
        if self.eat(&Tok::LParen) {
            let mut ints = Vec::new();
            loop {
                let (v, _) = self.expect_int("location coordinate")?;
                ints.push(v);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
            self.expect(Tok::RParen)?;
            if ints.len() < 2 || ints.len() > 3 {
                return Err(Diagnostic::error(
                    "location tuples have 2 or 3 coordinates",
                    Some(pos),
                ));
            }
            Ok(if ints.len() == 2 {
                Location::Two(ints[0], ints[1])
            } else {
                Location::Three(ints[0], ints[1], ints[2])
            })
        } else {
            let (v, _) = self.expect_int("location")?;
            Ok(Location::One(v))
        }
    }

    fn location_set(&mut self, vars: Option<&[String]>) -> PResult<LocationSetExpr> {
        self.expect(Tok::LBrace)?;
        if self.eat(&Tok::All) {
            self.expect(Tok::RBrace)?;
            return Ok(LocationSetExpr::All);
        }
        let pos = self.pos();
        // Either the agent's own variables (-> Here) or literal locations.
        let mut literals = Vec::new();
        let mut var_names: Vec<String> = Vec::new();
        loop {
            match self.peek().clone() {
                Tok::Int(_) => literals.push(self.location_literal_item()?),
                Tok::LParen => {
                    // tuple of ints or of variables
                    let save = self.at;
                    self.bump();
                    let atoms = {
                        let mut atoms = Vec::new();
                        loop {
                            match self.peek().clone() {
                                Tok::Int(v) => {
                                    self.bump();
                                    atoms.push(LocAtom::Int(v));
                                }
                                Tok::Ident(name) => {
                                    self.bump();
                                    atoms.push(LocAtom::Var(name));
                                }
                                _ => return Err(self.unexpected("expected a location coordinate")),
                            }
                            if !self.eat(&Tok::Comma) {
                                break;
                            }
                        }
                        self.expect(Tok::RParen)?;
                        atoms
                    };
                    if atoms.iter().all(|a| matches!(a, LocAtom::Int(_))) {
                        if atoms.len() < 2 || atoms.len() > 3 {
                            return Err(Diagnostic::error(
                                "location tuples have 2 or 3 coordinates",
                                Some(pos),
                            ));
                        }
                        literals.push(atoms_to_location(&atoms));
                    } else if atoms.iter().all(|a| matches!(a, LocAtom::Var(_))) {
                        var_names = atoms
                            .iter()
                            .map(|a| match a {
                                LocAtom::Var(v) => v.clone(),
                                LocAtom::Int(_) => unreachable!(),
                            })
                            .collect();
                    } else {
                        self.at = save;
                        return Err(Diagnostic::error(
                            "target locations mix variables and literals",
                            Some(pos),
                        ));
                    }
                }
                Tok::Ident(name) => {
                    self.bump();
                    var_names.push(name);
                }
                _ => return Err(self.unexpected("expected a target location or `all`")),
            }
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(Tok::RBrace)?;

        if !var_names.is_empty() {
            if !literals.is_empty() {
                return Err(Diagnostic::error(
                    "target locations mix variables and literals",
                    Some(pos),
                ));
            }
            match vars {
                Some(vars)
                    if var_names.len() == vars.len()
                        && var_names.iter().zip(vars).all(|(a, b)| a == b) =>
                {
                    Ok(LocationSetExpr::Here)
                }
                Some(vars) => Err(Diagnostic::error(
                    format!(
                        "target variables ({}) do not match the agent's location variables ({})",
                        var_names.join(","),
                        vars.join(",")
                    ),
                    Some(pos),
                )),
                None => Err(Diagnostic::error(
                    "environment factors have no location; target sets must be literal locations or `all`",
                    Some(pos),
                )),
            }
        } else {
            Ok(LocationSetExpr::ExplicitList(literals))
        }
    }

    // -- environment factors ------------------------------------------------

    fn env_factor(&mut self) -> PResult<EnvDef> {
        self.expect(Tok::Env)?;
        let (name, pos) = self.expect_ident("environment factor name")?;
        self.expect(Tok::Eq)?;
        self.expect(Tok::Arrow)?;
        let target = self.location_set(None)?;
        self.expect(Tok::LParen)?;
        let (action, _) = self.expect_ident("action name")?;
        self.expect(Tok::Comma)?;
        let rate = self.expr(None)?;
        self.expect(Tok::RParen)?;
        let mode_pos = self.pos();
        let mode = self.mode()?;
        if mode != Mode::Keep {
            return Err(Diagnostic::error(
                "environment factors cannot change the population (mode must be `.`)",
                Some(mode_pos),
            ));
        }
        let (cont, cpos) = self.expect_ident("environment factor continuation")?;
        if cont != name {
            return Err(Diagnostic::error(
                format!("environment factor `{name}` must continue as itself, found `{cont}`"),
                Some(cpos),
            ));
        }
        self.expect(Tok::Semi)?;
        Ok(EnvDef {
            name,
            action,
            target,
            rate,
            pos: pos.into(),
        })
    }

    // -- init ---------------------------------------------------------------

    fn init_block(&mut self) -> PResult<Vec<InitEntry>> {
        self.expect(Tok::Init)?;
        self.expect(Tok::Eq)?;
        let mut entries = Vec::new();
        loop {
            let (name, pos) = self.expect_ident("agent or environment factor name")?;
            let location = if self.eat(&Tok::LParen) {
                let atoms = self.loc_atoms_until_rparen()?;
                self.expect(Tok::RParen)?;
                if !atoms.iter().all(|a| matches!(a, LocAtom::Int(_)))
                    || atoms.is_empty()
                    || atoms.len() > 3
                {
                    return Err(Diagnostic::error(
                        "init locations must be literal",
                        Some(pos),
                    ));
                }
                Some(atoms_to_location(&atoms))
            } else {
                None
            };
            let multiplicity = if self.eat(&Tok::LBracket) {
                let (n, npos) = self.expect_int("multiplicity")?;
                self.expect(Tok::RBracket)?;
                if n < 1 {
                    return Err(Diagnostic::error(
                        "multiplicity must be a positive integer",
                        Some(npos),
                    ));
                }
                n as u64
            } else {
                1
            };
            entries.push(InitEntry {
                name,
                location,
                multiplicity,
                pos: pos.into(),
            });
            if !self.eat(&Tok::Pipe) {
                break;
            }
        }
        self.expect(Tok::Semi)?;
        Ok(entries)
    }

    // -- expressions ----------------------------------------------------------

    fn expr(&mut self, vars: Option<&[String]>) -> PResult<RateExpr> {
        let mut lhs = self.mul_expr(vars)?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.mul_expr(vars)?;
            lhs = RateExpr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn mul_expr(&mut self, vars: Option<&[String]>) -> PResult<RateExpr> {
        let mut lhs = self.atom_expr(vars)?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => break,
            };
            self.bump();
            let rhs = self.atom_expr(vars)?;
            lhs = RateExpr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn atom_expr(&mut self, vars: Option<&[String]>) -> PResult<RateExpr> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(RateExpr::Num(v as f64))
            }
            Tok::Float(v) => {
                self.bump();
                Ok(RateExpr::Num(v))
            }
            Tok::Ident(name) => {
                self.bump();
                Ok(RateExpr::Param(name))
            }
            Tok::Hash => {
                self.bump();
                let (agent, _) = self.expect_ident("agent name in count term")?;
                self.expect(Tok::LParen)?;
                let atoms = self.loc_atoms_until_rparen()?;
                self.expect(Tok::RParen)?;
                let loc = self.classify_count_loc(atoms, vars, pos)?;
                Ok(RateExpr::Count { agent, loc })
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr(vars)?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Min | Tok::Max => {
                let is_min = matches!(self.peek(), Tok::Min);
                self.bump();
                self.expect(Tok::LParen)?;
                let a = self.expr(vars)?;
                self.expect(Tok::Comma)?;
                let b = self.expr(vars)?;
                self.expect(Tok::RParen)?;
                Ok(if is_min {
                    RateExpr::Min(Box::new(a), Box::new(b))
                } else {
                    RateExpr::Max(Box::new(a), Box::new(b))
                })
            }
            _ => Err(self.unexpected("expected a rate expression")),
        }
    }

    fn classify_count_loc(
        &self,
        atoms: Vec<LocAtom>,
        vars: Option<&[String]>,
        pos: Pos,
    ) -> PResult<CountLoc> {
        if atoms.is_empty() || atoms.len() > 3 {
            return Err(Diagnostic::error(
                "count location must have 1 to 3 coordinates",
                Some(pos),
            ));
        }
        if atoms.iter().all(|a| matches!(a, LocAtom::Int(_))) {
            return Ok(CountLoc::Lit(atoms_to_location(&atoms)));
        }
        if atoms.iter().all(|a| matches!(a, LocAtom::Var(_))) {
            let names: Vec<&str> = atoms
                .iter()
                .map(|a| match a {
                    LocAtom::Var(v) => v.as_str(),
                    LocAtom::Int(_) => unreachable!(),
                })
                .collect();
            if let Some(vars) = vars {
                if names.len() == vars.len() && names.iter().zip(vars).all(|(a, b)| *a == b) {
                    return Ok(CountLoc::Here);
                }
            }
            return Err(Diagnostic::error(
                match vars {
                    Some(vars) => format!(
                        "count location variables ({}) do not match the agent's location variables ({})",
                        names.join(","),
                        vars.join(",")
                    ),
                    None => "count locations in environment factors must be literal".to_string(),
                },
                Some(pos),
            ));
        }
        Err(Diagnostic::error(
            "count location mixes variables and literals",
            Some(pos),
        ))
    }
}

fn atoms_to_location(atoms: &[LocAtom]) -> Location {
    let ints: Vec<i64> = atoms
        .iter()
        .map(|a| match a {
            LocAtom::Int(v) => *v,
            LocAtom::Var(_) => unreachable!("caller checked all-int"),
        })
        .collect();
    match ints.len() {
        1 => Location::One(ints[0]),
        2 => Location::Two(ints[0], ints[1]),
        _ => Location::Three(ints[0], ints[1], ints[2]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SI: &str = r#"
// two-cell SI epidemic
param b = 0.1;
param dS = 0.05;
param dI = 0.1;
param mS = 0.5;
param mI = 0.5;
param c = 0.4;
param p = 0.6;

space line(2) boundary=periodic neighbourhood=vonneumann;

agent S(l) =
      (birth, b) up S(l)
    + (deathS, dS) down S(l)
    + (moveS, mS) . S(new(l))
    + <-(contact, p) . I(l);

agent I(l) =
      (deathI, dI) down I(l)
    + (moveI, mI) . I(new(l))
    + ->{l}(contact, c) . I(l);

init = S(1)[2] | S(2)[1] | I(1)[1];
"#;

    #[test]
    fn parses_si_model() {
        let m = parse_model(SI).unwrap();
        assert_eq!(m.agents.len(), 2);
        assert_eq!(m.env_factors.len(), 0);
        assert_eq!(m.init.len(), 3);
        assert_eq!(m.init[0].multiplicity, 2);
        assert_eq!(m.init[2].location, Some(Location::One(1)));
        let s = m.agent("S").unwrap();
        assert_eq!(s.body.prefixes().len(), 4);
        let contact = &s.body.prefixes()[3];
        assert_eq!(contact.action.kind, ActionKind::Passive);
        assert_eq!(contact.target, "I");
        let i = m.agent("I").unwrap();
        let inf = &i.body.prefixes()[2];
        assert_eq!(inf.action.kind, ActionKind::Influence(LocationSetExpr::Here));
    }

    #[test]
    fn nil_body_parses() {
        let m = parse_model(
            "space graph { 1: []; }\nagent A(l) = nil;\ninit = A(1)[1];",
        )
        .unwrap();
        assert_eq!(m.agents[0].body, ProcessTerm::Nil);
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_model("agent = ;").unwrap_err();
        assert!(err[0].message.contains("expected agent name"));
        assert_eq!(err[0].pos.unwrap().line, 1);
    }

    #[test]
    fn duplicate_param_rejected() {
        let err =
            parse_model("param a = 1; param a = 2; space line(1); init = X(1);").unwrap_err();
        assert!(err.iter().any(|d| d.message.contains("duplicate")));
    }

    #[test]
    fn env_must_continue_as_itself() {
        let src = "space grid2d(2,2);\nenv E = ->{(0,0)}(touch, 1.0) . F;\ninit = E;";
        let err = parse_model(src).unwrap_err();
        assert!(err[0].message.contains("must continue as itself"));
    }

    #[test]
    fn choice_is_right_nested() {
        let m = parse_model(
            "space line(1);\nagent A(l) = (a,1) . A(l) + (b,1) . A(l) + (c,1) . A(l);\ninit = A(1);",
        )
        .unwrap();
        match &m.agents[0].body {
            ProcessTerm::Choice(l, r) => {
                assert!(matches!(**l, ProcessTerm::Prefix(_)));
                assert!(matches!(**r, ProcessTerm::Choice(..)));
            }
            other => panic!("expected choice, got {other:?}"),
        }
    }

    #[test]
    fn explicit_target_list_parses() {
        let src =
            "space grid2d(2,2);\nenv E = ->{(0,0),(0,1)}(contactE, 0.3) . E;\ninit = E;";
        let m = parse_model(src).unwrap();
        assert_eq!(
            m.env_factors[0].target,
            LocationSetExpr::ExplicitList(vec![Location::Two(0, 0), Location::Two(0, 1)])
        );
    }

    #[test]
    fn dist_destination_parses() {
        let src = "space line(2);\nagent A(l) = (hop, 1.0) . A(dist(1[0.5], 2[0.5]));\ninit = A(1);";
        let m = parse_model(src).unwrap();
        let p = &m.agents[0].body.prefixes()[0];
        match &p.destination {
            DestinationExpr::Empirical(items) => assert_eq!(items.len(), 2),
            other => panic!("expected dist, got {other:?}"),
        }
    }
}

//! Rate and probability expressions.
//!
//! Rates, passive probabilities and empirical movement probabilities are all
//! expressions over real literals, declared parameters, and agent counts
//! `#Agent(loc)`, combined with `+ - * /`, `min` and `max`. Evaluation is a
//! pure function of the expression and the supplied environment, so every
//! caller (exact simulation, state-space enumeration, fluid ODE) shares one
//! arithmetic path.

use std::fmt;

use thiserror::Error;

use crate::space::Location;

/// Location argument of a count term `#Agent(loc)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CountLoc {
    /// The acting agent's own location (written with the agent's location
    /// variables, e.g. `#S(l)` inside `agent S(l) = ...`).
    Here,
    Lit(Location),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

/// Expression tree for rates and probabilities.
#[derive(Debug, Clone, PartialEq)]
pub enum RateExpr {
    Num(f64),
    Param(String),
    /// `#Agent(loc)`: number of agents in the given state and location.
    Count { agent: String, loc: CountLoc },
    Binary {
        op: BinOp,
        lhs: Box<RateExpr>,
        rhs: Box<RateExpr>,
    },
    Min(Box<RateExpr>, Box<RateExpr>),
    Max(Box<RateExpr>, Box<RateExpr>),
}

impl RateExpr {
    pub fn num(v: f64) -> Self {
        RateExpr::Num(v)
    }

    pub fn param(name: impl Into<String>) -> Self {
        RateExpr::Param(name.into())
    }

    /// Walk the tree, visiting every node.
    pub fn visit(&self, f: &mut impl FnMut(&RateExpr)) {
        f(self);
        match self {
            RateExpr::Binary { lhs, rhs, .. }
            | RateExpr::Min(lhs, rhs)
            | RateExpr::Max(lhs, rhs) => {
                lhs.visit(f);
                rhs.visit(f);
            }
            _ => {}
        }
    }

    /// True when the expression references no counts (value is state
    /// independent).
    pub fn is_constant(&self) -> bool {
        let mut constant = true;
        self.visit(&mut |e| {
            if matches!(e, RateExpr::Count { .. }) {
                constant = false;
            }
        });
        constant
    }

    /// True when the expression contains `min` or `max`, the only sources
    /// of non-smoothness.
    pub fn has_min_max(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| {
            if matches!(e, RateExpr::Min(..) | RateExpr::Max(..)) {
                found = true;
            }
        });
        found
    }

    fn precedence(&self) -> u8 {
        match self {
            RateExpr::Binary { op, .. } => op.precedence(),
            _ => 3,
        }
    }
}

impl RateExpr {
    /// Render the expression as concrete syntax. `here_vars` supplies the
    /// enclosing agent's location variables so that a count term at the
    /// agent's own location prints as e.g. `#S(l)` and reparses to the same
    /// tree; outside an agent context `@` is used as a placeholder.
    pub fn render(&self, here_vars: Option<&[String]>) -> String {
        let mut s = String::new();
        self.render_into(&mut s, here_vars);
        s
    }

    fn render_into(&self, out: &mut String, here_vars: Option<&[String]>) {
        use std::fmt::Write;
        match self {
            RateExpr::Num(v) => {
                let _ = write!(out, "{v}");
            }
            RateExpr::Param(p) => out.push_str(p),
            RateExpr::Count { agent, loc } => {
                let _ = write!(out, "#{agent}(");
                match loc {
                    CountLoc::Here => match here_vars {
                        Some(vars) => out.push_str(&vars.join(",")),
                        None => out.push('@'),
                    },
                    CountLoc::Lit(Location::One(a)) => {
                        let _ = write!(out, "{a}");
                    }
                    CountLoc::Lit(Location::Two(a, b)) => {
                        let _ = write!(out, "{a},{b}");
                    }
                    CountLoc::Lit(Location::Three(a, b, c)) => {
                        let _ = write!(out, "{a},{b},{c}");
                    }
                }
                out.push(')');
            }
            RateExpr::Binary { op, lhs, rhs } => {
                let prec = op.precedence();
                if lhs.precedence() < prec {
                    out.push('(');
                    lhs.render_into(out, here_vars);
                    out.push(')');
                } else {
                    lhs.render_into(out, here_vars);
                }
                let _ = write!(out, " {} ", op.symbol());
                // Parsing is left associative, so a right operand on the
                // same precedence level keeps its parentheses; otherwise the
                // reparsed tree would change shape.
                let rhs_needs = rhs.precedence() <= prec;
                if rhs_needs {
                    out.push('(');
                    rhs.render_into(out, here_vars);
                    out.push(')');
                } else {
                    rhs.render_into(out, here_vars);
                }
            }
            RateExpr::Min(a, b) => {
                out.push_str("min(");
                a.render_into(out, here_vars);
                out.push_str(", ");
                b.render_into(out, here_vars);
                out.push(')');
            }
            RateExpr::Max(a, b) => {
                out.push_str("max(");
                a.render_into(out, here_vars);
                out.push_str(", ");
                b.render_into(out, here_vars);
                out.push(')');
            }
        }
    }
}

impl fmt::Display for RateExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(None))
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("unknown agent `{0}` in count term")]
    UnknownAgent(String),
    #[error("count term uses the agent's own location outside an agent context")]
    HereUnavailable,
    #[error("division by zero")]
    DivisionByZero,
    #[error("expression evaluated to negative value {0}")]
    Negative(f64),
    #[error("expression evaluated to a non-finite value")]
    NonFinite,
    #[error("probability {0} outside [0,1]")]
    ProbabilityOutOfRange(f64),
}

/// Environment an expression is evaluated against.
pub trait ExprEnv {
    fn param(&self, name: &str) -> Option<f64>;
    fn count(&self, agent: &str, loc: &CountLoc) -> Result<f64, EvalError>;
}

fn eval_node(expr: &RateExpr, env: &impl ExprEnv) -> Result<f64, EvalError> {
    match expr {
        RateExpr::Num(v) => Ok(*v),
        RateExpr::Param(name) => env
            .param(name)
            .ok_or_else(|| EvalError::UnknownParam(name.clone())),
        RateExpr::Count { agent, loc } => env.count(agent, loc),
        RateExpr::Binary { op, lhs, rhs } => {
            let a = eval_node(lhs, env)?;
            let b = eval_node(rhs, env)?;
            match op {
                BinOp::Add => Ok(a + b),
                BinOp::Sub => Ok(a - b),
                BinOp::Mul => Ok(a * b),
                BinOp::Div => {
                    if b == 0.0 {
                        Err(EvalError::DivisionByZero)
                    } else {
                        Ok(a / b)
                    }
                }
            }
        }
        RateExpr::Min(a, b) => Ok(eval_node(a, env)?.min(eval_node(b, env)?)),
        RateExpr::Max(a, b) => Ok(eval_node(a, env)?.max(eval_node(b, env)?)),
    }
}

/// Evaluate an expression to a finite, nonnegative real.
pub fn eval(expr: &RateExpr, env: &impl ExprEnv) -> Result<f64, EvalError> {
    let v = eval_node(expr, env)?;
    if !v.is_finite() {
        return Err(EvalError::NonFinite);
    }
    if v < 0.0 {
        return Err(EvalError::Negative(v));
    }
    Ok(v)
}

/// Evaluate a probability expression, additionally requiring the result to
/// lie in `[0, 1]`.
pub fn eval_probability(expr: &RateExpr, env: &impl ExprEnv) -> Result<f64, EvalError> {
    let v = eval(expr, env)?;
    if v > 1.0 {
        return Err(EvalError::ProbabilityOutOfRange(v));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    struct MapEnv {
        params: BTreeMap<String, f64>,
        counts: BTreeMap<(String, Location), u64>,
    }

    impl ExprEnv for MapEnv {
        fn param(&self, name: &str) -> Option<f64> {
            self.params.get(name).copied()
        }
        fn count(&self, agent: &str, loc: &CountLoc) -> Result<f64, EvalError> {
            match loc {
                CountLoc::Here => Err(EvalError::HereUnavailable),
                CountLoc::Lit(l) => Ok(self
                    .counts
                    .get(&(agent.to_string(), *l))
                    .copied()
                    .unwrap_or(0) as f64),
            }
        }
    }

    fn env() -> MapEnv {
        let mut counts = BTreeMap::new();
        counts.insert(("S".to_string(), Location::One(1)), 2);
        counts.insert(("I".to_string(), Location::One(1)), 1);
        MapEnv {
            params: BTreeMap::new(),
            counts,
        }
    }

    fn count(agent: &str, l: i64) -> RateExpr {
        RateExpr::Count {
            agent: agent.into(),
            loc: CountLoc::Lit(Location::One(l)),
        }
    }

    #[test]
    fn literal_evaluates_to_itself() {
        assert_eq!(eval(&RateExpr::Num(0.3), &env()).unwrap(), 0.3);
    }

    #[test]
    fn count_times_scalar() {
        let e = RateExpr::Binary {
            op: BinOp::Mul,
            lhs: Box::new(count("S", 1)),
            rhs: Box::new(RateExpr::Num(0.5)),
        };
        assert_eq!(eval(&e, &env()).unwrap(), 1.0);
    }

    #[test]
    fn count_ratio() {
        let e = RateExpr::Binary {
            op: BinOp::Div,
            lhs: Box::new(count("I", 1)),
            rhs: Box::new(RateExpr::Binary {
                op: BinOp::Add,
                lhs: Box::new(count("S", 1)),
                rhs: Box::new(count("I", 1)),
            }),
        };
        assert_eq!(eval(&e, &env()).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn missing_count_is_zero() {
        assert_eq!(eval(&count("S", 2), &env()).unwrap(), 0.0);
    }

    #[test]
    fn division_by_zero_is_an_error() {
        let e = RateExpr::Binary {
            op: BinOp::Div,
            lhs: Box::new(RateExpr::Num(1.0)),
            rhs: Box::new(count("S", 2)),
        };
        assert_eq!(eval(&e, &env()), Err(EvalError::DivisionByZero));
    }

    #[test]
    fn negative_result_is_an_error() {
        let e = RateExpr::Binary {
            op: BinOp::Sub,
            lhs: Box::new(RateExpr::Num(1.0)),
            rhs: Box::new(RateExpr::Num(2.0)),
        };
        assert_eq!(eval(&e, &env()), Err(EvalError::Negative(-1.0)));
    }

    #[test]
    fn probability_above_one_rejected() {
        assert_eq!(
            eval_probability(&RateExpr::Num(1.5), &env()),
            Err(EvalError::ProbabilityOutOfRange(1.5))
        );
    }

    #[test]
    fn repeated_evaluation_is_stable() {
        let e = RateExpr::Binary {
            op: BinOp::Div,
            lhs: Box::new(count("I", 1)),
            rhs: Box::new(RateExpr::Num(3.0)),
        };
        let first = eval(&e, &env()).unwrap();
        for _ in 0..10 {
            assert_eq!(eval(&e, &env()).unwrap(), first);
        }
    }

    #[test]
    fn display_parenthesizes_by_precedence() {
        let e = RateExpr::Binary {
            op: BinOp::Mul,
            lhs: Box::new(RateExpr::Binary {
                op: BinOp::Add,
                lhs: Box::new(RateExpr::param("a")),
                rhs: Box::new(RateExpr::param("b")),
            }),
            rhs: Box::new(RateExpr::param("c")),
        };
        assert_eq!(e.to_string(), "(a + b) * c");
        let e = RateExpr::Binary {
            op: BinOp::Sub,
            lhs: Box::new(RateExpr::param("a")),
            rhs: Box::new(RateExpr::Binary {
                op: BinOp::Sub,
                lhs: Box::new(RateExpr::param("b")),
                rhs: Box::new(RateExpr::param("c")),
            }),
        };
        assert_eq!(e.to_string(), "a - (b - c)");
    }
}

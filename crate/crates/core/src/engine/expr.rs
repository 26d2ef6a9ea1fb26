//! Scalar expression language for predicates and projections: arithmetic,
//! comparisons, and three-valued logic over record field maps.
//!
//! Typing is checked once against a schema at plan time; evaluation never
//! fails at runtime. Null propagates through arithmetic and comparisons;
//! division by zero and integer overflow evaluate to Null.

use crate::model::{FieldMap, ScalarType, ScalarValue, Schema};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Eq => "=",
            BinaryOp::Ne => "<>",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::And => "AND",
            BinaryOp::Or => "OR",
        }
    }

    fn is_comparison(self) -> bool {
        matches!(
            self,
            BinaryOp::Eq | BinaryOp::Ne | BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge
        )
    }

    fn is_arithmetic(self) -> bool {
        matches!(self, BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul | BinaryOp::Div)
    }
}

/// Scalar builtins callable from expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarFunc {
    Greatest,
    Least,
}

impl ScalarFunc {
    pub fn name(self) -> &'static str {
        match self {
            ScalarFunc::Greatest => "GREATEST",
            ScalarFunc::Least => "LEAST",
        }
    }

    pub fn parse(name: &str) -> Option<ScalarFunc> {
        match name.to_ascii_uppercase().as_str() {
            "GREATEST" => Some(ScalarFunc::Greatest),
            "LEAST" => Some(ScalarFunc::Least),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Literal(ScalarValue),
    /// Canonical (upper-cased) field reference.
    Field(String),
    Unary { op: UnaryOp, expr: Box<Expr> },
    Binary { op: BinaryOp, left: Box<Expr>, right: Box<Expr> },
    Call { func: ScalarFunc, args: Vec<Expr> },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TypeError {
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("type mismatch: {0}")]
    Mismatch(String),
}

/// A static expression type; `None` stands for the untyped NULL literal,
/// which is compatible with everything.
pub type TypeInfo = Option<ScalarType>;

fn type_name(t: TypeInfo) -> &'static str {
    t.map_or("NULL", ScalarType::name)
}

fn is_numeric(t: TypeInfo) -> bool {
    matches!(t, None | Some(ScalarType::Int) | Some(ScalarType::Float))
}

fn join_numeric(a: TypeInfo, b: TypeInfo) -> TypeInfo {
    match (a, b) {
        (Some(ScalarType::Float), _) | (_, Some(ScalarType::Float)) => Some(ScalarType::Float),
        (Some(ScalarType::Int), _) | (_, Some(ScalarType::Int)) => Some(ScalarType::Int),
        _ => None,
    }
}

impl Expr {
    pub fn literal(v: ScalarValue) -> Expr {
        Expr::Literal(v)
    }

    pub fn field(name: &str) -> Expr {
        Expr::Field(crate::model::canonical_ident(name))
    }

    pub fn binary(op: BinaryOp, left: Expr, right: Expr) -> Expr {
        Expr::Binary { op, left: Box::new(left), right: Box::new(right) }
    }

    pub fn unary(op: UnaryOp, expr: Expr) -> Expr {
        Expr::Unary { op, expr: Box::new(expr) }
    }

    /// Every field name referenced anywhere in the expression.
    pub fn referenced_fields(&self, out: &mut Vec<String>) {
        match self {
            Expr::Literal(_) => {}
            Expr::Field(name) => {
                if !out.iter().any(|n| n == name) {
                    out.push(name.clone());
                }
            }
            Expr::Unary { expr, .. } => expr.referenced_fields(out),
            Expr::Binary { left, right, .. } => {
                left.referenced_fields(out);
                right.referenced_fields(out);
            }
            Expr::Call { args, .. } => {
                for a in args {
                    a.referenced_fields(out);
                }
            }
        }
    }

    /// Type-checks against `schema` and returns the static result type.
    pub fn infer_type(&self, schema: &Schema) -> Result<TypeInfo, TypeError> {
        match self {
            Expr::Literal(v) => Ok(v.scalar_type()),
            Expr::Field(name) => match schema.field(name) {
                Some(def) => Ok(Some(def.ty)),
                None => Err(TypeError::UnknownColumn(name.clone())),
            },
            Expr::Unary { op: UnaryOp::Neg, expr } => {
                let t = expr.infer_type(schema)?;
                if is_numeric(t) {
                    Ok(t)
                } else {
                    Err(TypeError::Mismatch(format!("cannot negate {}", type_name(t))))
                }
            }
            Expr::Unary { op: UnaryOp::Not, expr } => {
                let t = expr.infer_type(schema)?;
                match t {
                    None | Some(ScalarType::Bool) => Ok(Some(ScalarType::Bool)),
                    other => {
                        Err(TypeError::Mismatch(format!("NOT requires BOOL, found {}", type_name(other))))
                    }
                }
            }
            Expr::Binary { op, left, right } => {
                let lt = left.infer_type(schema)?;
                let rt = right.infer_type(schema)?;
                if op.is_arithmetic() {
                    if is_numeric(lt) && is_numeric(rt) {
                        Ok(join_numeric(lt, rt))
                    } else {
                        Err(TypeError::Mismatch(format!(
                            "cannot apply {} to {} and {}",
                            op.symbol(),
                            type_name(lt),
                            type_name(rt)
                        )))
                    }
                } else if op.is_comparison() {
                    let comparable = lt.is_none()
                        || rt.is_none()
                        || (is_numeric(lt) && is_numeric(rt))
                        || lt == rt;
                    if comparable {
                        Ok(Some(ScalarType::Bool))
                    } else {
                        Err(TypeError::Mismatch(format!(
                            "cannot compare {} with {}",
                            type_name(lt),
                            type_name(rt)
                        )))
                    }
                } else {
                    for t in [lt, rt] {
                        if !matches!(t, None | Some(ScalarType::Bool)) {
                            return Err(TypeError::Mismatch(format!(
                                "{} requires BOOL operands, found {}",
                                op.symbol(),
                                type_name(t)
                            )));
                        }
                    }
                    Ok(Some(ScalarType::Bool))
                }
            }
            Expr::Call { func, args } => {
                if args.len() < 2 {
                    return Err(TypeError::Mismatch(format!(
                        "{} takes at least two arguments",
                        func.name()
                    )));
                }
                let mut acc = None;
                for a in args {
                    let t = a.infer_type(schema)?;
                    if !is_numeric(t) {
                        return Err(TypeError::Mismatch(format!(
                            "{} requires numeric arguments, found {}",
                            func.name(),
                            type_name(t)
                        )));
                    }
                    acc = join_numeric(acc, t);
                }
                Ok(acc)
            }
        }
    }

    /// Evaluates against a record's field map. Must only be called on
    /// expressions that passed `infer_type`; missing fields and residual
    /// type surprises evaluate to Null rather than failing.
    pub fn eval(&self, value: &FieldMap) -> ScalarValue {
        match self {
            Expr::Literal(v) => v.clone(),
            Expr::Field(name) => value.get(name).cloned().unwrap_or(ScalarValue::Null),
            Expr::Unary { op: UnaryOp::Neg, expr } => match expr.eval(value) {
                ScalarValue::Int(i) => i.checked_neg().map_or(ScalarValue::Null, ScalarValue::Int),
                ScalarValue::Float(f) => ScalarValue::Float(-f),
                _ => ScalarValue::Null,
            },
            Expr::Unary { op: UnaryOp::Not, expr } => match expr.eval(value) {
                ScalarValue::Bool(b) => ScalarValue::Bool(!b),
                _ => ScalarValue::Null,
            },
            Expr::Binary { op, left, right } => match op {
                BinaryOp::And => match (left.eval(value), right.eval(value)) {
                    (ScalarValue::Bool(false), _) | (_, ScalarValue::Bool(false)) => {
                        ScalarValue::Bool(false)
                    }
                    (ScalarValue::Bool(true), ScalarValue::Bool(true)) => ScalarValue::Bool(true),
                    _ => ScalarValue::Null,
                },
                BinaryOp::Or => match (left.eval(value), right.eval(value)) {
                    (ScalarValue::Bool(true), _) | (_, ScalarValue::Bool(true)) => {
                        ScalarValue::Bool(true)
                    }
                    (ScalarValue::Bool(false), ScalarValue::Bool(false)) => {
                        ScalarValue::Bool(false)
                    }
                    _ => ScalarValue::Null,
                },
                _ if op.is_arithmetic() => {
                    eval_arithmetic(*op, left.eval(value), right.eval(value))
                }
                _ => eval_comparison(*op, left.eval(value), right.eval(value)),
            },
            Expr::Call { func, args } => {
                let mut best: Option<ScalarValue> = None;
                for a in args {
                    let v = a.eval(value);
                    if v.is_null() {
                        return ScalarValue::Null;
                    }
                    best = Some(match best {
                        None => v,
                        Some(current) => {
                            let keep_new = match compare_scalars(&v, &current) {
                                Some(ord) => match func {
                                    ScalarFunc::Greatest => ord.is_gt(),
                                    ScalarFunc::Least => ord.is_lt(),
                                },
                                None => false,
                            };
                            if keep_new {
                                v
                            } else {
                                current
                            }
                        }
                    });
                }
                best.unwrap_or(ScalarValue::Null)
            }
        }
    }
}

fn eval_arithmetic(op: BinaryOp, l: ScalarValue, r: ScalarValue) -> ScalarValue {
    use ScalarValue::{Float, Int};
    match (l, r) {
        (Int(a), Int(b)) => {
            let out = match op {
                BinaryOp::Add => a.checked_add(b),
                BinaryOp::Sub => a.checked_sub(b),
                BinaryOp::Mul => a.checked_mul(b),
                BinaryOp::Div => {
                    if b == 0 {
                        None
                    } else {
                        a.checked_div(b)
                    }
                }
                _ => unreachable!("arithmetic op"),
            };
            out.map_or(ScalarValue::Null, Int)
        }
        (Int(a), Float(b)) => eval_arithmetic(op, Float(a as f64), Float(b)),
        (Float(a), Int(b)) => eval_arithmetic(op, Float(a), Float(b as f64)),
        (Float(a), Float(b)) => match op {
            BinaryOp::Add => Float(a + b),
            BinaryOp::Sub => Float(a - b),
            BinaryOp::Mul => Float(a * b),
            BinaryOp::Div => {
                if b == 0.0 {
                    ScalarValue::Null
                } else {
                    Float(a / b)
                }
            }
            _ => unreachable!("arithmetic op"),
        },
        _ => ScalarValue::Null,
    }
}

/// Total order within a type; Int and Float compare numerically across.
pub fn compare_scalars(a: &ScalarValue, b: &ScalarValue) -> Option<std::cmp::Ordering> {
    use ScalarValue::{Bool, Float, Int, Text, Timestamp};
    match (a, b) {
        (Int(x), Int(y)) => Some(x.cmp(y)),
        (Int(x), Float(y)) => (*x as f64).partial_cmp(y),
        (Float(x), Int(y)) => x.partial_cmp(&(*y as f64)),
        (Float(x), Float(y)) => x.partial_cmp(y),
        (Text(x), Text(y)) => Some(x.cmp(y)),
        (Bool(x), Bool(y)) => Some(x.cmp(y)),
        (Timestamp(x), Timestamp(y)) => Some(x.cmp(y)),
        _ => None,
    }
}

fn eval_comparison(op: BinaryOp, l: ScalarValue, r: ScalarValue) -> ScalarValue {
    if l.is_null() || r.is_null() {
        return ScalarValue::Null;
    }
    match compare_scalars(&l, &r) {
        None => ScalarValue::Null,
        Some(ord) => ScalarValue::Bool(match op {
            BinaryOp::Eq => ord.is_eq(),
            BinaryOp::Ne => ord.is_ne(),
            BinaryOp::Lt => ord.is_lt(),
            BinaryOp::Le => ord.is_le(),
            BinaryOp::Gt => ord.is_gt(),
            BinaryOp::Ge => ord.is_ge(),
            _ => unreachable!("comparison op"),
        }),
    }
}

/// Expressions evaluating to a list of scalars, consumed by FlatMap.
/// The only constructor splits a text field on a literal delimiter.
#[derive(Debug, Clone, PartialEq)]
pub enum ListExpr {
    Split { arg: Expr, delimiter: String },
}

impl ListExpr {
    pub fn infer_type(&self, schema: &Schema) -> Result<(), TypeError> {
        match self {
            ListExpr::Split { arg, .. } => match arg.infer_type(schema)? {
                None | Some(ScalarType::Text) => Ok(()),
                other => Err(TypeError::Mismatch(format!(
                    "SPLIT requires TEXT, found {}",
                    type_name(other)
                ))),
            },
        }
    }

    /// A Null input yields the empty list, so FlatMap emits nothing.
    pub fn eval(&self, value: &FieldMap) -> Vec<ScalarValue> {
        match self {
            ListExpr::Split { arg, delimiter } => match arg.eval(value) {
                ScalarValue::Text(s) => {
                    s.split(delimiter.as_str()).map(|p| ScalarValue::Text(p.to_string())).collect()
                }
                _ => Vec::new(),
            },
        }
    }
}

// Precedence levels for minimal-parenthesis printing, loosest first.
fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Binary { op: BinaryOp::Or, .. } => 1,
        Expr::Binary { op: BinaryOp::And, .. } => 2,
        Expr::Unary { op: UnaryOp::Not, .. } => 3,
        Expr::Binary { op, .. } if op.is_comparison() => 4,
        Expr::Binary { op: BinaryOp::Add | BinaryOp::Sub, .. } => 5,
        Expr::Binary { .. } => 6,
        Expr::Unary { op: UnaryOp::Neg, .. } => 7,
        Expr::Literal(_) | Expr::Field(_) | Expr::Call { .. } => 8,
    }
}

fn fmt_child(f: &mut fmt::Formatter<'_>, child: &Expr, min: u8) -> fmt::Result {
    if precedence(child) < min {
        write!(f, "({child})")
    } else {
        write!(f, "{child}")
    }
}

impl fmt::Display for Expr {
    /// Prints in query syntax; the printed form reparses to an equal tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Literal(v) => match v {
                ScalarValue::Null => write!(f, "NULL"),
                ScalarValue::Bool(true) => write!(f, "TRUE"),
                ScalarValue::Bool(false) => write!(f, "FALSE"),
                ScalarValue::Int(i) => write!(f, "{i}"),
                // Debug form always keeps a decimal point or exponent, so
                // the literal reparses as a float, not an integer.
                ScalarValue::Float(x) => write!(f, "{x:?}"),
                ScalarValue::Text(s) => write!(f, "'{}'", s.replace('\'', "''")),
                ScalarValue::Timestamp(ms) => write!(f, "{ms}"),
            },
            Expr::Field(name) => write!(f, "{name}"),
            Expr::Unary { op: UnaryOp::Neg, expr } => {
                write!(f, "-")?;
                fmt_child(f, expr, 8)
            }
            Expr::Unary { op: UnaryOp::Not, expr } => {
                write!(f, "NOT ")?;
                fmt_child(f, expr, 4)
            }
            Expr::Binary { op, left, right } => {
                let p = precedence(self);
                fmt_child(f, left, p)?;
                write!(f, " {} ", op.symbol())?;
                fmt_child(f, right, p + 1)
            }
            Expr::Call { func, args } => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

//! Static validation and integer evaluation.

use std::collections::{BTreeMap, HashSet};

use super::ast::*;
use super::printer::print_expr;
use super::token::Loc;
use super::DslError;

/// Built-in identifiers.
pub const NUM_TASKS: &str = "num_tasks";
pub const ELAPSED_USECS: &str = "elapsed_usecs";

/// Concrete parameter values, keyed by parameter name.
pub type Binding = BTreeMap<String, i64>;

/// A checked program together with the values it runs under.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedProgram {
    pub program: Program,
    pub num_tasks: u32,
    pub binding: Binding,
    /// Seed for `a random task other than` draws.
    pub seed: u64,
}

impl ValidatedProgram {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn env(&self) -> Env<'_> {
        Env { params: &self.binding, num_tasks: self.num_tasks as i64, local: None }
    }
}

/// Evaluation environment: parameters, `num_tasks` and at most one
/// statement-local task variable.
#[derive(Debug, Clone, Copy)]
pub struct Env<'a> {
    pub params: &'a Binding,
    pub num_tasks: i64,
    pub local: Option<(&'a str, i64)>,
}

impl<'a> Env<'a> {
    pub fn bind(self, var: Option<&'a str>, value: i64) -> Env<'a> {
        Env { local: var.map(|v| (v, value)), ..self }
    }

    fn lookup(&self, name: &str, loc: Loc) -> Result<i64, DslError> {
        if let Some((v, val)) = self.local {
            if v == name {
                return Ok(val);
            }
        }
        if name == NUM_TASKS {
            return Ok(self.num_tasks);
        }
        self.params
            .get(name)
            .copied()
            .ok_or_else(|| DslError::UnboundIdentifier { name: name.to_string(), loc })
    }
}

/// Checked 64-bit evaluation. `mod` is Euclidean, so the result is never
/// negative for a positive divisor.
pub fn eval(e: &Expr, env: &Env<'_>) -> Result<i64, DslError> {
    match e {
        Expr::Int(v, _) => Ok(*v),
        Expr::Var(name, loc) => env.lookup(name, *loc),
        Expr::Neg(inner, loc) => {
            eval(inner, env)?.checked_neg().ok_or(DslError::Overflow { loc: *loc })
        }
        Expr::Bin(op, a, b, loc) => {
            let (a, b) = (eval(a, env)?, eval(b, env)?);
            let r = match op {
                BinOp::Add => a.checked_add(b),
                BinOp::Sub => a.checked_sub(b),
                BinOp::Mul => a.checked_mul(b),
                BinOp::Div | BinOp::Mod if b == 0 => {
                    return Err(DslError::DivisionByZero { loc: *loc })
                }
                BinOp::Div => a.checked_div(b),
                BinOp::Mod => a.checked_rem_euclid(b),
            };
            r.ok_or(DslError::Overflow { loc: *loc })
        }
    }
}

/// Floating-point evaluation used only for log expressions, where
/// `elapsed_usecs` carries sub-microsecond precision.
pub fn eval_f64(e: &Expr, env: &Env<'_>, elapsed_usecs: f64) -> Result<f64, DslError> {
    match e {
        Expr::Int(v, _) => Ok(*v as f64),
        Expr::Var(name, _) if name == ELAPSED_USECS => Ok(elapsed_usecs),
        Expr::Var(name, loc) => env.lookup(name, *loc).map(|v| v as f64),
        Expr::Neg(inner, _) => Ok(-eval_f64(inner, env, elapsed_usecs)?),
        Expr::Bin(op, a, b, loc) => {
            let (a, b) = (eval_f64(a, env, elapsed_usecs)?, eval_f64(b, env, elapsed_usecs)?);
            Ok(match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div | BinOp::Mod if b == 0.0 => {
                    return Err(DslError::DivisionByZero { loc: *loc })
                }
                BinOp::Div => a / b,
                BinOp::Mod => a.rem_euclid(b),
            })
        }
    }
}

pub fn eval_cond(c: &Cond, env: &Env<'_>) -> Result<bool, DslError> {
    let (l, r) = (eval(&c.lhs, env)?, eval(&c.rhs, env)?);
    Ok(match c.op {
        RelOp::Lt => l < r,
        RelOp::Le => l <= r,
        RelOp::Gt => l > r,
        RelOp::Ge => l >= r,
        RelOp::Eq => l == r,
        RelOp::Ne => l != r,
    })
}

/// Evaluates `e` and requires a value in `min..`.
pub fn eval_at_least(e: &Expr, env: &Env<'_>, min: i64, what: &'static str) -> Result<i64, DslError> {
    let v = eval(e, env)?;
    if v < min {
        return Err(DslError::ValueOutOfRange { what, expr: print_expr(e), value: v, loc: e.loc() });
    }
    Ok(v)
}

pub fn size_bytes(size: &Size, env: &Env<'_>) -> Result<u64, DslError> {
    let amount = eval_at_least(&size.amount, env, 1, "message size")?;
    amount
        .checked_mul(size.unit.bytes())
        .map(|b| b as u64)
        .ok_or(DslError::Overflow { loc: size.amount.loc() })
}

pub fn duration_ns(d: &Duration, env: &Env<'_>) -> Result<u64, DslError> {
    let amount = eval_at_least(&d.amount, env, 0, "compute duration")?;
    amount
        .checked_mul(d.unit.micros())
        .and_then(|us| us.checked_mul(1000))
        .map(|ns| ns as u64)
        .ok_or(DslError::Overflow { loc: d.amount.loc() })
}

fn task_in_range(e: &Expr, v: i64, env: &Env<'_>) -> Result<u32, DslError> {
    if v < 0 || v >= env.num_tasks {
        return Err(DslError::TaskOutOfRange { expr: print_expr(e), value: v, loc: e.loc() });
    }
    Ok(v as u32)
}

/// Members of a task set in ascending order.
pub fn members(set: &TaskSet, env: &Env<'_>) -> Result<Vec<u32>, DslError> {
    match set {
        TaskSet::All { .. } => Ok((0..env.num_tasks as u32).collect()),
        TaskSet::Single(e) => Ok(vec![task_in_range(e, eval(e, env)?, env)?]),
        TaskSet::Range { lo, hi, .. } => {
            let l = task_in_range(lo, eval(lo, env)?, env)?;
            let h = eval(hi, env)?;
            if h < l as i64 {
                return Ok(Vec::new());
            }
            let h = task_in_range(hi, h, env)?;
            Ok((l..=h).collect())
        }
    }
}

/// Periodic ±1 neighbours of `task` in the X×Y×Z tile containing it, in
/// the order +x, −x, +y, −y, +z, −z. Dimensions of extent 1 contribute
/// nothing; extent 2 yields the same neighbour twice.
pub fn mesh_neighbors(task: u32, dims: [i64; 3]) -> Vec<i64> {
    let [x, y, z] = dims;
    let tile = x * y * z;
    let t = task as i64;
    let base = t - t % tile;
    let local = t % tile;
    let mut coord = [local % x, (local / x) % y, local / (x * y)];
    let stride = [1, x, x * y];
    let mut out = Vec::with_capacity(6);
    for d in 0..3 {
        if dims[d] < 2 {
            continue;
        }
        let orig = coord[d];
        for step in [1, dims[d] - 1] {
            coord[d] = (orig + step) % dims[d];
            out.push(base + coord[0] * stride[0] + coord[1] * stride[1] + coord[2] * stride[2]);
        }
        coord[d] = orig;
    }
    out
}

/// Resolves a non-random target for `sender`. Returns `None` for
/// [`Target::RandomOther`], which is drawn at execution time.
pub fn static_targets(
    target: &Target,
    env: &Env<'_>,
    sender: u32,
) -> Result<Option<Vec<u32>>, DslError> {
    match target {
        Target::Task(e) => Ok(Some(vec![task_in_range(e, eval(e, env)?, env)?])),
        Target::MeshNeighbors { x, y, z } => {
            let dims = [
                eval_at_least(x, env, 1, "mesh extent")?,
                eval_at_least(y, env, 1, "mesh extent")?,
                eval_at_least(z, env, 1, "mesh extent")?,
            ];
            let tile = dims[0].checked_mul(dims[1]).and_then(|v| v.checked_mul(dims[2]));
            let tile = tile.ok_or(DslError::Overflow { loc: x.loc() })?;
            if env.num_tasks % tile != 0 {
                return Err(DslError::TaskOutOfRange {
                    expr: format!("mesh({}, {}, {})", print_expr(x), print_expr(y), print_expr(z)),
                    value: tile,
                    loc: x.loc(),
                });
            }
            Ok(Some(mesh_neighbors(sender, dims).into_iter().map(|v| v as u32).collect()))
        }
        Target::RandomOther(_) => Ok(None),
    }
}

/// Validates `program` for `num_tasks` tasks with `overrides` replacing
/// parameter defaults.
pub fn check(
    program: &Program,
    num_tasks: u32,
    overrides: &Binding,
) -> Result<ValidatedProgram, DslError> {
    if num_tasks == 0 {
        return Err(DslError::ValueOutOfRange {
            what: "task count",
            expr: NUM_TASKS.into(),
            value: 0,
            loc: Loc::default(),
        });
    }
    let declared: HashSet<&str> = program.params.iter().map(|p| p.name.as_str()).collect();
    if let Some(name) = overrides.keys().find(|k| !declared.contains(k.as_str())) {
        return Err(DslError::UnknownParameter { name: name.clone() });
    }

    // Defaults may refer to num_tasks and earlier parameters.
    let mut binding = Binding::new();
    for p in &program.params {
        let v = match overrides.get(&p.name) {
            Some(v) => *v,
            None => {
                let env = Env { params: &binding, num_tasks: num_tasks as i64, local: None };
                eval(&p.default, &env)?
            }
        };
        binding.insert(p.name.clone(), v);
    }
    let env = Env { params: &binding, num_tasks: num_tasks as i64, local: None };
    for a in &program.asserts {
        if !eval_cond(&a.cond, &env)? {
            return Err(DslError::AssertionFailed { description: a.description.clone() });
        }
    }
    if program.body.is_empty() {
        return Err(DslError::EmptyProgram);
    }
    check_block(&program.body, &env)?;
    Ok(ValidatedProgram { program: program.clone(), num_tasks, binding, seed: 0 })
}

fn check_block(stmts: &[Stmt], env: &Env<'_>) -> Result<(), DslError> {
    for s in stmts {
        check_stmt(s, env)?;
    }
    Ok(())
}

fn reject_elapsed(e: &Expr) -> Result<(), DslError> {
    let mut found = None;
    e.each_var(&mut |name, loc| {
        if name == ELAPSED_USECS && found.is_none() {
            found = Some(loc);
        }
    });
    match found {
        Some(loc) => Err(DslError::RuntimeOnly { name: ELAPSED_USECS.into(), loc }),
        None => Ok(()),
    }
}

fn check_stmt(s: &Stmt, env: &Env<'_>) -> Result<(), DslError> {
    let for_each_member = |set: &TaskSet, f: &mut dyn FnMut(Env<'_>, u32) -> Result<(), DslError>| {
        for m in members(set, env)? {
            f(env.bind(set.var(), m as i64), m)?;
        }
        Ok::<(), DslError>(())
    };
    match &s.kind {
        StmtKind::Repeat { count, body } => {
            reject_elapsed(count)?;
            eval_at_least(count, env, 0, "repetition count")?;
            if body.is_empty() {
                return Err(DslError::EmptyBlock { loc: s.loc });
            }
            check_block(body, env)
        }
        StmtKind::Send { senders, count, size, target, .. } => {
            reject_elapsed(count)?;
            reject_elapsed(&size.amount)?;
            for_each_member(senders, &mut |env, me| {
                eval_at_least(count, &env, 0, "message count")?;
                size_bytes(size, &env)?;
                match static_targets(target, &env, me)? {
                    Some(targets) => {
                        if targets.contains(&me) {
                            return Err(DslError::SelfMessage { task: me, loc: s.loc });
                        }
                    }
                    None => {
                        let Target::RandomOther(other) = target else { unreachable!() };
                        task_in_range(other, eval(other, &env)?, &env)?;
                        if env.num_tasks < 2 {
                            return Err(DslError::ValueOutOfRange {
                                what: "task count for a random peer",
                                expr: NUM_TASKS.into(),
                                value: env.num_tasks,
                                loc: s.loc,
                            });
                        }
                    }
                }
                Ok(())
            })
        }
        StmtKind::Reduce { tasks, size, .. } => {
            reject_elapsed(&size.amount)?;
            members(tasks, env)?;
            size_bytes(size, env).map(|_| ())
        }
        StmtKind::Broadcast { root, tasks, size } => {
            reject_elapsed(&size.amount)?;
            let group = members(tasks, env)?;
            let r = task_in_range(root, eval(root, env)?, env)?;
            if !group.contains(&r) {
                return Err(DslError::TaskOutOfRange {
                    expr: print_expr(root),
                    value: r as i64,
                    loc: root.loc(),
                });
            }
            size_bytes(size, env).map(|_| ())
        }
        StmtKind::Compute { tasks, duration } => {
            reject_elapsed(&duration.amount)?;
            for_each_member(tasks, &mut |env, _| duration_ns(duration, &env).map(|_| ()))
        }
        StmtKind::Log { tasks, items } => for_each_member(tasks, &mut |env, _| {
            for item in items {
                eval_f64(&item.expr, &env, 0.0)?;
            }
            Ok(())
        }),
        StmtKind::Synchronize { tasks }
        | StmtKind::AwaitCompletion { tasks }
        | StmtKind::ResetCounters { tasks }
        | StmtKind::ComputeAggregates { tasks } => members(tasks, env).map(|_| ()),
    }
}

//! Syntax tree for workload programs.
//!
//! Every node carries its source [`Loc`]; [`Program::normalized`] zeroes them
//! so trees can be compared structurally.

use super::token::Loc;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub version: Option<String>,
    pub params: Vec<ParamDecl>,
    pub asserts: Vec<Assert>,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamDecl {
    pub name: String,
    pub description: String,
    pub long_flag: String,
    pub short_flag: Option<String>,
    pub default: Expr,
    pub loc: Loc,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assert {
    pub description: String,
    pub cond: Cond,
    pub loc: Loc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl RelOp {
    pub fn symbol(self) -> &'static str {
        match self {
            RelOp::Lt => "<",
            RelOp::Le => "<=",
            RelOp::Gt => ">",
            RelOp::Ge => ">=",
            RelOp::Eq => "=",
            RelOp::Ne => "<>",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cond {
    pub lhs: Expr,
    pub op: RelOp,
    pub rhs: Expr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "mod",
        }
    }

    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div | BinOp::Mod => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Int(i64, Loc),
    Var(String, Loc),
    Neg(Box<Expr>, Loc),
    Bin(BinOp, Box<Expr>, Box<Expr>, Loc),
}

impl Expr {
    pub fn loc(&self) -> Loc {
        match self {
            Expr::Int(_, l) | Expr::Var(_, l) | Expr::Neg(_, l) | Expr::Bin(_, _, _, l) => *l,
        }
    }

    pub fn int(v: i64) -> Expr {
        Expr::Int(v, Loc::default())
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string(), Loc::default())
    }

    pub fn bin(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Bin(op, Box::new(lhs), Box::new(rhs), Loc::default())
    }

    /// Calls `f` on every variable name referenced.
    pub fn each_var(&self, f: &mut impl FnMut(&str, Loc)) {
        match self {
            Expr::Int(..) => {}
            Expr::Var(name, loc) => f(name, *loc),
            Expr::Neg(e, _) => e.each_var(f),
            Expr::Bin(_, a, b, _) => {
                a.each_var(f);
                b.each_var(f);
            }
        }
    }

    fn normalize(&mut self) {
        match self {
            Expr::Int(_, l) | Expr::Var(_, l) => *l = Loc::default(),
            Expr::Neg(e, l) => {
                *l = Loc::default();
                e.normalize();
            }
            Expr::Bin(_, a, b, l) => {
                *l = Loc::default();
                a.normalize();
                b.normalize();
            }
        }
    }
}

/// A set of tasks. `var` names the per-member binding visible in the rest
/// of the statement (e.g. `all tasks t sends ... to task t+1`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaskSet {
    All { var: Option<String> },
    Single(Expr),
    Range { var: Option<String>, lo: Expr, hi: Expr },
}

impl TaskSet {
    pub fn var(&self) -> Option<&str> {
        match self {
            TaskSet::All { var } | TaskSet::Range { var, .. } => var.as_deref(),
            TaskSet::Single(_) => None,
        }
    }

    /// Whether the subject is grammatically plural (`tasks` vs `task`).
    pub fn is_plural(&self) -> bool {
        !matches!(self, TaskSet::Single(_))
    }

    fn normalize(&mut self) {
        match self {
            TaskSet::All { .. } => {}
            TaskSet::Single(e) => e.normalize(),
            TaskSet::Range { lo, hi, .. } => {
                lo.normalize();
                hi.normalize();
            }
        }
    }
}

/// Receivers of a point-to-point send, evaluated per sender.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Task(Expr),
    /// Periodic ±1 neighbours in an X×Y×Z mesh. Ranks beyond the first
    /// X·Y·Z tile the mesh again, each tile wrapping on itself.
    MeshNeighbors { x: Expr, y: Expr, z: Expr },
    /// One uniformly drawn task other than `other`, redrawn on every execution.
    RandomOther(Expr),
}

impl Target {
    fn normalize(&mut self) {
        match self {
            Target::Task(e) | Target::RandomOther(e) => e.normalize(),
            Target::MeshNeighbors { x, y, z } => {
                x.normalize();
                y.normalize();
                z.normalize();
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeUnit {
    Byte,
    Kibibyte,
    Mebibyte,
    Gibibyte,
}

impl SizeUnit {
    pub fn bytes(self) -> i64 {
        match self {
            SizeUnit::Byte => 1,
            SizeUnit::Kibibyte => 1 << 10,
            SizeUnit::Mebibyte => 1 << 20,
            SizeUnit::Gibibyte => 1 << 30,
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            SizeUnit::Byte => "byte",
            SizeUnit::Kibibyte => "kilobyte",
            SizeUnit::Mebibyte => "mebibyte",
            SizeUnit::Gibibyte => "gibibyte",
        }
    }
}

/// A message size: `amount` counted in `unit`s.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Size {
    pub amount: Expr,
    pub unit: SizeUnit,
}

impl Size {
    pub fn bytes(amount: Expr) -> Size {
        Size { amount, unit: SizeUnit::Byte }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeUnit {
    Microsecond,
    Millisecond,
}

impl TimeUnit {
    pub fn micros(self) -> i64 {
        match self {
            TimeUnit::Microsecond => 1,
            TimeUnit::Millisecond => 1000,
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            TimeUnit::Microsecond => "microseconds",
            TimeUnit::Millisecond => "milliseconds",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Duration {
    pub amount: Expr,
    pub unit: TimeUnit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendMode {
    Blocking,
    Nonblocking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceOp {
    AllReduce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Aggregate {
    Median,
    Mean,
    Minimum,
    Maximum,
}

impl Aggregate {
    pub fn name(self) -> &'static str {
        match self {
            Aggregate::Median => "median",
            Aggregate::Mean => "mean",
            Aggregate::Minimum => "minimum",
            Aggregate::Maximum => "maximum",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogItem {
    pub aggregate: Option<Aggregate>,
    pub expr: Expr,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StmtKind {
    Repeat {
        count: Expr,
        body: Vec<Stmt>,
    },
    Send {
        senders: TaskSet,
        count: Expr,
        size: Size,
        target: Target,
        mode: SendMode,
    },
    Reduce {
        tasks: TaskSet,
        size: Size,
        op: ReduceOp,
    },
    Broadcast {
        root: Expr,
        tasks: TaskSet,
        size: Size,
    },
    Compute {
        tasks: TaskSet,
        duration: Duration,
    },
    Synchronize {
        tasks: TaskSet,
    },
    AwaitCompletion {
        tasks: TaskSet,
    },
    ResetCounters {
        tasks: TaskSet,
    },
    Log {
        tasks: TaskSet,
        items: Vec<LogItem>,
    },
    ComputeAggregates {
        tasks: TaskSet,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub loc: Loc,
}

impl Stmt {
    pub fn new(kind: StmtKind) -> Stmt {
        Stmt { kind, loc: Loc::default() }
    }

    fn normalize(&mut self) {
        self.loc = Loc::default();
        match &mut self.kind {
            StmtKind::Repeat { count, body } => {
                count.normalize();
                body.iter_mut().for_each(Stmt::normalize);
            }
            StmtKind::Send { senders, count, size, target, .. } => {
                senders.normalize();
                count.normalize();
                size.amount.normalize();
                target.normalize();
            }
            StmtKind::Reduce { tasks, size, .. } => {
                tasks.normalize();
                size.amount.normalize();
            }
            StmtKind::Broadcast { root, tasks, size } => {
                root.normalize();
                tasks.normalize();
                size.amount.normalize();
            }
            StmtKind::Compute { tasks, duration } => {
                tasks.normalize();
                duration.amount.normalize();
            }
            StmtKind::Log { tasks, items } => {
                tasks.normalize();
                items.iter_mut().for_each(|i| i.expr.normalize());
            }
            StmtKind::Synchronize { tasks }
            | StmtKind::AwaitCompletion { tasks }
            | StmtKind::ResetCounters { tasks }
            | StmtKind::ComputeAggregates { tasks } => tasks.normalize(),
        }
    }
}

impl Program {
    /// A copy with every source location zeroed.
    pub fn normalized(&self) -> Program {
        let mut p = self.clone();
        for d in &mut p.params {
            d.loc = Loc::default();
            d.default.normalize();
        }
        for a in &mut p.asserts {
            a.loc = Loc::default();
            a.cond.lhs.normalize();
            a.cond.rhs.normalize();
        }
        p.body.iter_mut().for_each(Stmt::normalize);
        p
    }
}

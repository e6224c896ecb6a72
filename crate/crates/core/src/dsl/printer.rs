//! Canonical source rendering of a [`Program`].
//!
//! Output reparses to a structurally identical tree.

use std::fmt::Write;

use super::ast::*;

pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    if let Some(v) = &p.version {
        writeln!(out, "Require language version \"{v}\".").unwrap();
    }
    for d in &p.params {
        write!(out, "{} is \"{}\" and comes from \"{}\"", d.name, d.description, d.long_flag).unwrap();
        if let Some(s) = &d.short_flag {
            write!(out, " or \"{s}\"").unwrap();
        }
        writeln!(out, " with default {}.", print_expr(&d.default)).unwrap();
    }
    for a in &p.asserts {
        writeln!(
            out,
            "Assert that \"{}\" with {} {} {}.",
            a.description,
            print_expr(&a.cond.lhs),
            a.cond.op.symbol(),
            print_expr(&a.cond.rhs)
        )
        .unwrap();
    }
    for s in &p.body {
        print_stmt(&mut out, s, 0);
        out.push_str(".\n");
    }
    out
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn print_stmt(out: &mut String, s: &Stmt, depth: usize) {
    indent(out, depth);
    let verb = |set: &TaskSet, singular: &'static str, plural: &'static str| {
        if set.is_plural() { plural } else { singular }
    };
    match &s.kind {
        StmtKind::Repeat { count, body } => {
            writeln!(out, "For {} repetitions {{", print_expr(count)).unwrap();
            for (i, b) in body.iter().enumerate() {
                print_stmt(out, b, depth + 1);
                out.push_str(if i + 1 < body.len() { " then\n" } else { "\n" });
            }
            indent(out, depth);
            out.push('}');
        }
        StmtKind::Send { senders, count, size, target, mode } => {
            write!(out, "{} ", print_task_set(senders)).unwrap();
            if *mode == SendMode::Nonblocking {
                out.push_str("asynchronously ");
            }
            write!(
                out,
                "{} {} {} messages to {}",
                verb(senders, "sends", "send"),
                print_expr(count),
                print_size(size),
                print_target(target)
            )
            .unwrap();
        }
        StmtKind::Reduce { tasks, size, op: ReduceOp::AllReduce } => {
            write!(
                out,
                "{} {} a {} message",
                print_task_set(tasks),
                verb(tasks, "reduces", "reduce"),
                print_size(size)
            )
            .unwrap();
        }
        StmtKind::Broadcast { root, tasks, size } => {
            write!(
                out,
                "task {} broadcasts a {} message to {}",
                print_expr(root),
                print_size(size),
                print_task_set(tasks)
            )
            .unwrap();
        }
        StmtKind::Compute { tasks, duration } => {
            write!(
                out,
                "{} {} for {} {}",
                print_task_set(tasks),
                verb(tasks, "computes", "compute"),
                print_expr(&duration.amount),
                duration.unit.keyword()
            )
            .unwrap();
        }
        StmtKind::Synchronize { tasks } => {
            write!(out, "{} {}", print_task_set(tasks), verb(tasks, "synchronizes", "synchronize"))
                .unwrap();
        }
        StmtKind::AwaitCompletion { tasks } => {
            write!(out, "{} {} completion", print_task_set(tasks), verb(tasks, "awaits", "await"))
                .unwrap();
        }
        StmtKind::ResetCounters { tasks } => {
            write!(
                out,
                "{} {} counters",
                print_task_set(tasks),
                verb(tasks, "resets its", "reset their")
            )
            .unwrap();
        }
        StmtKind::Log { tasks, items } => {
            write!(out, "{} {} ", print_task_set(tasks), verb(tasks, "logs", "log")).unwrap();
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(" and ");
                }
                out.push_str("the ");
                if let Some(a) = item.aggregate {
                    write!(out, "{} of ", a.name()).unwrap();
                }
                write!(out, "{} as \"{}\"", print_expr(&item.expr), item.label).unwrap();
            }
        }
        StmtKind::ComputeAggregates { tasks } => {
            write!(out, "{} {} aggregates", print_task_set(tasks), verb(tasks, "computes", "compute"))
                .unwrap();
        }
    }
}

fn print_size(s: &Size) -> String {
    format!("{} {}", print_expr(&s.amount), s.unit.keyword())
}

pub fn print_task_set(t: &TaskSet) -> String {
    match t {
        TaskSet::All { var: None } => "all tasks".to_string(),
        TaskSet::All { var: Some(v) } => format!("all tasks {v}"),
        TaskSet::Single(e) => format!("task {}", print_expr(e)),
        TaskSet::Range { var, lo, hi } => {
            let v = var.as_ref().map(|v| format!(" {v}")).unwrap_or_default();
            format!("tasks{v} from {} to {}", print_expr(lo), print_expr(hi))
        }
    }
}

fn print_target(t: &Target) -> String {
    match t {
        Target::Task(e) => format!("task {}", print_expr(e)),
        Target::MeshNeighbors { x, y, z } => format!(
            "tasks neighboring in mesh({}, {}, {})",
            print_expr(x),
            print_expr(y),
            print_expr(z)
        ),
        Target::RandomOther(e) => format!("a random task other than {}", print_expr(e)),
    }
}

/// Renders with the minimum parentheses needed for the parser's precedence.
pub fn print_expr(e: &Expr) -> String {
    match e {
        Expr::Int(v, _) if *v < 0 => format!("({v})"),
        Expr::Int(v, _) => v.to_string(),
        Expr::Var(n, _) => n.clone(),
        Expr::Neg(inner, _) => match **inner {
            Expr::Bin(..) => format!("-({})", print_expr(inner)),
            _ => format!("-{}", print_expr(inner)),
        },
        Expr::Bin(op, a, b, _) => {
            let lhs = match &**a {
                Expr::Bin(inner, ..) if inner.precedence() < op.precedence() => {
                    format!("({})", print_expr(a))
                }
                _ => print_expr(a),
            };
            let rhs = match &**b {
                Expr::Bin(inner, ..) if inner.precedence() <= op.precedence() => {
                    format!("({})", print_expr(b))
                }
                _ => print_expr(b),
            };
            format!("{lhs} {} {rhs}", op.symbol())
        }
    }
}

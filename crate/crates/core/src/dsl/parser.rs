//! Recursive-descent parser from tokens to a [`Program`].
//!
//! Arithmetic precedence is the usual one: unary minus binds tightest,
//! then `*`, `/`, `mod`, then `+`, `-`; all binary operators associate left.

use std::collections::HashSet;

use super::ast::*;
use super::token::{Loc, Token, TokenKind};
use super::DslError;

pub fn parse(tokens: &[Token]) -> Result<Program, DslError> {
    Parser { tokens, pos: 0 }.program()
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
}

const EOF_TEXT: &str = "<eof>";

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, ahead: usize) -> Option<&'a Token> {
        self.tokens.get(self.pos + ahead)
    }

    fn bump(&mut self) -> Option<&'a Token> {
        let t = self.tokens.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: impl Into<String>) -> DslError {
        let (found, loc) = match self.peek() {
            Some(t) => (t.text.clone(), t.loc),
            None => (
                EOF_TEXT.to_string(),
                self.tokens.last().map(|t| t.loc).unwrap_or(Loc { line: 1, col: 1 }),
            ),
        };
        DslError::Syntax { expected: expected.into(), found, loc }
    }

    fn at_kw(&self, kw: &str) -> bool {
        self.peek().is_some_and(|t| t.is_kw(kw))
    }

    fn at_any_kw(&self, kws: &[&str]) -> bool {
        kws.iter().any(|k| self.at_kw(k))
    }

    fn at_punct(&self, p: &str) -> bool {
        self.peek().is_some_and(|t| t.is_punct(p))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<Loc, DslError> {
        match self.peek() {
            Some(t) if t.is_kw(kw) => {
                self.pos += 1;
                Ok(t.loc)
            }
            _ => Err(self.error(format!("`{kw}`"))),
        }
    }

    fn expect_any_kw(&mut self, kws: &[&str]) -> Result<&'a Token, DslError> {
        match self.peek() {
            Some(t) if kws.iter().any(|k| t.is_kw(k)) => {
                self.pos += 1;
                Ok(t)
            }
            _ => Err(self.error(kws.iter().map(|k| format!("`{k}`")).collect::<Vec<_>>().join(" or "))),
        }
    }

    fn expect_punct(&mut self, p: &str) -> Result<(), DslError> {
        if self.at_punct(p) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(format!("`{p}`")))
        }
    }

    fn expect_string(&mut self) -> Result<String, DslError> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::String => {
                self.pos += 1;
                Ok(t.string_value().unwrap_or_default().to_string())
            }
            _ => Err(self.error("string literal")),
        }
    }

    fn expect_ident(&mut self) -> Result<(String, Loc), DslError> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Identifier => {
                self.pos += 1;
                Ok((t.text.clone(), t.loc))
            }
            _ => Err(self.error("identifier")),
        }
    }

    fn optional_ident(&mut self) -> Option<String> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Identifier => {
                self.pos += 1;
                Some(t.text.clone())
            }
            _ => None,
        }
    }

    fn program(&mut self) -> Result<Program, DslError> {
        let mut program =
            Program { version: None, params: Vec::new(), asserts: Vec::new(), body: Vec::new() };
        if self.eat_kw("require") {
            self.expect_kw("language")?;
            self.expect_kw("version")?;
            program.version = Some(self.expect_string()?);
            self.expect_punct(".")?;
        }
        let mut names = HashSet::new();
        while let Some(tok) = self.peek() {
            if tok.kind == TokenKind::Identifier {
                let decl = self.param_decl()?;
                if !names.insert(decl.name.clone()) {
                    return Err(DslError::DuplicateParameter { name: decl.name, loc: decl.loc });
                }
                program.params.push(decl);
            } else if tok.is_kw("assert") {
                program.asserts.push(self.assert()?);
            } else {
                let chain = self.chain()?;
                program.body.extend(chain);
                // the final statement of a file may omit its period
                if self.peek().is_some() {
                    self.expect_punct(".")?;
                }
            }
        }
        Ok(program)
    }

    fn param_decl(&mut self) -> Result<ParamDecl, DslError> {
        let (name, loc) = self.expect_ident()?;
        self.expect_kw("is")?;
        let description = self.expect_string()?;
        self.expect_kw("and")?;
        self.expect_kw("comes")?;
        self.expect_kw("from")?;
        let long_flag = self.expect_string()?;
        let short_flag = if self.eat_kw("or") { Some(self.expect_string()?) } else { None };
        self.expect_kw("with")?;
        self.expect_kw("default")?;
        let default = self.expr()?;
        self.expect_punct(".")?;
        Ok(ParamDecl { name, description, long_flag, short_flag, default, loc })
    }

    fn assert(&mut self) -> Result<Assert, DslError> {
        let loc = self.expect_kw("assert")?;
        self.expect_kw("that")?;
        let description = self.expect_string()?;
        self.expect_kw("with")?;
        let cond = self.cond()?;
        self.expect_punct(".")?;
        Ok(Assert { description, cond, loc })
    }

    fn chain(&mut self) -> Result<Vec<Stmt>, DslError> {
        let mut stmts = vec![self.stmt()?];
        while self.eat_kw("then") {
            stmts.push(self.stmt()?);
        }
        Ok(stmts)
    }

    fn stmt(&mut self) -> Result<Stmt, DslError> {
        let loc = match self.peek() {
            Some(t) => t.loc,
            None => return Err(self.error("statement")),
        };
        if self.eat_kw("for") {
            let count = self.expr()?;
            self.expect_any_kw(&["repetitions", "repetition"])?;
            self.expect_punct("{")?;
            let body = if self.at_punct("}") { Vec::new() } else { self.chain()? };
            self.expect_punct("}")?;
            return Ok(Stmt { kind: StmtKind::Repeat { count, body }, loc });
        }
        let subject = self.task_set()?;
        let kind = self.action(subject)?;
        Ok(Stmt { kind, loc })
    }

    fn task_set(&mut self) -> Result<TaskSet, DslError> {
        if self.eat_kw("all") {
            self.expect_kw("tasks")?;
            let var = self.optional_ident();
            Ok(TaskSet::All { var })
        } else if self.eat_kw("task") {
            Ok(TaskSet::Single(self.expr()?))
        } else if self.eat_kw("tasks") {
            let var = self.optional_ident();
            self.expect_kw("from")?;
            let lo = self.expr()?;
            self.expect_kw("to")?;
            let hi = self.expr()?;
            Ok(TaskSet::Range { var, lo, hi })
        } else {
            Err(self.error("`all tasks`, `task` or `tasks`"))
        }
    }

    fn action(&mut self, subject: TaskSet) -> Result<StmtKind, DslError> {
        if self.eat_kw("asynchronously") {
            self.expect_any_kw(&["sends", "send"])?;
            return self.send(subject, SendMode::Nonblocking);
        }
        if self.at_any_kw(&["sends", "send"]) {
            self.pos += 1;
            return self.send(subject, SendMode::Blocking);
        }
        if self.at_any_kw(&["reduces", "reduce", "allreduce"]) {
            self.pos += 1;
            let size = self.single_message()?;
            return Ok(StmtKind::Reduce { tasks: subject, size, op: ReduceOp::AllReduce });
        }
        if self.at_any_kw(&["broadcasts", "broadcast"]) {
            let TaskSet::Single(root) = subject else {
                return Err(self.error("`task <expr>` as broadcast root"));
            };
            self.pos += 1;
            let size = self.single_message()?;
            self.expect_kw("to")?;
            let tasks = self.task_set()?;
            return Ok(StmtKind::Broadcast { root, tasks, size });
        }
        if self.at_any_kw(&["computes", "compute"]) {
            self.pos += 1;
            if self.eat_kw("aggregates") {
                return Ok(StmtKind::ComputeAggregates { tasks: subject });
            }
            self.expect_kw("for")?;
            let amount = self.expr()?;
            let unit = match self.expect_any_kw(&[
                "microseconds",
                "microsecond",
                "milliseconds",
                "millisecond",
            ])? {
                t if t.text.to_ascii_lowercase().starts_with("micro") => TimeUnit::Microsecond,
                _ => TimeUnit::Millisecond,
            };
            return Ok(StmtKind::Compute { tasks: subject, duration: Duration { amount, unit } });
        }
        if self.at_any_kw(&["synchronizes", "synchronize"]) {
            self.pos += 1;
            return Ok(StmtKind::Synchronize { tasks: subject });
        }
        if self.at_any_kw(&["awaits", "await"]) {
            self.pos += 1;
            self.expect_kw("completion")?;
            return Ok(StmtKind::AwaitCompletion { tasks: subject });
        }
        if self.at_any_kw(&["resets", "reset"]) {
            self.pos += 1;
            self.expect_any_kw(&["its", "their"])?;
            self.expect_kw("counters")?;
            return Ok(StmtKind::ResetCounters { tasks: subject });
        }
        if self.at_any_kw(&["logs", "log"]) {
            self.pos += 1;
            let mut items = vec![self.log_item()?];
            while self.eat_kw("and") {
                items.push(self.log_item()?);
            }
            return Ok(StmtKind::Log { tasks: subject, items });
        }
        Err(self.error("an action verb"))
    }

    fn send(&mut self, senders: TaskSet, mode: SendMode) -> Result<StmtKind, DslError> {
        let count = if self.at_any_kw(&["a", "an"]) {
            let loc = self.bump().map(|t| t.loc).unwrap_or_default();
            Expr::Int(1, loc)
        } else {
            self.expr()?
        };
        let size = self.size()?;
        self.expect_any_kw(&["messages", "message"])?;
        self.expect_kw("to")?;
        let target = self.target()?;
        Ok(StmtKind::Send { senders, count, size, target, mode })
    }

    fn single_message(&mut self) -> Result<Size, DslError> {
        self.expect_any_kw(&["a", "an"])?;
        let size = self.size()?;
        self.expect_kw("message")?;
        Ok(size)
    }

    fn size(&mut self) -> Result<Size, DslError> {
        let amount = self.expr()?;
        let unit_tok = self.expect_any_kw(&[
            "byte",
            "bytes",
            "kilobyte",
            "kilobytes",
            "kibibyte",
            "kibibytes",
            "mebibyte",
            "mebibytes",
            "megabyte",
            "megabytes",
            "gibibyte",
            "gibibytes",
            "gigabyte",
            "gigabytes",
        ])?;
        let unit = match unit_tok.text.to_ascii_lowercase().as_bytes()[0] {
            b'b' => SizeUnit::Byte,
            b'k' => SizeUnit::Kibibyte,
            b'm' => SizeUnit::Mebibyte,
            _ => SizeUnit::Gibibyte,
        };
        Ok(Size { amount, unit })
    }

    fn target(&mut self) -> Result<Target, DslError> {
        if self.eat_kw("task") {
            return Ok(Target::Task(self.expr()?));
        }
        if self.eat_kw("tasks") {
            self.expect_kw("neighboring")?;
            self.expect_kw("in")?;
            self.expect_kw("mesh")?;
            self.expect_punct("(")?;
            let x = self.expr()?;
            self.expect_punct(",")?;
            let y = self.expr()?;
            self.expect_punct(",")?;
            let z = self.expr()?;
            self.expect_punct(")")?;
            return Ok(Target::MeshNeighbors { x, y, z });
        }
        if self.at_kw("a") && self.peek_at(1).is_some_and(|t| t.is_kw("random")) {
            self.pos += 2;
            self.expect_kw("task")?;
            self.expect_kw("other")?;
            self.expect_kw("than")?;
            return Ok(Target::RandomOther(self.expr()?));
        }
        Err(self.error("`task`, `tasks neighboring in mesh(...)` or `a random task other than`"))
    }

    fn log_item(&mut self) -> Result<LogItem, DslError> {
        self.eat_kw("the");
        let aggregate = if self.at_any_kw(&["median", "mean", "minimum", "maximum"]) {
            let tok = self.bump().expect("peeked");
            self.expect_kw("of")?;
            Some(match tok.text.to_ascii_lowercase().as_str() {
                "median" => Aggregate::Median,
                "mean" => Aggregate::Mean,
                "minimum" => Aggregate::Minimum,
                _ => Aggregate::Maximum,
            })
        } else {
            None
        };
        let expr = self.expr()?;
        self.expect_kw("as")?;
        let label = self.expect_string()?;
        Ok(LogItem { aggregate, expr, label })
    }

    fn cond(&mut self) -> Result<Cond, DslError> {
        let lhs = self.expr()?;
        let op = match self.peek().map(|t| t.text.as_str()) {
            Some("<") => RelOp::Lt,
            Some("<=") => RelOp::Le,
            Some(">") => RelOp::Gt,
            Some(">=") => RelOp::Ge,
            Some("=") => RelOp::Eq,
            Some("<>") => RelOp::Ne,
            _ => return Err(self.error("comparison operator")),
        };
        self.pos += 1;
        let rhs = self.expr()?;
        Ok(Cond { lhs, op, rhs })
    }

    pub(crate) fn expr(&mut self) -> Result<Expr, DslError> {
        self.binary(1)
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr, DslError> {
        let mut lhs = self.unary()?;
        while let Some(tok) = self.peek() {
            let op = match tok.text.as_str() {
                "+" if tok.kind == TokenKind::Operator => BinOp::Add,
                "-" if tok.kind == TokenKind::Operator => BinOp::Sub,
                "*" if tok.kind == TokenKind::Operator => BinOp::Mul,
                "/" if tok.kind == TokenKind::Operator => BinOp::Div,
                _ if tok.is_kw("mod") => BinOp::Mod,
                _ => break,
            };
            if op.precedence() < min_prec {
                break;
            }
            self.pos += 1;
            let rhs = self.binary(op.precedence() + 1)?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs), tok.loc);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, DslError> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Operator && t.text == "-" => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?), t.loc))
            }
            Some(t) if t.kind == TokenKind::Integer => {
                self.pos += 1;
                let v = t.text.parse::<i64>().map_err(|_| DslError::Overflow { loc: t.loc })?;
                Ok(Expr::Int(v, t.loc))
            }
            Some(t) if t.kind == TokenKind::Identifier => {
                self.pos += 1;
                Ok(Expr::Var(t.text.clone(), t.loc))
            }
            Some(t) if t.is_punct("(") => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            _ => Err(self.error("expression")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::token::tokenize;

    fn parse_src(src: &str) -> Result<Program, DslError> {
        parse(&tokenize(src)?)
    }

    fn all() -> TaskSet {
        TaskSet::All { var: None }
    }

    #[test]
    fn repeat_compute() {
        let p = parse_src("For 3 repetitions { task 0 computes for 5 microseconds }").unwrap();
        let want = vec![Stmt::new(StmtKind::Repeat {
            count: Expr::int(3),
            body: vec![Stmt::new(StmtKind::Compute {
                tasks: TaskSet::Single(Expr::int(0)),
                duration: Duration { amount: Expr::int(5), unit: TimeUnit::Microsecond },
            })],
        })];
        assert_eq!(p.normalized().body, want);
    }

    #[test]
    fn precedence_and_associativity() {
        let p = parse_src("all tasks compute for 1 + 2 * 3 - 4 mod 3 microseconds.").unwrap();
        let StmtKind::Compute { duration, .. } = &p.normalized().body[0].kind else { panic!() };
        use BinOp::*;
        let want = Expr::bin(
            Sub,
            Expr::bin(Add, Expr::int(1), Expr::bin(Mul, Expr::int(2), Expr::int(3))),
            Expr::bin(Mod, Expr::int(4), Expr::int(3)),
        );
        assert_eq!(duration.amount, want);
    }

    #[test]
    fn version_only_program_has_empty_body() {
        let p = parse_src("Require language version \"1.5\".").unwrap();
        assert_eq!(p.version.as_deref(), Some("1.5"));
        assert!(p.body.is_empty());
    }

    #[test]
    fn send_forms() {
        let p = parse_src(
            "all tasks t asynchronously send 3 2 kilobyte messages to tasks neighboring in mesh(2, 2, 2) then \
             tasks s from 1 to 3 send a 4 byte message to a random task other than s.",
        )
        .unwrap()
        .normalized();
        let StmtKind::Send { senders, count, size, mode, target } = &p.body[0].kind else {
            panic!()
        };
        assert_eq!(senders, &TaskSet::All { var: Some("t".into()) });
        assert_eq!(count, &Expr::int(3));
        assert_eq!(size.unit, SizeUnit::Kibibyte);
        assert_eq!(*mode, SendMode::Nonblocking);
        assert!(matches!(target, Target::MeshNeighbors { .. }));
        let StmtKind::Send { senders, target, mode, .. } = &p.body[1].kind else { panic!() };
        assert!(matches!(senders, TaskSet::Range { var: Some(v), .. } if v == "s"));
        assert_eq!(target, &Target::RandomOther(Expr::var("s")));
        assert_eq!(*mode, SendMode::Blocking);
    }

    #[test]
    fn collectives_and_markers() {
        let p = parse_src(
            "all tasks reduce a 8 byte message then task 0 broadcasts a 25 byte message to all tasks \
             then all tasks synchronize then all tasks await completion then task 0 resets its counters \
             then task 0 logs the mean of elapsed_usecs as \"t\" then task 0 computes aggregates.",
        )
        .unwrap()
        .normalized();
        let kinds: Vec<_> = p.body.iter().map(|s| std::mem::discriminant(&s.kind)).collect();
        assert_eq!(kinds.len(), 7);
        assert_eq!(
            p.body[1].kind,
            StmtKind::Broadcast {
                root: Expr::int(0),
                tasks: all(),
                size: Size { amount: Expr::int(25), unit: SizeUnit::Byte }
            }
        );
    }

    #[test]
    fn duplicate_parameter() {
        let src = "n is \"a\" and comes from \"--n\" with default 1.\n\
                   n is \"b\" and comes from \"--m\" with default 2.";
        assert!(matches!(parse_src(src), Err(DslError::DuplicateParameter { ref name, .. }) if name == "n"));
    }

    #[test]
    fn syntax_error_locations() {
        let err = parse_src("task 0 sends a 10 byte to task 1.").unwrap_err();
        let DslError::Syntax { found, loc, .. } = err else { panic!() };
        assert_eq!(found, "to");
        assert_eq!(loc, Loc { line: 1, col: 24 });

        let err = parse_src("task 0 sends").unwrap_err();
        assert!(matches!(err, DslError::Syntax { ref found, .. } if found == EOF_TEXT));
    }

    #[test]
    fn broadcast_root_must_be_single() {
        assert!(parse_src("all tasks broadcast a 4 byte message to all tasks.").is_err());
    }
}

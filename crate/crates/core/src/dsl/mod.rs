//! Front end for the workload description language: lexing, parsing,
//! printing and validation.
//!
//! Programs read like English sentences, with keywords in a fixed grammar:
//!
//! ```text
//! reps is "Number of repetitions" and comes from "--reps" or "-r" with default 1000.
//! Assert that "needs two tasks" with num_tasks >= 2.
//! For reps repetitions {
//!   task 0 sends a 1024 byte message to task 1 then
//!   task 1 sends a 1024 byte message to task 0
//! }.
//! ```

pub mod ast;
pub mod check;
pub mod parser;
pub mod printer;
pub mod token;

use thiserror::Error;

pub use ast::Program;
pub use check::{check, Binding, ValidatedProgram};
pub use parser::parse;
pub use printer::print_program;
pub use token::{tokenize, Loc, Token, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DslError {
    #[error("unknown character {ch:?} at {line}:{col}")]
    UnknownCharacter { ch: char, line: u32, col: u32 },
    #[error("unterminated string starting on line {line}")]
    UnterminatedString { line: u32 },
    #[error("syntax error at {loc}: expected {expected}, found `{found}`")]
    Syntax { expected: String, found: String, loc: Loc },
    #[error("parameter `{name}` declared twice (second at {loc})")]
    DuplicateParameter { name: String, loc: Loc },
    #[error("assertion failed: {description}")]
    AssertionFailed { description: String },
    #[error("unbound identifier `{name}` at {loc}")]
    UnboundIdentifier { name: String, loc: Loc },
    #[error("unknown parameter `{name}` in overrides")]
    UnknownParameter { name: String },
    #[error("`{name}` is only available in log statements (at {loc})")]
    RuntimeOnly { name: String, loc: Loc },
    #[error("task expression `{expr}` evaluates to {value}, outside the task range (at {loc})")]
    TaskOutOfRange { expr: String, value: i64, loc: Loc },
    #[error("{what} `{expr}` evaluates to {value}, which is out of range (at {loc})")]
    ValueOutOfRange { what: &'static str, expr: String, value: i64, loc: Loc },
    #[error("task {task} sends a message to itself (at {loc})")]
    SelfMessage { task: u32, loc: Loc },
    #[error("division by zero at {loc}")]
    DivisionByZero { loc: Loc },
    #[error("integer overflow at {loc}")]
    Overflow { loc: Loc },
    #[error("program has no statements")]
    EmptyProgram,
    #[error("repetition block at {loc} has an empty body")]
    EmptyBlock { loc: Loc },
}

/// Tokenizes and parses `source`.
pub fn parse_source(source: &str) -> Result<Program, DslError> {
    parse(&tokenize(source)?)
}

#[cfg(test)]
mod tests {
    use super::ast::*;
    use super::*;

    const PING_PONG: &str = r#"# A ping-pong latency test written in coNCePTuaL
Require language version "1.5".

# Parse command line.
reps is "Number of repetitions" and comes from "--reps" or "-r" with default 1000.
msgsize is "Message size of bytes to transmit" and comes from "--msgsize" or "-m" with default 1024.

Assert that "the latency test requires at least two tasks" with num_tasks>=2.

# Perform the test.
For reps repetitions {
   task 0 resets its counters then
   task 0 sends a msgsize byte message to task 1 then
   task 1 sends a msgsize byte message to task 0 then
   task 0 logs the msgsize as "Bytes" and the median of elapsed_usecs/2 as "1/2 RTT (usecs)"
} then
   task 0 computes aggregates
"#;

    #[test]
    fn ping_pong_structure() {
        let p = parse_source(PING_PONG).unwrap();
        assert_eq!(p.params.len(), 2);
        assert_eq!(p.params[0].name, "reps");
        assert_eq!(p.params[0].default, Expr::Int(1000, p.params[0].default.loc()));
        assert_eq!(p.params[1].short_flag.as_deref(), Some("-m"));
        assert_eq!(p.asserts.len(), 1);
        assert_eq!(p.body.len(), 2);
        let StmtKind::Repeat { count, body } = &p.body[0].kind else { panic!() };
        assert!(matches!(count, Expr::Var(n, _) if n == "reps"));
        assert!(matches!(body[0].kind, StmtKind::ResetCounters { .. }));
        assert!(matches!(body[1].kind, StmtKind::Send { .. }));
        assert!(matches!(body[2].kind, StmtKind::Send { .. }));
        let StmtKind::Log { items, .. } = &body[3].kind else { panic!() };
        assert_eq!(items[1].aggregate, Some(Aggregate::Median));
        assert_eq!(items[1].label, "1/2 RTT (usecs)");
        assert!(matches!(p.body[1].kind, StmtKind::ComputeAggregates { .. }));
    }

    #[test]
    fn ping_pong_check() {
        let p = parse_source(PING_PONG).unwrap();
        let v = check(&p, 2, &Binding::new()).unwrap();
        assert_eq!(v.binding["reps"], 1000);
        let err = check(&p, 1, &Binding::new()).unwrap_err();
        assert_eq!(
            err,
            DslError::AssertionFailed {
                description: "the latency test requires at least two tasks".into()
            }
        );
        let mut o = Binding::new();
        o.insert("reps".into(), 1);
        let v = check(&p, 2, &o).unwrap();
        assert_eq!((v.binding["reps"], v.binding["msgsize"]), (1, 1024));
    }

    #[test]
    fn version_only_is_rejected_by_check() {
        let p = parse_source("Require language version \"1.5\".").unwrap();
        assert_eq!(check(&p, 2, &Binding::new()), Err(DslError::EmptyProgram));
    }

    #[test]
    fn print_round_trip() {
        let p = parse_source(PING_PONG).unwrap();
        let printed = print_program(&p);
        let again = parse_source(&printed).unwrap();
        assert_eq!(again.normalized(), p.normalized(), "{printed}");
    }
}

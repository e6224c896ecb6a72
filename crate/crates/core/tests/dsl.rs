use std::fs;
use std::path::Path;

use dfsim::dsl::{check, parse_source, print_program, tokenize, Binding, DslError};
use proptest::prelude::*;

fn corpus() -> Vec<(String, String)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../workloads");
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "u"))
        .collect();
    files.sort();
    files.into_iter().map(|p| (p.display().to_string(), fs::read_to_string(&p).unwrap())).collect()
}

#[test]
fn corpus_round_trips_through_the_printer() {
    let files = corpus();
    assert_eq!(files.len(), 8);
    for (name, src) in files {
        let first = parse_source(&src).unwrap_or_else(|e| panic!("{name}: {e}"));
        let printed = print_program(&first);
        let second = parse_source(&printed).unwrap_or_else(|e| panic!("{name} reprinted: {e}\n{printed}"));
        assert_eq!(first.normalized(), second.normalized(), "{name}");
        assert_eq!(print_program(&second), printed, "{name}: printing is not a fixed point");
    }
}

#[test]
fn parsing_is_pure() {
    for (name, src) in corpus() {
        assert_eq!(tokenize(&src).unwrap(), tokenize(&src).unwrap(), "{name}");
        let p = parse_source(&src).unwrap();
        assert_eq!(p, parse_source(&src).unwrap(), "{name}");
        let n = if name.ends_with("pingpong.u") { 2 } else { 8 };
        let a = check(&p, n, &Binding::new());
        assert_eq!(a, check(&p, n, &Binding::new()), "{name}");
    }
}

#[test]
fn ping_pong_on_one_task_fails_its_assertion() {
    let src = corpus().into_iter().find(|(n, _)| n.ends_with("pingpong.u")).unwrap().1;
    let err = check(&parse_source(&src).unwrap(), 1, &Binding::new()).unwrap_err();
    assert!(matches!(err, DslError::AssertionFailed { ref description } if description.contains("two tasks")));
}

fn assert_location_fidelity(src: &str) {
    if let Err(DslError::Syntax { found, loc, .. }) = parse_source(src) {
        let line = src.lines().nth(loc.line as usize - 1).unwrap_or_else(|| panic!("no line {}", loc.line));
        let rest: String = line.chars().skip(loc.col as usize - 1).collect();
        if found == "<eof>" {
            // reported at the last token of the input
            assert!(!rest.trim().is_empty(), "end of input reported at blank text {loc}");
            return;
        }
        assert!(rest.starts_with(&found), "`{found}` not at {loc} in line {line:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// Dropping or duplicating a word of a valid program either still
    /// parses or yields an error pointing at verbatim source text.
    #[test]
    fn syntax_errors_point_at_source_text(file in 0usize..8, pick in any::<prop::sample::Index>(), dup in any::<bool>()) {
        let src = &corpus()[file].1;
        let words: Vec<(usize, &str)> = src
            .split_inclusive(char::is_whitespace)
            .scan(0, |off, w| { let start = *off; *off += w.len(); Some((start, w)) })
            .collect();
        let (off, w) = words[pick.index(words.len())];
        let mutated = if dup {
            format!("{}{w}{}", &src[..off], &src[off..])
        } else {
            format!("{}{}", &src[..off], &src[off + w.len()..])
        };
        assert_location_fidelity(&mutated);
    }

    #[test]
    fn arbitrary_text_never_panics(s in "[a-z0-9 {}().,+*/<>=\"\n-]{0,120}") {
        let _ = parse_source(&s);
        assert_location_fidelity(&s);
    }
}

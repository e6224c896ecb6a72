//! Lexer for workload programs.

use std::fmt;

use super::DslError;

/// Position of a token in its source, both 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Loc {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Keyword,
    Identifier,
    Integer,
    String,
    Operator,
    Punctuation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    /// Exact source text, quotes included for strings.
    pub text: String,
    pub loc: Loc,
    /// Byte offset of `text` in the source.
    pub offset: usize,
}

impl Token {
    /// Keyword tokens compare case-insensitively.
    pub fn is_kw(&self, kw: &str) -> bool {
        self.kind == TokenKind::Keyword && self.text.eq_ignore_ascii_case(kw)
    }

    pub fn is_punct(&self, p: &str) -> bool {
        matches!(self.kind, TokenKind::Punctuation | TokenKind::Operator) && self.text == p
    }

    /// String literal contents without the surrounding quotes.
    pub fn string_value(&self) -> Option<&str> {
        (self.kind == TokenKind::String).then(|| &self.text[1..self.text.len() - 1])
    }
}

pub const KEYWORDS: &[&str] = &[
    "a",
    "aggregates",
    "all",
    "allreduce",
    "an",
    "and",
    "as",
    "assert",
    "asynchronously",
    "await",
    "awaits",
    "broadcast",
    "broadcasts",
    "byte",
    "bytes",
    "comes",
    "completion",
    "compute",
    "computes",
    "counters",
    "default",
    "for",
    "from",
    "gibibyte",
    "gibibytes",
    "gigabyte",
    "gigabytes",
    "in",
    "is",
    "its",
    "kibibyte",
    "kibibytes",
    "kilobyte",
    "kilobytes",
    "language",
    "log",
    "logs",
    "maximum",
    "mean",
    "mebibyte",
    "mebibytes",
    "median",
    "megabyte",
    "megabytes",
    "mesh",
    "message",
    "messages",
    "microsecond",
    "microseconds",
    "millisecond",
    "milliseconds",
    "minimum",
    "mod",
    "neighboring",
    "of",
    "or",
    "other",
    "random",
    "reduce",
    "reduces",
    "repetition",
    "repetitions",
    "require",
    "reset",
    "resets",
    "send",
    "sends",
    "synchronize",
    "synchronizes",
    "task",
    "tasks",
    "than",
    "that",
    "the",
    "their",
    "then",
    "to",
    "version",
    "with",
];

pub fn is_keyword(word: &str) -> bool {
    let lower = word.to_ascii_lowercase();
    KEYWORDS.binary_search(&lower.as_str()).is_ok()
}

/// Splits `source` into tokens. Whitespace and `#` comments are skipped.
pub fn tokenize(source: &str) -> Result<Vec<Token>, DslError> {
    let mut tokens = Vec::new();
    let mut chars = source.char_indices().peekable();
    let mut line = 1u32;
    let mut line_start = 0usize;

    let col_of = |offset: usize, line_start: usize| -> u32 {
        source[line_start..offset].chars().count() as u32 + 1
    };

    while let Some(&(start, c)) = chars.peek() {
        let loc = Loc { line, col: col_of(start, line_start) };
        if c == '\n' {
            chars.next();
            line += 1;
            line_start = start + 1;
        } else if c.is_whitespace() {
            chars.next();
        } else if c == '#' {
            while let Some(&(_, c)) = chars.peek() {
                if c == '\n' {
                    break;
                }
                chars.next();
            }
        } else if c == '"' {
            chars.next();
            let mut end = None;
            for (i, c) in chars.by_ref() {
                if c == '"' {
                    end = Some(i + 1);
                    break;
                }
                if c == '\n' {
                    break;
                }
            }
            let end = end.ok_or(DslError::UnterminatedString { line })?;
            tokens.push(Token {
                kind: TokenKind::String,
                text: source[start..end].to_string(),
                loc,
                offset: start,
            });
        } else if c.is_ascii_digit() {
            let mut end = start;
            while let Some(&(i, c)) = chars.peek() {
                if !c.is_ascii_digit() {
                    break;
                }
                end = i + c.len_utf8();
                chars.next();
            }
            tokens.push(Token {
                kind: TokenKind::Integer,
                text: source[start..end].to_string(),
                loc,
                offset: start,
            });
        } else if c.is_ascii_alphabetic() || c == '_' {
            let mut end = start;
            while let Some(&(i, c)) = chars.peek() {
                if !(c.is_ascii_alphanumeric() || c == '_') {
                    break;
                }
                end = i + c.len_utf8();
                chars.next();
            }
            let text = &source[start..end];
            let kind = if is_keyword(text) { TokenKind::Keyword } else { TokenKind::Identifier };
            tokens.push(Token { kind, text: text.to_string(), loc, offset: start });
        } else {
            chars.next();
            let next = chars.peek().map(|&(_, c)| c);
            let (text, kind) = match (c, next) {
                ('>', Some('=')) | ('<', Some('=')) | ('<', Some('>')) => {
                    chars.next();
                    (&source[start..start + 2], TokenKind::Operator)
                }
                ('+' | '-' | '*' | '/' | '<' | '>' | '=', _) => {
                    (&source[start..start + 1], TokenKind::Operator)
                }
                ('{' | '}' | '(' | ')' | ',' | '.', _) => {
                    (&source[start..start + 1], TokenKind::Punctuation)
                }
                _ => return Err(DslError::UnknownCharacter { ch: c, line: loc.line, col: loc.col }),
            };
            tokens.push(Token { kind, text: text.to_string(), loc, offset: start });
        }
    }
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<(TokenKind, String)> {
        tokenize(src).unwrap().into_iter().map(|t| (t.kind, t.text)).collect()
    }

    #[test]
    fn keyword_table_is_sorted() {
        let mut sorted = KEYWORDS.to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, KEYWORDS);
    }

    #[test]
    fn send_statement() {
        use TokenKind::*;
        let got = kinds("task 0 sends a 1024 byte message to task 1");
        let want = [
            (Keyword, "task"),
            (Integer, "0"),
            (Keyword, "sends"),
            (Keyword, "a"),
            (Integer, "1024"),
            (Keyword, "byte"),
            (Keyword, "message"),
            (Keyword, "to"),
            (Keyword, "task"),
            (Integer, "1"),
        ];
        let want: Vec<_> = want.iter().map(|(k, t)| (*k, t.to_string())).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn empty_and_comment_only() {
        assert!(tokenize("").unwrap().is_empty());
        assert!(tokenize("# only a comment\n").unwrap().is_empty());
    }

    #[test]
    fn operators_and_locations() {
        let toks = tokenize("x >= 2\n  y <> (3)").unwrap();
        assert_eq!(toks[1].text, ">=");
        assert_eq!(toks[3].loc, Loc { line: 2, col: 3 });
        assert_eq!(toks[4].text, "<>");
    }

    #[test]
    fn errors() {
        assert_eq!(
            tokenize("task 0 @").unwrap_err(),
            DslError::UnknownCharacter { ch: '@', line: 1, col: 8 }
        );
        assert_eq!(
            tokenize("x is \"open\nmore").unwrap_err(),
            DslError::UnterminatedString { line: 1 }
        );
    }

    #[test]
    fn keywords_are_case_insensitive() {
        let toks = tokenize("For Assert REQUIRE").unwrap();
        assert!(toks.iter().all(|t| t.kind == TokenKind::Keyword));
        assert!(toks[0].is_kw("for"));
    }
}

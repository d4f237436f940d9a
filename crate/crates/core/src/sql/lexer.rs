use super::{DiagCategory, ParseDiag, Span};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    /// Unquoted identifier or keyword, lower-cased.
    Ident(String),
    Int(i64),
    Float(f64),
    Str(String),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Token {
    pub tok: Tok,
    pub span: Span,
}

const SYMBOLS: [&str; 18] = [
    "<>", "!=", "<=", ">=", "||", ",", "(", ")", ".", "*", "+", "-", "/", "%", "=", "<", ">", ";",
];

pub(crate) fn tokenize(sql: &str) -> Result<Vec<Token>, ParseDiag> {
    let chars: Vec<char> = sql.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    let advance = |i: &mut usize, line: &mut u32, col: &mut u32, n: usize| {
        for _ in 0..n {
            if chars[*i] == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            *i += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        let span = Span { line, column: col };
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, 1);
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'-') {
            while i < chars.len() && chars[i] != '\n' {
                advance(&mut i, &mut line, &mut col, 1);
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            advance(&mut i, &mut line, &mut col, 2);
            loop {
                if i + 1 >= chars.len() {
                    return Err(ParseDiag::new(span, DiagCategory::Syntax, "unterminated comment"));
                }
                if chars[i] == '*' && chars[i + 1] == '/' {
                    advance(&mut i, &mut line, &mut col, 2);
                    break;
                }
                advance(&mut i, &mut line, &mut col, 1);
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                advance(&mut i, &mut line, &mut col, 1);
            }
            let word: String = chars[start..i].iter().collect();
            out.push(Token {
                tok: Tok::Ident(word.to_ascii_lowercase()),
                span,
            });
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            let mut float = false;
            while i < chars.len() && chars[i].is_ascii_digit() {
                advance(&mut i, &mut line, &mut col, 1);
            }
            if i < chars.len() && chars[i] == '.' {
                float = true;
                advance(&mut i, &mut line, &mut col, 1);
                while i < chars.len() && chars[i].is_ascii_digit() {
                    advance(&mut i, &mut line, &mut col, 1);
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    float = true;
                    let n = j - i;
                    advance(&mut i, &mut line, &mut col, n);
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        advance(&mut i, &mut line, &mut col, 1);
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let tok = if float {
                Tok::Float(text.parse().map_err(|_| {
                    ParseDiag::new(span, DiagCategory::Syntax, format!("malformed number {text}"))
                })?)
            } else {
                Tok::Int(text.parse().map_err(|_| {
                    ParseDiag::new(span, DiagCategory::Syntax, format!("integer {text} out of range"))
                })?)
            };
            out.push(Token { tok, span });
            continue;
        }
        if c == '\'' || c == '"' {
            let quote = c;
            advance(&mut i, &mut line, &mut col, 1);
            let mut s = String::new();
            loop {
                if i >= chars.len() {
                    return Err(ParseDiag::new(span, DiagCategory::Syntax, "unterminated string literal"));
                }
                if chars[i] == quote {
                    if chars.get(i + 1) == Some(&quote) {
                        s.push(quote);
                        advance(&mut i, &mut line, &mut col, 2);
                        continue;
                    }
                    advance(&mut i, &mut line, &mut col, 1);
                    break;
                }
                s.push(chars[i]);
                advance(&mut i, &mut line, &mut col, 1);
            }
            out.push(Token { tok: Tok::Str(s), span });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(s) => {
                advance(&mut i, &mut line, &mut col, s.len());
                out.push(Token { tok: Tok::Sym(s), span });
            }
            None => {
                return Err(ParseDiag::new(
                    span,
                    DiagCategory::Syntax,
                    format!("unexpected character {c:?}"),
                ))
            }
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        span: Span { line, column: col },
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn words_numbers_strings() {
        assert_eq!(
            toks("SELECT a.B, 1.5e2, 'it''s' -- note\n<= 7"),
            vec![
                Tok::Ident("select".into()),
                Tok::Ident("a".into()),
                Tok::Sym("."),
                Tok::Ident("b".into()),
                Tok::Sym(","),
                Tok::Float(150.0),
                Tok::Sym(","),
                Tok::Str("it's".into()),
                Tok::Sym("<="),
                Tok::Int(7),
                Tok::Eof,
            ]
        );
    }

    #[test]
    fn spans_track_lines() {
        let t = tokenize("a\n  /* x */ b").unwrap();
        assert_eq!(t[1].span, Span { line: 2, column: 11 });
    }

    #[test]
    fn unterminated_string() {
        let e = tokenize("select 'abc").unwrap_err();
        assert_eq!((e.span.line, e.span.column), (1, 8));
    }
}

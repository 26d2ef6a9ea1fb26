//! Lexer for EQL text. Produces spanned tokens; keywords stay ordinary
//! identifiers and are recognized case-insensitively by the parser.

use crate::eql::EqlError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    Text(String),
    LParen,
    RParen,
    Comma,
    Semi,
    Star,
    Plus,
    Minus,
    Slash,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Tok {
    /// Short description for error messages.
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("{s:?}"),
            Tok::Int(i) => format!("number {i}"),
            Tok::Float(x) => format!("number {x}"),
            Tok::Text(_) => "text literal".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::Semi => "';'".into(),
            Tok::Star => "'*'".into(),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Slash => "'/'".into(),
            Tok::Eq => "'='".into(),
            Tok::Ne => "'<>'".into(),
            Tok::Lt => "'<'".into(),
            Tok::Le => "'<='".into(),
            Tok::Gt => "'>'".into(),
            Tok::Ge => "'>='".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub start: usize,
    pub end: usize,
}

/// Splits a statement (or script) into tokens. `--` starts a comment that
/// runs to end of line; text literals escape a quote by doubling it.
pub fn tokenize(input: &str) -> Result<Vec<Token>, EqlError> {
    let mut out = Vec::new();
    let mut chars = input.char_indices().peekable();
    while let Some(&(start, c)) = chars.peek() {
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                chars.next();
            }
            '-' => {
                chars.next();
                if let Some(&(_, '-')) = chars.peek() {
                    for (_, c) in chars.by_ref() {
                        if c == '\n' {
                            break;
                        }
                    }
                } else {
                    out.push(Token { tok: Tok::Minus, start, end: start + 1 });
                }
            }
            '\'' => {
                chars.next();
                let mut value = String::new();
                let mut end = None;
                while let Some((i, c)) = chars.next() {
                    if c != '\'' {
                        value.push(c);
                        continue;
                    }
                    if let Some(&(_, '\'')) = chars.peek() {
                        chars.next();
                        value.push('\'');
                    } else {
                        end = Some(i + 1);
                        break;
                    }
                }
                match end {
                    Some(end) => out.push(Token { tok: Tok::Text(value), start, end }),
                    None => {
                        return Err(EqlError::Lex {
                            pos: start,
                            message: "unterminated text literal".into(),
                        })
                    }
                }
            }
            '0'..='9' => {
                let (tok, end) = lex_number(input, &mut chars, start)?;
                out.push(Token { tok, start, end });
            }
            'A'..='Z' | 'a'..='z' | '_' => {
                chars.next();
                let mut end = start + 1;
                while let Some(&(i, c)) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        chars.next();
                        end = i + c.len_utf8();
                    } else {
                        break;
                    }
                }
                out.push(Token { tok: Tok::Ident(input[start..end].to_string()), start, end });
            }
            '<' => {
                chars.next();
                let tok = match chars.peek() {
                    Some(&(_, '=')) => {
                        chars.next();
                        Tok::Le
                    }
                    Some(&(_, '>')) => {
                        chars.next();
                        Tok::Ne
                    }
                    _ => Tok::Lt,
                };
                let end = start + if tok == Tok::Lt { 1 } else { 2 };
                out.push(Token { tok, start, end });
            }
            '>' => {
                chars.next();
                let tok = if let Some(&(_, '=')) = chars.peek() {
                    chars.next();
                    Tok::Ge
                } else {
                    Tok::Gt
                };
                let end = start + if tok == Tok::Gt { 1 } else { 2 };
                out.push(Token { tok, start, end });
            }
            _ => {
                let simple = match c {
                    '(' => Some(Tok::LParen),
                    ')' => Some(Tok::RParen),
                    ',' => Some(Tok::Comma),
                    ';' => Some(Tok::Semi),
                    '*' => Some(Tok::Star),
                    '+' => Some(Tok::Plus),
                    '/' => Some(Tok::Slash),
                    '=' => Some(Tok::Eq),
                    _ => None,
                };
                match simple {
                    Some(tok) => {
                        chars.next();
                        out.push(Token { tok, start, end: start + 1 });
                    }
                    None => {
                        return Err(EqlError::Lex {
                            pos: start,
                            message: format!("illegal character {c:?}"),
                        })
                    }
                }
            }
        }
    }
    Ok(out)
}

fn lex_number(
    input: &str,
    chars: &mut std::iter::Peekable<std::str::CharIndices>,
    start: usize,
) -> Result<(Tok, usize), EqlError> {
    let mut end = start;
    let mut integral = true;
    while let Some(&(i, c)) = chars.peek() {
        if c.is_ascii_digit() {
            chars.next();
            end = i + 1;
        } else {
            break;
        }
    }
    if let Some(&(i, '.')) = chars.peek() {
        // Look past the dot: "1.5" is a float, but in "1." the dot is not
        // part of the number and will be rejected as an illegal character.
        let mut ahead = chars.clone();
        ahead.next();
        if matches!(ahead.peek(), Some(&(_, d)) if d.is_ascii_digit()) {
            integral = false;
            chars.next();
            end = i + 1;
            while let Some(&(j, c)) = chars.peek() {
                if c.is_ascii_digit() {
                    chars.next();
                    end = j + 1;
                } else {
                    break;
                }
            }
        }
    }
    if matches!(chars.peek(), Some(&(_, 'e' | 'E'))) {
        // Only treat it as an exponent when digits actually follow,
        // otherwise the 'e' starts an identifier ("5 MINUTES" parses as
        // number then keyword, "5e" must not eat the 'e').
        let mut ahead = chars.clone();
        ahead.next();
        if matches!(ahead.peek(), Some(&(_, '+' | '-'))) {
            ahead.next();
        }
        if matches!(ahead.peek(), Some(&(_, d)) if d.is_ascii_digit()) {
            integral = false;
            chars.next();
            if let Some(&(i, '+' | '-')) = chars.peek() {
                chars.next();
                end = i + 1;
            }
            while let Some(&(j, c)) = chars.peek() {
                if c.is_ascii_digit() {
                    chars.next();
                    end = j + 1;
                } else {
                    break;
                }
            }
        }
    }
    let text = &input[start..end];
    if integral {
        match text.parse::<i64>() {
            Ok(i) => Ok((Tok::Int(i), end)),
            // Out of integer range; fall back to a float literal.
            Err(_) => parse_float(text, start, end),
        }
    } else {
        parse_float(text, start, end)
    }
}

fn parse_float(text: &str, start: usize, end: usize) -> Result<(Tok, usize), EqlError> {
    match text.parse::<f64>() {
        Ok(x) => Ok((Tok::Float(x), end)),
        Err(_) => Err(EqlError::Lex { pos: start, message: format!("bad number {text:?}") }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(input: &str) -> Vec<Tok> {
        tokenize(input).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn keywords_are_plain_idents() {
        assert_eq!(
            toks("SELECT * FROM RAIN;"),
            vec![
                Tok::Ident("SELECT".into()),
                Tok::Star,
                Tok::Ident("FROM".into()),
                Tok::Ident("RAIN".into()),
                Tok::Semi,
            ]
        );
    }

    #[test]
    fn numbers_int_and_float() {
        assert_eq!(toks("5 0.75 287.4 1e3"), vec![
            Tok::Int(5),
            Tok::Float(0.75),
            Tok::Float(287.4),
            Tok::Float(1000.0),
        ]);
    }

    #[test]
    fn huge_integer_literal_becomes_float() {
        assert_eq!(toks("99999999999999999999"), vec![Tok::Float(1e20)]);
    }

    #[test]
    fn text_literal_with_doubled_quote() {
        assert_eq!(toks("'it''s json'"), vec![Tok::Text("it's json".into())]);
    }

    #[test]
    fn unterminated_literal_reports_start() {
        match tokenize("  'oops").unwrap_err() {
            EqlError::Lex { pos, message } => {
                assert_eq!(pos, 2);
                assert!(message.contains("unterminated"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn comment_runs_to_end_of_line() {
        assert_eq!(toks("1 -- ignored ; tokens\n2"), vec![Tok::Int(1), Tok::Int(2)]);
    }

    #[test]
    fn minus_vs_comment() {
        assert_eq!(toks("1 - 2"), vec![Tok::Int(1), Tok::Minus, Tok::Int(2)]);
    }

    #[test]
    fn comparison_operators() {
        assert_eq!(toks("< <= <> > >= ="), vec![
            Tok::Lt,
            Tok::Le,
            Tok::Ne,
            Tok::Gt,
            Tok::Ge,
            Tok::Eq,
        ]);
    }

    #[test]
    fn illegal_character_with_position() {
        match tokenize("A @ B").unwrap_err() {
            EqlError::Lex { pos, message } => {
                assert_eq!(pos, 2);
                assert!(message.contains('@'));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_ascii_rejected_not_panicking() {
        assert!(tokenize("SELECT ° FROM X").is_err());
        assert!(tokenize("日本語").is_err());
    }

    #[test]
    fn dangling_dot_is_illegal() {
        assert!(matches!(tokenize("1."), Err(EqlError::Lex { pos: 1, .. })));
    }
}

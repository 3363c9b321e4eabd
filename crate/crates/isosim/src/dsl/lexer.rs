//! Tokenizer for potential expressions.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Number,
    Ident,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    /// End-of-input marker; always the last token of a stream.
    End,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    /// Byte offset of the first character of the token in the source.
    pub position: usize,
}

/// Split a source string into tokens. Whitespace separates tokens and is
/// dropped; the concatenation of the returned token texts reproduces the
/// source up to whitespace. A trailing [`TokenKind::End`] marker is always
/// appended.
pub fn tokenize(source: &str) -> Result<Vec<Token>> {
    let mut tokens = Vec::new();
    let mut chars = source.char_indices().peekable();

    while let Some(&(pos, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        let single = |kind: TokenKind| Token {
            kind,
            text: c.to_string(),
            position: pos,
        };
        match c {
            '+' => {
                tokens.push(single(TokenKind::Plus));
                chars.next();
            }
            '-' => {
                tokens.push(single(TokenKind::Minus));
                chars.next();
            }
            '*' => {
                tokens.push(single(TokenKind::Star));
                chars.next();
            }
            '/' => {
                tokens.push(single(TokenKind::Slash));
                chars.next();
            }
            '^' => {
                tokens.push(single(TokenKind::Caret));
                chars.next();
            }
            '(' => {
                tokens.push(single(TokenKind::LParen));
                chars.next();
            }
            ')' => {
                tokens.push(single(TokenKind::RParen));
                chars.next();
            }
            ',' => {
                tokens.push(single(TokenKind::Comma));
                chars.next();
            }
            '0'..='9' | '.' => {
                tokens.push(lex_number(source, &mut chars, pos)?);
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut end = pos;
                while let Some(&(p, ch)) = chars.peek() {
                    if ch.is_ascii_alphanumeric() || ch == '_' {
                        end = p + ch.len_utf8();
                        chars.next();
                    } else {
                        break;
                    }
                }
                tokens.push(Token {
                    kind: TokenKind::Ident,
                    text: source[pos..end].to_string(),
                    position: pos,
                });
            }
            other => {
                return Err(Error::Lex {
                    message: format!("unknown character `{other}`"),
                    offset: pos,
                });
            }
        }
    }

    tokens.push(Token {
        kind: TokenKind::End,
        text: String::new(),
        position: source.len(),
    });
    Ok(tokens)
}

fn lex_number(
    source: &str,
    chars: &mut std::iter::Peekable<std::str::CharIndices>,
    start: usize,
) -> Result<Token> {
    let mut end = start;
    let mut saw_digit = false;

    let eat_digits = |chars: &mut std::iter::Peekable<std::str::CharIndices>,
                          end: &mut usize,
                          saw: &mut bool| {
        while let Some(&(p, ch)) = chars.peek() {
            if ch.is_ascii_digit() {
                *end = p + 1;
                *saw = true;
                chars.next();
            } else {
                break;
            }
        }
    };

    eat_digits(chars, &mut end, &mut saw_digit);
    if let Some(&(p, '.')) = chars.peek() {
        end = p + 1;
        chars.next();
        eat_digits(chars, &mut end, &mut saw_digit);
    }
    if !saw_digit {
        return Err(Error::Lex {
            message: "malformed number: no digits".into(),
            offset: start,
        });
    }
    if let Some(&(p, ch)) = chars.peek() {
        if ch == 'e' || ch == 'E' {
            end = p + 1;
            chars.next();
            if let Some(&(p, sign)) = chars.peek() {
                if sign == '+' || sign == '-' {
                    end = p + 1;
                    chars.next();
                }
            }
            let mut saw_exp = false;
            eat_digits(chars, &mut end, &mut saw_exp);
            if !saw_exp {
                return Err(Error::Lex {
                    message: "malformed number: exponent has no digits".into(),
                    offset: start,
                });
            }
        }
    }

    let text = &source[start..end];
    let value: f64 = text.parse().map_err(|_| Error::Lex {
        message: format!("malformed number `{text}`"),
        offset: start,
    })?;
    if !value.is_finite() {
        return Err(Error::Lex {
            message: format!("number `{text}` is not a finite real"),
            offset: start,
        });
    }
    Ok(Token {
        kind: TokenKind::Number,
        text: text.to_string(),
        position: start,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(src).unwrap().iter().map(|t| t.kind).collect()
    }

    #[test]
    fn simple_stream() {
        let toks = tokenize("x1+2").unwrap();
        let texts: Vec<&str> = toks.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, vec!["x1", "+", "2", ""]);
        assert_eq!(
            toks.iter().map(|t| t.kind).collect::<Vec<_>>(),
            vec![
                TokenKind::Ident,
                TokenKind::Plus,
                TokenKind::Number,
                TokenKind::End
            ]
        );
    }

    #[test]
    fn empty_input_yields_end_marker_only() {
        let toks = tokenize("").unwrap();
        assert_eq!(toks.len(), 1);
        assert_eq!(toks[0].kind, TokenKind::End);
    }

    #[test]
    fn nine_tokens_for_quadratic() {
        let toks = tokenize("0.5*(x1-x2)^2").unwrap();
        // end marker excluded
        assert_eq!(toks.len() - 1, 9);
        assert_eq!(toks[7].text, "^");
        assert_eq!(toks[8].text, "2");
    }

    #[test]
    fn positions_strictly_increase_and_texts_rebuild_source() {
        let src = "  sin( x1 ) * 2.5e-1 + pi ";
        let toks = tokenize(src).unwrap();
        let mut prev = None;
        for t in &toks {
            if let Some(p) = prev {
                assert!(t.position > p, "positions must strictly increase");
            }
            prev = Some(t.position);
        }
        let rebuilt: String = toks.iter().map(|t| t.text.as_str()).collect();
        let stripped: String = src.chars().filter(|c| !c.is_whitespace()).collect();
        assert_eq!(rebuilt, stripped);
    }

    #[test]
    fn number_forms() {
        assert_eq!(kinds("1 1.5 .5 2. 1e3 1.2e-4"), vec![TokenKind::Number; 6].into_iter().chain([TokenKind::End]).collect::<Vec<_>>());
    }

    #[test]
    fn lex_errors() {
        let err = tokenize("x1 $ x2").unwrap_err();
        match err {
            Error::Lex { offset, .. } => assert_eq!(offset, 3),
            other => panic!("expected lex error, got {other:?}"),
        }
        assert!(tokenize("1e").is_err());
        assert!(tokenize("1e+").is_err());
        assert!(tokenize(".").is_err());
        assert!(tokenize("1e999").is_err(), "overflowing literal must be rejected");
    }
}

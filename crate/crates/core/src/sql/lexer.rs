use super::ast::Span;
use super::{IssueCode, QueryIssue};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    /// Double-quoted identifier; never treated as a keyword.
    Quoted(String),
    Int(i64),
    Float(f64),
    Str(String),
    LParen,
    RParen,
    Comma,
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
    Semi,
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

impl Token {
    /// Case-insensitive keyword test; quoted identifiers never match.
    pub fn is_kw(&self, kw: &str) -> bool {
        matches!(&self.tok, Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }
}

fn syntax(msg: impl Into<String>, start: usize, end: usize) -> QueryIssue {
    QueryIssue::error(IssueCode::Syntax, msg, Span::new(start, end))
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, QueryIssue> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'-' && bytes.get(i + 1) == Some(&b'-') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let tok = if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            Tok::Ident(src[start..i].to_string())
        } else if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let mut is_float = false;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'.' {
                is_float = true;
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    is_float = true;
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            if is_float {
                Tok::Float(text.parse().map_err(|_| syntax(format!("bad number `{text}`"), start, i))?)
            } else {
                Tok::Int(
                    text.parse()
                        .map_err(|_| syntax(format!("integer `{text}` out of range"), start, i))?,
                )
            }
        } else if c == b'\'' || c == b'"' {
            let quote = c;
            i += 1;
            let mut s = String::new();
            loop {
                let Some(&b) = bytes.get(i) else {
                    return Err(syntax("unterminated quote", start, i));
                };
                if b == quote {
                    if bytes.get(i + 1) == Some(&quote) {
                        s.push(quote as char);
                        i += 2;
                        continue;
                    }
                    i += 1;
                    break;
                }
                let ch = src[i..].chars().next().expect("in bounds");
                s.push(ch);
                i += ch.len_utf8();
            }
            if quote == b'\'' {
                Tok::Str(s)
            } else {
                Tok::Quoted(s)
            }
        } else {
            i += 1;
            let next = bytes.get(i).copied();
            match (c, next) {
                (b'!', Some(b'=')) | (b'<', Some(b'>')) => {
                    i += 1;
                    Tok::Ne
                }
                (b'<', Some(b'=')) => {
                    i += 1;
                    Tok::Le
                }
                (b'>', Some(b'=')) => {
                    i += 1;
                    Tok::Ge
                }
                (b'(', _) => Tok::LParen,
                (b')', _) => Tok::RParen,
                (b',', _) => Tok::Comma,
                (b'*', _) => Tok::Star,
                (b'+', _) => Tok::Plus,
                (b'-', _) => Tok::Minus,
                (b'/', _) => Tok::Slash,
                (b'=', _) => Tok::Eq,
                (b'<', _) => Tok::Lt,
                (b'>', _) => Tok::Gt,
                (b';', _) => Tok::Semi,
                _ => {
                    let ch = src[start..].chars().next().expect("in bounds");
                    return Err(syntax(format!("unexpected character `{ch}`"), start, start + ch.len_utf8()));
                }
            }
        };
        out.push(Token { tok, span: Span::new(start, i) });
    }
    out.push(Token { tok: Tok::Eof, span: Span::new(src.len(), src.len()) });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn numbers_and_operators() {
        assert_eq!(
            toks("a>=1.5e2<>'it''s'"),
            vec![
                Tok::Ident("a".into()),
                Tok::Ge,
                Tok::Float(150.0),
                Tok::Ne,
                Tok::Str("it's".into()),
                Tok::Eof
            ]
        );
        assert_eq!(toks("1e-7"), vec![Tok::Float(1e-7), Tok::Eof]);
    }

    #[test]
    fn spans_are_byte_offsets() {
        let t = tokenize("SELECT  x").unwrap();
        assert_eq!(t[1].span, Span::new(8, 9));
    }

    #[test]
    fn bad_char_is_syntax() {
        let e = tokenize("a # b").unwrap_err();
        assert_eq!(e.code, IssueCode::Syntax);
        assert_eq!(e.span, Some(Span::new(2, 3)));
    }
}

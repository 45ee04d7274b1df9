//! Tokenizer for `.mela` source text. `//` starts a line comment.

use crate::diag::{Diagnostic, Pos};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    // reserved words
    Param,
    Space,
    Agent,
    Env,
    Init,
    Nil,
    All,
    Up,
    Down,
    New,
    NewV,
    Dist,
    Min,
    Max,
    // punctuation
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Colon,
    Eq,
    Plus,
    Minus,
    Star,
    Slash,
    Dot,
    Pipe,
    Arrow,
    BackArrow,
    Hash,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Int(n) => format!("integer `{n}`"),
            Tok::Float(v) => format!("number `{v}`"),
            Tok::Eof => "end of input".to_string(),
            other => format!("`{}`", other.text()),
        }
    }

    fn text(&self) -> &'static str {
        match self {
            Tok::Param => "param",
            Tok::Space => "space",
            Tok::Agent => "agent",
            Tok::Env => "env",
            Tok::Init => "init",
            Tok::Nil => "nil",
            Tok::All => "all",
            Tok::Up => "up",
            Tok::Down => "down",
            Tok::New => "new",
            Tok::NewV => "new_v",
            Tok::Dist => "dist",
            Tok::Min => "min",
            Tok::Max => "max",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Comma => ",",
            Tok::Semi => ";",
            Tok::Colon => ":",
            Tok::Eq => "=",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Dot => ".",
            Tok::Pipe => "|",
            Tok::Arrow => "->",
            Tok::BackArrow => "<-",
            Tok::Hash => "#",
            _ => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

fn keyword(word: &str) -> Option<Tok> {
    Some(match word {
        "param" => Tok::Param,
        "space" => Tok::Space,
        "agent" => Tok::Agent,
        "env" => Tok::Env,
        "init" => Tok::Init,
        "nil" => Tok::Nil,
        "all" => Tok::All,
        "up" => Tok::Up,
        "down" => Tok::Down,
        "new" => Tok::New,
        "new_v" => Tok::NewV,
        "dist" => Tok::Dist,
        "min" => Tok::Min,
        "max" => Tok::Max,
        _ => return None,
    })
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, Diagnostic> {
    let mut out = Vec::new();
    let bytes = src.as_bytes();
    let mut i = 0usize;
    let mut line = 1u32;
    let mut col = 1u32;

    macro_rules! push {
        ($tok:expr, $pos:expr) => {
            out.push(Token { tok: $tok, pos: $pos })
        };
    }

    while i < bytes.len() {
        let c = bytes[i] as char;
        let pos = Pos::new(line, col);
        match c {
            ' ' | '\t' | '\r' => {
                i += 1;
                col += 1;
            }
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            '/' if i + 1 < bytes.len() && bytes[i + 1] == b'/' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            '(' => {
                push!(Tok::LParen, pos);
                i += 1;
                col += 1;
            }
            ')' => {
                push!(Tok::RParen, pos);
                i += 1;
                col += 1;
            }
            '{' => {
                push!(Tok::LBrace, pos);
                i += 1;
                col += 1;
            }
            '}' => {
                push!(Tok::RBrace, pos);
                i += 1;
                col += 1;
            }
            '[' => {
                push!(Tok::LBracket, pos);
                i += 1;
                col += 1;
            }
            ']' => {
                push!(Tok::RBracket, pos);
                i += 1;
                col += 1;
            }
            ',' => {
                push!(Tok::Comma, pos);
                i += 1;
                col += 1;
            }
            ';' => {
                push!(Tok::Semi, pos);
                i += 1;
                col += 1;
            }
            ':' => {
                push!(Tok::Colon, pos);
                i += 1;
                col += 1;
            }
            '=' => {
                push!(Tok::Eq, pos);
                i += 1;
                col += 1;
            }
            '+' => {
                push!(Tok::Plus, pos);
                i += 1;
                col += 1;
            }
            '*' => {
                push!(Tok::Star, pos);
                i += 1;
                col += 1;
            }
            '/' => {
                push!(Tok::Slash, pos);
                i += 1;
                col += 1;
            }
            '.' => {
                push!(Tok::Dot, pos);
                i += 1;
                col += 1;
            }
            '|' => {
                push!(Tok::Pipe, pos);
                i += 1;
                col += 1;
            }
            '#' => {
                push!(Tok::Hash, pos);
                i += 1;
                col += 1;
            }
            '-' => {
                if i + 1 < bytes.len() && bytes[i + 1] == b'>' {
                    push!(Tok::Arrow, pos);
                    i += 2;
                    col += 2;
                } else {
                    push!(Tok::Minus, pos);
                    i += 1;
                    col += 1;
                }
            }
            '<' => {
                if i + 1 < bytes.len() && bytes[i + 1] == b'-' {
                    push!(Tok::BackArrow, pos);
                    i += 2;
                    col += 2;
                } else {
                    return Err(Diagnostic::error("unexpected character `<`", Some(pos)));
                }
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let mut is_float = false;
                if i < bytes.len()
                    && bytes[i] == b'.'
                    && i + 1 < bytes.len()
                    && bytes[i + 1].is_ascii_digit()
                {
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
                col += (i - start) as u32;
                if is_float {
                    match text.parse::<f64>() {
                        Ok(v) => push!(Tok::Float(v), pos),
                        Err(_) => {
                            return Err(Diagnostic::error(
                                format!("invalid number literal `{text}`"),
                                Some(pos),
                            ))
                        }
                    }
                } else {
                    match text.parse::<i64>() {
                        Ok(v) => push!(Tok::Int(v), pos),
                        Err(_) => {
                            return Err(Diagnostic::error(
                                format!("integer literal `{text}` out of range"),
                                Some(pos),
                            ))
                        }
                    }
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                let word = &src[start..i];
                col += (i - start) as u32;
                match keyword(word) {
                    Some(t) => push!(t, pos),
                    None => push!(Tok::Ident(word.to_string()), pos),
                }
            }
            other => {
                return Err(Diagnostic::error(
                    format!("unexpected character `{other}`"),
                    Some(pos),
                ));
            }
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        pos: Pos::new(line, col),
    });
    Ok(out)
}

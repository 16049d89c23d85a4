use crate::error::Diagnostic;

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Dot,
    Bar,
    Eq,
    Arrow,
    Plus,
    Minus,
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{}`", s),
            Tok::Int(i) => format!("integer `{}`", i),
            Tok::Float(x) => format!("number `{}`", x),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Bar => "`|`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Arrow => "`<-`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '\''
}

/// Splits `text` into tokens. `#` comments run to the end of the line.
///
/// A word starting with digits but containing letters (`1min`) is an
/// identifier; `.5` and `0.5` are numbers.
pub(crate) fn tokenize(text: &str) -> Result<Vec<Token>, Vec<Diagnostic>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut errors = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    while i < chars.len() {
        let c = chars[i];
        let (tline, tcol) = (line, col);
        let advance = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            advance(1, &mut i, &mut col);
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let digit_at = |j: usize| j < chars.len() && chars[j].is_ascii_digit();
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            ',' => Some(Tok::Comma),
            '|' => Some(Tok::Bar),
            '=' => Some(Tok::Eq),
            '+' => Some(Tok::Plus),
            '.' if !digit_at(i + 1) => Some(Tok::Dot),
            '-' => Some(Tok::Minus),
            _ => None,
        };
        if c == '<' && i + 1 < chars.len() && chars[i + 1] == '-' {
            out.push(Token { tok: Tok::Arrow, line: tline, col: tcol });
            advance(2, &mut i, &mut col);
            continue;
        }
        if let Some(tok) = single {
            out.push(Token { tok, line: tline, col: tcol });
            advance(1, &mut i, &mut col);
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let start = i;
            let mut j = i;
            while digit_at(j) {
                j += 1;
            }
            let mut is_float = false;
            if j < chars.len() && chars[j] == '.' && digit_at(j + 1) {
                is_float = true;
                j += 1;
                while digit_at(j) {
                    j += 1;
                }
            }
            // exponent
            if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                let mut k = j + 1;
                if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                    k += 1;
                }
                if digit_at(k) && (is_float || k > j + 1) {
                    is_float = true;
                    j = k;
                    while digit_at(j) {
                        j += 1;
                    }
                }
            }
            if !is_float && j < chars.len() && is_word(chars[j]) {
                while j < chars.len() && is_word(chars[j]) {
                    j += 1;
                }
                let word: String = chars[start..j].iter().collect();
                out.push(Token { tok: Tok::Ident(word), line: tline, col: tcol });
            } else {
                let word: String = chars[start..j].iter().collect();
                let tok = if is_float {
                    word.parse::<f64>().map(Tok::Float).map_err(|e| e.to_string())
                } else {
                    word.parse::<i64>().map(Tok::Int).map_err(|e| e.to_string())
                };
                match tok {
                    Ok(tok) => out.push(Token { tok, line: tline, col: tcol }),
                    Err(e) => errors.push(Diagnostic::error(tline, tcol, format!("bad number `{}`: {}", word, e))),
                }
            }
            col += j - i;
            i = j;
            continue;
        }
        if is_word(c) {
            let start = i;
            while i < chars.len() && is_word(chars[i]) {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            col += i - start;
            out.push(Token { tok: Tok::Ident(word), line: tline, col: tcol });
            continue;
        }
        errors.push(Diagnostic::error(tline, tcol, format!("unexpected character `{}`", c)));
        advance(1, &mut i, &mut col);
    }
    out.push(Token { tok: Tok::Eof, line, col });
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(errors)
    }
}

//! Tokenizer for constraint and action sentences.
//!
//! Input is lowercased, split on whitespace, stripped of sentence punctuation,
//! and possessive `'s` suffixes become their own token. Numbers glued to a
//! unit (`5cm`) are split in two.

#[derive(Clone, Debug, PartialEq)]
pub enum Token {
    Word(String),
    Number { text: String, value: f64 },
}

impl Token {
    pub fn text(&self) -> &str {
        match self {
            Token::Word(w) => w,
            Token::Number { text, .. } => text,
        }
    }
}

fn is_number_char(c: char) -> bool {
    c.is_ascii_digit() || c == '.' || c == '-' || c == '+'
}

fn parse_number(s: &str) -> Option<f64> {
    let body = s.strip_prefix(['-', '+']).unwrap_or(s);
    if body.is_empty() || !body.chars().next()?.is_ascii_digit() {
        return None;
    }
    if !body.chars().all(|c| c.is_ascii_digit() || c == '.') {
        return None;
    }
    let v: f64 = s.parse().ok()?;
    v.is_finite().then_some(v)
}

fn push_chunk(out: &mut Vec<Token>, chunk: &str) {
    if chunk.is_empty() {
        return;
    }
    if let Some(value) = parse_number(chunk) {
        out.push(Token::Number {
            text: chunk.to_string(),
            value,
        });
        return;
    }
    // "5cm" → "5", "cm"
    let split = chunk
        .char_indices()
        .find(|&(_, c)| !is_number_char(c))
        .map(|(i, _)| i)
        .unwrap_or(chunk.len());
    if split > 0 && split < chunk.len() {
        if let Some(value) = parse_number(&chunk[..split]) {
            out.push(Token::Number {
                text: chunk[..split].to_string(),
                value,
            });
            out.push(Token::Word(chunk[split..].to_string()));
            return;
        }
    }
    out.push(Token::Word(chunk.to_string()));
}

pub fn tokenize(input: &str) -> Vec<Token> {
    let lower = input.to_lowercase().replace('\u{2019}', "'");
    let mut out = Vec::new();
    for raw in lower.split_whitespace() {
        let mut chunk = raw.trim_matches(|c: char| matches!(c, '.' | ',' | ';' | ':' | '!' | '"'));
        // a number may legitimately end in '.', e.g. "7." at sentence end
        let mut possessive = false;
        if let Some(stem) = chunk.strip_suffix("'s") {
            chunk = stem;
            possessive = true;
        }
        push_chunk(&mut out, chunk);
        if possessive {
            out.push(Token::Word("'s".to_string()));
        }
    }
    out
}

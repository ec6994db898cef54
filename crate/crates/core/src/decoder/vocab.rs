//! Token vocabularies.
//!
//! File format: one token per line. `\n`, `\t`, `\r`, `\\` and `\xHH`
//! escapes are decoded; a line reading exactly `<eos>` marks the
//! end-of-sequence token. Blank lines are skipped.

use std::collections::HashSet;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum VocabError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("token {0:?} appears twice")]
    Duplicate(String),
    #[error("tokens must be non-empty")]
    EmptyToken,
    #[error("more than one end-of-sequence token")]
    DuplicateEos,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    /// Byte content per token id; the end-of-sequence entry is empty.
    tokens: Vec<Vec<u8>>,
    eos: Option<u32>,
    max_len: usize,
}

impl Vocabulary {
    /// Content tokens followed by an end-of-sequence token when `with_eos`.
    pub fn new(tokens: Vec<Vec<u8>>, with_eos: bool) -> Result<Vocabulary, VocabError> {
        let mut seen = HashSet::new();
        for t in &tokens {
            if t.is_empty() {
                return Err(VocabError::EmptyToken);
            }
            if !seen.insert(t.as_slice()) {
                return Err(VocabError::Duplicate(String::from_utf8_lossy(t).into_owned()));
            }
        }
        let max_len = tokens.iter().map(Vec::len).max().unwrap_or(0);
        let mut tokens = tokens;
        let eos = with_eos.then(|| {
            tokens.push(Vec::new());
            (tokens.len() - 1) as u32
        });
        Ok(Vocabulary { tokens, eos, max_len })
    }

    /// One token per printable ASCII byte plus `\n` and `\t`, with an
    /// end-of-sequence token.
    pub fn printable_ascii() -> Vocabulary {
        let tokens = (0x20u8..=0x7e).chain(*b"\n\t").map(|b| vec![b]).collect();
        Vocabulary::new(tokens, true).expect("distinct single bytes")
    }

    pub fn from_strs(tokens: &[&str], with_eos: bool) -> Result<Vocabulary, VocabError> {
        Vocabulary::new(tokens.iter().map(|t| t.as_bytes().to_vec()).collect(), with_eos)
    }

    pub fn parse(text: &str) -> Result<Vocabulary, VocabError> {
        let mut tokens = Vec::new();
        let mut eos = None;
        let mut seen = HashSet::new();
        for (i, raw) in text.split('\n').enumerate() {
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.is_empty() {
                continue;
            }
            if line == "<eos>" {
                if eos.is_some() {
                    return Err(VocabError::DuplicateEos);
                }
                eos = Some(tokens.len() as u32);
                tokens.push(Vec::new());
                continue;
            }
            let bytes = unescape(line).map_err(|message| VocabError::Syntax { line: i + 1, message })?;
            if !seen.insert(bytes.clone()) {
                return Err(VocabError::Duplicate(line.to_owned()));
            }
            tokens.push(bytes);
        }
        let max_len = tokens.iter().map(Vec::len).max().unwrap_or(0);
        Ok(Vocabulary { tokens, eos, max_len })
    }

    /// Inverse of [`Vocabulary::parse`].
    pub fn to_file_text(&self) -> String {
        let mut out = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            if Some(i as u32) == self.eos {
                out.push_str("<eos>");
            } else {
                out.push_str(&escape(t));
            }
            out.push('\n');
        }
        out
    }

    /// Number of token ids, end-of-sequence included.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn eos(&self) -> Option<u32> {
        self.eos
    }

    pub fn is_eos(&self, id: u32) -> bool {
        self.eos == Some(id)
    }

    /// Content of a token; empty for end-of-sequence.
    pub fn bytes(&self, id: u32) -> &[u8] {
        &self.tokens[id as usize]
    }

    pub fn max_token_len(&self) -> usize {
        self.max_len
    }

    /// Ids of content tokens.
    pub fn content_ids(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.tokens.len() as u32).filter(move |&i| Some(i) != self.eos)
    }

    pub fn display(&self, id: u32) -> String {
        if self.is_eos(id) {
            "<eos>".to_owned()
        } else {
            escape(self.bytes(id))
        }
    }
}

fn unescape(line: &str) -> Result<Vec<u8>, String> {
    let b = line.as_bytes();
    let mut out = Vec::with_capacity(b.len());
    let mut i = 0;
    while i < b.len() {
        if b[i] != b'\\' {
            out.push(b[i]);
            i += 1;
            continue;
        }
        let c = *b.get(i + 1).ok_or("dangling backslash")?;
        i += 2;
        out.push(match c {
            b'n' => b'\n',
            b't' => b'\t',
            b'r' => b'\r',
            b'\\' => b'\\',
            b'x' => {
                let hex = b.get(i..i + 2).ok_or("short \\x escape")?;
                i += 2;
                let hex = std::str::from_utf8(hex).map_err(|_| "bad \\x escape")?;
                u8::from_str_radix(hex, 16).map_err(|_| "bad \\x escape")?
            }
            other => return Err(format!("unknown escape \\{}", other as char)),
        });
    }
    Ok(out)
}

pub fn escape(bytes: &[u8]) -> String {
    let mut out = String::new();
    for &b in bytes {
        match b {
            b'\n' => out.push_str("\\n"),
            b'\t' => out.push_str("\\t"),
            b'\r' => out.push_str("\\r"),
            b'\\' => out.push_str("\\\\"),
            0x20..=0x7e => out.push(b as char),
            _ => out.push_str(&format!("\\x{b:02x}")),
        }
    }
    if out == "<eos>" {
        out = "\\x3ceos>".to_owned();
    }
    out
}

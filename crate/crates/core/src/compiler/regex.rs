//! Byte-level regex dialect.
//!
//! Supported: literals, escapes, `.` (any byte), classes with ranges and
//! negation, `|`, `*`, `+`, `?`, `{m}`, `{m,}`, `{m,n}`, and `( )` / `(?: )`
//! grouping. Matching is always whole-input, so anchors are rejected along
//! with lookaround, backreferences, lazy quantifiers and class set
//! operations.

use super::expr::{ByteSet, Expr};
use super::CompileError;

pub fn parse(pattern: &str) -> Result<Expr, CompileError> {
    let mut p = Parser {
        src: pattern.as_bytes(),
        pos: 0,
    };
    let e = p.parse_alt()?;
    if p.pos < p.src.len() {
        return Err(p.syntax("unbalanced ')'"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

const MAX_REPEAT: u32 = 1000;

fn digit_class() -> ByteSet {
    ByteSet::range(b'0', b'9')
}

fn word_class() -> ByteSet {
    ByteSet::range(b'a', b'z')
        .union(&ByteSet::range(b'A', b'Z'))
        .union(&digit_class())
        .union(&ByteSet::single(b'_'))
}

fn space_class() -> ByteSet {
    let mut s = ByteSet::empty();
    for b in [b' ', b'\t', b'\n', b'\r', 0x0b, 0x0c] {
        s.insert(b);
    }
    s
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek_at(&self, k: usize) -> Option<u8> {
        self.src.get(self.pos + k).copied()
    }

    fn syntax(&self, msg: &str) -> CompileError {
        CompileError::Syntax {
            offset: self.pos,
            message: msg.to_owned(),
        }
    }

    fn unsupported(&self, op: &str) -> CompileError {
        CompileError::UnsupportedOperator {
            op: op.to_owned(),
            offset: self.pos,
        }
    }

    fn parse_alt(&mut self) -> Result<Expr, CompileError> {
        let mut branches = vec![self.parse_concat()?];
        while self.peek() == Some(b'|') {
            self.pos += 1;
            branches.push(self.parse_concat()?);
        }
        Ok(if branches.len() == 1 {
            branches.pop().unwrap()
        } else {
            Expr::Alt(branches)
        })
    }

    fn parse_concat(&mut self) -> Result<Expr, CompileError> {
        let mut parts = Vec::new();
        while let Some(c) = self.peek() {
            if c == b'|' || c == b')' {
                break;
            }
            parts.push(self.parse_repeat()?);
        }
        Ok(match parts.len() {
            0 => Expr::Epsilon,
            1 => parts.pop().unwrap(),
            _ => Expr::Concat(parts),
        })
    }

    fn parse_repeat(&mut self) -> Result<Expr, CompileError> {
        let mut atom = self.parse_atom()?;
        loop {
            let (min, max) = match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    (0, None)
                }
                Some(b'+') => {
                    self.pos += 1;
                    (1, None)
                }
                Some(b'?') => {
                    self.pos += 1;
                    (0, Some(1))
                }
                Some(b'{') => self.parse_counted()?,
                _ => break,
            };
            if matches!(self.peek(), Some(b'?') | Some(b'+')) {
                let op = if self.peek() == Some(b'?') { "lazy quantifier" } else { "possessive quantifier" };
                return Err(self.unsupported(op));
            }
            atom = Expr::Repeat {
                inner: Box::new(atom),
                min,
                max,
            };
        }
        Ok(atom)
    }

    fn parse_number(&mut self) -> Option<u32> {
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        if start == self.pos {
            return None;
        }
        std::str::from_utf8(&self.src[start..self.pos]).ok()?.parse().ok()
    }

    fn parse_counted(&mut self) -> Result<(u32, Option<u32>), CompileError> {
        let open = self.pos;
        self.pos += 1;
        let min = self
            .parse_number()
            .ok_or_else(|| self.syntax("expected a repetition count"))?;
        let max = if self.peek() == Some(b',') {
            self.pos += 1;
            if self.peek() == Some(b'}') {
                None
            } else {
                Some(
                    self.parse_number()
                        .ok_or_else(|| self.syntax("expected an upper repetition bound"))?,
                )
            }
        } else {
            Some(min)
        };
        if self.peek() != Some(b'}') {
            return Err(self.syntax("unterminated repetition"));
        }
        self.pos += 1;
        if let Some(max) = max {
            if max < min {
                self.pos = open;
                return Err(self.syntax("repetition bounds out of order"));
            }
        }
        if min > MAX_REPEAT || max.is_some_and(|m| m > MAX_REPEAT) {
            self.pos = open;
            return Err(self.syntax("repetition count too large"));
        }
        Ok((min, max))
    }

    fn parse_atom(&mut self) -> Result<Expr, CompileError> {
        let c = self.peek().ok_or_else(|| self.syntax("unexpected end of pattern"))?;
        match c {
            b'(' => {
                self.pos += 1;
                if self.peek() == Some(b'?') {
                    if self.peek_at(1) == Some(b':') {
                        self.pos += 2;
                    } else {
                        return Err(self.unsupported("(?"));
                    }
                }
                let inner = self.parse_alt()?;
                if self.peek() != Some(b')') {
                    return Err(self.syntax("unclosed group"));
                }
                self.pos += 1;
                Ok(inner)
            }
            b'[' => self.parse_class().map(Expr::Bytes),
            b'.' => {
                self.pos += 1;
                Ok(Expr::Bytes(ByteSet::full()))
            }
            b'\\' => self.parse_escape().map(Expr::Bytes),
            b'^' => Err(self.unsupported("^")),
            b'$' => Err(self.unsupported("$")),
            b'*' | b'+' | b'?' | b'{' => Err(self.syntax("quantifier without operand")),
            b')' => Err(self.syntax("unbalanced ')'")),
            c if c >= 0xc0 => {
                // A multi-byte UTF-8 character is a single atom.
                let width = match c {
                    0xc0..=0xdf => 2,
                    0xe0..=0xef => 3,
                    _ => 4,
                };
                let end = (self.pos + width).min(self.src.len());
                let e = Expr::literal(&self.src[self.pos..end]);
                self.pos = end;
                Ok(e)
            }
            _ => {
                self.pos += 1;
                Ok(Expr::Bytes(ByteSet::single(c)))
            }
        }
    }

    fn parse_hex(&mut self) -> Result<u8, CompileError> {
        let hex = self
            .src
            .get(self.pos..self.pos + 2)
            .ok_or_else(|| self.syntax("truncated \\x escape"))?;
        let s = std::str::from_utf8(hex).map_err(|_| self.syntax("bad \\x escape"))?;
        let b = u8::from_str_radix(s, 16).map_err(|_| self.syntax("bad \\x escape"))?;
        self.pos += 2;
        Ok(b)
    }

    /// Escape at `self.pos` (pointing at the backslash).
    fn parse_escape(&mut self) -> Result<ByteSet, CompileError> {
        self.pos += 1;
        let c = self.peek().ok_or_else(|| self.syntax("trailing backslash"))?;
        self.pos += 1;
        let set = match c {
            b'd' => digit_class(),
            b'D' => digit_class().complement(),
            b'w' => word_class(),
            b'W' => word_class().complement(),
            b's' => space_class(),
            b'S' => space_class().complement(),
            b'n' => ByteSet::single(b'\n'),
            b't' => ByteSet::single(b'\t'),
            b'r' => ByteSet::single(b'\r'),
            b'f' => ByteSet::single(0x0c),
            b'v' => ByteSet::single(0x0b),
            b'0' => ByteSet::single(0),
            b'x' => ByteSet::single(self.parse_hex()?),
            c if c.is_ascii_alphanumeric() => {
                self.pos -= 2;
                return Err(self.unsupported(&format!("\\{}", c as char)));
            }
            c => ByteSet::single(c),
        };
        Ok(set)
    }

    fn parse_class(&mut self) -> Result<ByteSet, CompileError> {
        self.pos += 1;
        let negated = self.peek() == Some(b'^');
        if negated {
            self.pos += 1;
        }
        let mut set = ByteSet::empty();
        let mut first = true;
        loop {
            let c = self.peek().ok_or_else(|| self.syntax("unclosed character class"))?;
            if c == b']' && !first {
                self.pos += 1;
                break;
            }
            first = false;
            for op in [b"&&", b"--", b"~~"] {
                if self.src[self.pos..].starts_with(op) {
                    return Err(self.unsupported(std::str::from_utf8(op).unwrap()));
                }
            }
            if c == b'[' {
                return Err(self.unsupported("nested class"));
            }
            if c >= 0x80 {
                return Err(self.unsupported("non-ASCII byte in class"));
            }
            let lo = if c == b'\\' {
                let esc = self.parse_escape()?;
                if esc.len() != 1 {
                    set = set.union(&esc);
                    continue;
                }
                let b = esc.iter().next().unwrap();
                b
            } else {
                self.pos += 1;
                c
            };
            if self.peek() == Some(b'-') && self.peek_at(1).is_some_and(|n| n != b']') {
                self.pos += 1;
                let hc = self.peek().unwrap();
                let hi = if hc == b'\\' {
                    let esc = self.parse_escape()?;
                    if esc.len() != 1 {
                        return Err(self.syntax("class escape cannot end a range"));
                    }
                    let b = esc.iter().next().unwrap();
                    b
                } else {
                    if hc >= 0x80 {
                        return Err(self.unsupported("non-ASCII byte in class"));
                    }
                    self.pos += 1;
                    hc
                };
                if hi < lo {
                    return Err(self.syntax("class range out of order"));
                }
                set = set.union(&ByteSet::range(lo, hi));
            } else {
                set.insert(lo);
            }
        }
        Ok(if negated { set.complement() } else { set })
    }
}

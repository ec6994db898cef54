//! Byte-level regular expressions shared by every front end.

use std::fmt;

/// A set of bytes as a 256-bit bitmap.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ByteSet([u64; 4]);

impl ByteSet {
    pub const fn empty() -> Self {
        ByteSet([0; 4])
    }

    pub const fn full() -> Self {
        ByteSet([u64::MAX; 4])
    }

    pub fn single(b: u8) -> Self {
        let mut s = Self::empty();
        s.insert(b);
        s
    }

    pub fn range(lo: u8, hi: u8) -> Self {
        let mut s = Self::empty();
        for b in lo..=hi {
            s.insert(b);
        }
        s
    }

    pub fn insert(&mut self, b: u8) {
        self.0[(b >> 6) as usize] |= 1 << (b & 63);
    }

    pub fn contains(&self, b: u8) -> bool {
        self.0[(b >> 6) as usize] & (1 << (b & 63)) != 0
    }

    pub fn union(&self, other: &ByteSet) -> ByteSet {
        let mut out = *self;
        for i in 0..4 {
            out.0[i] |= other.0[i];
        }
        out
    }

    pub fn intersect(&self, other: &ByteSet) -> ByteSet {
        let mut out = *self;
        for i in 0..4 {
            out.0[i] &= other.0[i];
        }
        out
    }

    pub fn complement(&self) -> ByteSet {
        let mut out = *self;
        for w in out.0.iter_mut() {
            *w = !*w;
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.0 == [0; 4]
    }

    pub fn len(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = u8> + '_ {
        (0u16..256).map(|b| b as u8).filter(move |&b| self.contains(b))
    }
}

impl fmt::Debug for ByteSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for b in self.iter() {
            write!(f, "{}", std::ascii::escape_default(b))?;
        }
        write!(f, "]")
    }
}

/// Regular expression over bytes. `Tag` labels the states created for its
/// body with a grammar symbol, used by coverage gates.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    /// Matches nothing.
    Empty,
    /// Matches only the empty string.
    Epsilon,
    Bytes(ByteSet),
    Concat(Vec<Expr>),
    Alt(Vec<Expr>),
    Repeat {
        inner: Box<Expr>,
        min: u32,
        max: Option<u32>,
    },
    Tag(String, Box<Expr>),
}

impl Expr {
    pub fn literal(bytes: &[u8]) -> Expr {
        match bytes.len() {
            0 => Expr::Epsilon,
            1 => Expr::Bytes(ByteSet::single(bytes[0])),
            _ => Expr::Concat(
                bytes
                    .iter()
                    .map(|&b| Expr::Bytes(ByteSet::single(b)))
                    .collect(),
            ),
        }
    }

    pub fn concat(parts: Vec<Expr>) -> Expr {
        let mut flat = Vec::with_capacity(parts.len());
        for p in parts {
            match p {
                Expr::Empty => return Expr::Empty,
                Expr::Epsilon => {}
                Expr::Concat(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => Expr::Epsilon,
            1 => flat.pop().unwrap(),
            _ => Expr::Concat(flat),
        }
    }

    pub fn alt(parts: Vec<Expr>) -> Expr {
        let mut flat = Vec::with_capacity(parts.len());
        for p in parts {
            match p {
                Expr::Empty => {}
                Expr::Alt(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => Expr::Empty,
            1 => flat.pop().unwrap(),
            _ => Expr::Alt(flat),
        }
    }

    pub fn repeat(inner: Expr, min: u32, max: Option<u32>) -> Expr {
        match (&inner, min, max) {
            (_, 0, Some(0)) => Expr::Epsilon,
            (_, 1, Some(1)) => inner,
            (Expr::Empty, 0, _) => Expr::Epsilon,
            (Expr::Empty, _, _) => Expr::Empty,
            (Expr::Epsilon, _, _) => Expr::Epsilon,
            _ => Expr::Repeat {
                inner: Box::new(inner),
                min,
                max,
            },
        }
    }

    pub fn optional(inner: Expr) -> Expr {
        Expr::repeat(inner, 0, Some(1))
    }

    pub fn star(inner: Expr) -> Expr {
        Expr::repeat(inner, 0, None)
    }

    pub fn tag(label: impl Into<String>, inner: Expr) -> Expr {
        match inner {
            Expr::Empty => Expr::Empty,
            other => Expr::Tag(label.into(), Box::new(other)),
        }
    }

    /// Restrict every byte leaf to `allowed`. The result matches exactly the
    /// strings of `self` whose bytes all lie in `allowed`.
    pub fn restrict_bytes(self, allowed: &ByteSet) -> Expr {
        match self {
            Expr::Bytes(s) => {
                let r = s.intersect(allowed);
                if r.is_empty() {
                    Expr::Empty
                } else {
                    Expr::Bytes(r)
                }
            }
            Expr::Concat(parts) => {
                Expr::concat(parts.into_iter().map(|p| p.restrict_bytes(allowed)).collect())
            }
            Expr::Alt(parts) => {
                Expr::alt(parts.into_iter().map(|p| p.restrict_bytes(allowed)).collect())
            }
            Expr::Repeat { inner, min, max } => {
                Expr::repeat(inner.restrict_bytes(allowed), min, max)
            }
            Expr::Tag(label, inner) => Expr::tag(label, inner.restrict_bytes(allowed)),
            other => other,
        }
    }

    /// Number of nodes in the expression tree.
    pub fn size(&self) -> usize {
        match self {
            Expr::Empty | Expr::Epsilon | Expr::Bytes(_) => 1,
            Expr::Concat(parts) | Expr::Alt(parts) => 1 + parts.iter().map(Expr::size).sum::<usize>(),
            Expr::Repeat { inner, .. } | Expr::Tag(_, inner) => 1 + inner.size(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byteset_ops() {
        let a = ByteSet::range(b'a', b'c');
        assert_eq!(a.len(), 3);
        assert!(a.contains(b'b'));
        assert!(!a.contains(b'd'));
        assert_eq!(a.complement().len(), 253);
        assert!(a.intersect(&ByteSet::single(b'z')).is_empty());
        assert_eq!(a.iter().collect::<Vec<_>>(), b"abc".to_vec());
        assert!(ByteSet::single(255).contains(255));
    }

    #[test]
    fn smart_constructors_simplify() {
        assert_eq!(Expr::concat(vec![Expr::Epsilon, Expr::literal(b"a")]), Expr::literal(b"a"));
        assert_eq!(Expr::concat(vec![Expr::Empty, Expr::literal(b"a")]), Expr::Empty);
        assert_eq!(Expr::alt(vec![Expr::Empty, Expr::Empty]), Expr::Empty);
        assert_eq!(Expr::repeat(Expr::Empty, 0, None), Expr::Epsilon);
    }

    #[test]
    fn restrict_removes_disallowed_leaves() {
        let e = Expr::alt(vec![Expr::literal(b"a\""), Expr::literal(b"b")]);
        let allowed = ByteSet::single(b'"').complement();
        assert_eq!(e.restrict_bytes(&allowed), Expr::literal(b"b"));
    }
}

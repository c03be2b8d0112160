//! Thread-local operation counting.
//!
//! Group operations performed through [`SystemParams`](super::SystemParams)
//! are reported here. A [`MeasureScope`] collects every operation executed on
//! the current thread while it is open; scopes nest, and an operation is
//! charged to every open scope.

use std::cell::RefCell;
use std::fmt;
use std::marker::PhantomData;
use std::ops::{Add, AddAssign};

/// Counts of the cost-model operations: exponentiations in each group,
/// multiplications in source group one and pairing evaluations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct OpCounter {
    pub e1: u64,
    pub e2: u64,
    pub et: u64,
    pub m1: u64,
    pub p: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    E1,
    E2,
    Et,
    M1,
    Pairing,
}

impl OpCounter {
    pub const ZERO: OpCounter = OpCounter {
        e1: 0,
        e2: 0,
        et: 0,
        m1: 0,
        p: 0,
    };

    pub const fn new(e1: u64, e2: u64, et: u64, m1: u64, p: u64) -> Self {
        OpCounter { e1, e2, et, m1, p }
    }

    pub fn reset(&mut self) {
        *self = Self::ZERO;
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::ZERO
    }

    fn bump(&mut self, op: Op) {
        match op {
            Op::E1 => self.e1 += 1,
            Op::E2 => self.e2 += 1,
            Op::Et => self.et += 1,
            Op::M1 => self.m1 += 1,
            Op::Pairing => self.p += 1,
        }
    }
}

impl Add for OpCounter {
    type Output = OpCounter;

    fn add(mut self, rhs: OpCounter) -> OpCounter {
        self += rhs;
        self
    }
}

impl AddAssign for OpCounter {
    fn add_assign(&mut self, rhs: OpCounter) {
        self.e1 += rhs.e1;
        self.e2 += rhs.e2;
        self.et += rhs.et;
        self.m1 += rhs.m1;
        self.p += rhs.p;
    }
}

impl OpCounter {
    fn render(&self, order: [(u64, &str); 5], f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (n, sym) in order.iter().filter(|(n, _)| *n > 0) {
            if !first {
                f.write_str(" + ")?;
            }
            write!(f, "{n} {sym}")?;
            first = false;
        }
        if first {
            f.write_str("--")?;
        }
        Ok(())
    }

    /// Exponentiations first, as in per-algorithm tables: `2 E1 + 1 M1`.
    pub fn exp_first(&self) -> impl fmt::Display + '_ {
        struct ExpFirst<'a>(&'a OpCounter);
        impl fmt::Display for ExpFirst<'_> {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let c = self.0;
                c.render(
                    [
                        (c.e1, "E1"),
                        (c.e2, "E2"),
                        (c.et, "ET"),
                        (c.m1, "M1"),
                        (c.p, "P"),
                    ],
                    f,
                )
            }
        }
        ExpFirst(self)
    }
}

impl fmt::Display for OpCounter {
    /// Multiplications first, as in per-phase tables: `5 M1 + 8 P + 2 E1`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.render(
            [
                (self.m1, "M1"),
                (self.p, "P"),
                (self.e1, "E1"),
                (self.e2, "E2"),
                (self.et, "ET"),
            ],
            f,
        )
    }
}

thread_local! {
    static SCOPES: RefCell<Vec<OpCounter>> = const { RefCell::new(Vec::new()) };
}

/// Charges `op` to every scope open on this thread.
pub(crate) fn record(op: Op) {
    SCOPES.with(|s| {
        for c in s.borrow_mut().iter_mut() {
            c.bump(op);
        }
    });
}

/// An open measurement scope. Not `Send`: counts are per thread.
#[must_use]
pub struct MeasureScope {
    depth: usize,
    _thread_bound: PhantomData<*const ()>,
}

impl MeasureScope {
    pub fn open() -> Self {
        let depth = SCOPES.with(|s| {
            let mut s = s.borrow_mut();
            s.push(OpCounter::ZERO);
            s.len()
        });
        MeasureScope {
            depth,
            _thread_bound: PhantomData,
        }
    }

    pub fn counts(&self) -> OpCounter {
        SCOPES.with(|s| s.borrow()[self.depth - 1])
    }

    pub fn reset(&self) {
        SCOPES.with(|s| s.borrow_mut()[self.depth - 1].reset());
    }

    pub fn close(self) -> OpCounter {
        self.counts()
    }
}

impl Drop for MeasureScope {
    fn drop(&mut self) {
        SCOPES.with(|s| {
            let mut s = s.borrow_mut();
            assert_eq!(
                s.len(),
                self.depth,
                "measurement scopes closed out of order"
            );
            s.pop();
        });
    }
}

/// Runs `f` inside a fresh scope and returns its result with the counts.
pub fn measure<T>(f: impl FnOnce() -> T) -> (T, OpCounter) {
    let scope = MeasureScope::open();
    let out = f();
    (out, scope.close())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_scopes_both_charged() {
        let outer = MeasureScope::open();
        record(Op::E1);
        {
            let inner = MeasureScope::open();
            record(Op::Pairing);
            assert_eq!(inner.counts(), OpCounter::new(0, 0, 0, 0, 1));
        }
        assert_eq!(outer.close(), OpCounter::new(1, 0, 0, 0, 1));
    }

    #[test]
    fn nothing_recorded_without_scope() {
        record(Op::M1);
        let (_, c) = measure(|| ());
        assert!(c.is_zero());
    }

    #[test]
    fn reset_zeroes() {
        let s = MeasureScope::open();
        record(Op::Et);
        record(Op::E2);
        s.reset();
        assert_eq!(s.counts(), OpCounter::ZERO);
        let mut c = OpCounter::new(1, 2, 3, 4, 5);
        c.reset();
        assert!(c.is_zero());
    }

    #[test]
    fn display_matches_table_layout() {
        assert_eq!(
            OpCounter::new(2, 0, 0, 5, 8).to_string(),
            "5 M1 + 8 P + 2 E1"
        );
        assert_eq!(OpCounter::ZERO.to_string(), "--");
        let hash = OpCounter::new(2, 0, 0, 1, 0);
        assert_eq!(hash.exp_first().to_string(), "2 E1 + 1 M1");
        assert_eq!(
            OpCounter::new(0, 0, 0, 1, 2).exp_first().to_string(),
            "1 M1 + 2 P"
        );
    }
}

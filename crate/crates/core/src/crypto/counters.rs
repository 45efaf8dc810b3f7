//! Per-thread primitive operation counters.
//!
//! Every counted primitive in [`crate::crypto`] bumps a thread-local tally.
//! Handlers are attributed to an entity by diffing snapshots around the call
//! (see [`measure`]). With the `op-counters` feature disabled the hooks
//! compile to nothing and all tallies read zero.

use std::ops::{Add, AddAssign, Mul, Sub};

use serde::{Deserialize, Serialize};

/// Tally of the primitive operations a protocol run performed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OpCounters {
    /// Symmetric encryptions and decryptions.
    pub sym: u64,
    /// Hybrid public-key encryptions and decryptions.
    pub asym: u64,
    /// Protocol-level hash invocations.
    pub hash: u64,
    /// XOR masking operations.
    pub xor: u64,
    /// Scalar point multiplications.
    pub point_mul: u64,
    /// Point additions.
    pub point_add: u64,
}

impl OpCounters {
    pub const ZERO: OpCounters = OpCounters {
        sym: 0,
        asym: 0,
        hash: 0,
        xor: 0,
        point_mul: 0,
        point_add: 0,
    };

    pub const fn new(sym: u64, asym: u64, hash: u64, xor: u64) -> Self {
        OpCounters {
            sym,
            asym,
            hash,
            xor,
            point_mul: 0,
            point_add: 0,
        }
    }

    pub const fn with_group_ops(mut self, point_mul: u64, point_add: u64) -> Self {
        self.point_mul = point_mul;
        self.point_add = point_add;
        self
    }
}

impl Add for OpCounters {
    type Output = OpCounters;

    fn add(self, o: OpCounters) -> OpCounters {
        OpCounters {
            sym: self.sym + o.sym,
            asym: self.asym + o.asym,
            hash: self.hash + o.hash,
            xor: self.xor + o.xor,
            point_mul: self.point_mul + o.point_mul,
            point_add: self.point_add + o.point_add,
        }
    }
}

impl AddAssign for OpCounters {
    fn add_assign(&mut self, o: OpCounters) {
        *self = *self + o;
    }
}

impl Sub for OpCounters {
    type Output = OpCounters;

    fn sub(self, o: OpCounters) -> OpCounters {
        OpCounters {
            sym: self.sym - o.sym,
            asym: self.asym - o.asym,
            hash: self.hash - o.hash,
            xor: self.xor - o.xor,
            point_mul: self.point_mul - o.point_mul,
            point_add: self.point_add - o.point_add,
        }
    }
}

impl Mul<u64> for OpCounters {
    type Output = OpCounters;

    fn mul(self, k: u64) -> OpCounters {
        OpCounters {
            sym: self.sym * k,
            asym: self.asym * k,
            hash: self.hash * k,
            xor: self.xor * k,
            point_mul: self.point_mul * k,
            point_add: self.point_add * k,
        }
    }
}

#[derive(Clone, Copy)]
pub(crate) enum Op {
    Sym,
    Asym,
    Hash,
    Xor,
    PointMul,
    PointAdd,
}

#[cfg(feature = "op-counters")]
mod imp {
    use super::{Op, OpCounters};
    use std::cell::Cell;

    thread_local! {
        static TALLY: Cell<OpCounters> = const { Cell::new(OpCounters::ZERO) };
    }

    #[inline]
    pub(crate) fn bump(op: Op) {
        TALLY.with(|t| {
            let mut c = t.get();
            match op {
                Op::Sym => c.sym += 1,
                Op::Asym => c.asym += 1,
                Op::Hash => c.hash += 1,
                Op::Xor => c.xor += 1,
                Op::PointMul => c.point_mul += 1,
                Op::PointAdd => c.point_add += 1,
            }
            t.set(c);
        });
    }

    pub(crate) fn snapshot() -> OpCounters {
        TALLY.with(|t| t.get())
    }

    pub(crate) fn reset() {
        TALLY.with(|t| t.set(OpCounters::ZERO));
    }
}

#[cfg(not(feature = "op-counters"))]
mod imp {
    use super::{Op, OpCounters};

    #[inline(always)]
    pub(crate) fn bump(_op: Op) {}

    pub(crate) fn snapshot() -> OpCounters {
        OpCounters::ZERO
    }

    pub(crate) fn reset() {}
}

pub(crate) use imp::bump;

/// Current thread's running tally.
pub fn snapshot() -> OpCounters {
    imp::snapshot()
}

/// Zero the current thread's tally.
pub fn reset() {
    imp::reset()
}

/// Run `f` and return the operations it performed on this thread.
pub fn measure<R>(f: impl FnOnce() -> R) -> (R, OpCounters) {
    let before = snapshot();
    let out = f();
    (out, snapshot() - before)
}

/// Whether counting hooks are compiled in.
pub const fn enabled() -> bool {
    cfg!(feature = "op-counters")
}

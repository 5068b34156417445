//! Test-only fault injection for validating the self-test harness.
//!
//! Faults are thread-local so concurrently running tests never observe each
//! other's injected faults.

use std::cell::Cell;

/// Operator whose backward pass can be deliberately perturbed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaultOp {
    Conv2d,
    GridSample,
    Softmax,
}

impl FaultOp {
    fn bit(self) -> u32 {
        match self {
            FaultOp::Conv2d => 1,
            FaultOp::GridSample => 2,
            FaultOp::Softmax => 4,
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "conv2d" => Some(FaultOp::Conv2d),
            "grid_sample" => Some(FaultOp::GridSample),
            "softmax" => Some(FaultOp::Softmax),
            _ => None,
        }
    }
}

thread_local! {
    static FAULTS: Cell<u32> = const { Cell::new(0) };
}

#[doc(hidden)]
pub fn set_fault(op: FaultOp, enabled: bool) {
    FAULTS.with(|f| {
        let bits = f.get();
        f.set(if enabled { bits | op.bit() } else { bits & !op.bit() });
    });
}

#[doc(hidden)]
pub fn clear_faults() {
    FAULTS.with(|f| f.set(0));
}

pub(crate) fn is_active(op: FaultOp) -> bool {
    FAULTS.with(|f| f.get() & op.bit() != 0)
}

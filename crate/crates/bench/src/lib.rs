//! Fixtures shared by the benchmarks.

use suc_core::genie::sample_instance;
use suc_core::{CipherKind, SucInstance, Trng};

/// Deterministic GENIE-sampled device of the given kind.
pub fn device(kind: CipherKind) -> SucInstance {
    sample_instance(kind, &mut Trng::from_u64(0x5eed)).expect("catalog sampling")
}

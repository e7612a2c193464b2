//! Secret Unknown Cipher toolkit: optimal 4-bit S-boxes, the NI and I cipher
//! classes, bitstream personalization, TA enrollment/identification and
//! the supporting analysis.

pub mod analysis;
pub mod cipher_i;
pub mod cipher_ni;
pub mod genie;
pub mod instance;
pub mod protocol;
pub mod sbox;
pub mod trng;

pub use analysis::{AnalysisError, Attack, AvalancheReport, BoundReport, ClassAvalancheReport};
pub use cipher_i::ISucSpec;
pub use cipher_ni::{CipherError, NiSucSpec};
pub use genie::{EntropyLedger, Genie, GenieError, VirtualBitstream};
pub use instance::{CipherKind, SucInstance};
pub use protocol::{Outcome, ProtocolError, UirRecord, UirStore};
pub use sbox::{SBox4, SBoxError};
pub use trng::{SeedError, Trng};

/// Any error the toolkit reports.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    SBox(#[from] SBoxError),
    #[error(transparent)]
    Cipher(#[from] CipherError),
    #[error(transparent)]
    Genie(#[from] GenieError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Seed(#[from] SeedError),
}

#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Once;

use suc_core::sbox::CATALOG_CACHE_ENV;

/// Points the involution catalog cache at the shared target tmpdir so only
/// the first test binary pays for the enumeration.
pub fn init_catalog_cache() {
    static ONCE: Once = Once::new();
    ONCE.call_once(|| {
        let path = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("involutive-optimal.sbx");
        std::env::set_var(CATALOG_CACHE_ENV, path);
    });
}

pub fn tmp_dir() -> tempfile::TempDir {
    tempfile::tempdir_in(env!("CARGO_TARGET_TMPDIR")).expect("tempdir")
}

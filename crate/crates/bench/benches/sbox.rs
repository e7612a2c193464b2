use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use suc_core::genie::{build_template, personalize};
use suc_core::{CipherKind, SBox4, Trng};

const PRESENT: [u8; 16] = [0xc, 0x5, 0x6, 0xb, 0x9, 0x0, 0xa, 0xd, 0x3, 0xe, 0xf, 0x8, 0x4, 0x7, 0x1, 0x2];

fn tables(c: &mut Criterion) {
    let s = SBox4::new(PRESENT).unwrap();
    c.bench_function("ddt", |b| b.iter(|| black_box(&s).diff_table()));
    c.bench_function("lat", |b| b.iter(|| black_box(&s).lin_table()));
    c.bench_function("is_optimal", |b| b.iter(|| black_box(&s).is_optimal()));
}

fn genie(c: &mut Criterion) {
    for kind in CipherKind::ALL {
        let template = build_template(&[0u8; 256], kind).unwrap();
        let mut rng = Trng::from_u64(1);
        // warm the catalog outside the timed loop
        personalize(&template, &mut rng).unwrap();
        c.bench_function(&format!("personalize_{kind}"), |b| {
            b.iter(|| personalize(black_box(&template), &mut rng).unwrap())
        });
    }
}

criterion_group!(benches, tables, genie);
criterion_main!(benches);

mod common;

use batscast::gf::{self, CoeffMatrix, FieldElement};
use common::{slow_inv, slow_mul, slow_rank};
use proptest::prelude::*;

#[test]
fn tables_match_shift_and_add() {
    for a in 0..=255u8 {
        for b in 0..=255u8 {
            assert_eq!(gf::mul(a, b), slow_mul(a, b), "{a} * {b}");
        }
        if a != 0 {
            assert_eq!(gf::inv(a), slow_inv(a), "1 / {a}");
        }
    }
}

#[test]
fn two_generates_the_group() {
    let mut seen = [false; 256];
    let mut x = 1u8;
    for _ in 0..255 {
        assert!(!seen[x as usize]);
        seen[x as usize] = true;
        x = slow_mul(x, 2);
    }
    assert_eq!(x, 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn field_axioms(a: u8, b: u8, c: u8) {
        let (x, y, z) = (FieldElement(a), FieldElement(b), FieldElement(c));
        prop_assert_eq!(x + y, y + x);
        prop_assert_eq!(x * y, y * x);
        prop_assert_eq!((x + y) + z, x + (y + z));
        prop_assert_eq!((x * y) * z, x * (y * z));
        prop_assert_eq!(x * (y + z), x * y + x * z);
        prop_assert_eq!(x + FieldElement(0), x);
        prop_assert_eq!(x * FieldElement(1), x);
        prop_assert_eq!(x + x, FieldElement(0));
        if a != 0 {
            prop_assert_eq!(x * x.inverse().unwrap(), FieldElement(1));
            prop_assert_eq!(gf::div(gf::mul(b, a), a), b);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn rank_matches_oracle(
        rows in 1usize..12,
        cols in 1usize..12,
        seed in proptest::collection::vec(any::<u8>(), 144),
        sparsity in 0u8..4,
    ) {
        // sparsity zeroes entries to make rank deficiency common
        let data: Vec<Vec<u8>> = (0..rows)
            .map(|r| (0..cols).map(|c| {
                let v = seed[r * 12 + c];
                if v % 4 < sparsity { 0 } else { v }
            }).collect())
            .collect();
        let m = CoeffMatrix::from_rows(&data, cols);
        prop_assert_eq!(gf::rank(&m), slow_rank(data));
    }
}

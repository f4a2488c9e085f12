/// Check bits a single-error-correcting Hamming code needs for `data_bits`
/// of payload: the smallest `r` with `2^r >= n + r + 1`.
pub fn secded_overhead(data_bits: usize) -> usize {
    assert!(data_bits >= 1, "Hamming code needs at least one data bit");
    let mut r = 1;
    while (1usize << r) < data_bits + r + 1 {
        r += 1;
    }
    r
}

/// Even parity of all bits in `data`.
pub fn parity(data: &[u8]) -> bool {
    data.iter().fold(0u32, |acc, b| acc + b.count_ones()) % 2 == 1
}

//! Small shared helpers: fraction rounding, seed derivation and atomic file writes.

use std::io::Write;
use std::path::Path;

/// Slack used when turning `fraction * n` into a count. `0.3 * 10.0` is
/// `3.0000000000000004` in binary floating point and must still round to 3.
const COUNT_EPS: f64 = 1e-9;

/// `⌈fraction · n⌉`, robust to representation error in `fraction`.
pub fn ceil_count(fraction: f64, n: usize) -> usize {
    let x = fraction * n as f64;
    ((x - COUNT_EPS).ceil().max(0.0) as usize).min(n)
}

/// `⌊fraction · n⌋`, robust to representation error in `fraction`.
pub fn floor_count(fraction: f64, n: usize) -> usize {
    let x = fraction * n as f64;
    ((x + COUNT_EPS).floor().max(0.0) as usize).min(n)
}

/// SplitMix64 finaliser.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent child seed from a parent seed and a path of integers.
pub fn derive_seed(parent: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(mix64(parent), |acc, &p| mix64(acc ^ mix64(p)))
}

/// Writes `bytes` to `path` via a temporary sibling and a rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let file_name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{file_name}.tmp"));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

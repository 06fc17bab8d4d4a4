//! Byte and bandwidth units.
//!
//! Everything is binary: 1 MB is 1 MiB and 1 GB/s is 1024 MiB/s. A 588 MB
//! batch read at 3.5 GB/s therefore takes `588 / (3.5 * 1024)` = 0.164 s.

pub const KIB: f64 = 1024.0;
pub const MIB: f64 = 1024.0 * KIB;
pub const GIB: f64 = 1024.0 * MIB;

/// Mebibytes to bytes.
pub fn mib(x: f64) -> f64 {
    x * MIB
}

/// Gibibytes per second to bytes per second.
pub fn gib_per_s(x: f64) -> f64 {
    x * GIB
}

pub fn to_mib(bytes: f64) -> f64 {
    bytes / MIB
}

pub fn to_gib_per_s(bytes_per_s: f64) -> f64 {
    bytes_per_s / GIB
}

/// Bytes of one 224x224 RGB image stored as f32.
pub const IMAGENET_SAMPLE_BYTES: f64 = 224.0 * 224.0 * 3.0 * 4.0;

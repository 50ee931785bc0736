//! Fixed-precision helpers shared by the mobility generators and trace I/O.
//!
//! Trace files carry six decimal places, so every value that ends up in a
//! waypoint is put on the microsecond / micrometre grid at emission time.
//! Keeping the in-memory traces on that grid is what makes write -> parse a
//! lossless round trip.

/// Round to six decimal places.
pub fn q6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// Round up to six decimal places, tolerating ~1e-9 of float noise sitting
/// just above a grid point.
pub fn ceil6(x: f64) -> f64 {
    ((x - 1e-9) * 1e6).ceil() / 1e6
}

/// Microsecond ticks to seconds.
pub fn us_to_s(us: u64) -> f64 {
    us as f64 * 1e-6
}

/// Seconds to the nearest microsecond tick.
pub fn s_to_us(s: f64) -> u64 {
    (s * 1e6).round().max(0.0) as u64
}

/// Seconds to the first microsecond tick at or after `s`.
pub fn s_to_us_ceil(s: f64) -> u64 {
    ((s - 1e-9) * 1e6).ceil().max(0.0) as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q6_rounds_to_grid() {
        assert_eq!(q6(1.23456749), 1.234567);
        assert_eq!(q6(1.23456751), 1.234568);
        assert_eq!(q6(500.0), 500.0);
    }

    #[test]
    fn ceil6_tolerates_noise() {
        assert_eq!(ceil6(40.0 + 7e-15), 40.0);
        assert_eq!(ceil6(39.9999992), 40.0);
        assert_eq!(ceil6(12.3456781), 12.345679);
    }

    #[test]
    fn us_round_trip() {
        assert_eq!(s_to_us(1.5), 1_500_000);
        assert_eq!(s_to_us(us_to_s(299_999_999)), 299_999_999);
        assert_eq!(s_to_us_ceil(0.0000001), 1);
        assert_eq!(s_to_us_ceil(2.0), 2_000_000);
    }
}

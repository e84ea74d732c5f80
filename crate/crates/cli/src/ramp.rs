//! Viridis-like colour ramp: linear interpolation between nine samples of
//! matplotlib's viridis taken at 0, 1/8, ..., 1.

const ANCHORS: [[u8; 3]; 9] = [
    [68, 1, 84],
    [71, 44, 122],
    [59, 81, 139],
    [44, 113, 142],
    [33, 144, 141],
    [39, 173, 129],
    [92, 200, 99],
    [170, 220, 50],
    [253, 231, 37],
];

/// RGB for a score in [0, 1]; out-of-range and NaN inputs are clamped
/// (NaN to 0).
pub fn viridis(score: f64) -> [u8; 3] {
    let s = if score.is_nan() { 0.0 } else { score.clamp(0.0, 1.0) };
    let x = s * (ANCHORS.len() - 1) as f64;
    let i = (x.floor() as usize).min(ANCHORS.len() - 2);
    let t = x - i as f64;
    let (a, b) = (ANCHORS[i], ANCHORS[i + 1]);
    std::array::from_fn(|c| (a[c] as f64 + (b[c] as f64 - a[c] as f64) * t).round() as u8)
}

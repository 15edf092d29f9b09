/// Order-independent accumulator for non-negative weights ≤ 1.
///
/// Values are rounded to multiples of 2⁻¹⁰⁰ and summed as integers, so any
/// summation order yields the same total. Weights above 2⁻⁴⁸ convert exactly.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FixedSum(i128);

const SCALE: f64 = 1_267_650_600_228_229_401_496_703_205_376.0; // 2^100
const HALF_SCALE: f64 = 1_125_899_906_842_624.0; // 2^50

impl FixedSum {
    pub const ZERO: FixedSum = FixedSum(0);

    #[inline]
    pub fn add(&mut self, w: f64) {
        // w·2¹⁰⁰ = hi·2⁵⁰ + frac·2⁵⁰ with both parts converted exactly through
        // i64, which is far cheaper than a direct f64 → i128 conversion
        let scaled = w * HALF_SCALE;
        let hi = scaled as i64;
        let lo = ((scaled - hi as f64) * HALF_SCALE).round() as i64;
        self.0 += (i128::from(hi) << 50) + i128::from(lo);
    }

    #[inline]
    pub fn merge(&mut self, other: FixedSum) {
        self.0 += other.0;
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / SCALE
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_independent() {
        let ws = [0.3, 1e-9, 0.7, 0.123456789, 1.0, 2f64.powi(-40)];
        let mut a = FixedSum::ZERO;
        ws.iter().for_each(|&w| a.add(w));
        let mut b = FixedSum::ZERO;
        ws.iter().rev().for_each(|&w| b.add(w));
        assert_eq!(a, b);
        assert!((a.value() - ws.iter().sum::<f64>()).abs() < 1e-15);
        assert_eq!(SCALE, 2f64.powi(100));
    }

    #[test]
    fn split_conversion_matches_direct_rounding() {
        let mut x = 0.123_456_789_f64;
        for _ in 0..10_000 {
            x = (x * 3.917 + 0.271).fract();
            for w in [x, x * 1e-9, x * 2f64.powi(-60), 1.0 - x * 1e-12] {
                let mut f = FixedSum::ZERO;
                f.add(w);
                assert_eq!(f.0, (w * SCALE).round() as i128, "w = {w:e}");
            }
        }
        let mut one = FixedSum::ZERO;
        one.add(1.0);
        assert_eq!(one.value(), 1.0);
    }
}

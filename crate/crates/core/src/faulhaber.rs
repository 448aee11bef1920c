//! Bernoulli numbers (B1 = +1/2) and Faulhaber's power-sum formula.

use num::{BigInt, BigRational, One, ToPrimitive, Zero};

/// `B_0 ..= B_n` with `B_1 = +1/2`, exact, by the Akiyama-Tanigawa algorithm.
pub fn bernoulli_plus(n: usize) -> Vec<BigRational> {
    let mut a: Vec<BigRational> = Vec::with_capacity(n + 1);
    let mut out = Vec::with_capacity(n + 1);
    for m in 0..=n {
        a.push(BigRational::new(BigInt::one(), BigInt::from(m + 1)));
        for j in (1..=m).rev() {
            let diff = &a[j - 1] - &a[j];
            a[j - 1] = diff * BigRational::from_integer(BigInt::from(j));
        }
        out.push(a[0].clone());
    }
    out
}

fn binomial(n: u32, k: u32) -> BigInt {
    let mut r = BigInt::one();
    for i in 0..k {
        r = r * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    r
}

/// Coefficients `c_m` with `sum_{j=1}^{W} j^alpha = sum_m c_m W^m`, `m = 1..=alpha+1`.
/// Index 0 of the returned vector holds `c_1`.
pub fn faulhaber_coefficients_exact(alpha: u32) -> Vec<BigRational> {
    let b = bernoulli_plus(alpha as usize);
    let denom = BigRational::from_integer(BigInt::from(alpha + 1));
    let mut coef = vec![BigRational::zero(); alpha as usize + 1];
    for k in 0..=alpha {
        let power = alpha - k + 1;
        let c = BigRational::from_integer(binomial(alpha + 1, k)) * &b[k as usize] / &denom;
        coef[power as usize - 1] += c;
    }
    coef
}

/// Faulhaber's closed form for `sum_{j=1}^{w} j^alpha`, evaluated exactly.
pub fn faulhaber_sum_exact(alpha: u32, w: u64) -> BigRational {
    let wr = BigRational::from_integer(BigInt::from(w));
    let mut power = wr.clone();
    let mut total = BigRational::zero();
    for c in faulhaber_coefficients_exact(alpha) {
        total += c * &power;
        power *= &wr;
    }
    total
}

/// Floating-point Faulhaber coefficients, index `m - 1` for power `m`.
pub fn faulhaber_coefficients(alpha: u32) -> Vec<f64> {
    faulhaber_coefficients_exact(alpha)
        .iter()
        .map(|c| c.to_f64().expect("finite rational"))
        .collect()
}

/// `E[sum_{j=1}^{W} j^alpha]` from the raw moments `E[W^m]`, `m = 1..=alpha+1`.
pub fn expected_power_sum(alpha: u32, mut moment: impl FnMut(u32) -> f64) -> f64 {
    faulhaber_coefficients(alpha)
        .iter()
        .enumerate()
        .map(|(i, &c)| if c == 0.0 { 0.0 } else { c * moment(i as u32 + 1) })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn first_bernoulli_numbers() {
        let b = bernoulli_plus(8);
        let expect = [rat(1, 1), rat(1, 2), rat(1, 6), rat(0, 1), rat(-1, 30), rat(0, 1), rat(1, 42), rat(0, 1), rat(-1, 30)];
        assert_eq!(b, expect);
    }

    #[test]
    fn squares_up_to_three() {
        assert_eq!(faulhaber_sum_exact(2, 3), rat(14, 1));
        assert_eq!(faulhaber_sum_exact(0, 7), rat(7, 1));
    }

    #[test]
    fn linear_expectation() {
        // sum j = W(W+1)/2
        let v = expected_power_sum(1, |m| if m == 1 { 3.0 } else { 11.0 });
        assert!((v - 7.0).abs() < 1e-15);
    }
}
